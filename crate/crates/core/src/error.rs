use thiserror::Error;

use crate::scene::{GoalId, ObjectId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("object {0} is not in hand")]
    NotInHand(ObjectId),

    #[error("goal {goal} is occupied by object {occupant}")]
    GoalOccupied { goal: GoalId, occupant: ObjectId },

    #[error("assignment references goal {0}, scene has {1} goals")]
    UnknownGoal(GoalId, usize),

    #[error("graph has {size} vertices, solver cap is {cap}")]
    GraphTooLarge { size: usize, cap: usize },

    #[error("scene has {size} objects, search cap is {cap}")]
    SceneTooLarge { size: usize, cap: usize },

    #[error("view {view} out of range 1..={views}")]
    ViewOutOfRange { view: usize, views: usize },

    #[error("similarity vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
