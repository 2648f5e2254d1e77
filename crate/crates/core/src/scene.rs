//! Abstract workspace: objects, goals, cell footprints and mutable episode
//! state.
//!
//! Geometry is reduced to sets of abstract cells. An object "occupies" a goal
//! when its footprint intersects the goal footprint, and it is "at its goal"
//! when the two footprints are equal. Object and goal indices are zero-based.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

mod generate;

pub use generate::{generate_cluttered_scene, generate_scene, ClutterParams, ScenarioParams};

pub type Cell = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub usize);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-empty set of cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Footprint(BTreeSet<Cell>);

impl Footprint {
    pub fn new(cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let cells: BTreeSet<Cell> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(Error::InvalidScene("empty footprint".into()));
        }
        Ok(Footprint(cells))
    }

    /// `width` consecutive cells starting at `start`.
    pub fn window(start: Cell, width: u32) -> Self {
        assert!(width > 0, "window width must be positive");
        Footprint((start..start + width).collect())
    }

    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.0
    }

    pub fn intersects(&self, other: &Footprint) -> bool {
        // Footprints are tiny; a merge walk beats hashing.
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    pub fn max_cell(&self) -> Cell {
        *self.0.iter().next_back().expect("footprint is non-empty")
    }
}

impl<'de> Deserialize<'de> for Footprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cells = BTreeSet::<Cell>::deserialize(d)?;
        Footprint::new(cells).map_err(serde::de::Error::custom)
    }
}

/// Ground-truth or estimated goal of an object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assignment {
    Goal(GoalId),
    NonGoal,
}

impl Assignment {
    pub fn goal(self) -> Option<GoalId> {
        match self {
            Assignment::Goal(g) => Some(g),
            Assignment::NonGoal => None,
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Goal(g) => write!(f, "{g}"),
            Assignment::NonGoal => f.write_str("nongoal"),
        }
    }
}

// Written as a goal index, or the string "nongoal".
impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Assignment::Goal(g) => s.serialize_u64(g.0 as u64),
            Assignment::NonGoal => s.serialize_str("nongoal"),
        }
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Index(usize),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Index(j) => Ok(Assignment::Goal(GoalId(j))),
            Repr::Tag(t) if t == "nongoal" => Ok(Assignment::NonGoal),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected goal index or \"nongoal\", got {t:?}"
            ))),
        }
    }
}

/// Where a place action puts the in-hand object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceTarget {
    Goal(GoalId),
    Outside,
    Buffer,
}

impl fmt::Display for PlaceTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaceTarget::Goal(g) => write!(f, "goal:{g}"),
            PlaceTarget::Outside => f.write_str("outside"),
            PlaceTarget::Buffer => f.write_str("buffer"),
        }
    }
}

/// Immutable description of one rearrangement problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScenarioFile", try_from = "ScenarioFile")]
pub struct SceneSpec {
    num_cells: Cell,
    true_goal: Vec<Assignment>,
    initial_footprint: Vec<Footprint>,
    goal_footprint: Vec<Footprint>,
    params: Option<ScenarioParams>,
}

impl SceneSpec {
    /// Validates and builds a scene. Goal objects must map bijectively onto
    /// the goals; initial and goal footprints must each be pairwise disjoint.
    pub fn new(
        num_cells: Cell,
        true_goal: Vec<Assignment>,
        initial_footprint: Vec<Footprint>,
        goal_footprint: Vec<Footprint>,
    ) -> Result<Self> {
        let spec = SceneSpec { num_cells, true_goal, initial_footprint, goal_footprint, params: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_params(mut self, params: ScenarioParams) -> Self {
        self.params = Some(params);
        self
    }

    fn validate(&self) -> Result<()> {
        let m = self.true_goal.len();
        let n = self.goal_footprint.len();
        if m == 0 {
            return Err(Error::InvalidScene("scene has no objects".into()));
        }
        if self.initial_footprint.len() != m {
            return Err(Error::InvalidScene(format!(
                "{} objects but {} initial footprints",
                m,
                self.initial_footprint.len()
            )));
        }
        if n > m {
            return Err(Error::InvalidScene(format!("{n} goals but only {m} objects")));
        }
        let mut owners = vec![None; n];
        for (i, a) in self.true_goal.iter().enumerate() {
            if let Assignment::Goal(g) = *a {
                let slot = owners.get_mut(g.0).ok_or(Error::UnknownGoal(g, n))?;
                if let Some(prev) = slot.replace(i) {
                    return Err(Error::InvalidScene(format!(
                        "goal {g} assigned to both object {prev} and object {i}"
                    )));
                }
            }
        }
        if let Some(j) = owners.iter().position(Option::is_none) {
            return Err(Error::InvalidScene(format!("goal {j} has no object")));
        }
        for fp in self.initial_footprint.iter().chain(&self.goal_footprint) {
            if fp.max_cell() >= self.num_cells {
                return Err(Error::InvalidScene(format!(
                    "cell {} outside universe of {} cells",
                    fp.max_cell(),
                    self.num_cells
                )));
            }
        }
        check_disjoint(&self.goal_footprint, "goal")?;
        check_disjoint(&self.initial_footprint, "initial object")?;
        Ok(())
    }

    pub fn num_objects(&self) -> usize {
        self.true_goal.len()
    }

    pub fn num_goals(&self) -> usize {
        self.goal_footprint.len()
    }

    pub fn num_cells(&self) -> Cell {
        self.num_cells
    }

    pub fn objects(&self) -> impl Iterator<Item = ObjectId> + '_ {
        (0..self.num_objects()).map(ObjectId)
    }

    pub fn goals(&self) -> impl Iterator<Item = GoalId> + '_ {
        (0..self.num_goals()).map(GoalId)
    }

    pub fn true_goal(&self, i: ObjectId) -> Assignment {
        self.true_goal[i.0]
    }

    pub fn true_assignment(&self) -> &[Assignment] {
        &self.true_goal
    }

    pub fn is_goal_object(&self, i: ObjectId) -> bool {
        matches!(self.true_goal[i.0], Assignment::Goal(_))
    }

    pub fn initial_footprint(&self, i: ObjectId) -> &Footprint {
        &self.initial_footprint[i.0]
    }

    pub fn goal_footprint(&self, j: GoalId) -> &Footprint {
        &self.goal_footprint[j.0]
    }

    pub fn params(&self) -> Option<&ScenarioParams> {
        self.params.as_ref()
    }

    /// Goal object that owns goal `j`.
    pub fn owner_of(&self, j: GoalId) -> ObjectId {
        self.objects()
            .find(|&i| self.true_goal(i) == Assignment::Goal(j))
            .expect("validated: every goal has an owner")
    }

    /// True iff `i` is placed exactly on the footprint of its true goal.
    pub fn is_at_goal(&self, state: &SceneState, i: ObjectId) -> bool {
        match (state.location(i), self.true_goal(i)) {
            (Location::Placed(fp), Assignment::Goal(g)) => fp == self.goal_footprint(g),
            _ => false,
        }
    }

    /// Every goal object placed on its goal and every non-goal object outside.
    pub fn check_completion(&self, state: &SceneState) -> bool {
        self.objects().all(|i| match self.true_goal(i) {
            Assignment::Goal(_) => self.is_at_goal(state, i),
            Assignment::NonGoal => matches!(state.location(i), Location::Outside),
        })
    }
}

fn check_disjoint(fps: &[Footprint], what: &str) -> Result<()> {
    for (a, fa) in fps.iter().enumerate() {
        for (b, fb) in fps.iter().enumerate().skip(a + 1) {
            if fa.intersects(fb) {
                return Err(Error::InvalidScene(format!("{what} footprints {a} and {b} overlap")));
            }
        }
    }
    Ok(())
}

/// On-disk form of a scene.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: String,
    pub num_cells: Cell,
    pub objects: Vec<ObjectEntry>,
    pub goals: Vec<GoalEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ScenarioParams>,
}

pub const SCENARIO_FORMAT: &str = "rearrange-scenario/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: usize,
    pub true_goal: Assignment,
    pub cells: Footprint,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalEntry {
    pub id: usize,
    pub cells: Footprint,
}

impl From<SceneSpec> for ScenarioFile {
    fn from(spec: SceneSpec) -> Self {
        ScenarioFile {
            format: SCENARIO_FORMAT.to_string(),
            num_cells: spec.num_cells,
            objects: spec
                .true_goal
                .into_iter()
                .zip(spec.initial_footprint)
                .enumerate()
                .map(|(id, (true_goal, cells))| ObjectEntry { id, true_goal, cells })
                .collect(),
            goals: spec
                .goal_footprint
                .into_iter()
                .enumerate()
                .map(|(id, cells)| GoalEntry { id, cells })
                .collect(),
            params: spec.params,
        }
    }
}

impl TryFrom<ScenarioFile> for SceneSpec {
    type Error = Error;

    fn try_from(file: ScenarioFile) -> Result<Self> {
        if file.format != SCENARIO_FORMAT {
            return Err(Error::InvalidScene(format!("unsupported format {:?}", file.format)));
        }
        let mut objects = file.objects;
        objects.sort_by_key(|o| o.id);
        if objects.iter().enumerate().any(|(k, o)| o.id != k) {
            return Err(Error::InvalidScene("object ids must be 0..M without gaps".into()));
        }
        let mut goals = file.goals;
        goals.sort_by_key(|g| g.id);
        if goals.iter().enumerate().any(|(k, g)| g.id != k) {
            return Err(Error::InvalidScene("goal ids must be 0..N without gaps".into()));
        }
        let (true_goal, initial): (Vec<_>, Vec<_>) =
            objects.into_iter().map(|o| (o.true_goal, o.cells)).unzip();
        let spec = SceneSpec::new(
            file.num_cells,
            true_goal,
            initial,
            goals.into_iter().map(|g| g.cells).collect(),
        )?;
        Ok(match file.params {
            Some(p) => spec.with_params(p),
            None => spec,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Placed(Footprint),
    InBuffer,
    Outside,
    InHand,
}

/// Mutable occupancy for one episode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneState {
    location: Vec<Location>,
    step_count: usize,
}

impl SceneState {
    pub fn initial(spec: &SceneSpec) -> Self {
        SceneState {
            location: spec.objects().map(|i| Location::Placed(spec.initial_footprint(i).clone())).collect(),
            step_count: 0,
        }
    }

    pub fn location(&self, i: ObjectId) -> &Location {
        &self.location[i.0]
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn in_hand(&self) -> Option<ObjectId> {
        self.location.iter().position(|l| *l == Location::InHand).map(ObjectId)
    }

    /// Objects that can be grasped: placed or buffered.
    pub fn graspable(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.location
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Location::Placed(_) | Location::InBuffer))
            .map(|(i, _)| ObjectId(i))
    }

    /// Placed objects whose footprint intersects `fp`, excluding `except`.
    pub fn occupants<'a>(
        &'a self,
        fp: &'a Footprint,
        except: Option<ObjectId>,
    ) -> impl Iterator<Item = ObjectId> + 'a {
        self.location.iter().enumerate().filter_map(move |(i, l)| match l {
            Location::Placed(p) if Some(ObjectId(i)) != except && p.intersects(fp) => Some(ObjectId(i)),
            _ => None,
        })
    }

    pub fn is_goal_free(&self, spec: &SceneSpec, j: GoalId) -> bool {
        self.occupants(spec.goal_footprint(j), None).next().is_none()
    }

    pub fn grasp(&mut self, i: ObjectId) -> Result<()> {
        if let Some(h) = self.in_hand() {
            return Err(Error::InvalidScene(format!("object {h} is already in hand")));
        }
        match self.location[i.0] {
            Location::Placed(_) | Location::InBuffer => {
                self.location[i.0] = Location::InHand;
                Ok(())
            }
            ref other => Err(Error::InvalidScene(format!("object {i} is not graspable ({other:?})"))),
        }
    }

    /// Completes the pick-n-place of the in-hand object `i`.
    pub fn apply_place(&mut self, spec: &SceneSpec, i: ObjectId, target: PlaceTarget) -> Result<()> {
        if self.location[i.0] != Location::InHand {
            return Err(Error::NotInHand(i));
        }
        self.location[i.0] = match target {
            PlaceTarget::Goal(j) => {
                if j.0 >= spec.num_goals() {
                    return Err(Error::UnknownGoal(j, spec.num_goals()));
                }
                let fp = spec.goal_footprint(j);
                if let Some(occupant) = self.occupants(fp, Some(i)).next() {
                    return Err(Error::GoalOccupied { goal: j, occupant });
                }
                Location::Placed(fp.clone())
            }
            PlaceTarget::Buffer => Location::InBuffer,
            PlaceTarget::Outside => Location::Outside,
        };
        self.step_count += 1;
        Ok(())
    }

    /// Returns the in-hand object to where it was grasped from, without
    /// counting a step. Used when a grasp attempt fails.
    pub(crate) fn restore(&mut self, i: ObjectId, prior: Location) {
        debug_assert_eq!(self.location[i.0], Location::InHand);
        self.location[i.0] = prior;
    }

    pub(crate) fn charge_step(&mut self) {
        self.step_count += 1;
    }

    /// Checks the occupancy invariants.
    pub fn check_invariants(&self) -> Result<()> {
        if self.location.iter().filter(|l| **l == Location::InHand).count() > 1 {
            return Err(Error::InvalidScene("more than one object in hand".into()));
        }
        let placed: Vec<_> = self
            .location
            .iter()
            .filter_map(|l| match l {
                Location::Placed(fp) => Some(fp.clone()),
                _ => None,
            })
            .collect();
        check_disjoint(&placed, "placed")
    }
}
