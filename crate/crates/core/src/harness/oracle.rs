//! Breadth-first search over every pick-n-place sequence, for tiny scenes.

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::scene::{Assignment, Footprint, SceneSpec};

pub const BFS_OBJECT_CAP: usize = 6;

const INITIAL: u8 = 0;
const BUFFER: u8 = 1;
const OUTSIDE: u8 = 2;
const FIRST_GOAL: u8 = 3;

/// Minimum number of pick-n-place actions that completes `spec` under
/// perfect perception. Any movable object may be picked; it may go to any
/// free goal, the buffer, or outside.
pub fn brute_force_min_steps(spec: &SceneSpec) -> Result<usize> {
    brute_force_min_steps_with_cap(spec, BFS_OBJECT_CAP)
}

pub fn brute_force_min_steps_with_cap(spec: &SceneSpec, cap: usize) -> Result<usize> {
    let m = spec.num_objects();
    let n = spec.num_goals();
    if m > cap || m > 8 || n + FIRST_GOAL as usize > 256 {
        return Err(Error::SceneTooLarge { size: m, cap: cap.min(8) });
    }
    let get = |code: u64, i: usize| (code >> (8 * i)) as u8;
    let set = |code: u64, i: usize, v: u8| (code & !(0xFFu64 << (8 * i))) | (u64::from(v) << (8 * i));
    let footprint = |i: usize, v: u8| -> Option<&Footprint> {
        match v {
            INITIAL => Some(spec.initial_footprint(crate::scene::ObjectId(i))),
            BUFFER | OUTSIDE => None,
            g => Some(spec.goal_footprint(crate::scene::GoalId((g - FIRST_GOAL) as usize))),
        }
    };
    let target: Vec<Option<u8>> = spec
        .objects()
        .map(|i| match spec.true_goal(i) {
            Assignment::Goal(g) => {
                // An object that starts exactly on its goal already counts.
                Some(FIRST_GOAL + g.0 as u8)
            }
            Assignment::NonGoal => None,
        })
        .collect();
    let done = |code: u64| {
        (0..m).all(|i| {
            let v = get(code, i);
            match target[i] {
                Some(t) => v == t || (v == INITIAL && footprint(i, INITIAL) == footprint(i, t)),
                None => v == OUTSIDE,
            }
        })
    };
    let dead = |code: u64| (0..m).any(|i| target[i].is_some() && get(code, i) == OUTSIDE);

    let start = 0u64;
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((code, depth)) = queue.pop_front() {
        if done(code) {
            return Ok(depth);
        }
        if dead(code) {
            continue;
        }
        for i in 0..m {
            let here = get(code, i);
            if here == OUTSIDE {
                continue;
            }
            let mut moves = vec![BUFFER, OUTSIDE];
            for j in 0..n {
                let g = FIRST_GOAL + j as u8;
                let fp = footprint(i, g).expect("goal");
                let blocked = (0..m).any(|k| k != i && footprint(k, get(code, k)).is_some_and(|f| f.intersects(fp)));
                if !blocked {
                    moves.push(g);
                }
            }
            for v in moves {
                let next = set(code, i, v);
                if seen.insert(next) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
    }
    Err(Error::InfeasibleScenario("no action sequence completes the scene".into()))
}
