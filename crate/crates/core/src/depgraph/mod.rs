//! Dependency digraph over movable objects.
//!
//! Arc `(a, b)` means `a` depends on `b`: `b` currently covers part of the
//! goal region assigned to `a`, so `b` must move before `a` can be placed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Assignment, Location, ObjectId, SceneSpec, SceneState};

mod fvs;

pub use fvs::{min_fvs_bruteforce, min_fvs_exact, min_fvs_exact_with_cap, FvsResult, BRUTEFORCE_CAP, DEFAULT_FVS_CAP};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    vertices: Vec<ObjectId>,
    arcs: BTreeSet<(ObjectId, ObjectId)>,
    /// Vertices whose assigned goal is covered by an object that is not a
    /// vertex (it sits on what its own assignment says is its goal). Always
    /// empty under the ground-truth assignment.
    settled_blockers: BTreeMap<ObjectId, Vec<ObjectId>>,
}

impl DependencyGraph {
    pub fn from_arcs(
        vertices: impl IntoIterator<Item = ObjectId>,
        arcs: impl IntoIterator<Item = (ObjectId, ObjectId)>,
    ) -> Result<Self> {
        let mut vertices: Vec<ObjectId> = vertices.into_iter().collect();
        vertices.sort_unstable();
        vertices.dedup();
        let arcs: BTreeSet<_> = arcs.into_iter().collect();
        for &(a, b) in &arcs {
            if a == b {
                return Err(Error::InvalidScene(format!("self-arc on {a}")));
            }
            if vertices.binary_search(&a).is_err() || vertices.binary_search(&b).is_err() {
                return Err(Error::InvalidScene(format!("arc ({a}, {b}) leaves the vertex set")));
            }
        }
        Ok(DependencyGraph { vertices, arcs, settled_blockers: BTreeMap::new() })
    }

    pub fn vertices(&self) -> &[ObjectId] {
        &self.vertices
    }

    pub fn arcs(&self) -> &BTreeSet<(ObjectId, ObjectId)> {
        &self.arcs
    }

    pub fn settled_blockers(&self) -> &BTreeMap<ObjectId, Vec<ObjectId>> {
        &self.settled_blockers
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: ObjectId) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn successors(&self, v: ObjectId) -> impl Iterator<Item = ObjectId> + '_ {
        self.arcs.range((v, ObjectId(0))..=(v, ObjectId(usize::MAX))).map(|&(_, b)| b)
    }

    pub fn out_degree(&self, v: ObjectId) -> usize {
        self.successors(v).count()
    }

    /// Position-indexed adjacency lists (`index` into [`Self::vertices`]).
    pub(crate) fn index_adjacency(&self) -> Vec<Vec<usize>> {
        let pos = |v: ObjectId| self.vertices.binary_search(&v).expect("arc endpoints are vertices");
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.arcs {
            adj[pos(a)].push(pos(b));
        }
        adj
    }

    /// Graph without the given vertices.
    pub fn without(&self, removed: &BTreeSet<ObjectId>) -> DependencyGraph {
        DependencyGraph {
            vertices: self.vertices.iter().copied().filter(|v| !removed.contains(v)).collect(),
            arcs: self
                .arcs
                .iter()
                .copied()
                .filter(|(a, b)| !removed.contains(a) && !removed.contains(b))
                .collect(),
            settled_blockers: BTreeMap::new(),
        }
    }

    /// True iff the graph has no directed cycle (Kahn's algorithm).
    pub fn is_acyclic(&self) -> bool {
        let adj = self.index_adjacency();
        let mut indeg = vec![0usize; adj.len()];
        for succ in &adj {
            for &w in succ {
                indeg[w] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..adj.len()).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &w in &adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        seen == adj.len()
    }

    /// One arc per line, `from to`, after a `# vertices:` header.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::from("# vertices:");
        for v in &self.vertices {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
        for (a, b) in &self.arcs {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut arcs = Vec::new();
        let parse = |tok: &str| {
            tok.parse::<usize>()
                .map(ObjectId)
                .map_err(|e| Error::InvalidScene(format!("bad vertex {tok:?}: {e}")))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("# vertices:") {
                for tok in rest.split_whitespace() {
                    vertices.push(parse(tok)?);
                }
            } else if !line.starts_with('#') {
                let mut it = line.split_whitespace();
                match (it.next(), it.next(), it.next()) {
                    (Some(a), Some(b), None) => {
                        let (a, b) = (parse(a)?, parse(b)?);
                        vertices.extend([a, b]);
                        arcs.push((a, b));
                    }
                    _ => return Err(Error::InvalidScene(format!("bad edge line {line:?}"))),
                }
            }
        }
        DependencyGraph::from_arcs(vertices, arcs)
    }
}

/// Builds the dependency graph for `assignment` (ground truth or estimate).
///
/// Vertices are the placed and buffered objects that are not already on the
/// footprint of their assigned goal. Buffered objects cover no cells, so they
/// only have outgoing arcs. Non-goal objects have no outgoing arcs.
pub fn build_dependency_graph(
    spec: &SceneSpec,
    state: &SceneState,
    assignment: &[Assignment],
) -> Result<DependencyGraph> {
    if assignment.len() != spec.num_objects() {
        return Err(Error::InvalidConfig(format!(
            "assignment covers {} objects, scene has {}",
            assignment.len(),
            spec.num_objects()
        )));
    }
    for a in assignment {
        if let Assignment::Goal(g) = *a {
            if g.0 >= spec.num_goals() {
                return Err(Error::UnknownGoal(g, spec.num_goals()));
            }
        }
    }
    let settled = |i: ObjectId| match (state.location(i), assignment[i.0]) {
        (Location::Placed(fp), Assignment::Goal(g)) => fp == spec.goal_footprint(g),
        _ => false,
    };
    let vertices: Vec<ObjectId> = state.graspable().filter(|&i| !settled(i)).collect();

    let mut arcs = BTreeSet::new();
    let mut settled_blockers: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
    for &i in &vertices {
        let Assignment::Goal(g) = assignment[i.0] else { continue };
        for k in state.occupants(spec.goal_footprint(g), Some(i)) {
            if settled(k) {
                settled_blockers.entry(i).or_default().push(k);
            } else {
                arcs.insert((i, k));
            }
        }
    }
    Ok(DependencyGraph { vertices, arcs, settled_blockers })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipSets {
    /// Objects that can go straight to their goal (or outside).
    pub free: BTreeSet<ObjectId>,
    /// Objects whose goal is covered by something else.
    pub blocked: BTreeSet<ObjectId>,
    /// Objects on a directed cycle.
    pub cyclic: BTreeSet<ObjectId>,
    /// Cyclic objects plus everything with a directed path into them.
    pub cyclic_closure: BTreeSet<ObjectId>,
}

/// Splits vertices into free/blocked and finds the circular-dependency sets
/// by reachability.
pub fn classify_membership(g: &DependencyGraph) -> MembershipSets {
    let adj = g.index_adjacency();
    let n = adj.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            // Vertices reachable from s by a path of length >= 1.
            let mut seen = vec![false; n];
            let mut stack: Vec<usize> = adj[s].clone();
            while let Some(v) = stack.pop() {
                if !std::mem::replace(&mut seen[v], true) {
                    stack.extend(&adj[v]);
                }
            }
            seen
        })
        .collect();

    let mut sets = MembershipSets::default();
    let cyclic: Vec<bool> = (0..n).map(|v| reach[v][v]).collect();
    for (v, &obj) in g.vertices.iter().enumerate() {
        let externally_blocked = g.settled_blockers.contains_key(&obj);
        if adj[v].is_empty() && !externally_blocked {
            sets.free.insert(obj);
        } else {
            sets.blocked.insert(obj);
        }
        if cyclic[v] {
            sets.cyclic.insert(obj);
            sets.cyclic_closure.insert(obj);
        } else if (0..n).any(|w| cyclic[w] && reach[v][w]) {
            sets.cyclic_closure.insert(obj);
        }
    }
    sets
}

/// Ground-truth lower bound on pick-n-place steps from `state`: the number of
/// objects still to move plus the minimum feedback vertex set size of the
/// ground-truth dependency graph. `None` when a goal object is already
/// outside, since the scene can then never be completed.
pub fn optimal_step_lower_bound(spec: &SceneSpec, state: &SceneState) -> Result<Option<usize>> {
    let mut to_move = 0;
    for i in spec.objects() {
        let outside = matches!(state.location(i), Location::Outside);
        match spec.true_goal(i) {
            Assignment::Goal(_) if outside => return Ok(None),
            Assignment::Goal(_) if !spec.is_at_goal(state, i) => to_move += 1,
            Assignment::NonGoal if !outside => to_move += 1,
            _ => {}
        }
    }
    let g = build_dependency_graph(spec, state, spec.true_assignment())?;
    Ok(Some(to_move + min_fvs_exact(&g)?.size))
}
