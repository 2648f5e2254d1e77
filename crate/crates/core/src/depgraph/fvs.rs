//! Minimum directed feedback vertex set.
//!
//! The exact solver works on 64-bit adjacency masks. Each search node first
//! applies the safe reductions (self-loop vertices are forced into the set,
//! vertices with no in- or out-arcs are dropped, vertices with a single
//! in- or out-neighbour are bypassed), then splits into strongly connected
//! components and branches on a maximum-degree vertex: delete it, or keep it
//! and bypass it. A vertex-disjoint cycle packing gives the pruning bound.
//!
//! Among all minimum sets the lexicographically smallest (by sorted vertex
//! order) is returned: vertices are decided in order, each kept in the set
//! only when a minimum solution extending the decisions so far still exists.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DependencyGraph;
use crate::error::{Error, Result};
use crate::scene::ObjectId;

pub const DEFAULT_FVS_CAP: usize = 30;
pub const BRUTEFORCE_CAP: usize = 12;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FvsResult {
    pub members: Vec<ObjectId>,
    pub size: usize,
}

impl FvsResult {
    fn from_members(members: Vec<ObjectId>) -> Self {
        FvsResult { size: members.len(), members }
    }

    pub fn member_set(&self) -> BTreeSet<ObjectId> {
        self.members.iter().copied().collect()
    }
}

pub fn min_fvs_exact(g: &DependencyGraph) -> Result<FvsResult> {
    min_fvs_exact_with_cap(g, DEFAULT_FVS_CAP)
}

pub fn min_fvs_exact_with_cap(g: &DependencyGraph, cap: usize) -> Result<FvsResult> {
    if g.len() > cap || g.len() > 64 {
        return Err(Error::GraphTooLarge { size: g.len(), cap: cap.min(64) });
    }
    let base = BitGraph::from_graph(g);
    let k = min_size(base.clone());
    let mut forced = 0u64;
    let mut forbidden = 0u64;
    for v in 0..g.len() {
        let taken = forced.count_ones() as usize;
        if taken == k {
            break;
        }
        let bit = 1u64 << v;
        if extends_to_solution(&base, forced | bit, forbidden, k - taken - 1) {
            forced |= bit;
        } else {
            forbidden |= bit;
        }
    }
    debug_assert_eq!(forced.count_ones() as usize, k);
    Ok(FvsResult::from_members(bits(forced).map(|v| g.vertices()[v]).collect()))
}

/// Reference solver: tries every vertex subset in order of size, and within a
/// size in lexicographic order, returning the first whose removal leaves an
/// acyclic graph.
pub fn min_fvs_bruteforce(g: &DependencyGraph) -> Result<FvsResult> {
    let n = g.len();
    if n > BRUTEFORCE_CAP {
        return Err(Error::GraphTooLarge { size: n, cap: BRUTEFORCE_CAP });
    }
    for size in 0..=n {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let removed: BTreeSet<ObjectId> = combo.iter().map(|&v| g.vertices()[v]).collect();
            if g.without(&removed).is_acyclic() {
                return Ok(FvsResult::from_members(removed.into_iter().collect()));
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    unreachable!("removing every vertex leaves an acyclic graph")
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (mask != 0).then(|| {
            let v = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            v
        })
    })
}

#[derive(Clone, Debug)]
struct BitGraph {
    out: Vec<u64>,
    inn: Vec<u64>,
    alive: u64,
}

impl BitGraph {
    fn from_graph(g: &DependencyGraph) -> Self {
        let n = g.len();
        let mut out = vec![0u64; n];
        let mut inn = vec![0u64; n];
        for (a, succ) in g.index_adjacency().into_iter().enumerate() {
            for b in succ {
                out[a] |= 1 << b;
                inn[b] |= 1 << a;
            }
        }
        let alive = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        BitGraph { out, inn, alive }
    }

    fn has_loop(&self, v: usize) -> bool {
        self.out[v] & (1 << v) != 0
    }

    fn delete(&mut self, v: usize) {
        let bit = 1u64 << v;
        for u in bits(self.inn[v]) {
            self.out[u] &= !bit;
        }
        for w in bits(self.out[v]) {
            self.inn[w] &= !bit;
        }
        self.out[v] = 0;
        self.inn[v] = 0;
        self.alive &= !bit;
    }

    /// Removes `v` while keeping every cycle through it as a cycle through
    /// its neighbours. A predecessor that is also a successor gets a
    /// self-loop. `v` itself must not have a self-loop.
    fn bypass(&mut self, v: usize) {
        debug_assert!(!self.has_loop(v));
        let preds = self.inn[v];
        let succs = self.out[v];
        for u in bits(preds) {
            self.out[u] |= succs;
        }
        for w in bits(succs) {
            self.inn[w] |= preds;
        }
        self.delete(v);
    }

    /// Applies reductions. Returns the number of vertices forced into the
    /// set, or `None` once that exceeds `budget`.
    fn reduce(&mut self, budget: usize) -> Option<usize> {
        let mut forced = 0;
        loop {
            let mut changed = false;
            for v in bits(self.alive) {
                if self.alive & (1 << v) == 0 {
                    continue;
                }
                if self.has_loop(v) {
                    forced += 1;
                    if forced > budget {
                        return None;
                    }
                    self.delete(v);
                    changed = true;
                    continue;
                }
                let (indeg, outdeg) = (self.inn[v].count_ones(), self.out[v].count_ones());
                if indeg == 0 || outdeg == 0 {
                    self.delete(v);
                    changed = true;
                } else if indeg == 1 || outdeg == 1 {
                    // Any solution using v can use its lone neighbour instead.
                    self.bypass(v);
                    changed = true;
                }
            }
            if !changed {
                return Some(forced);
            }
        }
    }

    fn restricted(&self, keep: u64) -> BitGraph {
        BitGraph {
            out: self.out.iter().map(|m| m & keep).collect(),
            inn: self.inn.iter().map(|m| m & keep).collect(),
            alive: self.alive & keep,
        }
    }

    /// Strongly connected components with more than one vertex, found as
    /// intersections of forward and backward reachable sets.
    fn nontrivial_sccs(&self) -> Vec<u64> {
        let mut rest = self.alive;
        let mut sccs = Vec::new();
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            let scc = self.reach(v, &self.out) & self.reach(v, &self.inn) | (1 << v);
            rest &= !scc;
            if scc.count_ones() > 1 {
                sccs.push(scc);
            }
        }
        sccs
    }

    fn reach(&self, from: usize, adj: &[u64]) -> u64 {
        let mut seen = 0u64;
        let mut frontier = adj[from] & self.alive;
        while frontier != 0 {
            seen |= frontier;
            let mut next = 0;
            for v in bits(frontier) {
                next |= adj[v];
            }
            frontier = next & self.alive & !seen;
        }
        seen
    }

    /// Size of a greedy packing of vertex-disjoint shortest cycles.
    fn cycle_packing_bound(&self) -> usize {
        let mut g = self.clone();
        let mut count = 0;
        while let Some(cycle) = g.shortest_cycle() {
            count += 1;
            for v in bits(cycle) {
                g.delete(v);
            }
        }
        count
    }

    fn shortest_cycle(&self) -> Option<u64> {
        let n = self.out.len();
        let mut best: Option<(usize, u64)> = None;
        for s in bits(self.alive) {
            // BFS from s; a cycle closes on an arc back into s.
            let mut parent = vec![usize::MAX; n];
            let mut frontier = vec![s];
            let mut visited = 1u64 << s;
            let mut depth = 0;
            'bfs: while !frontier.is_empty() {
                depth += 1;
                if best.is_some_and(|(len, _)| depth >= len) {
                    break;
                }
                let mut next = Vec::new();
                for &u in &frontier {
                    if self.out[u] & (1 << s) != 0 {
                        let mut cycle = 1u64 << s;
                        let mut x = u;
                        while x != s {
                            cycle |= 1 << x;
                            x = parent[x];
                        }
                        best = Some((depth, cycle));
                        break 'bfs;
                    }
                    for w in bits(self.out[u] & self.alive & !visited) {
                        visited |= 1 << w;
                        parent[w] = u;
                        next.push(w);
                    }
                }
                frontier = next;
            }
        }
        best.map(|(_, c)| c)
    }

    fn pick_branch_vertex(&self) -> usize {
        bits(self.alive)
            .max_by_key(|&v| {
                let (i, o) = (self.inn[v].count_ones(), self.out[v].count_ones());
                (i * o, i + o, std::cmp::Reverse(v))
            })
            .expect("non-empty graph")
    }
}

fn min_size(mut g: BitGraph) -> usize {
    let forced = g.reduce(usize::MAX).expect("unbounded budget");
    forced
        + g.nontrivial_sccs()
            .into_iter()
            .map(|scc| {
                let sub = g.restricted(scc);
                let mut k = sub.cycle_packing_bound();
                while !feasible(sub.clone(), k) {
                    k += 1;
                }
                k
            })
            .sum::<usize>()
}

/// Whether some feedback vertex set of size at most `budget` exists.
fn feasible(mut g: BitGraph, budget: usize) -> bool {
    let Some(forced) = g.reduce(budget) else { return false };
    let mut budget = budget - forced;
    if g.alive == 0 {
        return true;
    }
    let sccs = g.nontrivial_sccs();
    if sccs.len() > 1 {
        for scc in sccs {
            let sub = g.restricted(scc);
            let mut k = sub.cycle_packing_bound();
            loop {
                if k > budget {
                    return false;
                }
                if feasible(sub.clone(), k) {
                    break;
                }
                k += 1;
            }
            budget -= k;
        }
        return true;
    }
    if budget == 0 || g.cycle_packing_bound() > budget {
        return false;
    }
    let v = g.pick_branch_vertex();
    let mut deleted = g.clone();
    deleted.delete(v);
    if feasible(deleted, budget - 1) {
        return true;
    }
    g.bypass(v);
    feasible(g, budget)
}

/// Whether a solution of size `|forced| + budget` exists that contains
/// `forced` and avoids `forbidden`.
fn extends_to_solution(base: &BitGraph, forced: u64, forbidden: u64, budget: usize) -> bool {
    let mut g = base.clone();
    for v in bits(forced) {
        g.delete(v);
    }
    for v in bits(forbidden & g.alive) {
        if g.has_loop(v) {
            return false;
        }
        g.bypass(v);
    }
    feasible(g, budget)
}
