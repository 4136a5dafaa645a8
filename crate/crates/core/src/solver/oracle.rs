//! Exhaustive search over integer assignments, used to check the solver.
//!
//! Nothing here touches the distance matrix. Each point has an interval
//! domain; edges are enforced by narrowing domain bounds edge by edge
//! until nothing changes, points are assigned one at a time in index
//! order, and every complete assignment is checked against every edge.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::compile::{ConstraintGraph, Edge, TimePointId};
use crate::time::Bound;

pub const MAX_POINTS: usize = 16;
pub const MAX_SOLUTIONS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("graph has {points} points, oracle limit is {limit}")]
    TooManyPoints { points: usize, limit: usize },
    #[error("more than {limit} solutions")]
    TooManySolutions { limit: usize },
}

type Domains = Vec<(u64, u64)>;

/// Narrows `domains` until every edge is bounds consistent. `false` when
/// some domain empties.
fn narrow(edges: &[Edge], domains: &mut Domains) -> bool {
    loop {
        let mut changed = false;
        for e in edges {
            let (f, t) = (e.from.0, e.to.0);
            let max = match e.max {
                Bound::Finite(m) => Some(m),
                Bound::Infinite => None,
            };
            // to >= from + min, to <= from + max
            let to_lo = domains[f].0.saturating_add(e.min);
            let to_hi = max.map(|m| domains[f].1.saturating_add(m));
            // from <= to - min, from >= to - max
            let Some(from_hi) = domains[t].1.checked_sub(e.min) else {
                return false;
            };
            let from_lo = max.map(|m| domains[t].0.saturating_sub(m));

            let mut tighten = |p: usize, lo: Option<u64>, hi: Option<u64>| {
                let d = &mut domains[p];
                if let Some(lo) = lo {
                    if lo > d.0 {
                        d.0 = lo;
                        changed = true;
                    }
                }
                if let Some(hi) = hi {
                    if hi < d.1 {
                        d.1 = hi;
                        changed = true;
                    }
                }
                d.0 <= d.1
            };
            if !tighten(t, Some(to_lo), to_hi) || !tighten(f, from_lo, Some(from_hi)) {
                return false;
            }
        }
        if !changed {
            return true;
        }
    }
}

struct Search<'a> {
    n: usize,
    edges: &'a [Edge],
    values: Vec<u64>,
}

impl Search<'_> {
    fn run<F>(&mut self, domains: &Domains, k: usize, f: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[u64]) -> ControlFlow<()>,
    {
        if k == self.n {
            if self
                .edges
                .iter()
                .all(|e| e.holds(self.values[e.from.0], self.values[e.to.0]))
            {
                return f(&self.values);
            }
            return ControlFlow::Continue(());
        }
        let (lo, hi) = domains[k];
        for v in lo..=hi {
            self.values[k] = v;
            let mut narrowed = domains.clone();
            narrowed[k] = (v, v);
            if narrow(self.edges, &mut narrowed) {
                self.run(&narrowed, k + 1, f)?;
            }
        }
        ControlFlow::Continue(())
    }
}

fn initial_domains(n: usize, bound: u64, fixed: &[(TimePointId, u64)]) -> Option<Vec<(u64, u64)>> {
    let mut domains = vec![(0, bound); n];
    domains[0] = (0, 0);
    for &(p, t) in fixed {
        let d = &mut domains[p.0];
        d.0 = d.0.max(t);
        d.1 = d.1.min(t);
        if d.0 > d.1 {
            return None;
        }
    }
    Some(domains)
}

/// Calls `f` with every assignment satisfying all edges and `fixed`, each
/// point in `[0, bound]`, root start at 0. `f` can stop the walk early.
pub fn for_each_solution<F>(
    graph: &ConstraintGraph,
    bound: u64,
    fixed: &[(TimePointId, u64)],
    mut f: F,
) -> Result<(), OracleError>
where
    F: FnMut(&[u64]) -> ControlFlow<()>,
{
    let n = graph.point_count();
    if n > MAX_POINTS {
        return Err(OracleError::TooManyPoints {
            points: n,
            limit: MAX_POINTS,
        });
    }
    let Some(mut domains) = initial_domains(n, bound, fixed) else {
        return Ok(());
    };
    if !narrow(&graph.edges, &mut domains) {
        return Ok(());
    }
    let mut search = Search {
        n,
        edges: &graph.edges,
        values: vec![0; n],
    };
    let _ = search.run(&domains, 0, &mut f);
    Ok(())
}

/// Every integer assignment (indexed by point) with all points in
/// `[0, bound]` that satisfies every edge.
pub fn enumerate_solutions(graph: &ConstraintGraph, bound: u64) -> Result<Vec<Vec<u64>>, OracleError> {
    let mut out = Vec::new();
    let mut overflow = false;
    for_each_solution(graph, bound, &[], |s| {
        if out.len() == MAX_SOLUTIONS {
            overflow = true;
            return ControlFlow::Break(());
        }
        out.push(s.to_vec());
        ControlFlow::Continue(())
    })?;
    if overflow {
        return Err(OracleError::TooManySolutions {
            limit: MAX_SOLUTIONS,
        });
    }
    Ok(out)
}

/// Whether some solution in `[0, bound]` agrees with `fixed`.
pub fn solution_exists(
    graph: &ConstraintGraph,
    bound: u64,
    fixed: &[(TimePointId, u64)],
) -> Result<bool, OracleError> {
    let mut found = false;
    for_each_solution(graph, bound, fixed, |_| {
        found = true;
        ControlFlow::Break(())
    })?;
    Ok(found)
}

/// Per point `(min, max)` over all solutions in `[0, bound]`, or `None` if
/// there are none. Found by asking, for each point and candidate value,
/// whether any solution takes it; witnesses found on the way are reused.
pub fn solution_bounds(
    graph: &ConstraintGraph,
    bound: u64,
    fixed: &[(TimePointId, u64)],
) -> Result<Option<Vec<(u64, u64)>>, OracleError> {
    let n = graph.point_count();
    let mut known: Vec<Option<(u64, u64)>> = vec![None; n];
    let record = |known: &mut Vec<Option<(u64, u64)>>, s: &[u64]| {
        for (k, &v) in known.iter_mut().zip(s) {
            *k = Some(match *k {
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
                None => (v, v),
            });
        }
    };
    let mut witness = None;
    for_each_solution(graph, bound, fixed, |s| {
        witness = Some(s.to_vec());
        ControlFlow::Break(())
    })?;
    let Some(w) = witness else { return Ok(None) };
    record(&mut known, &w);

    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let (mut lo, mut hi) = known[p].expect("witness covers every point");
        // Lowest value: scan upwards from 0 until a solution exists.
        for v in 0..lo {
            let mut with = fixed.to_vec();
            with.push((TimePointId(p), v));
            let mut hit = None;
            for_each_solution(graph, bound, &with, |s| {
                hit = Some(s.to_vec());
                ControlFlow::Break(())
            })?;
            if let Some(s) = hit {
                record(&mut known, &s);
                lo = v;
                break;
            }
        }
        for v in (hi + 1..=bound).rev() {
            let mut with = fixed.to_vec();
            with.push((TimePointId(p), v));
            let mut hit = None;
            for_each_solution(graph, bound, &with, |s| {
                hit = Some(s.to_vec());
                ControlFlow::Break(())
            })?;
            if let Some(s) = hit {
                record(&mut known, &s);
                hi = v;
                break;
            }
        }
        out.push((lo, hi));
    }
    Ok(Some(out))
}
