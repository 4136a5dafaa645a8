//! Simple temporal network reasoning over a [`ConstraintGraph`].
//!
//! An edge `from -> to` in `[l, u]` becomes two arcs of the distance graph:
//! `from -> to` weighted `u` and `to -> from` weighted `-l`. The shortest
//! path matrix of that graph is the minimal network: `d[i][j]` is the
//! tightest upper bound on `t_j - t_i`. A negative diagonal entry means the
//! constraints are unsatisfiable.
//!
//! The root start is the time origin. Fixing `p = t` adds the arcs
//! `root -> p` (weight `t`) and `p -> root` (weight `-t`), which keeps the
//! matrix closed with an `O(n^2)` update instead of a full recomputation.

pub mod oracle;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Index;

use crate::compile::{ConstraintGraph, Edge, TimePointId};
use crate::time::Bound;

const ROOT: usize = 0;

/// Distance-graph weight. `Infinite` means "no path".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dist {
    Finite(i64),
    Infinite,
}

impl Dist {
    fn add(self, rhs: Dist) -> Dist {
        match (self, rhs) {
            (Dist::Finite(a), Dist::Finite(b)) => Dist::Finite(a.saturating_add(b)),
            _ => Dist::Infinite,
        }
    }

    fn is_negative(self) -> bool {
        matches!(self, Dist::Finite(v) if v < 0)
    }
}

fn to_i64(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

/// Feasible execution times of one point, in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub earliest: u64,
    pub latest: Bound,
}

impl Window {
    pub fn contains(&self, t: u64) -> bool {
        t >= self.earliest && self.latest.contains(t)
    }

    pub fn is_degenerate(&self) -> bool {
        self.latest == Bound::Finite(self.earliest)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.earliest, self.latest)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Windows(Vec<Window>);

impl Windows {
    pub fn get(&self, p: TimePointId) -> Window {
        self.0[p.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TimePointId, Window)> + '_ {
        self.0.iter().enumerate().map(|(i, w)| (TimePointId(i), *w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<TimePointId> for Windows {
    type Output = Window;
    fn index(&self, p: TimePointId) -> &Window {
        &self.0[p.0]
    }
}

/// Assigned execution times.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fixings(BTreeMap<TimePointId, u64>);

impl Fixings {
    pub fn new() -> Self {
        Fixings::default()
    }

    pub fn get(&self, p: TimePointId) -> Option<u64> {
        self.0.get(&p).copied()
    }

    pub fn insert(&mut self, p: TimePointId, t: u64) {
        self.0.insert(p, t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (TimePointId, u64)> + '_ {
        self.0.iter().map(|(p, t)| (*p, *t))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(TimePointId, u64)> for Fixings {
    fn from_iter<I: IntoIterator<Item = (TimePointId, u64)>>(iter: I) -> Self {
        Fixings(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("constraints are inconsistent")]
    Inconsistent,
    #[error("tick {tick} is outside window {window} of point {point:?}")]
    OutOfWindow {
        point: TimePointId,
        tick: u64,
        window: Window,
    },
    #[error("unknown time point {0:?}")]
    UnknownPoint(TimePointId),
}

/// Closed distance matrix of a consistent network.
#[derive(Clone, Debug)]
pub struct Network {
    n: usize,
    d: Vec<Dist>,
}

impl Network {
    /// Builds the minimal network of `edges` over `n` points with
    /// Floyd-Warshall.
    pub fn from_edges<'a>(
        n: usize,
        edges: impl IntoIterator<Item = &'a Edge>,
    ) -> Result<Self, SolverError> {
        let mut d = vec![Dist::Infinite; n * n];
        for i in 0..n {
            d[i * n + i] = Dist::Finite(0);
        }
        let tighten = |d: &mut Vec<Dist>, i: usize, j: usize, w: Dist| {
            if w < d[i * n + j] {
                d[i * n + j] = w;
            }
        };
        for e in edges {
            let (f, t) = (e.from.0, e.to.0);
            if let Bound::Finite(u) = e.max {
                tighten(&mut d, f, t, Dist::Finite(to_i64(u)));
            }
            tighten(&mut d, t, f, Dist::Finite(-to_i64(e.min)));
        }
        for k in 0..n {
            for i in 0..n {
                let dik = d[i * n + k];
                if dik == Dist::Infinite {
                    continue;
                }
                for j in 0..n {
                    let via = dik.add(d[k * n + j]);
                    if via < d[i * n + j] {
                        d[i * n + j] = via;
                    }
                }
            }
        }
        if (0..n).any(|i| d[i * n + i].is_negative()) {
            return Err(SolverError::Inconsistent);
        }
        Ok(Network { n, d })
    }

    pub fn from_graph(graph: &ConstraintGraph) -> Result<Self, SolverError> {
        Network::from_edges(graph.point_count(), graph.edges.iter())
    }

    /// Network of `graph` with every fixing applied.
    pub fn with_fixings(graph: &ConstraintGraph, fixings: &Fixings) -> Result<Self, SolverError> {
        let mut net = Network::from_graph(graph)?;
        for (p, t) in fixings.iter() {
            net.fix(p, t).map_err(|_| SolverError::Inconsistent)?;
        }
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn at(&self, i: usize, j: usize) -> Dist {
        self.d[i * self.n + j]
    }

    /// Tightest upper bound on `t_j - t_i`.
    pub fn distance(&self, from: TimePointId, to: TimePointId) -> Dist {
        self.at(from.0, to.0)
    }

    pub fn window(&self, p: TimePointId) -> Window {
        let earliest = match self.at(p.0, ROOT) {
            Dist::Finite(v) => v.saturating_neg().max(0) as u64,
            Dist::Infinite => 0,
        };
        let latest = match self.at(ROOT, p.0) {
            Dist::Finite(v) => Bound::Finite(v.max(0) as u64),
            Dist::Infinite => Bound::Infinite,
        };
        Window { earliest, latest }
    }

    pub fn windows(&self) -> Windows {
        Windows((0..self.n).map(|i| self.window(TimePointId(i))).collect())
    }

    /// Adds arc `u -> v` of weight `w`, keeping the matrix closed.
    /// Returns `false` (and leaves the network untouched) if the arc would
    /// close a negative cycle.
    fn add_arc(&mut self, u: usize, v: usize, w: i64) -> bool {
        let n = self.n;
        let w = Dist::Finite(w);
        if w >= self.at(u, v) {
            return true;
        }
        if self.at(v, u).add(w).is_negative() {
            return false;
        }
        // Row `v` and column `u` do not change under this update because
        // `d[v][u] + w >= 0`.
        for i in 0..n {
            let iu = self.at(i, u);
            if iu == Dist::Infinite {
                continue;
            }
            let base = iu.add(w);
            for j in 0..n {
                let via = base.add(self.at(v, j));
                if via < self.d[i * n + j] {
                    self.d[i * n + j] = via;
                }
            }
        }
        true
    }

    /// Fixes `p = t`. Fails if `t` is outside the current window.
    pub fn fix(&mut self, p: TimePointId, t: u64) -> Result<(), SolverError> {
        if p.0 >= self.n {
            return Err(SolverError::UnknownPoint(p));
        }
        let window = self.window(p);
        if !window.contains(t) {
            return Err(SolverError::OutOfWindow {
                point: p,
                tick: t,
                window,
            });
        }
        let t = to_i64(t);
        let ok = self.add_arc(ROOT, p.0, t) && self.add_arc(p.0, ROOT, -t);
        debug_assert!(ok, "a value inside the window is always consistent");
        Ok(())
    }

    /// Requires `p >= t`. Fails if `t` exceeds the latest time of `p`.
    pub fn require_at_least(&mut self, p: TimePointId, t: u64) -> Result<(), SolverError> {
        let window = self.window(p);
        if !window.latest.contains(t) {
            return Err(SolverError::OutOfWindow {
                point: p,
                tick: t,
                window,
            });
        }
        let ok = self.add_arc(p.0, ROOT, -to_i64(t));
        debug_assert!(ok);
        Ok(())
    }
}

/// True iff some assignment of ticks satisfies every edge.
pub fn check_playable(graph: &ConstraintGraph) -> bool {
    Network::from_graph(graph).is_ok()
}

/// Tightest windows implied by the graph and the fixings. The root start
/// is always pinned to tick 0.
pub fn propagate(graph: &ConstraintGraph, fixings: &Fixings) -> Result<Windows, SolverError> {
    Ok(Network::with_fixings(graph, fixings)?.windows())
}

/// Adds `point = t` to the fixings if `t` lies in the point's window.
pub fn fix_point(
    graph: &ConstraintGraph,
    fixings: &Fixings,
    point: TimePointId,
    t: u64,
) -> Result<Fixings, SolverError> {
    let mut net = Network::with_fixings(graph, fixings)?;
    net.fix(point, t)?;
    let mut out = fixings.clone();
    out.insert(point, t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile, EdgeOrigin};
    use crate::score::{Point, Score, TemporalObject, TemporalRelation, TimePointRef};
    use crate::time::Interval;

    fn edge(from: usize, to: usize, min: u64, max: Bound) -> Edge {
        Edge {
            from: TimePointId(from),
            to: TimePointId(to),
            min,
            max,
            origin: EdgeOrigin::Relation(0),
        }
    }

    #[test]
    fn contradictory_equalities_are_unplayable() {
        let edges = [edge(0, 1, 2, Bound::Finite(2)), edge(0, 1, 3, Bound::Finite(3))];
        assert!(Network::from_edges(2, edges.iter()).is_err());
    }

    #[test]
    fn two_point_cycle_is_unplayable() {
        let edges = [edge(0, 1, 1, Bound::Finite(5)), edge(1, 0, 0, Bound::Finite(0))];
        assert_eq!(
            Network::from_edges(2, edges.iter()).unwrap_err(),
            SolverError::Inconsistent
        );
    }

    fn single(duration: Interval) -> (Score, ConstraintGraph) {
        let mut s = Score::new("one");
        s.objects.push(TemporalObject::new("o", duration));
        let g = compile(&s).unwrap();
        (s, g)
    }

    #[test]
    fn single_object_windows() {
        let (_, g) = single(Interval::new(5, 10));
        let w = propagate(&g, &Fixings::new()).unwrap();
        let start = TimePointId::of_object(0, Point::Start);
        let end = TimePointId::of_object(0, Point::End);
        assert_eq!(w[TimePointId::ROOT_START], Window { earliest: 0, latest: Bound::Finite(0) });
        assert_eq!(w[start], Window { earliest: 0, latest: Bound::Infinite });
        assert_eq!(w[end], Window { earliest: 5, latest: Bound::Infinite });
        let net = Network::from_graph(&g).unwrap();
        assert_eq!(net.distance(start, end), Dist::Finite(10));
        assert_eq!(net.distance(end, start), Dist::Finite(-5));
    }

    #[test]
    fn fix_inside_and_outside_window() {
        let mut s = Score::new("w");
        s.objects.push(TemporalObject::new("o", Interval::new(1, 1)));
        s.relations.push(TemporalRelation {
            from: TimePointRef::start("root"),
            to: TimePointRef::start("o"),
            interval: Interval::new(0, 5),
        });
        let g = compile(&s).unwrap();
        let start = TimePointId::of_object(0, Point::Start);
        let fx = fix_point(&g, &Fixings::new(), start, 3).unwrap();
        assert_eq!(fx.get(start), Some(3));
        let err = fix_point(&g, &Fixings::new(), start, 7).unwrap_err();
        assert_eq!(
            err,
            SolverError::OutOfWindow {
                point: start,
                tick: 7,
                window: Window { earliest: 0, latest: Bound::Finite(5) }
            }
        );
    }

    #[test]
    fn fully_fixed_windows_are_degenerate() {
        let (_, g) = single(Interval::new(5, 10));
        let fx: Fixings = [
            (TimePointId(1), 20),
            (TimePointId(2), 4),
            (TimePointId(3), 12),
        ]
        .into_iter()
        .collect();
        let w = propagate(&g, &fx).unwrap();
        for (p, win) in w.iter() {
            let expect = if p.0 == 0 { 0 } else { fx.get(p).unwrap() };
            assert_eq!(win, Window { earliest: expect, latest: Bound::Finite(expect) });
        }
    }

    #[test]
    fn inconsistent_fixings_are_reported() {
        let (_, g) = single(Interval::new(5, 10));
        let fx: Fixings = [(TimePointId(2), 0), (TimePointId(3), 2)].into_iter().collect();
        assert_eq!(propagate(&g, &fx).unwrap_err(), SolverError::Inconsistent);
    }

    #[test]
    fn root_cannot_move() {
        let (_, g) = single(Interval::new(5, 10));
        assert!(fix_point(&g, &Fixings::new(), TimePointId::ROOT_START, 1).is_err());
    }

    #[test]
    fn incremental_fix_matches_full_recompute() {
        let (_, g) = single(Interval::new(5, 10));
        let mut net = Network::from_graph(&g).unwrap();
        net.fix(TimePointId(2), 4).unwrap();
        net.require_at_least(TimePointId(3), 11).unwrap();
        let fx: Fixings = [(TimePointId(2), 4)].into_iter().collect();
        let full = propagate(&g, &fx).unwrap();
        assert_eq!(net.window(TimePointId(2)), full[TimePointId(2)]);
        assert_eq!(
            net.window(TimePointId(3)),
            Window { earliest: 11, latest: Bound::Finite(14) }
        );
    }
}
