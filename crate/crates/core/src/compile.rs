//! Score to constraint graph translation.
//!
//! Every object contributes a duration edge `start -> end`, every parent link
//! two containment edges, every relation one edge and every micro relation a
//! `[0,0]` edge (sample offsets belong to the DSP engine, not the tick clock).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::score::{ObjectId, Point, Score, TimePointRef};
use crate::time::{Bound, Interval};

/// Index of a time point. `0`/`1` are the root's start/end, object `i`
/// owns `2 + 2i` (start) and `3 + 2i` (end).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimePointId(pub usize);

impl TimePointId {
    pub const ROOT_START: TimePointId = TimePointId(0);
    pub const ROOT_END: TimePointId = TimePointId(1);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn of_object(object_index: usize, point: Point) -> Self {
        TimePointId(2 + 2 * object_index + usize::from(point == Point::End))
    }

    /// Object index, `None` for the root.
    pub fn object_index(self) -> Option<usize> {
        (self.0 >= 2).then(|| (self.0 - 2) / 2)
    }

    pub fn point(self) -> Point {
        if self.0.is_multiple_of(2) {
            Point::Start
        } else {
            Point::End
        }
    }

    /// The other point of the same object.
    pub fn sibling(self) -> TimePointId {
        TimePointId(self.0 ^ 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeOrigin {
    /// Duration of an object; `None` is the root.
    Duration(Option<usize>),
    /// Containment of object `child` inside its parent, on the given side.
    Hierarchy { child: usize, side: Point },
    Relation(usize),
    Micro(usize),
}

/// `time(to) - time(from)` in `[min, max]` ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: TimePointId,
    pub to: TimePointId,
    pub min: u64,
    pub max: Bound,
    pub origin: EdgeOrigin,
}

impl Edge {
    pub fn interval(&self) -> Interval {
        Interval {
            min: self.min,
            max: self.max,
        }
    }

    /// Whether the given times satisfy this edge.
    pub fn holds(&self, from: u64, to: u64) -> bool {
        to >= from && self.interval().contains(to - from)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintGraph {
    objects: Vec<ObjectId>,
    index: BTreeMap<ObjectId, usize>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("unresolved time point {0}")]
    UnknownPoint(String),
    #[error("unknown parent {parent} of {child}")]
    UnknownParent { child: String, parent: String },
}

impl ConstraintGraph {
    pub fn point_count(&self) -> usize {
        2 * (1 + self.objects.len())
    }

    pub fn points(&self) -> impl Iterator<Item = TimePointId> {
        (0..self.point_count()).map(TimePointId)
    }

    pub fn objects(&self) -> &[ObjectId] {
        &self.objects
    }

    pub fn object_index(&self, id: &ObjectId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn point(&self, r: &TimePointRef) -> Option<TimePointId> {
        if r.object.is_root() {
            return Some(match r.point {
                Point::Start => TimePointId::ROOT_START,
                Point::End => TimePointId::ROOT_END,
            });
        }
        self.object_index(&r.object)
            .map(|i| TimePointId::of_object(i, r.point))
    }

    pub fn object_of(&self, p: TimePointId) -> ObjectId {
        match p.object_index() {
            Some(i) => self.objects[i].clone(),
            None => ObjectId::root(),
        }
    }

    pub fn point_ref(&self, p: TimePointId) -> TimePointRef {
        TimePointRef::new(self.object_of(p), p.point())
    }

    pub fn label(&self, p: TimePointId) -> String {
        format!("{}.{}", self.object_of(p), p.point())
    }

    /// Graphviz rendering: one node per time point, one edge per constraint.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph constraints {\n");
        for p in self.points() {
            let _ = writeln!(s, "  p{} [label=\"{}\"];", p.0, self.label(p));
        }
        for e in &self.edges {
            let origin = match e.origin {
                EdgeOrigin::Duration(_) => "duration",
                EdgeOrigin::Hierarchy { .. } => "hierarchy",
                EdgeOrigin::Relation(_) => "relation",
                EdgeOrigin::Micro(_) => "micro",
            };
            let _ = writeln!(
                s,
                "  p{} -> p{} [label=\"[{},{}] {}\"];",
                e.from.0, e.to.0, e.min, e.max, origin
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Builds the constraint graph of a validated score.
pub fn compile(score: &Score) -> Result<ConstraintGraph, CompileError> {
    let objects: Vec<ObjectId> = score.objects.iter().map(|o| o.id.clone()).collect();
    let index: BTreeMap<ObjectId, usize> = objects
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let mut graph = ConstraintGraph {
        objects,
        index,
        edges: Vec::new(),
    };

    let rd = score.root_duration;
    graph.edges.push(Edge {
        from: TimePointId::ROOT_START,
        to: TimePointId::ROOT_END,
        min: rd.min,
        max: rd.max,
        origin: EdgeOrigin::Duration(None),
    });
    for (i, obj) in score.objects.iter().enumerate() {
        graph.edges.push(Edge {
            from: TimePointId::of_object(i, Point::Start),
            to: TimePointId::of_object(i, Point::End),
            min: obj.duration.min,
            max: obj.duration.max,
            origin: EdgeOrigin::Duration(Some(i)),
        });
    }

    for (i, obj) in score.objects.iter().enumerate() {
        let parent = obj.parent_id();
        let parent_start = graph
            .point(&TimePointRef::start(parent.clone()))
            .ok_or_else(|| CompileError::UnknownParent {
                child: String::from(obj.id.as_str()),
                parent: String::from(parent.as_str()),
            })?;
        let parent_end = parent_start.sibling();
        graph.edges.push(Edge {
            from: parent_start,
            to: TimePointId::of_object(i, Point::Start),
            min: 0,
            max: Bound::Infinite,
            origin: EdgeOrigin::Hierarchy {
                child: i,
                side: Point::Start,
            },
        });
        graph.edges.push(Edge {
            from: TimePointId::of_object(i, Point::End),
            to: parent_end,
            min: 0,
            max: Bound::Infinite,
            origin: EdgeOrigin::Hierarchy {
                child: i,
                side: Point::End,
            },
        });
    }

    let resolve = |g: &ConstraintGraph, r: &TimePointRef| {
        g.point(r)
            .ok_or_else(|| CompileError::UnknownPoint(format!("{r}")))
    };
    for (i, rel) in score.relations.iter().enumerate() {
        let edge = Edge {
            from: resolve(&graph, &rel.from)?,
            to: resolve(&graph, &rel.to)?,
            min: rel.interval.min,
            max: rel.interval.max,
            origin: EdgeOrigin::Relation(i),
        };
        graph.edges.push(edge);
    }
    for (i, rel) in score.micro_relations.iter().enumerate() {
        let edge = Edge {
            from: resolve(&graph, &rel.from)?,
            to: resolve(&graph, &rel.to)?,
            min: 0,
            max: Bound::Finite(0),
            origin: EdgeOrigin::Micro(i),
        };
        graph.edges.push(edge);
    }
    Ok(graph)
}
