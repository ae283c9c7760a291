//! Problem instances, min-max scaling and neighbor queries.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclid_distance, polar_angle_distance, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
}

/// A TSP or CVRP instance over planar coordinates.
///
/// TSP nodes are `0..n`. For CVRP, node 0 is the depot and customers are
/// `1..=n`; `demands[0]` is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    kind: ProblemKind,
    name: String,
    coords: Vec<Point>,
    demands: Vec<f64>,
    capacity: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    kind: ProblemKind,
    #[serde(default)]
    name: String,
    coords: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demands: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        match raw.kind {
            ProblemKind::Tsp => Instance::tsp(raw.name, raw.coords),
            ProblemKind::Cvrp => {
                let demands = raw
                    .demands
                    .ok_or_else(|| Error::InvalidInstance("cvrp instance without demands".into()))?;
                let capacity = raw
                    .capacity
                    .ok_or_else(|| Error::InvalidInstance("cvrp instance without capacity".into()))?;
                Instance::cvrp(raw.name, raw.coords, demands, capacity)
            }
        }
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> Self {
        let cvrp = inst.kind == ProblemKind::Cvrp;
        RawInstance {
            kind: inst.kind,
            name: inst.name,
            coords: inst.coords,
            demands: cvrp.then_some(inst.demands),
            capacity: cvrp.then_some(inst.capacity),
        }
    }
}

fn check_finite(coords: &[Point]) -> Result<()> {
    match coords.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
        Some(i) => Err(Error::InvalidInstance(format!("non-finite coordinate at node {i}"))),
        None => Ok(()),
    }
}

impl Instance {
    pub fn tsp(name: impl Into<String>, coords: Vec<Point>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "tsp needs at least 2 nodes, got {}",
                coords.len()
            )));
        }
        check_finite(&coords)?;
        Ok(Instance {
            kind: ProblemKind::Tsp,
            name: name.into(),
            demands: vec![0.0; coords.len()],
            coords,
            capacity: f64::INFINITY,
        })
    }

    /// `coords[0]` is the depot. `demands` must line up with `coords`.
    pub fn cvrp(
        name: impl Into<String>,
        coords: Vec<Point>,
        demands: Vec<f64>,
        capacity: f64,
    ) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidInstance("cvrp needs a depot and at least one customer".into()));
        }
        if demands.len() != coords.len() {
            return Err(Error::InvalidInstance(format!(
                "{} demands for {} nodes",
                demands.len(),
                coords.len()
            )));
        }
        check_finite(&coords)?;
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::InvalidInstance(format!("capacity must be positive, got {capacity}")));
        }
        if demands[0] != 0.0 {
            return Err(Error::InvalidInstance("depot demand must be 0".into()));
        }
        for (i, &q) in demands.iter().enumerate() {
            if !(q.is_finite() && q >= 0.0) {
                return Err(Error::InvalidInstance(format!("bad demand {q} at node {i}")));
            }
            if q > capacity {
                return Err(Error::InvalidInstance(format!(
                    "demand {q} at node {i} exceeds capacity {capacity}"
                )));
            }
        }
        Ok(Instance { kind: ProblemKind::Cvrp, name: name.into(), coords, demands, capacity })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn is_cvrp(&self) -> bool {
        self.kind == ProblemKind::Cvrp
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    /// Total number of nodes, depot included.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn customer_count(&self) -> usize {
        match self.kind {
            ProblemKind::Tsp => self.coords.len(),
            ProblemKind::Cvrp => self.coords.len() - 1,
        }
    }

    /// Nodes that must be visited: every node for TSP, `1..=n` for CVRP.
    pub fn customers(&self) -> std::ops::Range<usize> {
        match self.kind {
            ProblemKind::Tsp => 0..self.coords.len(),
            ProblemKind::Cvrp => 1..self.coords.len(),
        }
    }

    pub fn depot(&self) -> Option<usize> {
        self.is_cvrp().then_some(0)
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Point {
        self.coords[i]
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn demand(&self, i: usize) -> f64 {
        self.demands[i]
    }

    /// Vehicle capacity; infinite for TSP.
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn dist(&self, a: usize, b: usize) -> f64 {
        euclid_distance(self.coords[a], self.coords[b])
    }

    /// Distance under `metric`. Polar distances that involve a point on the
    /// depot fall back to Euclidean distance for that pair.
    pub fn metric_distance(&self, metric: Metric, a: usize, b: usize) -> f64 {
        match (metric, self.kind) {
            (Metric::Polar, ProblemKind::Cvrp) => {
                polar_angle_distance(self.coords[a], self.coords[b], self.coords[0])
                    .unwrap_or_else(|_| self.dist(a, b))
            }
            _ => self.dist(a, b),
        }
    }

    /// Maps each axis affinely onto `[0, 1]`. An axis with zero extent maps
    /// to 0.5. Demands and capacity are untouched.
    pub fn minmax_scale(&self) -> Instance {
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.coords {
            lo_x = lo_x.min(p.x);
            hi_x = hi_x.max(p.x);
            lo_y = lo_y.min(p.y);
            hi_y = hi_y.max(p.y);
        }
        let axis = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let mut out = self.clone();
        for p in &mut out.coords {
            *p = Point::new(axis(p.x, lo_x, hi_x), axis(p.y, lo_y, hi_y));
        }
        out
    }
}

/// Node-to-node metric for neighbor queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclid,
    /// Angle around the depot; CVRP only.
    Polar,
}

/// The `k` candidates closest to `query`, ascending, ties to the smaller
/// index. `query` itself is never returned.
pub fn k_nearest(
    query: usize,
    candidates: impl IntoIterator<Item = usize>,
    k: usize,
    mut dist: impl FnMut(usize, usize) -> f64,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .into_iter()
        .filter(|&c| c != query)
        .map(|c| (dist(query, c), c))
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        if k == 0 {
            return Vec::new();
        }
        scored.select_nth_unstable_by(k - 1, by_key);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_key);
    scored.into_iter().map(|(_, c)| c).collect()
}

/// Index of the smallest score, earliest index on ties. `None` when empty.
pub(crate) fn argmin_by_key<I: IntoIterator<Item = (usize, f64)>>(items: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        match best {
            Some((_, b)) if v.total_cmp(&b) != Ordering::Less => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
