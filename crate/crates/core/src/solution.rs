//! Closed tours and depot-delimited route sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, ProblemKind};

/// A complete solution.
///
/// For TSP, `order` is a permutation of all nodes and the closing edge is
/// implied. For CVRP, `order` lists customers with depot `0` separating
/// routes; every route implicitly starts and ends at the depot, so
/// `[3, 1, 0, 2]` is the two routes `0-3-1-0` and `0-2-0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CyclicSolution {
    order: Vec<usize>,
}

impl CyclicSolution {
    pub fn new(order: Vec<usize>) -> Self {
        CyclicSolution { order }
    }

    /// Joins customer routes with depot separators. Empty routes are dropped.
    pub fn from_routes<R: AsRef<[usize]>>(routes: &[R]) -> Self {
        let mut order = Vec::new();
        for r in routes.iter().map(AsRef::as_ref).filter(|r| !r.is_empty()) {
            if !order.is_empty() {
                order.push(0);
            }
            order.extend_from_slice(r);
        }
        CyclicSolution { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn into_order(self) -> Vec<usize> {
        self.order
    }

    /// Routes as slices of customers. TSP yields the single whole tour.
    pub fn routes(&self, kind: ProblemKind) -> Vec<&[usize]> {
        match kind {
            ProblemKind::Tsp => vec![&self.order[..]],
            ProblemKind::Cvrp => self.order.split(|&v| v == 0).filter(|r| !r.is_empty()).collect(),
        }
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        let n = inst.len();
        let mut seen = vec![false; n];
        for &v in &self.order {
            if v >= n {
                return Err(Error::InvalidSolution(format!("node {v} out of range 0..{n}")));
            }
            if inst.is_cvrp() && v == 0 {
                continue;
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidSolution(format!("node {v} visited twice")));
            }
        }
        if let Some(missing) = inst.customers().find(|&c| !seen[c]) {
            return Err(Error::InvalidSolution(format!("node {missing} never visited")));
        }
        if inst.is_cvrp() {
            for (r, route) in self.routes(ProblemKind::Cvrp).into_iter().enumerate() {
                let load: f64 = route.iter().map(|&c| inst.demand(c)).sum();
                if load > inst.capacity() {
                    return Err(Error::InvalidSolution(format!(
                        "route {r} load {load} exceeds capacity {}",
                        inst.capacity()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total Euclidean length, closing edges and depot legs included.
    pub fn length(&self, inst: &Instance) -> Result<f64> {
        self.validate(inst)?;
        Ok(self.length_unchecked(inst))
    }

    /// Like [`length`](Self::length) but trusts the caller that the solution
    /// is valid.
    pub fn length_unchecked(&self, inst: &Instance) -> f64 {
        self.edge_sum(inst, |a, b| inst.dist(a, b))
    }

    /// Length with every edge rounded to the nearest integer, the TSPLIB
    /// `EUC_2D` convention used for published optima.
    pub fn tsplib_length(&self, inst: &Instance) -> Result<f64> {
        self.validate(inst)?;
        Ok(self.edge_sum(inst, |a, b| (inst.dist(a, b) + 0.5).floor()))
    }

    fn edge_sum(&self, inst: &Instance, d: impl Fn(usize, usize) -> f64) -> f64 {
        let closed = |r: &[usize], close_at: Option<usize>| -> f64 {
            let inner: f64 = r.windows(2).map(|w| d(w[0], w[1])).sum();
            let (first, last) = (r[0], r[r.len() - 1]);
            inner
                + match close_at {
                    Some(depot) => d(depot, first) + d(last, depot),
                    None => d(last, first),
                }
        };
        match inst.kind() {
            ProblemKind::Tsp if self.order.is_empty() => 0.0,
            ProblemKind::Tsp => closed(&self.order, None),
            ProblemKind::Cvrp => {
                self.routes(ProblemKind::Cvrp).into_iter().map(|r| closed(r, Some(0))).sum()
            }
        }
    }

    /// Capacity minus the demand already served by route `route`.
    pub fn remaining_capacity(&self, inst: &Instance, route: usize) -> Result<f64> {
        let routes = self.routes(inst.kind());
        let r = routes
            .get(route)
            .ok_or(Error::RouteIndexOutOfRange { index: route, routes: routes.len() })?;
        Ok(inst.capacity() - r.iter().map(|&c| inst.demand(c)).sum::<f64>())
    }

    /// True when both describe the same cycle up to rotation and reflection
    /// (per route for CVRP, with route order ignored).
    pub fn same_cycles(&self, other: &CyclicSolution, kind: ProblemKind) -> bool {
        let mut a: Vec<Vec<usize>> = self.routes(kind).into_iter().map(canonical_cycle).collect();
        let mut b: Vec<Vec<usize>> = other.routes(kind).into_iter().map(canonical_cycle).collect();
        a.sort();
        b.sort();
        a == b
    }
}

/// Rotation/reflection-normal form: start at the minimum node, then walk
/// toward its smaller neighbor.
pub(crate) fn canonical_cycle(r: &[usize]) -> Vec<usize> {
    let n = r.len();
    if n == 0 {
        return Vec::new();
    }
    let start = (0..n).min_by_key(|&i| r[i]).unwrap();
    let fwd = r[(start + 1) % n];
    let bwd = r[(start + n - 1) % n];
    if fwd <= bwd {
        (0..n).map(|k| r[(start + k) % n]).collect()
    } else {
        (0..n).map(|k| r[(start + n - k) % n]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn square() -> Instance {
        Instance::tsp(
            "sq",
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn length_examples() {
        assert_eq!(CyclicSolution::new(vec![0, 1, 2, 3]).length(&square()).unwrap(), 4.0);
        let two = Instance::tsp("2", vec![Point::new(0.0, 0.0), Point::new(0.0, 2.5)]).unwrap();
        assert_eq!(CyclicSolution::new(vec![1, 0]).length(&two).unwrap(), 5.0);
        let c = Instance::cvrp("c", vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], vec![0.0, 1.0], 2.0)
            .unwrap();
        assert_eq!(CyclicSolution::new(vec![1]).length(&c).unwrap(), 2.0);
    }

    #[test]
    fn validation_errors() {
        let sq = square();
        assert!(CyclicSolution::new(vec![0, 1, 2]).validate(&sq).is_err());
        assert!(CyclicSolution::new(vec![0, 1, 2, 2]).validate(&sq).is_err());
        assert!(CyclicSolution::new(vec![0, 1, 2, 9]).validate(&sq).is_err());
        let c = Instance::cvrp(
            "c",
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)],
            vec![0.0, 3.0, 3.0],
            5.0,
        )
        .unwrap();
        assert!(CyclicSolution::new(vec![1, 2]).validate(&c).is_err());
        assert!(CyclicSolution::new(vec![1, 0, 2]).validate(&c).is_ok());
        assert!(CyclicSolution::new(vec![0, 1, 0, 0, 2, 0]).validate(&c).is_ok());
    }

    #[test]
    fn remaining_capacity_examples() {
        let coords = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(3.0, 0.0)];
        let c = Instance::cvrp("c", coords, vec![0.0, 3.0, 7.0, 50.0], 50.0).unwrap();
        let s = CyclicSolution::new(vec![1, 2, 0, 3]);
        assert_eq!(s.remaining_capacity(&c, 0).unwrap(), 40.0);
        assert_eq!(s.remaining_capacity(&c, 1).unwrap(), 0.0);
        assert!(matches!(
            s.remaining_capacity(&c, 2),
            Err(Error::RouteIndexOutOfRange { index: 2, routes: 2 })
        ));
        assert_eq!(CyclicSolution::from_routes(&[vec![], vec![1]]).order(), &[1]);
    }

    #[test]
    fn tsplib_rounding() {
        let inst = Instance::tsp("r", vec![Point::new(0.0, 0.0), Point::new(1.4, 0.0)]).unwrap();
        assert_eq!(CyclicSolution::new(vec![0, 1]).tsplib_length(&inst).unwrap(), 2.0);
    }

    #[test]
    fn cycle_equality() {
        let a = CyclicSolution::new(vec![0, 1, 2, 3, 4]);
        assert!(a.same_cycles(&CyclicSolution::new(vec![2, 3, 4, 0, 1]), ProblemKind::Tsp));
        assert!(a.same_cycles(&CyclicSolution::new(vec![4, 3, 2, 1, 0]), ProblemKind::Tsp));
        assert!(!a.same_cycles(&CyclicSolution::new(vec![0, 2, 1, 3, 4]), ProblemKind::Tsp));
        let r = CyclicSolution::new(vec![1, 2, 0, 3, 4, 5]);
        assert!(r.same_cycles(&CyclicSolution::new(vec![5, 4, 3, 0, 2, 1]), ProblemKind::Cvrp));
    }

    proptest! {
        #[test]
        fn length_equals_edge_sum(seed in any::<u64>(), n in 2usize..30) {
            let mut r = rng::seeded(seed);
            let inst = crate::data::gen_uniform_tsp(n, 1, &mut r).pop().unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut r);
            let mut brute = 0.0;
            for i in 0..n {
                brute += inst.dist(order[i], order[(i + 1) % n]);
            }
            let len = CyclicSolution::new(order).length(&inst).unwrap();
            prop_assert!(len >= 0.0);
            prop_assert!((len - brute).abs() < 1e-9);
        }
    }
}
