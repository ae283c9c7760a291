//! Insertion-based construction.
//!
//! A construction run keeps a partial solution over the visited nodes and
//! repeats three steps until nothing is left unvisited: pick the next node
//! with a [`NodeSelector`], pick where it goes with a [`PositionPolicy`],
//! and splice it in with [`InsertionState::insert`].
//!
//! Positions are edge *occurrences* of the partial solution. For TSP the
//! partial is one cycle `(π1, …, πl)` and position `Edge { route: 0, index: i }`
//! for `i` in `1..=l` is the edge `(πi, πi+1)`, the last one wrapping back
//! to `π1`. A one-node cycle therefore has exactly one position, its
//! self-loop. For CVRP each route `(c1, …, cl)` contributes `l + 1`
//! positions, `index: 0` being the depot leg `(0, c1)` and `index: l` the
//! return leg `(cl, 0)`, followed by the single [`Position::NewRoute`] slot
//! (the depot-to-depot loop that opens a fresh route).

use std::collections::BTreeSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::instance::{argmin_by_key, k_nearest, Instance, Metric};
use crate::rng::Rng;
use crate::solution::CyclicSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    /// Insert at `index` of route `route`, i.e. between the node before that
    /// slot and the node currently occupying it.
    Edge { route: usize, index: usize },
    /// Open a new route `0 -> node -> 0` (CVRP only).
    NewRoute,
}

/// How the next node to insert is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeSelector {
    /// Unvisited node closest to the last inserted node.
    #[default]
    NearestEuclid,
    /// Unvisited node with the smallest angle to the last inserted node,
    /// measured around the depot. CVRP only.
    NearestPolar,
    /// Uniformly random unvisited node.
    Random,
}

/// Working state of one construction run.
#[derive(Debug, Clone)]
pub struct InsertionState<'a> {
    instance: &'a Instance,
    routes: Vec<Vec<usize>>,
    loads: Vec<f64>,
    unvisited: BTreeSet<usize>,
    last_node: Option<usize>,
    current_node: Option<usize>,
}

impl<'a> InsertionState<'a> {
    /// TSP start: the partial is the single node `start`.
    pub fn tsp_start(instance: &'a Instance, start: usize) -> Result<Self> {
        if instance.is_cvrp() || start >= instance.len() {
            return Err(Error::InvalidInstance(format!("bad tsp start node {start}")));
        }
        Ok(InsertionState {
            instance,
            routes: vec![vec![start]],
            loads: vec![0.0],
            unvisited: instance.customers().filter(|&c| c != start).collect(),
            last_node: Some(start),
            current_node: None,
        })
    }

    /// CVRP start: the depot plus its nearest customer form the first route.
    pub fn cvrp_start(instance: &'a Instance) -> Result<Self> {
        if !instance.is_cvrp() {
            return Err(Error::InvalidInstance("cvrp_start on a tsp instance".into()));
        }
        let first = k_nearest(0, instance.customers(), 1, |a, b| instance.dist(a, b))[0];
        Ok(InsertionState {
            instance,
            routes: vec![vec![first]],
            loads: vec![instance.demand(first)],
            unvisited: instance.customers().filter(|&c| c != first).collect(),
            last_node: Some(first),
            current_node: None,
        })
    }

    /// Builds a state from an existing partial. CVRP routes hold customers
    /// only; empty routes are dropped. Every customer must appear exactly
    /// once across `routes` and `unvisited`, and routes must fit capacity.
    pub fn from_partial(
        instance: &'a Instance,
        routes: Vec<Vec<usize>>,
        unvisited: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let routes: Vec<Vec<usize>> = if instance.is_cvrp() {
            routes.into_iter().filter(|r| !r.is_empty()).collect()
        } else {
            routes
        };
        if !instance.is_cvrp() && (routes.len() != 1 || routes[0].is_empty()) {
            return Err(Error::InvalidSolution("tsp partial must be one non-empty cycle".into()));
        }
        let unvisited: BTreeSet<usize> = unvisited.into_iter().collect();
        let mut seen = vec![false; instance.len()];
        for &v in routes.iter().flatten().chain(unvisited.iter()) {
            if !instance.customers().contains(&v) || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidSolution(format!("node {v} misplaced in partial")));
            }
        }
        if let Some(c) = instance.customers().find(|&c| !seen[c]) {
            return Err(Error::InvalidSolution(format!("node {c} missing from partial")));
        }
        let loads: Vec<f64> =
            routes.iter().map(|r| r.iter().map(|&c| instance.demand(c)).sum()).collect();
        if let Some(&load) = loads.iter().find(|&&l| l > instance.capacity()) {
            return Err(Error::CapacityViolation { load, capacity: instance.capacity() });
        }
        Ok(InsertionState { instance, routes, loads, unvisited, last_node: None, current_node: None })
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    /// Visited customers per route; the TSP cycle is route 0.
    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn unvisited(&self) -> &BTreeSet<usize> {
        &self.unvisited
    }

    pub fn last_node(&self) -> Option<usize> {
        self.last_node
    }

    pub fn set_last_node(&mut self, node: Option<usize>) {
        self.last_node = node;
    }

    pub fn current_node(&self) -> Option<usize> {
        self.current_node
    }

    /// Makes `node` the current node, taking it out of the unvisited set.
    pub fn set_current_node(&mut self, node: usize) -> Result<()> {
        if let Some(prev) = self.current_node.take() {
            self.unvisited.insert(prev);
        }
        if !self.unvisited.remove(&node) {
            return Err(Error::InvalidPosition);
        }
        self.current_node = Some(node);
        Ok(())
    }

    pub fn visited_count(&self) -> usize {
        self.routes.iter().map(Vec::len).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.unvisited.is_empty() && self.current_node.is_none()
    }

    pub fn remaining_capacity(&self, route: usize) -> Result<f64> {
        self.loads
            .get(route)
            .map(|l| self.instance.capacity() - l)
            .ok_or(Error::RouteIndexOutOfRange { index: route, routes: self.routes.len() })
    }

    /// The partial solution over visited nodes.
    pub fn partial_solution(&self) -> CyclicSolution {
        if self.instance.is_cvrp() {
            CyclicSolution::from_routes(&self.routes)
        } else {
            CyclicSolution::new(self.routes[0].clone())
        }
    }

    /// Consumes a complete state.
    pub fn into_solution(self) -> Result<CyclicSolution> {
        if !self.is_complete() {
            return Err(Error::InvalidSolution(format!(
                "{} nodes still unvisited",
                self.unvisited.len() + self.current_node.is_some() as usize
            )));
        }
        Ok(self.partial_solution())
    }

    /// Every position of the partial in canonical order, flagged with
    /// whether the current node fits the position's route. Without a
    /// current node all positions are flagged feasible.
    pub fn all_positions(&self) -> Vec<(Position, bool)> {
        if !self.instance.is_cvrp() {
            return (1..=self.routes[0].len()).map(|index| (Position::Edge { route: 0, index }, true)).collect();
        }
        let demand = self.current_node.map_or(0.0, |c| self.instance.demand(c));
        let cap = self.instance.capacity();
        let mut out = Vec::with_capacity(self.visited_count() + self.routes.len() + 1);
        for (route, r) in self.routes.iter().enumerate() {
            let fits = cap - self.loads[route] >= demand;
            out.extend((0..=r.len()).map(|index| (Position::Edge { route, index }, fits)));
        }
        out.push((Position::NewRoute, true));
        out
    }

    /// Positions the current node may be inserted into.
    pub fn valid_positions(&self) -> Result<Vec<Position>> {
        if self.current_node.is_none() {
            return Err(Error::NoCurrentNode);
        }
        Ok(self.all_positions().into_iter().filter(|p| p.1).map(|p| p.0).collect())
    }

    /// `(predecessor, successor)` of a position.
    pub fn endpoints(&self, pos: Position) -> Result<(usize, usize)> {
        match pos {
            Position::NewRoute if self.instance.is_cvrp() => Ok((0, 0)),
            Position::NewRoute => Err(Error::InvalidPosition),
            Position::Edge { route, index } => {
                let r = self.routes.get(route).ok_or(Error::InvalidPosition)?;
                if self.instance.is_cvrp() {
                    if index > r.len() {
                        return Err(Error::InvalidPosition);
                    }
                    let pred = if index == 0 { 0 } else { r[index - 1] };
                    let succ = if index == r.len() { 0 } else { r[index] };
                    Ok((pred, succ))
                } else {
                    if index == 0 || index > r.len() {
                        return Err(Error::InvalidPosition);
                    }
                    Ok((r[index - 1], r[index % r.len()]))
                }
            }
        }
    }

    fn fits(&self, pos: Position, node: usize) -> bool {
        match pos {
            Position::NewRoute => true,
            Position::Edge { route, .. } => {
                self.instance.capacity() - self.loads[route] >= self.instance.demand(node)
            }
        }
    }

    /// Cost increase of splicing `node` into `pos`.
    pub fn insertion_delta(&self, pos: Position, node: usize) -> Result<f64> {
        let (a, b) = self.endpoints(pos)?;
        if !self.fits(pos, node) {
            return Err(Error::InvalidPosition);
        }
        let inst = self.instance;
        Ok(inst.dist(a, node) + inst.dist(node, b) - inst.dist(a, b))
    }

    /// Picks the next node per `strategy`, removes it from the unvisited set
    /// and makes it the current node.
    pub fn select_next_node(&mut self, strategy: NodeSelector, rng: &mut Rng) -> Result<usize> {
        if strategy == NodeSelector::NearestPolar && !self.instance.is_cvrp() {
            return Err(Error::PolarOnTsp);
        }
        let node = pick_node(self.instance, self.unvisited.iter().copied(), self.last_node, strategy, rng)
            .ok_or(Error::EmptyUnvisited)?;
        self.set_current_node(node)?;
        Ok(node)
    }

    /// Splices the current node into `pos`.
    pub fn insert(&mut self, pos: Position) -> Result<()> {
        let node = self.current_node.ok_or(Error::NoCurrentNode)?;
        self.endpoints(pos)?;
        match pos {
            Position::NewRoute => {
                self.routes.push(vec![node]);
                self.loads.push(self.instance.demand(node));
            }
            Position::Edge { route, index } => {
                let load = self.loads[route] + self.instance.demand(node);
                if load > self.instance.capacity() {
                    return Err(Error::CapacityViolation { load, capacity: self.instance.capacity() });
                }
                self.routes[route].insert(index, node);
                self.loads[route] = load;
            }
        }
        self.last_node = Some(node);
        self.current_node = None;
        Ok(())
    }
}

/// Chooses among `candidates` relative to `last`. Nearest ties go to the
/// smaller index. Without a last node, nearest selection measures from the
/// depot (CVRP) or takes the smallest candidate (TSP).
pub(crate) fn pick_node(
    inst: &Instance,
    candidates: impl Iterator<Item = usize>,
    last: Option<usize>,
    strategy: NodeSelector,
    rng: &mut Rng,
) -> Option<usize> {
    let metric = match strategy {
        NodeSelector::Random => {
            let pool: Vec<usize> = candidates.collect();
            return (!pool.is_empty()).then(|| pool[rng.gen_range(0..pool.len())]);
        }
        NodeSelector::NearestEuclid => Metric::Euclid,
        NodeSelector::NearestPolar => Metric::Polar,
    };
    let from = last.or(inst.depot());
    match from {
        Some(from) => argmin_by_key(candidates.map(|c| (c, inst.metric_distance(metric, from, c)))),
        None => candidates.min(),
    }
}

/// Chooses where the current node goes.
pub trait PositionPolicy {
    /// Called once per construction or repair run before any `choose`.
    fn prepare(&mut self, _instance: &Instance) -> Result<()> {
        Ok(())
    }

    fn choose(&mut self, state: &InsertionState<'_>, rng: &mut Rng) -> Result<Position>;
}

impl<P: PositionPolicy + ?Sized> PositionPolicy for &mut P {
    fn prepare(&mut self, instance: &Instance) -> Result<()> {
        (**self).prepare(instance)
    }

    fn choose(&mut self, state: &InsertionState<'_>, rng: &mut Rng) -> Result<Position> {
        (**self).choose(state, rng)
    }
}

impl<P: PositionPolicy + ?Sized> PositionPolicy for Box<P> {
    fn prepare(&mut self, instance: &Instance) -> Result<()> {
        (**self).prepare(instance)
    }

    fn choose(&mut self, state: &InsertionState<'_>, rng: &mut Rng) -> Result<Position> {
        (**self).choose(state, rng)
    }
}

/// Position with the smallest insertion cost; first in canonical order on ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct CheapestInsertion;

impl PositionPolicy for CheapestInsertion {
    fn choose(&mut self, state: &InsertionState<'_>, _rng: &mut Rng) -> Result<Position> {
        cheapest_position(state)
    }
}

pub fn cheapest_position(state: &InsertionState<'_>) -> Result<Position> {
    let node = state.current_node().ok_or(Error::NoCurrentNode)?;
    let positions = state.valid_positions()?;
    let deltas = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| state.insertion_delta(p, node).map(|d| (i, d)))
        .collect::<Result<Vec<_>>>()?;
    argmin_by_key(deltas).map(|i| positions[i]).ok_or(Error::NoValidPosition)
}

/// Uniformly random valid position.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPosition;

impl PositionPolicy for RandomPosition {
    fn choose(&mut self, state: &InsertionState<'_>, rng: &mut Rng) -> Result<Position> {
        let positions = state.valid_positions()?;
        if positions.is_empty() {
            return Err(Error::NoValidPosition);
        }
        Ok(positions[rng.gen_range(0..positions.len())])
    }
}

/// Start node of a TSP construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartNode {
    Fixed(usize),
    Random,
}

impl Default for StartNode {
    fn default() -> Self {
        StartNode::Fixed(0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstructOptions {
    /// Ignored for CVRP, which always starts from the depot's nearest customer.
    pub start: StartNode,
}

/// Runs select -> choose -> insert until `state` is complete.
pub fn complete<P: PositionPolicy + ?Sized>(
    state: &mut InsertionState<'_>,
    policy: &mut P,
    selector: NodeSelector,
    rng: &mut Rng,
) -> Result<()> {
    while !state.unvisited().is_empty() {
        state.select_next_node(selector, rng)?;
        let pos = policy.choose(state, rng)?;
        if !state.valid_positions()?.contains(&pos) {
            return Err(Error::InvalidPosition);
        }
        state.insert(pos)?;
    }
    Ok(())
}

/// Builds a complete solution by repeated insertion.
pub fn construct<P: PositionPolicy + ?Sized>(
    instance: &Instance,
    policy: &mut P,
    selector: NodeSelector,
    rng: &mut Rng,
    options: ConstructOptions,
) -> Result<CyclicSolution> {
    policy.prepare(instance)?;
    let mut state = if instance.is_cvrp() {
        InsertionState::cvrp_start(instance)?
    } else {
        let start = match options.start {
            StartNode::Fixed(s) => s,
            StartNode::Random => rng.gen_range(0..instance.len()),
        };
        InsertionState::tsp_start(instance, start)?
    };
    complete(&mut state, policy, selector, rng)?;
    state.into_solution()
}

/// Appending baseline: each selected node extends the end of the current
/// route. CVRP closes a route when no remaining node fits and starts the
/// next one from the depot.
pub fn append_construct(
    instance: &Instance,
    selector: NodeSelector,
    rng: &mut Rng,
) -> Result<CyclicSolution> {
    if selector == NodeSelector::NearestPolar && !instance.is_cvrp() {
        return Err(Error::PolarOnTsp);
    }
    let mut unvisited: BTreeSet<usize> = instance.customers().collect();
    if !instance.is_cvrp() {
        let mut tour = vec![0];
        unvisited.remove(&0);
        while let Some(next) = pick_node(instance, unvisited.iter().copied(), tour.last().copied(), selector, rng) {
            unvisited.remove(&next);
            tour.push(next);
        }
        return Ok(CyclicSolution::new(tour));
    }
    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut route: Vec<usize> = Vec::new();
    let mut load = 0.0;
    while !unvisited.is_empty() {
        let room = instance.capacity() - load;
        let fitting = unvisited.iter().copied().filter(|&c| instance.demand(c) <= room);
        match pick_node(instance, fitting, Some(route.last().copied().unwrap_or(0)), selector, rng) {
            Some(next) => {
                unvisited.remove(&next);
                load += instance.demand(next);
                route.push(next);
            }
            None => {
                routes.push(std::mem::take(&mut route));
                load = 0.0;
            }
        }
    }
    routes.push(route);
    Ok(CyclicSolution::from_routes(&routes))
}
