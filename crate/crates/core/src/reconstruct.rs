//! Destroy-and-repair improvement of complete solutions.
//!
//! [`destroy`] removes a group of customers and leaves a partial solution
//! whose remaining segments are reconnected; [`repair`] re-inserts them with
//! any [`PositionPolicy`]; [`improve`] loops the two and keeps the shorter
//! solution.

use rand::Rng as _;

use crate::construct::{complete, InsertionState, NodeSelector, PositionPolicy};
use crate::error::{Error, Result};
use crate::instance::{k_nearest, Instance};
use crate::rng::Rng;
use crate::solution::CyclicSolution;

/// Which customers get removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Destruction {
    /// A random customer and its nearest customers (Euclidean).
    #[default]
    Distance,
    /// A run of consecutive customers in solution order.
    Sequence,
}

/// Result of a destruction: the reduced partial plus what was taken out,
/// in removal order (center or run start first).
#[derive(Debug, Clone)]
pub struct Destroyed<'a> {
    pub state: InsertionState<'a>,
    pub removed: Vec<usize>,
}

/// Removes `alpha + 1` customers around a random center. `alpha` is clamped
/// so at least one customer stays.
pub fn destroy<'a>(
    inst: &'a Instance,
    sol: &CyclicSolution,
    alpha: usize,
    how: Destruction,
    rng: &mut Rng,
) -> Result<Destroyed<'a>> {
    let customers: Vec<usize> = sol.order().iter().copied().filter(|&v| inst.depot() != Some(v)).collect();
    if customers.is_empty() {
        return Err(Error::InvalidSolution("nothing to destroy".into()));
    }
    let center = customers[rng.gen_range(0..customers.len())];
    destroy_at(inst, sol, center, alpha, how)
}

/// [`destroy`] with a given center (the run start for [`Destruction::Sequence`]).
pub fn destroy_at<'a>(
    inst: &'a Instance,
    sol: &CyclicSolution,
    center: usize,
    alpha: usize,
    how: Destruction,
) -> Result<Destroyed<'a>> {
    sol.validate(inst)?;
    let routes: Vec<Vec<usize>> = sol.routes(inst.kind()).into_iter().map(<[usize]>::to_vec).collect();
    let flat: Vec<usize> = routes.iter().flatten().copied().collect();
    let Some(at) = flat.iter().position(|&v| v == center) else {
        return Err(Error::InvalidSolution(format!("center {center} is not a customer of the solution")));
    };
    let alpha = alpha.min(flat.len().saturating_sub(2));
    let removed: Vec<usize> = match how {
        Destruction::Distance => std::iter::once(center)
            .chain(k_nearest(center, flat.iter().copied(), alpha, |a, b| inst.dist(a, b)))
            .collect(),
        Destruction::Sequence => (0..=alpha).map(|k| flat[(at + k) % flat.len()]).collect(),
    };
    let mut gone = vec![false; inst.len()];
    for &v in &removed {
        gone[v] = true;
    }
    let kept: Vec<Vec<usize>> =
        routes.into_iter().map(|r| r.into_iter().filter(|&v| !gone[v]).collect()).collect();
    let state = InsertionState::from_partial(inst, kept, removed.iter().copied())?;
    Ok(Destroyed { state, removed })
}

/// Re-inserts every unvisited node of `state`. The first selection measures
/// from a customer drawn uniformly from the partial.
pub fn repair<P: PositionPolicy + ?Sized>(
    mut state: InsertionState<'_>,
    policy: &mut P,
    selector: NodeSelector,
    rng: &mut Rng,
) -> Result<CyclicSolution> {
    policy.prepare(state.instance())?;
    let visited: Vec<usize> = state.routes().iter().flatten().copied().collect();
    if !visited.is_empty() && !state.unvisited().is_empty() {
        state.set_last_node(Some(visited[rng.gen_range(0..visited.len())]));
    }
    complete(&mut state, policy, selector, rng)?;
    state.into_solution()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImproveOptions {
    pub iterations: usize,
    /// Destruction size; `alpha + 1` customers are removed per iteration.
    pub alpha: usize,
    pub destruction: Destruction,
}

impl Default for ImproveOptions {
    fn default() -> Self {
        ImproveOptions { iterations: 100, alpha: 300, destruction: Destruction::Distance }
    }
}

#[derive(Debug, Clone)]
pub struct Improved {
    pub solution: CyclicSolution,
    /// Incumbent length before the first iteration and after each one.
    pub history: Vec<f64>,
}

/// A candidate replaces the incumbent only if it is shorter by more than this.
pub const ACCEPT_SLACK: f64 = 1e-9;

/// Destroy-repair loop keeping the better solution each round.
pub fn improve<P: PositionPolicy + ?Sized>(
    inst: &Instance,
    init: &CyclicSolution,
    policy: &mut P,
    selector: NodeSelector,
    options: ImproveOptions,
    rng: &mut Rng,
) -> Result<Improved> {
    let mut best = init.clone();
    let mut best_len = best.length(inst)?;
    let mut history = Vec::with_capacity(options.iterations + 1);
    history.push(best_len);
    if inst.customer_count() < 2 {
        history.resize(options.iterations + 1, best_len);
        return Ok(Improved { solution: best, history });
    }
    for _ in 0..options.iterations {
        let ruined = destroy(inst, &best, options.alpha, options.destruction, rng)?;
        let cand = repair(ruined.state, policy, selector, rng)?;
        let len = cand.length_unchecked(inst);
        if len < best_len - ACCEPT_SLACK {
            best = cand;
            best_len = len;
        }
        history.push(best_len);
    }
    Ok(Improved { solution: best, history })
}
