//! Near-optimal labels for instances too large for the exact solver.
//!
//! TSP descends with 2-opt and Or-opt moves; CVRP with intra-route 2-opt,
//! relocate and swap. [`local_search_label`] starts from a cheapest-insertion
//! construction and then spends its restart budget on ruin-and-recreate
//! kicks, keeping the best local optimum seen.

use crate::construct::{construct, CheapestInsertion, NodeSelector};
use crate::error::Result;
use crate::instance::Instance;
use crate::reconstruct::{destroy, repair, Destruction};
use crate::rng::Rng;
use crate::solution::CyclicSolution;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelBudget {
    /// Perturb-and-descend rounds after the first descent.
    pub restarts: usize,
}

impl Default for LabelBudget {
    fn default() -> Self {
        LabelBudget { restarts: 30 }
    }
}

/// Local-search descent from `start` to a local optimum of the move set.
pub fn local_search(inst: &Instance, start: &CyclicSolution) -> Result<CyclicSolution> {
    start.validate(inst)?;
    if inst.is_cvrp() {
        let mut routes: Vec<Vec<usize>> =
            start.routes(inst.kind()).into_iter().map(<[usize]>::to_vec).collect();
        cvrp_descent(inst, &mut routes);
        Ok(CyclicSolution::from_routes(&routes))
    } else {
        let mut tour = start.order().to_vec();
        tsp_descent(inst, &mut tour);
        Ok(CyclicSolution::new(tour))
    }
}

/// Best solution found by descent from cheapest insertion plus
/// `budget.restarts` perturbation rounds. Never longer than the
/// cheapest-insertion construction.
pub fn local_search_label(inst: &Instance, budget: LabelBudget, rng: &mut Rng) -> Result<CyclicSolution> {
    let init = construct(inst, &mut CheapestInsertion, NodeSelector::NearestEuclid, rng, Default::default())?;
    let mut best = local_search(inst, &init)?;
    let mut best_len = best.length_unchecked(inst);
    let customers = inst.customer_count();
    if customers < 4 {
        return Ok(best);
    }
    let alpha = (customers / 5).max(2);
    for _ in 0..budget.restarts {
        let ruined = destroy(inst, &best, alpha, Destruction::Distance, rng)?;
        let kicked = repair(ruined.state, &mut CheapestInsertion, NodeSelector::Random, rng)?;
        let cand = local_search(inst, &kicked)?;
        let len = cand.length_unchecked(inst);
        if len < best_len - 1e-9 {
            best = cand;
            best_len = len;
        }
    }
    Ok(best)
}

fn tsp_descent(inst: &Instance, tour: &mut Vec<usize>) {
    while two_opt_pass(inst, tour) || or_opt_pass(inst, tour) {}
}

/// One first-improvement sweep of 2-opt. Returns whether anything changed.
fn two_opt_pass(inst: &Instance, tour: &mut [usize]) -> bool {
    let n = tour.len();
    if n < 4 {
        return false;
    }
    let d = |a, b| inst.dist(a, b);
    let mut improved = false;
    for i in 0..n - 2 {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b, c, e) = (tour[i], tour[i + 1], tour[j], tour[(j + 1) % n]);
            if d(a, c) + d(b, e) - d(a, b) - d(c, e) < -EPS {
                tour[i + 1..=j].reverse();
                improved = true;
            }
        }
    }
    improved
}

/// Moves segments of 1 to 3 nodes elsewhere, either orientation.
fn or_opt_pass(inst: &Instance, tour: &mut Vec<usize>) -> bool {
    let n = tour.len();
    let d = |a, b| inst.dist(a, b);
    for len in 1..=3usize {
        if n < len + 3 {
            break;
        }
        for i in 0..n {
            let seg: Vec<usize> = (0..len).map(|k| tour[(i + k) % n]).collect();
            let (s0, s1) = (seg[0], seg[len - 1]);
            let p = tour[(i + n - 1) % n];
            let q = tour[(i + len) % n];
            let gain = d(p, s0) + d(s1, q) - d(p, q);
            // remainder starts right after the segment
            let rest: Vec<usize> = (0..n - len).map(|k| tour[(i + len + k) % n]).collect();
            let mut best: Option<(f64, usize, bool)> = None;
            for k in 0..rest.len() {
                let (u, v) = (rest[k], rest[(k + 1) % rest.len()]);
                if u == p && v == q {
                    continue;
                }
                let fwd = d(u, s0) + d(s1, v) - d(u, v);
                let rev = d(u, s1) + d(s0, v) - d(u, v);
                let (cost, flip) = if rev < fwd { (rev, true) } else { (fwd, false) };
                if gain - cost > EPS && best.map_or(true, |b| cost < b.0) {
                    best = Some((cost, k, flip));
                }
            }
            if let Some((_, k, flip)) = best {
                let mut out = Vec::with_capacity(n);
                out.extend_from_slice(&rest[..=k]);
                if flip {
                    out.extend(seg.iter().rev());
                } else {
                    out.extend_from_slice(&seg);
                }
                out.extend_from_slice(&rest[k + 1..]);
                *tour = out;
                return true;
            }
        }
    }
    false
}

fn cvrp_descent(inst: &Instance, routes: &mut Vec<Vec<usize>>) {
    loop {
        let mut changed = false;
        for r in routes.iter_mut() {
            changed |= route_two_opt(inst, r);
        }
        changed |= relocate_pass(inst, routes) || swap_pass(inst, routes);
        routes.retain(|r| !r.is_empty());
        if !changed {
            break;
        }
    }
}

/// 2-opt inside one route, depot at both ends.
fn route_two_opt(inst: &Instance, route: &mut [usize]) -> bool {
    let at = |r: &[usize], i: isize| if i < 0 || i as usize >= r.len() { 0 } else { r[i as usize] };
    let n = route.len() as isize;
    let mut improved = false;
    for i in -1..n - 1 {
        for j in i + 2..n {
            let (a, b, c, e) = (at(route, i), at(route, i + 1), at(route, j), at(route, j + 1));
            if inst.dist(a, c) + inst.dist(b, e) - inst.dist(a, b) - inst.dist(c, e) < -EPS {
                route[(i + 1) as usize..=j as usize].reverse();
                improved = true;
            }
        }
    }
    improved
}

fn load(inst: &Instance, r: &[usize]) -> f64 {
    r.iter().map(|&c| inst.demand(c)).sum()
}

fn neighbors(r: &[usize], i: usize) -> (usize, usize) {
    let p = if i == 0 { 0 } else { r[i - 1] };
    let q = if i + 1 == r.len() { 0 } else { r[i + 1] };
    (p, q)
}

/// Moves one customer to its best slot in any route (or a new one).
fn relocate_pass(inst: &Instance, routes: &mut Vec<Vec<usize>>) -> bool {
    let d = |a, b| inst.dist(a, b);
    let loads: Vec<f64> = routes.iter().map(|r| load(inst, r)).collect();
    for ra in 0..routes.len() {
        for i in 0..routes[ra].len() {
            let c = routes[ra][i];
            let (p, q) = neighbors(&routes[ra], i);
            let gain = d(p, c) + d(c, q) - d(p, q);
            let mut best: Option<(f64, usize, usize)> = None;
            for rb in 0..routes.len() {
                if rb != ra && loads[rb] + inst.demand(c) > inst.capacity() {
                    continue;
                }
                let r = &routes[rb];
                for j in 0..=r.len() {
                    if rb == ra && (j == i || j == i + 1) {
                        continue;
                    }
                    let u = if j == 0 { 0 } else { r[j - 1] };
                    let v = if j == r.len() { 0 } else { r[j] };
                    let cost = d(u, c) + d(c, v) - d(u, v);
                    if gain - cost > EPS && best.map_or(true, |b| cost < b.0) {
                        best = Some((cost, rb, j));
                    }
                }
            }
            let solo = 2.0 * d(0, c);
            if routes[ra].len() > 1 && gain - solo > EPS && best.map_or(true, |b| solo < b.0) {
                routes[ra].remove(i);
                routes.push(vec![c]);
                return true;
            }
            if let Some((_, rb, j)) = best {
                routes[ra].remove(i);
                let j = if rb == ra && j > i { j - 1 } else { j };
                routes[rb].insert(j, c);
                return true;
            }
        }
    }
    false
}

/// Exchanges two customers between different routes.
fn swap_pass(inst: &Instance, routes: &mut [Vec<usize>]) -> bool {
    let d = |a, b| inst.dist(a, b);
    let loads: Vec<f64> = routes.iter().map(|r| load(inst, r)).collect();
    for ra in 0..routes.len() {
        for rb in ra + 1..routes.len() {
            for i in 0..routes[ra].len() {
                for j in 0..routes[rb].len() {
                    let (a, b) = (routes[ra][i], routes[rb][j]);
                    let (qa, qb) = (inst.demand(a), inst.demand(b));
                    if loads[ra] - qa + qb > inst.capacity() || loads[rb] - qb + qa > inst.capacity() {
                        continue;
                    }
                    let (pa, na) = neighbors(&routes[ra], i);
                    let (pb, nb) = neighbors(&routes[rb], j);
                    let delta = d(pa, b) + d(b, na) - d(pa, a) - d(a, na) + d(pb, a) + d(a, nb)
                        - d(pb, b)
                        - d(b, nb);
                    if delta < -EPS {
                        routes[ra][i] = b;
                        routes[rb][j] = a;
                        return true;
                    }
                }
            }
        }
    }
    false
}
