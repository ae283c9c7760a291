//! Exact TSP by subset dynamic programming.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::solution::CyclicSolution;

/// Largest instance [`held_karp`] accepts (2^19 subsets x 19 end nodes).
pub const HELD_KARP_MAX_NODES: usize = 20;

thread_local! {
    static TABLES: RefCell<(Vec<f64>, Vec<u8>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Optimal tour and its length. The tour starts at node 0.
///
/// `cost[S][j]` is the shortest path that leaves node 0, visits exactly the
/// set `S` of other nodes and ends at `j ∈ S`. Ties keep the smaller
/// predecessor, so the returned tour is deterministic.
pub fn held_karp(inst: &Instance) -> Result<(CyclicSolution, f64)> {
    if inst.is_cvrp() {
        return Err(Error::InvalidInstance("held_karp solves tsp only".into()));
    }
    let n = inst.len();
    if n > HELD_KARP_MAX_NODES {
        return Err(Error::TooLarge { n, max: HELD_KARP_MAX_NODES });
    }
    if n <= 3 {
        let tour = CyclicSolution::new((0..n).collect());
        let len = tour.length_unchecked(inst);
        return Ok((tour, len));
    }
    let m = n - 1;
    let d: Vec<f64> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| inst.dist(a, b)).collect();
    let dist = |a: usize, b: usize| d[a * n + b];
    let full = (1usize << m) - 1;

    TABLES.with(|tables| {
        let (cost, parent) = &mut *tables.borrow_mut();
        cost.clear();
        cost.resize((full + 1) * m, f64::INFINITY);
        parent.clear();
        parent.resize((full + 1) * m, u8::MAX);

        for j in 0..m {
            cost[(1 << j) * m + j] = dist(0, j + 1);
        }
        for mask in 1..=full {
            if mask & (mask - 1) == 0 {
                continue;
            }
            let mut bits = mask;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let prev = mask ^ (1 << j);
                let row = &cost[prev * m..prev * m + m];
                let mut best = f64::INFINITY;
                let mut arg = u8::MAX;
                let mut ks = prev;
                while ks != 0 {
                    let k = ks.trailing_zeros() as usize;
                    ks &= ks - 1;
                    let c = row[k] + dist(k + 1, j + 1);
                    if c < best {
                        best = c;
                        arg = k as u8;
                    }
                }
                cost[mask * m + j] = best;
                parent[mask * m + j] = arg;
            }
        }

        let mut best = f64::INFINITY;
        let mut last = 0;
        for j in 0..m {
            let c = cost[full * m + j] + dist(j + 1, 0);
            if c < best {
                best = c;
                last = j;
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut mask = full;
        let mut j = last;
        loop {
            order.push(j + 1);
            let p = parent[mask * m + j];
            mask ^= 1 << j;
            if p == u8::MAX {
                break;
            }
            j = p as usize;
        }
        order.push(0);
        order.reverse();
        Ok((CyclicSolution::new(order), best))
    })
}

/// Exhaustive search over all tours through node 0. Test oracle; `n ≤ 11`.
pub fn brute_force_tsp(inst: &Instance) -> f64 {
    let n = inst.len();
    assert!(n <= 11, "brute force is factorial");
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut rest, 0, &mut |p| {
        let mut len = inst.dist(0, p[0]) + inst.dist(p[p.len() - 1], 0);
        for w in p.windows(2) {
            len += inst.dist(w[0], w[1]);
        }
        best = best.min(len);
    });
    best
}

fn permute(v: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}
