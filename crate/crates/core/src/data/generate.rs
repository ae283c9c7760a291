use rand::Rng as _;

use crate::geometry::Point;
use crate::instance::Instance;
use crate::rng::Rng;

/// `count` TSP instances with `n` nodes uniform on the unit square.
pub fn gen_uniform_tsp(n: usize, count: usize, rng: &mut Rng) -> Vec<Instance> {
    assert!(n >= 2, "tsp needs at least 2 nodes");
    (0..count)
        .map(|i| {
            let coords = (0..n).map(|_| Point::new(rng.gen(), rng.gen())).collect();
            Instance::tsp(format!("tsp{n}-{i}"), coords).expect("uniform coords are valid")
        })
        .collect()
}

/// `count` CVRP instances: depot and `n` customers uniform on the unit
/// square, integer demands uniform in `1..=9`.
pub fn gen_uniform_cvrp(n: usize, count: usize, capacity: f64, rng: &mut Rng) -> Vec<Instance> {
    assert!(n >= 1, "cvrp needs at least one customer");
    (0..count)
        .map(|i| {
            let coords = (0..=n).map(|_| Point::new(rng.gen(), rng.gen())).collect();
            let demands =
                std::iter::once(0.0).chain((0..n).map(|_| rng.gen_range(1..=9) as f64)).collect();
            Instance::cvrp(format!("cvrp{n}-{i}"), coords, demands, capacity)
                .expect("generated cvrp is valid")
        })
        .collect()
}

/// Vehicle capacity preset by customer count: 50 at 100 customers and 200
/// at 1000, with the customary 30/40 for the small sizes.
pub fn default_capacity(n: usize) -> f64 {
    match n {
        0..=20 => 30.0,
        21..=50 => 40.0,
        51..=100 => 50.0,
        101..=200 => 80.0,
        201..=500 => 100.0,
        _ => 200.0,
    }
}
