use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use super::*;
use crate::construct::{construct, InsertionState, NodeSelector, Position, PositionPolicy};
use crate::data::{gen_uniform_cvrp, gen_uniform_tsp};
use crate::error::Error;
use crate::geometry::Point;
use crate::instance::{Instance, ProblemKind};
use crate::rng;

fn tiny(kind: ProblemKind) -> ModelConfig {
    ModelConfig { d: 8, layers: 2, heads: 2, d_ff: 12, ..ModelConfig::desk(kind) }
}

fn tiny_params(kind: ProblemKind, seed: u64) -> ModelParams<f32> {
    ModelParams::init(tiny(kind), &mut rng::seeded(seed)).unwrap()
}

/// A TSP state with `visited` in the cycle and `current` selected.
fn tsp_state(inst: &Instance, cycle: Vec<usize>, current: usize) -> InsertionState<'_> {
    let unvisited: Vec<usize> = inst.customers().filter(|c| !cycle.contains(c)).collect();
    let mut st = InsertionState::from_partial(inst, vec![cycle], unvisited).unwrap();
    st.set_current_node(current).unwrap();
    st
}

#[test]
fn zero_model_encodes_to_zero() {
    let inst = gen_uniform_tsp(6, 1, &mut rng::seeded(0)).pop().unwrap();
    let p = ModelParams::<f64>::zeros(tiny(ProblemKind::Tsp)).unwrap();
    let h = encode(&p, &inst).unwrap();
    assert_eq!(h, Matrix::zeros(6, 8));
}

#[test]
fn duplicate_nodes_embed_identically() {
    let coords = vec![Point::new(0.1, 0.2), Point::new(0.7, 0.3), Point::new(0.7, 0.3), Point::new(0.4, 0.9)];
    let inst = Instance::tsp("dup", coords).unwrap();
    let h = encode(&tiny_params(ProblemKind::Tsp, 1), &inst).unwrap();
    assert_eq!(h.row(1), h.row(2));
    assert_ne!(h.row(0), h.row(1));
}

#[test]
fn kind_mismatch_is_shape_error() {
    let inst = gen_uniform_cvrp(5, 1, 10.0, &mut rng::seeded(0)).pop().unwrap();
    assert!(matches!(encode(&tiny_params(ProblemKind::Tsp, 0), &inst), Err(Error::ShapeMismatch(_))));
}

#[test]
fn single_token_attention() {
    // one key: attention output is the value row itself
    let mut r = rng::seeded(2);
    let p = ModelParams::<f64>::init(tiny(ProblemKind::Tsp), &mut r).unwrap();
    let w = &p.layers[0];
    let x = Matrix::from_fn(1, 8, |_, j| j as f64 * 0.1 - 0.3);
    let mut xhat = x.matmul(&w.wv).matmul(&w.wo);
    xhat.add_assign(&x);
    let mut z = xhat.matmul(&w.w1);
    z.add_row(w.b1.as_slice());
    let mut expect = z.map(|v: f64| v.max(0.0)).matmul(&w.w2);
    expect.add_row(w.b2.as_slice());
    expect.add_assign(&xhat);
    assert!(attention_layer(&x, w, 2).max_abs_diff(&expect) < 1e-12);
}

#[test]
fn position_tokens_follow_the_cycle() {
    let inst = gen_uniform_tsp(5, 1, &mut rng::seeded(0)).pop().unwrap();
    let cfg = tiny(ProblemKind::Tsp);
    let st = tsp_state(&inst, vec![3], 1);
    let t = step_tokens(&st, &cfg).unwrap();
    assert_eq!(t.positions, vec![PositionToken { pred: 3, succ: 3, capacity: 0.0 }]);
    let st = tsp_state(&inst, vec![0, 2, 4], 1);
    let t = step_tokens(&st, &cfg).unwrap();
    let ends: Vec<(usize, usize)> = t.positions.iter().map(|p| (p.pred, p.succ)).collect();
    assert_eq!(ends, vec![(0, 2), (2, 4), (4, 0)]);
    assert_eq!(t.current, 1);
    assert_eq!(t.unvisited, vec![3]);
    let no_unv = ModelConfig { include_unvisited: false, ..cfg };
    assert!(step_tokens(&st, &no_unv).unwrap().unvisited.is_empty());
}

#[test]
fn capacity_scalar_is_normalized() {
    let coords = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0)];
    let inst = Instance::cvrp("c", coords, vec![0.0, 3.0, 7.0, 5.0], 50.0).unwrap();
    let mut st = InsertionState::from_partial(&inst, vec![vec![1, 2]], [3]).unwrap();
    st.set_current_node(3).unwrap();
    let t = step_tokens(&st, &tiny(ProblemKind::Cvrp)).unwrap();
    assert_eq!(t.positions.len(), 4);
    for p in &t.positions[..3] {
        assert!((p.capacity - 0.8).abs() < 1e-15);
    }
    assert_eq!(t.positions[3], PositionToken { pred: 0, succ: 0, capacity: 1.0 });
}

#[test]
fn one_valid_position_gets_all_mass() {
    let inst = gen_uniform_tsp(4, 1, &mut rng::seeded(3)).pop().unwrap();
    let p = tiny_params(ProblemKind::Tsp, 3);
    let h = encode(&p, &inst).unwrap();
    let st = tsp_state(&inst, vec![2], 0);
    assert_eq!(decode_step(&p, &h, &st).unwrap(), vec![1.0]);
}

#[test]
fn zero_head_gives_uniform() {
    let inst = gen_uniform_tsp(7, 1, &mut rng::seeded(4)).pop().unwrap();
    let mut p = tiny_params(ProblemKind::Tsp, 4);
    p.head_w.fill(0.0);
    let h = encode(&p, &inst).unwrap();
    let st = tsp_state(&inst, vec![0, 1, 2, 3, 4], 5);
    let probs = decode_step(&p, &h, &st).unwrap();
    assert!(probs.iter().all(|&v| (v - 0.2).abs() < 1e-12));
}

#[test]
fn infeasible_route_is_masked() {
    let coords = vec![
        Point::new(0.5, 0.5),
        Point::new(0.1, 0.1),
        Point::new(0.9, 0.1),
        Point::new(0.9, 0.9),
        Point::new(0.1, 0.9),
    ];
    let inst = Instance::cvrp("m", coords, vec![0.0, 8.0, 2.0, 3.0, 4.0], 10.0).unwrap();
    let p = tiny_params(ProblemKind::Cvrp, 5);
    let h = encode(&p, &inst).unwrap();
    let mut st = InsertionState::from_partial(&inst, vec![vec![1], vec![2]], [3, 4]).unwrap();
    st.set_current_node(3).unwrap();
    let probs = decode_step(&p, &h, &st).unwrap();
    // route 0 (load 8) cannot take demand 3: its two positions are zero
    assert_eq!(&probs[..2], &[0.0, 0.0]);
    // manual zeroing of an unmasked run gives the same distribution
    let mut tokens = step_tokens(&st, &p.config).unwrap();
    tokens.feasible = vec![true; tokens.positions.len()];
    let free = decode_probs(&p, &h, &[&tokens]).pop().unwrap();
    let rest: f64 = free[2..].iter().sum();
    for (a, b) in probs[2..].iter().zip(&free[2..]) {
        assert!((a - b / rest).abs() < 1e-9);
    }
}

#[test]
fn greedy_and_sampled_choices() {
    assert_eq!(pick_index(&[0.25, 0.25, 0.25, 0.25], DecodeMode::Greedy, &mut rng::seeded(0)), Some(0));
    assert_eq!(pick_index(&[0.0, 0.3, 0.7], DecodeMode::Greedy, &mut rng::seeded(0)), Some(2));
    assert_eq!(pick_index(&[0.0, 1.0, 0.0], DecodeMode::Sample, &mut rng::seeded(0)), Some(1));
    let p = [0.1, 0.2, 0.3, 0.4];
    let a: Vec<_> = (0..20).map({
        let mut r = rng::seeded(7);
        move |_| pick_index(&p, DecodeMode::Sample, &mut r)
    })
    .collect();
    let b: Vec<_> = (0..20).map({
        let mut r = rng::seeded(7);
        move |_| pick_index(&p, DecodeMode::Sample, &mut r)
    })
    .collect();
    assert_eq!(a, b);
    assert!(a.iter().collect::<std::collections::BTreeSet<_>>().len() > 1);
}

#[test]
fn neural_policy_constructs_valid_solutions() {
    let mut r = rng::seeded(6);
    for kind in [ProblemKind::Tsp, ProblemKind::Cvrp] {
        let params = Arc::new(tiny_params(kind, 6));
        for mode in [DecodeMode::Greedy, DecodeMode::Sample] {
            let mut policy = NeuralPolicy::new(Arc::clone(&params), mode);
            let inst = match kind {
                ProblemKind::Tsp => gen_uniform_tsp(15, 1, &mut r).pop().unwrap(),
                ProblemKind::Cvrp => gen_uniform_cvrp(15, 1, 20.0, &mut r).pop().unwrap(),
            };
            let sol = construct(&inst, &mut policy, NodeSelector::NearestEuclid, &mut r, Default::default()).unwrap();
            sol.validate(&inst).unwrap();
        }
    }
    // single valid position
    let inst = gen_uniform_tsp(3, 1, &mut r).pop().unwrap();
    let mut policy = NeuralPolicy::new(Arc::new(tiny_params(ProblemKind::Tsp, 1)), DecodeMode::Sample);
    let st = tsp_state(&inst, vec![1], 2);
    assert_eq!(policy.choose(&st, &mut r).unwrap(), Position::Edge { route: 0, index: 1 });
}

#[test]
fn weights_round_trip_and_errors() {
    let p = tiny_params(ProblemKind::Cvrp, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_params(&p, &path).unwrap();
    let back = load_params(&path).unwrap();
    assert_eq!(params_to_bytes(&back), params_to_bytes(&p));
    for ((_, a), (_, b)) in back.tensors().into_iter().zip(p.tensors()) {
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let bytes = params_to_bytes(&p);
    assert!(matches!(params_from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CorruptFile(_))));
    assert!(matches!(params_from_bytes(&bytes[..30]), Err(Error::CorruptFile(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(params_from_bytes(&bad), Err(Error::VersionMismatch(_))));
    let mut v2 = bytes.clone();
    v2[4] = 9;
    assert!(matches!(params_from_bytes(&v2), Err(Error::VersionMismatch(_))));
    let mut long = bytes;
    long.push(0);
    assert!(matches!(params_from_bytes(&long), Err(Error::CorruptFile(_))));
}

#[test]
fn k_filter_keeps_nearest_and_a_feasible_fallback() {
    let coords = vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.1, 0.0),
        Point::new(5.0, 5.0),
        Point::new(1.05, 0.1),
    ];
    let inst = Instance::cvrp("k", coords, vec![0.0, 5.0, 5.0, 1.0, 1.0], 10.0).unwrap();
    let mut st = InsertionState::from_partial(&inst, vec![vec![1, 2], vec![3]], [4]).unwrap();
    st.set_current_node(4).unwrap();
    let cfg = ModelConfig { k_filter: Some(2), ..tiny(ProblemKind::Cvrp) };
    let t = step_tokens(&st, &cfg).unwrap();
    // the two nearest positions sit on the full route; route 1 is farther
    // but feasible, so its nearest position is added
    assert_eq!(t.source.len(), 3);
    assert!(!t.feasible[0] && !t.feasible[1] && t.feasible[2]);
    let p = tiny_params(ProblemKind::Cvrp, 2);
    let probs = decode_probs(&p, &encode(&p, &inst).unwrap(), &[&t]).pop().unwrap();
    assert_eq!(probs[2], 1.0);
}

fn random_state<'a>(inst: &'a Instance, r: &mut crate::rng::Rng, visited: usize) -> InsertionState<'a> {
    let mut st = if inst.is_cvrp() { InsertionState::cvrp_start(inst).unwrap() } else { InsertionState::tsp_start(inst, 0).unwrap() };
    let mut policy = crate::construct::RandomPosition;
    for _ in 1..visited {
        st.select_next_node(NodeSelector::Random, r).unwrap();
        let pos = policy.choose(&st, r).unwrap();
        st.insert(pos).unwrap();
    }
    st.select_next_node(NodeSelector::Random, r).unwrap();
    st
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn probabilities_form_a_masked_distribution(seed in 0u64..500, cvrp in any::<bool>(), visited in 1usize..10) {
        let mut r = rng::seeded(seed);
        let (kind, inst) = if cvrp {
            (ProblemKind::Cvrp, gen_uniform_cvrp(11, 1, 12.0, &mut r).pop().unwrap())
        } else {
            (ProblemKind::Tsp, gen_uniform_tsp(11, 1, &mut r).pop().unwrap())
        };
        let p = tiny_params(kind, seed);
        let h = encode(&p, &inst).unwrap();
        let st = random_state(&inst, &mut r, visited);
        let probs = decode_step(&p, &h, &st).unwrap();
        let all = st.all_positions();
        prop_assert_eq!(probs.len(), all.len());
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (&v, &(_, ok)) in probs.iter().zip(&all) {
            prop_assert!(v >= 0.0);
            if !ok {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn unvisited_order_is_irrelevant(seed in 0u64..500, visited in 1usize..8) {
        let mut r = rng::seeded(seed);
        let inst = gen_uniform_tsp(12, 1, &mut r).pop().unwrap();
        let p = tiny_params(ProblemKind::Tsp, seed);
        let h = encode(&p, &inst).unwrap();
        let st = random_state(&inst, &mut r, visited);
        let t = step_tokens(&st, &p.config).unwrap();
        let mut shuffled = t.clone();
        shuffled.unvisited.shuffle(&mut r);
        let a = decode_probs(&p, &h, &[&t]).pop().unwrap();
        let b = decode_probs(&p, &h, &[&shuffled]).pop().unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn large_k_equals_no_filter(seed in 0u64..500, cvrp in any::<bool>(), visited in 1usize..10) {
        let mut r = rng::seeded(seed);
        let (kind, inst) = if cvrp {
            (ProblemKind::Cvrp, gen_uniform_cvrp(11, 1, 12.0, &mut r).pop().unwrap())
        } else {
            (ProblemKind::Tsp, gen_uniform_tsp(11, 1, &mut r).pop().unwrap())
        };
        let mut p = tiny_params(kind, seed);
        let st = random_state(&inst, &mut r, visited);
        p.config.k_filter = None;
        let h = encode(&p, &inst).unwrap();
        let a = decode_step(&p, &h, &st).unwrap();
        p.config.k_filter = Some(100);
        let b = decode_step(&p, &h, &st).unwrap();
        prop_assert_eq!(a, b);
    }
}
