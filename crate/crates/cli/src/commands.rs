use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use insert_nco::construct::{
    construct, CheapestInsertion, ConstructOptions, NodeSelector, PositionPolicy, RandomPosition, StartNode,
};
use insert_nco::data::{
    default_capacity, gen_uniform_cvrp, gen_uniform_tsp, held_karp, local_search_label, parse_cvrplib, parse_tsplib,
    read_dataset, read_instances, read_solutions, write_dataset, write_instances, write_solutions, DatasetRecord,
    LabelBudget, SolutionRecord, HELD_KARP_MAX_NODES,
};
use insert_nco::instance::{Instance, ProblemKind};
use insert_nco::model::{load_params, save_params, DecodeMode, ModelConfig, ModelParams, NeuralPolicy};
use insert_nco::reconstruct::{improve, Destruction, ImproveOptions};
use insert_nco::rng;
use insert_nco::solution::CyclicSolution;
use insert_nco::train::{train_with, write_log_csv, LabeledExample, TrainOptions, TrainState};

use crate::{
    BenchArgs, Cli, Command, Decode, DestructionKind, GenArgs, ImproveArgs, LabelArgs, LabelMethod, PlotArgs,
    PolicyArgs, PolicyKind, Preset, Problem, Selector, SolveArgs, TrainArgs, UsageError,
};

pub fn run(cli: Cli) -> Result<()> {
    let jobs = match std::env::var("INSERT_NCO_THREADS") {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| UsageError(format!("INSERT_NCO_THREADS={v} is not a count")))?),
        Err(_) => cli.jobs,
    };
    if let Some(n) = jobs {
        if n == 0 {
            bail!(UsageError("--jobs must be at least 1".into()));
        }
        // a second init only happens in tests that call run twice
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => cmd_gen(a, seed),
        Command::Label(a) => cmd_label(a, seed),
        Command::Train(a) => cmd_train(a, seed),
        Command::Solve(a) => cmd_solve(a, seed),
        Command::Improve(a) => cmd_improve(a, seed),
        Command::Bench(a) => cmd_bench(a, seed),
        Command::Plot(a) => cmd_plot(a),
    }
}

/// Instances from a JSONL file, or a single TSPLIB/CVRPLIB file.
pub fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let read = || std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()));
    let out = match ext.as_str() {
        "tsp" => vec![parse_tsplib(&read()?)?],
        "vrp" => vec![parse_cvrplib(&read()?)?],
        _ => read_instances(path).with_context(|| format!("reading {}", path.display()))?,
    };
    if out.is_empty() {
        bail!("{} holds no instances", path.display());
    }
    Ok(out)
}

/// Solutions matched to `instances` by position, each checked for validity.
fn load_solutions(path: &Path, instances: &[Instance]) -> Result<Vec<CyclicSolution>> {
    let recs = read_solutions(path).with_context(|| format!("reading {}", path.display()))?;
    if recs.len() != instances.len() {
        bail!("{} has {} solutions for {} instances", path.display(), recs.len(), instances.len());
    }
    recs.into_iter()
        .zip(instances)
        .enumerate()
        .map(|(i, (r, inst))| {
            let sol = CyclicSolution::new(r.order);
            sol.validate(inst).with_context(|| format!("solution {} ({})", i + 1, r.name))?;
            Ok(sol)
        })
        .collect()
}

fn record(inst: &Instance, sol: CyclicSolution) -> SolutionRecord {
    let length = sol.length_unchecked(inst);
    SolutionRecord { name: inst.name().to_string(), order: sol.into_order(), length }
}

fn selector(s: Selector) -> NodeSelector {
    match s {
        Selector::Nearest => NodeSelector::NearestEuclid,
        Selector::Random => NodeSelector::Random,
        Selector::Polar => NodeSelector::NearestPolar,
    }
}

fn k_filter(k: usize) -> Option<usize> {
    (k > 0).then_some(k)
}

/// Builds one policy per worker; neural weights are loaded once and shared.
struct PolicyFactory {
    kind: PolicyKind,
    params: Option<Arc<ModelParams<f32>>>,
    mode: DecodeMode,
}

impl PolicyFactory {
    fn new(kind: PolicyKind, weights: Option<&Path>, decode: Decode, k: Option<usize>) -> Result<Self> {
        let params = match (kind, weights) {
            (PolicyKind::Neural, None) => bail!(UsageError("--policy neural needs --weights".into())),
            (PolicyKind::Neural, Some(w)) => {
                let mut p = load_params(w).with_context(|| format!("loading {}", w.display()))?;
                if let Some(k) = k {
                    p.config.k_filter = k_filter(k);
                }
                Some(Arc::new(p))
            }
            _ => None,
        };
        let mode = match decode {
            Decode::Greedy => DecodeMode::Greedy,
            Decode::Sample => DecodeMode::Sample,
        };
        Ok(PolicyFactory { kind, params, mode })
    }

    fn from_args(a: &PolicyArgs) -> Result<Self> {
        Self::new(a.policy, a.weights.as_deref(), a.decode, a.k)
    }

    fn check(&self, instances: &[Instance]) -> Result<()> {
        if let Some(p) = &self.params {
            if let Some(bad) = instances.iter().find(|i| i.kind() != p.config.kind) {
                bail!("model is for {:?} but {} is {:?}", p.config.kind, bad.name(), bad.kind());
            }
        }
        Ok(())
    }

    fn make(&self) -> Box<dyn PositionPolicy + Send> {
        match self.kind {
            PolicyKind::Cheapest => Box::new(CheapestInsertion),
            PolicyKind::Random => Box::new(RandomPosition),
            PolicyKind::Neural => Box::new(NeuralPolicy::new(self.params.clone().expect("checked in new"), self.mode)),
        }
    }
}

fn check_selector(sel: Selector, instances: &[Instance]) -> Result<()> {
    if sel == Selector::Polar && instances.iter().any(|i| !i.is_cvrp()) {
        bail!(UsageError("--selector polar applies to CVRP only".into()));
    }
    Ok(())
}

fn cmd_gen(a: GenArgs, seed: u64) -> Result<()> {
    let mut r = rng::seeded(seed);
    let instances = match a.problem {
        Problem::Tsp => {
            if a.n < 2 {
                bail!(UsageError("--n must be at least 2 for tsp".into()));
            }
            gen_uniform_tsp(a.n, a.count, &mut r)
        }
        Problem::Cvrp => {
            if a.n < 1 {
                bail!(UsageError("--n must be at least 1 for cvrp".into()));
            }
            let cap = a.capacity.unwrap_or_else(|| default_capacity(a.n));
            if !(cap >= 9.0) {
                bail!(UsageError("--capacity must be at least 9, the largest demand".into()));
            }
            gen_uniform_cvrp(a.n, a.count, cap, &mut r)
        }
    };
    write_instances(&a.out, &instances)?;
    Ok(())
}

fn cmd_label(a: LabelArgs, seed: u64) -> Result<()> {
    let instances = load_instances(&a.input)?;
    let budget = LabelBudget { restarts: a.restarts };
    let labels = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let exact_ok = !inst.is_cvrp() && inst.len() <= HELD_KARP_MAX_NODES;
            let use_exact = match a.method {
                LabelMethod::Auto => exact_ok,
                LabelMethod::Exact => true,
                LabelMethod::Local => false,
            };
            let sol = if use_exact {
                held_karp(inst).with_context(|| format!("labeling {}", inst.name()))?.0
            } else {
                local_search_label(inst, budget, &mut rng::fork(seed, i as u64))?
            };
            Ok(DatasetRecord { instance: inst.clone(), label: Some(sol) })
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&a.out, &labels)?;
    Ok(())
}

fn train_config(a: &TrainArgs, kind: ProblemKind) -> Result<ModelConfig> {
    let mut c = match a.preset {
        Preset::Full => ModelConfig::full(kind),
        Preset::Desk => ModelConfig::desk(kind),
    };
    c.d = a.d.unwrap_or(c.d);
    c.layers = a.layers.unwrap_or(c.layers);
    c.heads = a.heads.unwrap_or(c.heads);
    c.d_ff = a.d_ff.unwrap_or(c.d_ff);
    if let Some(k) = a.k {
        c.k_filter = k_filter(k);
    }
    c.include_unvisited = !a.no_unvisited;
    c.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(c)
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<()> {
    if a.batch == 0 {
        bail!(UsageError("--batch must be at least 1".into()));
    }
    if !(a.lr > 0.0) || !(a.decay > 0.0) {
        bail!(UsageError("--lr and --decay must be positive".into()));
    }
    let records = read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let data = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| LabeledExample::try_from(r).with_context(|| format!("record {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = data.first() else { bail!("{} holds no examples", a.data.display()) };
    let kind = first.instance.kind();
    if data.iter().any(|e| e.instance.kind() != kind) {
        bail!("dataset mixes tsp and cvrp instances");
    }
    let config = train_config(&a, kind)?;
    if selector(a.selector) == NodeSelector::NearestPolar && kind != ProblemKind::Cvrp {
        bail!(UsageError("--selector polar applies to CVRP only".into()));
    }
    let options = TrainOptions {
        lr: a.lr,
        decay: a.decay,
        epochs: a.epochs,
        batch_size: a.batch,
        steps_per_episode: a.steps_per_episode,
        selector: selector(a.selector),
        ..TrainOptions::default()
    };
    let mut r = rng::seeded(seed);
    let params = ModelParams::init(config, &mut r)?;
    let state = train_with(TrainState::new(params, a.lr), &data, &options, &mut r, |stats, st| {
        eprintln!("epoch {:>3}  loss {:.5}  lr {:.3e}  {:.1}s", stats.epoch, stats.mean_loss, stats.lr, stats.wall_seconds);
        save_params(&st.params, &a.out)?;
        if let Some(log) = &a.log {
            write_log_csv(log, &st.history)?;
        }
        Ok(())
    })?;
    save_params(&state.params, &a.out)?;
    if let Some(log) = &a.log {
        write_log_csv(log, &state.history)?;
    }
    Ok(())
}

fn solve_all(
    instances: &[Instance],
    factory: &PolicyFactory,
    sel: NodeSelector,
    start: StartNode,
    seed: u64,
) -> Result<Vec<CyclicSolution>> {
    instances
        .par_iter()
        .enumerate()
        .map_init(
            || factory.make(),
            |policy, (i, inst)| {
                let mut r = rng::fork(seed, i as u64);
                let start = match start {
                    StartNode::Fixed(s) if s >= inst.len() => {
                        return Err(anyhow::Error::new(UsageError(format!(
                            "--start {s} is out of range for {} ({} nodes)",
                            inst.name(),
                            inst.len()
                        ))))
                    }
                    s => s,
                };
                construct(inst, policy, sel, &mut r, ConstructOptions { start })
                    .with_context(|| format!("solving {}", inst.name()))
            },
        )
        .collect()
}

fn cmd_solve(a: SolveArgs, seed: u64) -> Result<()> {
    let instances = load_instances(&a.input)?;
    check_selector(a.policy.selector, &instances)?;
    let factory = PolicyFactory::from_args(&a.policy)?;
    factory.check(&instances)?;
    let start = if a.random_start { StartNode::Random } else { StartNode::Fixed(a.start) };
    let sols = solve_all(&instances, &factory, selector(a.policy.selector), start, seed)?;
    let recs: Vec<SolutionRecord> = instances.iter().zip(sols).map(|(i, s)| record(i, s)).collect();
    write_solutions(&a.out, &recs)?;
    Ok(())
}

fn cmd_improve(a: ImproveArgs, seed: u64) -> Result<()> {
    let instances = load_instances(&a.input)?;
    check_selector(a.policy.selector, &instances)?;
    let inits = load_solutions(&a.init, &instances)?;
    let factory = PolicyFactory::from_args(&a.policy)?;
    factory.check(&instances)?;
    let options = ImproveOptions {
        iterations: a.iterations,
        alpha: a.alpha,
        destruction: match a.destruction {
            DestructionKind::Distance => Destruction::Distance,
            DestructionKind::Sequence => Destruction::Sequence,
        },
    };
    let sel = selector(a.policy.selector);
    let out = instances
        .par_iter()
        .zip(&inits)
        .enumerate()
        .map_init(
            || factory.make(),
            |policy, (i, (inst, init))| {
                let mut r = rng::fork(seed, i as u64);
                let done = improve(inst, init, policy, sel, options, &mut r)
                    .with_context(|| format!("improving {}", inst.name()))?;
                Ok(record(inst, done.solution))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    write_solutions(&a.out, &out)?;
    Ok(())
}

/// One bench row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub mean_length: f64,
    /// Mean of `(L - L_ref) / L_ref` in percent.
    pub gap_percent: f64,
    pub seconds: Option<f64>,
}

pub fn bench_row(method: &str, lengths: &[f64], reference: &[f64], seconds: Option<f64>) -> BenchRow {
    let n = lengths.len() as f64;
    let gap = lengths.iter().zip(reference).map(|(l, r)| (l - r) / r).sum::<f64>() / n * 100.0;
    BenchRow { method: method.to_string(), mean_length: lengths.iter().sum::<f64>() / n, gap_percent: gap, seconds }
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = format!("{:<16} {:>14} {:>10} {:>10}\n", "method", "length", "gap%", "time_s");
    for r in rows {
        let t = r.seconds.map_or("-".to_string(), |t| format!("{t:.3}"));
        s.push_str(&format!("{:<16} {:>14.4} {:>10.4} {:>10}\n", r.method, r.mean_length, r.gap_percent, t));
    }
    s
}

fn cmd_bench(a: BenchArgs, seed: u64) -> Result<()> {
    let instances = load_instances(&a.input)?;
    check_selector(a.selector, &instances)?;
    let refs = load_solutions(&a.reference, &instances)?;
    let length = |inst: &Instance, s: &CyclicSolution| -> Result<f64> {
        Ok(if a.round { s.tsplib_length(inst)? } else { s.length(inst)? })
    };
    let ref_len = instances.iter().zip(&refs).map(|(i, s)| length(i, s)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = ref_len.iter().position(|&l| !(l > 0.0)) {
        bail!("reference solution {} has zero length", bad + 1);
    }
    if a.methods.is_empty() && a.solutions.is_empty() {
        bail!(UsageError("nothing to compare: give --method or --solutions".into()));
    }
    let mut rows = Vec::new();
    for spec in &a.solutions {
        let Some((name, file)) = spec.split_once('=') else {
            bail!(UsageError(format!("--solutions expects NAME=FILE, got {spec}")));
        };
        let sols = load_solutions(Path::new(file), &instances)?;
        let lens = instances.iter().zip(&sols).map(|(i, s)| length(i, s)).collect::<Result<Vec<_>>>()?;
        rows.push(bench_row(name, &lens, &ref_len, None));
    }
    for &m in &a.methods {
        let factory = PolicyFactory::new(m, a.weights.as_deref(), Decode::Greedy, None)?;
        factory.check(&instances)?;
        let started = Instant::now();
        let sols = solve_all(&instances, &factory, selector(a.selector), StartNode::default(), seed)?;
        let secs = started.elapsed().as_secs_f64();
        let lens = instances.iter().zip(&sols).map(|(i, s)| length(i, s)).collect::<Result<Vec<_>>>()?;
        let name = match m {
            PolicyKind::Cheapest => "cheapest",
            PolicyKind::Random => "random",
            PolicyKind::Neural => "neural",
        };
        rows.push(bench_row(name, &lens, &ref_len, Some(secs)));
    }
    print!("{}", format_table(&rows));
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let instances = load_instances(&a.input)?;
    let Some(inst) = instances.get(a.index) else {
        bail!(UsageError(format!("--index {} but only {} instances", a.index, instances.len())));
    };
    let sols = load_solutions(&a.solutions, &instances)?;
    std::fs::write(&a.out, crate::plot::svg(inst, &sols[a.index]))?;
    Ok(())
}
