use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mapsr::baselines::ProjectionSpec;
use mapsr::estimation::{Pair, TrajectorySet};
use mapsr::eval::{
    absolute_error, build_env, learn, prepare, run_experiment, AeBuckets, ExperimentConfig,
    LearnSpec, MethodSpec,
};
use mapsr::psr::PsrModel;
use mapsr::Error;

#[derive(Parser)]
#[command(name = "mapsr", version, about = "Learn and evaluate multi-agent PSR models")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a domain and write trajectories as JSON lines.
    Gen(GenArgs),
    /// Learn a model from a trajectory file.
    Learn(LearnArgs),
    /// Score a model against an oracle on freshly simulated episodes.
    Eval(EvalArgs),
    /// Run the multi-round method comparison described by a config file.
    Compare(CompareArgs),
    /// Print a summary of a model file.
    Inspect(InspectArgs),
}

/// Shared configuration: an optional `key = value` file, then `key=value`
/// overrides, then the explicit flags of each subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` overrides applied after the file.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    p_noise: Option<f64>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 10)]
    max_len: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    method: MethodSpec,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    /// Domain whose alphabets the trajectories use.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    agents: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test trajectories; simulated from the configured domain when absent.
    #[arg(long)]
    traj: Option<PathBuf>,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct InspectArgs {
    model: PathBuf,
}

enum Failure {
    Config(String),
    Io(String),
    Learn(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Learn(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Learn(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

/// I/O-flavoured library errors keep exit code 3; anything else is the
/// caller's category.
fn classify(e: Error, other: fn(String) -> Failure) -> Failure {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Parse(_) => Failure::Io(e.to_string()),
        e => other(e.to_string()),
    }
}

type Outcome = Result<(), Failure>;

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text).map_err(config_err)?
        }
        None => ExperimentConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("override `{kv}` is not key=value")))?;
        cfg.set(k.trim(), v.trim()).map_err(config_err)?;
    }
    Ok(cfg)
}

fn need_file(p: &Path) -> Outcome {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Io(format!("{} not found", p.display())))
    }
}

fn need_parent(p: &Path) -> Outcome {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(Failure::Io(format!("directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn write_text(p: &Path, text: &str) -> Outcome {
    std::fs::write(p, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display())))
}

fn gen(a: GenArgs) -> Outcome {
    let mut cfg = load_config(&a.cfg)?;
    if let Some(d) = &a.domain {
        cfg.set("domain", d).map_err(config_err)?;
    }
    if let Some(n) = a.agents {
        cfg.agents = n;
    }
    if let Some(p) = a.p_noise {
        cfg.p_noise = p;
    }
    if let Some(m) = a.map {
        cfg.map = Some(m);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = &cfg.map {
        need_file(m)?;
    }
    need_parent(&a.out)?;
    let env = build_env(&cfg).map_err(config_err)?;
    let trajs = env.generate(a.episodes, a.max_len, cfg.seed).map_err(config_err)?;
    trajs.save(&a.out).map_err(|e| classify(e, Failure::Io))?;
    log::info!("wrote {} episodes to {}", trajs.len(), a.out.display());
    Ok(())
}

fn learn_cmd(a: LearnArgs) -> Outcome {
    let mut cfg = load_config(&a.cfg)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(l) = a.lambda_r {
        cfg.lambda_r = l;
    }
    if let Some(d) = &a.domain {
        cfg.set("domain", d).map_err(config_err)?;
    }
    if let Some(n) = a.agents {
        cfg.agents = n;
    }
    if a.method == MethodSpec::Uniform {
        return Err(Failure::Config("the uniform predictor has nothing to learn".into()));
    }
    if a.rank == 0 {
        return Err(Failure::Config("rank must be at least 1".into()));
    }
    need_file(&a.traj)?;
    need_parent(&a.out)?;
    let trajs = TrajectorySet::load(&a.traj).map_err(|e| classify(e, config_err))?;
    let space = build_env(&cfg).map_err(config_err)?.space().clone();
    trajs.validate(&space).map_err(config_err)?;
    let sds = prepare(&trajs, &space, &cfg.sets).map_err(|e| classify(e, Failure::Learn))?;
    let spec = LearnSpec {
        method: a.method,
        rank: a.rank,
        lambda_r: cfg.lambda_r,
        seed: cfg.seed,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        projection: ProjectionSpec::new(cfg.cpsr_d, cfg.cpsr_scheme, cfg.seed),
    };
    let mut model = learn(&sds, &spec).map_err(|e| classify(e, Failure::Learn))?;
    model.meta.config_hash = mapsr::config_hash(&format!(
        "{}|method={}|rank={}|traj={}",
        cfg.canonical(),
        a.method,
        a.rank,
        a.traj.display()
    ));
    model.save(&a.out).map_err(|e| classify(e, Failure::Io))?;
    log::info!("wrote {} model (R = {}) to {}", a.method, model.rank(), a.out.display());
    Ok(())
}

fn bucket_csv(ae: &AeBuckets) -> String {
    let mut out = String::from("step_k,n,ae_mean,ae_std\n");
    for k in 0..ae.errors.len() {
        if let (Some(m), Some(s)) = (ae.mean(k), ae.std(k)) {
            out.push_str(&format!("{},{},{m},{s}\n", k + 1, ae.count(k)));
        }
    }
    out
}

fn eval_cmd(a: EvalArgs) -> Outcome {
    let cfg = load_config(&a.cfg)?;
    cfg.validate().map_err(config_err)?;
    need_file(&a.model)?;
    if let Some(t) = &a.traj {
        need_file(t)?;
    }
    need_parent(&a.csv)?;
    if let Some(j) = &a.json {
        need_parent(j)?;
    }
    let model = PsrModel::load(&a.model).map_err(|e| classify(e, Failure::Io))?;
    let env = build_env(&cfg).map_err(config_err)?;
    if env.space() != &model.space {
        return Err(Failure::Config("model and configured domain have different alphabets".into()));
    }
    let test = match &a.traj {
        Some(t) => TrajectorySet::load(t).map_err(|e| classify(e, config_err))?,
        None => env
            .generate(cfg.test_episodes, cfg.test_max_len, mapsr::rng::derive_seed(cfg.seed, 2))
            .map_err(config_err)?,
    };
    let episodes: Vec<Vec<Pair>> = test.episodes.iter().map(|e| e.joint(env.space())).collect();
    let ae = absolute_error(&model, &episodes, &env, cfg.oracle(), mapsr::rng::derive_seed(cfg.seed, 4))
        .map_err(|e| classify(e, Failure::Learn))?;
    write_text(&a.csv, &bucket_csv(&ae))?;
    if let Some(j) = &a.json {
        let summary = serde_json::json!({
            "method": model.meta.method,
            "rank": model.rank(),
            "oracle": cfg.oracle().to_string(),
            "episodes": episodes.len(),
            "skipped": ae.skipped,
            "ae_mean": (0..ae.errors.len()).map(|k| ae.mean(k)).collect::<Vec<_>>(),
            "n": (0..ae.errors.len()).map(|k| ae.count(k)).collect::<Vec<_>>(),
        });
        write_text(j, &format!("{summary:#}\n"))?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Outcome {
    let cfg = load_config(&a.cfg)?;
    cfg.validate().map_err(config_err)?;
    need_parent(&a.csv)?;
    if let Some(j) = &a.json {
        need_parent(j)?;
    }
    let report = run_experiment(&cfg).map_err(|e| classify(e, Failure::Learn))?;
    write_text(&a.csv, &report.to_csv())?;
    if let Some(j) = &a.json {
        write_text(j, &report.summary_json().map_err(|e| classify(e, Failure::Io))?)?;
    }
    for f in &report.failures {
        log::warn!("{} (rank {:?}) failed in round {}: {}", f.method, f.rank, f.round, f.error);
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Outcome {
    need_file(&a.model)?;
    let m = PsrModel::load(&a.model).map_err(|e| classify(e, Failure::Io))?;
    let space = &m.space;
    let n_pairs = space.num_joint_actions() * space.num_joint_observations();
    let missing = m.missing_transitions();
    let norms: Vec<f64> = m.transitions.values().map(|t| t.frobenius_norm()).collect();
    let covered = (0..n_pairs)
        .filter(|&i| {
            let p = (i / space.num_joint_observations(), i % space.num_joint_observations());
            m.m_one_step(p).is_ok()
        })
        .count();
    let out = std::io::stdout();
    let mut w = BufWriter::new(out.lock());
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "method: {}", m.meta.method)?;
        writeln!(w, "R={}", m.rank())?;
        writeln!(w, "ranks: {:?}", m.meta.ranks)?;
        writeln!(w, "agents: {} (actions {:?}, observations {:?})", space.num_agents(), space.actions, space.observations)?;
        writeln!(w, "seed: {}  lambda_r: {:e}  histories: {}", m.meta.seed, m.meta.lambda_r, m.meta.num_histories)?;
        if let Some(e) = m.meta.fit_error {
            writeln!(w, "fit error: {e:.6e} after {} iterations", m.meta.iterations.unwrap_or(0))?;
        }
        writeln!(w, "|x0| = {:.6}", m.x0.iter().map(|v| v * v).sum::<f64>().sqrt())?;
        writeln!(w, "|m~|_F = {:.6}", m.mtilde.frobenius_norm())?;
        if !norms.is_empty() {
            let (lo, hi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            writeln!(w, "|M~_ao|_F: min {lo:.6} mean {mean:.6} max {hi:.6}")?;
        }
        writeln!(w, "one-step coverage: {covered}/{n_pairs}")?;
        writeln!(w, "transitions: {}/{n_pairs}", m.transitions.len())?;
        writeln!(w, "missing transitions: {}", missing.len())?;
        for p in missing.iter().take(20) {
            writeln!(w, "  missing (a={}, o={})", p.0, p.1)?;
        }
        if missing.len() > 20 {
            writeln!(w, "  ... {} more", missing.len() - 20)?;
        }
        writeln!(w, "unobserved pairs: {}", m.unobserved.len())?;
        w.flush()
    };
    emit().map_err(|e| Failure::Io(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Gen(a) => gen(a),
        Command::Learn(a) => learn_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Inspect(a) => inspect(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mapsr: {}", f.message().replace('\n', " "));
            ExitCode::from(f.code())
        }
    }
}
