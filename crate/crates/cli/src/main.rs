mod svg;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use softchain::analytics::{self, BoxStats, PairedTrial, Variable, DEFAULT_WINDOW};
use softchain::bench::{self, Scenario};
use softchain::calib::{self, NonCcConfig, SweepRow};
use softchain::env::episode::{self, EpisodeRecord, PrimitivePolicy, ReplayPolicy};
use softchain::env::perturbation::Perturbation;
use softchain::env::reward::RewardScheme;
use softchain::env::sampling::sample_boxes;
use softchain::env::{EpisodeConfig, GraspEnv};
use softchain::model::{load_model, RobotModel, DEFAULT_MODEL_TOML};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "softchain", version, about = "Soft continuum robot simulation and experiments")]
struct Cli {
    /// Robot model TOML; the built-in model when unset.
    #[arg(long, global = true, env = "SOFTCHAIN_MODEL")]
    model: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit UJ chains to constant-curvature arcs over a bending grid.
    SweepKinematics(SweepArgs),
    /// Replay one primitive episode through coarse chains against a fine one.
    Noncc(NonCcArgs),
    /// Run a batch of episodes, or compare two earlier runs.
    Evaluate(EvaluateArgs),
    /// Time the integrator over time step and disk count.
    Bench(BenchArgs),
    /// Run one episode and write its per-step log.
    RunEpisode(RunEpisodeArgs),
    /// Outcome, correlation, transition and corrective-action tables from run logs.
    Analyze(AnalyzeArgs),
    /// Re-render sweep box plots from an err_by_N.csv.
    Plot(PlotArgs),
    /// Serve the environment over line-delimited JSON.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    n_list: Vec<usize>,
    /// Grid points per axis over [-2.1, 2.1].
    #[arg(long, default_value_t = 21)]
    grid: usize,
    #[arg(long, default_value = "out/sweep")]
    out: PathBuf,
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Args)]
struct NonCcArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    reference: usize,
    #[arg(long, default_value_t = 1200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out/noncc")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Primitive,
    ExternalLog,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardKind {
    Guided,
    Shaped,
}

impl From<RewardKind> for RewardScheme {
    fn from(r: RewardKind) -> Self {
        match r {
            RewardKind::Guided => RewardScheme::Guided,
            RewardKind::Shaped => RewardScheme::Shaped,
        }
    }
}

#[derive(Args)]
struct EpisodeOptions {
    #[arg(long, value_enum, default_value = "primitive")]
    policy: PolicyKind,
    /// episodes.jsonl whose recorded actions the external-log policy replays.
    #[arg(long, required_if_eq("policy", "external-log"))]
    actions: Option<PathBuf>,
    /// Apply the periodic downward push from 10 s on.
    #[arg(long)]
    perturb: bool,
    #[arg(long, value_enum, default_value = "guided")]
    reward: RewardKind,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, default_value_t = 100)]
    boxes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    episode: EpisodeOptions,
    /// Compare two run directories instead of running episodes.
    #[arg(long, num_args = 2, value_names = ["RUN_A", "RUN_B"])]
    compare: Option<Vec<PathBuf>>,
    /// Worker threads; all cores when unset.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "out/evaluate")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "contact")]
    scenario: ScenarioArg,
    /// Time steps, s.
    #[arg(long, value_delimiter = ',', default_value = "0.0005,0.001,0.005,0.01")]
    dt_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,32")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = bench::DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value = "out/bench")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Contact,
    Free,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Contact => Scenario::Contact,
            ScenarioArg::Free => Scenario::Free,
        }
    }
}

#[derive(Args)]
struct RunEpisodeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    episode: EpisodeOptions,
    #[arg(long, default_value = "out/episode")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory holding episodes.jsonl; give two to compare them.
    #[arg(long, required = true, num_args = 1..=2)]
    log: Vec<PathBuf>,
    #[arg(long, default_value = "out/analyze")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ServeArgs {
    #[arg(long, group = "transport")]
    port: Option<u16>,
    #[arg(long, group = "transport")]
    stdio: bool,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    command: String,
    config: String,
    seed: Option<u64>,
    output_dir: String,
    model_hash: String,
}

/// Hash of `data` as a git blob object, with SHA-256 as the digest.
fn git_blob_hash(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", data.len()).as_bytes());
    h.update(data);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Ctx {
    model: RobotModel,
    model_path: Option<PathBuf>,
    model_text: Vec<u8>,
    argv: String,
}

impl Ctx {
    fn load(path: Option<PathBuf>) -> Result<Self> {
        let (model, text) = match &path {
            Some(p) => (load_model(p)?, fs::read(p)?),
            None => (RobotModel::shipped(), DEFAULT_MODEL_TOML.as_bytes().to_vec()),
        };
        Ok(Self {
            model,
            model_path: path,
            model_text: text,
            argv: std::env::args().collect::<Vec<_>>().join(" "),
        })
    }

    fn prepare(&self, out: &Path, seed: Option<u64>) -> Result<()> {
        fs::create_dir_all(out)?;
        let m = RunManifest {
            command: self.argv.clone(),
            config: self
                .model_path
                .as_ref()
                .map_or("builtin".into(), |p| p.display().to_string()),
            seed,
            output_dir: out.display().to_string(),
            model_hash: git_blob_hash(&self.model_text),
        };
        fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn sweep_plots(out: &Path, rows: &[SweepRow]) -> Result<()> {
    let summary = calib::summarize_sweep(rows);
    let group = |f: fn(&calib::SweepSummary) -> BoxStats| -> Vec<(String, BoxStats)> {
        summary.iter().map(|s| (format!("N={}", s.disk_count), f(s))).collect()
    };
    fs::write(
        out.join("boxplot_pos.svg"),
        svg::boxplot("Tip position error, UJ vs CC", "error (m)", &group(|s| s.position)),
    )?;
    fs::write(
        out.join("boxplot_ori.svg"),
        svg::boxplot("Tip orientation error, UJ vs CC", "error (rad)", &group(|s| s.orientation)),
    )?;
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<ExitCode> {
    if a.grid == 0 || a.n_list.iter().any(|&n| n < 2) {
        return Err("grid must be positive and every N at least 2".into());
    }
    ctx.prepare(&a.out, None)?;
    let length = ctx.model.left.joints[0].length;
    let rows = calib::sweep_cc_vs_uj(&a.n_list, a.grid, length)?;
    calib::write_sweep_csv(create(a.out.join("err_by_N.csv"))?, &rows)?;
    let summary = calib::summarize_sweep(&rows);
    calib::write_sweep_summary_csv(create(a.out.join("summary.csv"))?, &summary)?;
    sweep_plots(&a.out, &rows)?;
    for s in &summary {
        println!(
            "N={:<3} pos mean {:.3e} median {:.3e}  ori mean {:.3e} median {:.3e}  nonconverged {}",
            s.disk_count,
            s.position.mean,
            s.position.median,
            s.orientation.mean,
            s.orientation.median,
            s.nonconverged
        );
    }
    let bad = rows.iter().filter(|r| !r.converged).count();
    if bad > 0 && !a.allow_nonconverged {
        eprintln!("{bad} grid points did not converge (pass --allow-nonconverged to accept)");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate().skip(1) {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(format!("{}:{}: expected 6 fields", path.display(), i + 1).into());
        }
        rows.push(SweepRow {
            disk_count: f[0].parse()?,
            q: [f[1].parse()?, f[2].parse()?],
            position_error: f[3].parse()?,
            orientation_error: f[4].parse()?,
            converged: f[5].parse()?,
        });
    }
    Ok(rows)
}

fn cmd_plot(a: &PlotArgs) -> Result<ExitCode> {
    let rows = read_sweep_csv(&a.csv)?;
    fs::create_dir_all(&a.out)?;
    sweep_plots(&a.out, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_noncc(ctx: &Ctx, a: &NonCcArgs) -> Result<ExitCode> {
    ctx.prepare(&a.out, Some(a.seed))?;
    let mut cfg = NonCcConfig::from_model(&ctx.model);
    cfg.disk_counts = a.n_list.clone();
    cfg.reference = a.reference;
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    let report = calib::nonconstant_curvature_experiment(&ctx.model, &cfg)?;
    calib::write_noncc_summary_csv(create(a.out.join("noncc_summary.csv"))?, &report)?;
    let groups = |f: fn(&calib::ModelErrors) -> Option<BoxStats>| -> Vec<(String, BoxStats)> {
        report
            .models
            .iter()
            .filter_map(|m| Some((m.label.clone(), f(m)?)))
            .collect()
    };
    fs::write(
        a.out.join("boxplot_pos.svg"),
        svg::boxplot(
            &format!("Tip position error vs N={}", a.reference),
            "error (m)",
            &groups(|m| m.position_stats()),
        ),
    )?;
    fs::write(
        a.out.join("boxplot_ori.svg"),
        svg::boxplot(
            &format!("Tip orientation error vs N={}", a.reference),
            "error (rad)",
            &groups(|m| m.orientation_stats()),
        ),
    )?;
    for m in &report.models {
        if let (Some(p), Some(o)) = (m.position_stats(), m.orientation_stats()) {
            println!("{:<5} pos mean {:.3e}  ori mean {:.3e}", m.label, p.mean, o.mean);
        }
        if let Some(e) = &m.error {
            println!("{:<5} diverged: {e}", m.label);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn episode_config(ctx: &Ctx, o: &EpisodeOptions) -> EpisodeConfig {
    let mut cfg = EpisodeConfig::from_model(&ctx.model);
    cfg.reward = o.reward.into();
    cfg.perturbation = o.perturb.then(Perturbation::default);
    cfg
}

fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = if path.is_dir() {
        path.join("episodes.jsonl")
    } else {
        path.to_path_buf()
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(&file)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| format!("{}:{}: {e}", file.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn write_records(path: PathBuf, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn run_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<ExitCode> {
    if let Some(runs) = &a.compare {
        return analyze(ctx, runs, &a.out);
    }
    ctx.prepare(&a.out, Some(a.seed))?;
    let cfg = episode_config(ctx, &a.episode);
    let boxes = sample_boxes(a.boxes, a.seed, ctx.model.contact.mu_box_floor);
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = match a.episode.policy {
        PolicyKind::Primitive => {
            episode::evaluate(&ctx.model, &cfg, &boxes, a.seed, jobs, |_| PrimitivePolicy)?
        }
        PolicyKind::ExternalLog => {
            let path = a.episode.actions.as_ref().expect("required by clap");
            let logged = read_records(path)?;
            if logged.len() < a.boxes {
                return Err(format!("{} holds {} episodes, need {}", path.display(), logged.len(), a.boxes).into());
            }
            episode::evaluate(&ctx.model, &cfg, &boxes, a.seed, jobs, |i| {
                ReplayPolicy::new(logged[i].actions.clone())
            })?
        }
    };
    let mut records = Vec::new();
    let mut failed = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => records.push(r),
            Err(e) => {
                eprintln!("episode {i}: {e}");
                failed += 1;
            }
        }
    }
    write_records(a.out.join("episodes.jsonl"), &records)?;
    let outcomes: Vec<_> = records.iter().map(|r| r.outcome).collect();
    let counts = analytics::outcome_counts(&outcomes);
    analytics::write_summary_csv(create(a.out.join("summary.csv"))?, &[(run_name(&a.out), counts)])?;
    println!(
        "episodes {} success {} slip {} tip {} aborted {} failed {failed}",
        records.len(),
        counts[0],
        counts[1],
        counts[2],
        counts[3]
    );
    Ok(if failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_analyze(ctx: &Ctx, a: &AnalyzeArgs) -> Result<ExitCode> {
    analyze(ctx, &a.log, &a.out)
}

fn analyze(ctx: &Ctx, logs: &[PathBuf], out: &Path) -> Result<ExitCode> {
    ctx.prepare(out, None)?;
    let runs: Vec<Vec<EpisodeRecord>> = logs.iter().map(|p| read_records(p)).collect::<Result<_>>()?;
    let summary: Vec<(String, [usize; 4])> = logs
        .iter()
        .zip(&runs)
        .map(|(p, r)| {
            let o: Vec<_> = r.iter().map(|e| e.outcome).collect();
            (run_name(p), analytics::outcome_counts(&o))
        })
        .collect();
    analytics::write_summary_csv(create(out.join("summary.csv"))?, &summary)?;

    let names: Vec<&str> = Variable::ALL.iter().map(|v| v.name()).collect();
    for (p, r) in logs.iter().zip(&runs) {
        match analytics::correlation_matrix(r, &Variable::ALL) {
            Ok(m) => analytics::write_correlation_csv(
                create(out.join(format!("correlation_{}.csv", run_name(p))))?,
                &names,
                &m,
            )?,
            Err(e) => eprintln!("{}: correlation skipped: {e}", p.display()),
        }
    }

    if let [a, b] = runs.as_slice() {
        let by_seed: HashMap<u64, &EpisodeRecord> = b.iter().map(|r| (r.seed, r)).collect();
        let pairs: Vec<(&EpisodeRecord, &EpisodeRecord)> =
            a.iter().filter_map(|r| Some((r, *by_seed.get(&r.seed)?))).collect();
        if pairs.len() < a.len().max(b.len()) {
            eprintln!("{} of {}/{} episodes paired by seed", pairs.len(), a.len(), b.len());
        }
        let keep: Vec<_> = pairs
            .iter()
            .filter(|(x, y)| x.outcome.category().is_some() && y.outcome.category().is_some())
            .collect();
        let oa: Vec<_> = keep.iter().map(|(x, _)| x.outcome).collect();
        let ob: Vec<_> = keep.iter().map(|(_, y)| y.outcome).collect();
        let table = analytics::build_transition_matrix(&oa, &ob)?;
        let test = analytics::stuart_maxwell(&table);
        analytics::write_transition_csv(create(out.join("transition.csv"))?, &table, &test)?;
        println!("stuart-maxwell chi2 {:.4} dof {} p {:.4e}", test.chi2, test.dof, test.p);

        let perturbed = (a.iter().any(|r| r.perturbed), b.iter().any(|r| r.perturbed));
        if perturbed.0 != perturbed.1 {
            let rate = EpisodeConfig::from_model(&ctx.model).policy_rate;
            let onset = Perturbation::default().onset_step(rate);
            let trials: Vec<PairedTrial> = keep
                .iter()
                .map(|(x, y)| {
                    let (u, p) = if perturbed.0 { (y, x) } else { (x, y) };
                    PairedTrial {
                        unperturbed: u.outcome,
                        perturbed: p.outcome,
                        series: analytics::corrective_series(&u.actions, &p.actions),
                    }
                })
                .collect();
            let (rows, skipped) = analytics::corrective_table(&trials, onset, DEFAULT_WINDOW);
            analytics::write_corrective_csv(create(out.join("corrective.csv"))?, &rows)?;
            if skipped > 0 {
                eprintln!("{skipped} trials ended before the corrective window closed");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(ctx: &Ctx, a: &BenchArgs) -> Result<ExitCode> {
    ctx.prepare(&a.out, None)?;
    let points = bench::run_bench(&ctx.model, &a.dt_list, &a.n_list, a.steps, a.scenario.into());
    bench::write_bench_csv(create(a.out.join("bench.csv"))?, &points)?;
    for p in &points {
        match &p.error {
            None => println!("dt {:<7} N {:<3} rtf {:.1}", p.dt, p.disk_count, p.rtf),
            Some(e) => println!("dt {:<7} N {:<3} failed after {} steps: {e}", p.dt, p.disk_count, p.steps),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run_episode(ctx: &Ctx, a: &RunEpisodeArgs) -> Result<ExitCode> {
    ctx.prepare(&a.out, Some(a.seed))?;
    let cfg = episode_config(ctx, &a.episode);
    let mut env = GraspEnv::new(ctx.model.clone(), cfg)?;
    let rollout = match a.episode.policy {
        PolicyKind::Primitive => episode::run_episode(&mut env, &mut PrimitivePolicy, a.seed, true)?,
        PolicyKind::ExternalLog => {
            let path = a.episode.actions.as_ref().expect("required by clap");
            let rec = read_records(path)?
                .into_iter()
                .find(|r| r.seed == a.seed)
                .ok_or_else(|| format!("no episode with seed {} in {}", a.seed, path.display()))?;
            episode::run_episode(&mut env, &mut ReplayPolicy::new(rec.actions), a.seed, true)?
        }
    };
    episode::write_step_log(create(a.out.join("steps.csv"))?, &rollout.rows)?;
    write_records(a.out.join("episodes.jsonl"), std::slice::from_ref(&rollout.record))?;
    let r = &rollout.record;
    println!(
        "outcome={} steps={} reward={:.4}",
        r.outcome.label(),
        r.length,
        r.total_reward
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(ctx: &Ctx, a: &ServeArgs) -> Result<ExitCode> {
    if a.stdio {
        softchain::wire::serve_stdio(ctx.model.clone())?;
    } else if let Some(port) = a.port {
        let listener = softchain::wire::bind(("127.0.0.1", port))?;
        eprintln!("listening on {}", listener.local_addr()?);
        softchain::wire::serve_tcp(ctx.model.clone(), listener)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Command::Plot(a) = &cli.command {
        return cmd_plot(a);
    }
    let ctx = Ctx::load(cli.model)?;
    match &cli.command {
        Command::SweepKinematics(a) => cmd_sweep(&ctx, a),
        Command::Noncc(a) => cmd_noncc(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::RunEpisode(a) => cmd_run_episode(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Serve(a) => cmd_serve(&ctx, a),
        Command::Plot(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
