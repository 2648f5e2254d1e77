mod args;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use args::{ConfigArgs, NoiseArgs, PolicyArgs, SeeArg};
use rearrange_core::harness::calibrate::{calibrate_thresholds, render_calibration, CalibrationSpec};
use rearrange_core::harness::experiment::{
    load_traces, render_table, rows_from_cells, run_cells, save_traces, write_csv, ExperimentSpec, NamedNoise,
    THREADS_ENV,
};
use rearrange_core::harness::verify::{render_report, verify_theorems, VerifyConfig};
use rearrange_core::scene::{generate_cluttered_scene, generate_scene, ClutterParams, ScenarioFile, ScenarioParams, SceneSpec};
use rearrange_core::simulator::{run_episode, write_trace_jsonl, EpisodeConfig};

#[derive(Parser, Debug)]
#[command(name = "rearrange", version, about = "Rearrangement planning under noisy object matching")]
struct Cli {
    /// Worker threads for batch commands. Defaults to one per core.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write generated scenario files.
    Gen(GenArgs),
    /// Run one episode and print its trace.
    Run(RunArgs),
    /// Run a policy × noise × scenario grid and print the metrics table.
    Experiment(ExperimentArgs),
    /// Sweep the termination and classification offsets.
    Calibrate(CalibrateArgs),
    /// Check the optimality results and print PASS/FAIL blocks.
    Verify(VerifyArgs),
    /// Rebuild the metrics table from a saved trace directory.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 5)]
    goal_objects: usize,
    #[arg(long, default_value_t = 0)]
    nongoal_objects: usize,
    /// Comma-separated cycle lengths, e.g. `2,3`.
    #[arg(long, value_delimiter = ',')]
    cycles: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    fraction_at_goal: f64,
    #[arg(long, default_value_t = 0.0)]
    p_chain: f64,
    #[arg(long, default_value_t = 0.5)]
    p_nongoal_on_goal: f64,
    /// Scatter objects and goals uniformly instead of building cycles.
    #[arg(long)]
    cluttered: bool,
    #[arg(long, default_value_t = 2)]
    slack_cells: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Directory for `scene_<k>.json`; stdout (one per line) if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario file written by `gen`.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Trace destination; stdout if absent.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    /// Experiment spec in JSON; the built-in grid if absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// Replaces the noise grid with this single model when any noise flag is set.
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for traces, `metrics.csv` and `table.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the metrics CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    num_goals: usize,
    #[arg(long, value_delimiter = ',')]
    omega_m_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    omega_g_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "greedy-see")]
    see: SeeArg,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the full table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    random_scenes: Option<usize>,
    #[arg(long)]
    max_objects: Option<usize>,
    #[arg(long)]
    episodes_per_point: Option<usize>,
    #[arg(long)]
    accuracy_trials: Option<usize>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    #[arg(long, value_enum)]
    see: Option<SeeArg>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// Directory written by `experiment --out`.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Experiment(a) => experiment(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a),
    }
    .map(|pass| if pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn gen(a: GenArgs) -> Result<bool> {
    let mut scenes = Vec::with_capacity(a.count);
    for k in 0..a.count {
        let seed = a.seed.wrapping_add(k as u64);
        let spec = if a.cluttered {
            generate_cluttered_scene(&ClutterParams {
                num_goal_objects: a.goal_objects,
                num_nongoal_objects: a.nongoal_objects,
                slack_cells: a.slack_cells,
                rng_seed: seed,
            })?
        } else {
            generate_scene(&ScenarioParams {
                num_goal_objects: a.goal_objects,
                num_nongoal_objects: a.nongoal_objects,
                cycle_type: a.cycles.clone(),
                fraction_at_goal: a.fraction_at_goal,
                p_chain: a.p_chain,
                p_nongoal_on_goal: a.p_nongoal_on_goal,
                rng_seed: seed,
            })?
        };
        scenes.push(ScenarioFile::from(spec));
    }
    match a.out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            for (k, s) in scenes.iter().enumerate() {
                fs::write(dir.join(format!("scene_{k}.json")), serde_json::to_string_pretty(s)? + "\n")?;
            }
        }
        None => {
            let mut out = io::stdout().lock();
            for s in &scenes {
                writeln!(out, "{}", serde_json::to_string(s)?)?;
            }
        }
    }
    Ok(true)
}

fn read_scene(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ScenarioFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(SceneSpec::try_from(file)?)
}

fn run(a: RunArgs) -> Result<bool> {
    let spec = read_scene(&a.scenario)?;
    let config = a.config.apply(EpisodeConfig { rng_seed: a.seed, ..EpisodeConfig::default() });
    let trace = run_episode(&spec, a.policy.policies(), &a.noise.noise(), &config)?;
    match &a.trace {
        Some(path) => {
            let mut out = BufWriter::new(fs::File::create(path)?);
            write_trace_jsonl(&trace, &mut out)?;
            out.flush()?;
        }
        None => write_trace_jsonl(&trace, &mut io::stdout().lock())?,
    }
    eprintln!(
        "completed={} planning_steps={} see_steps={}",
        trace.completed, trace.planning_steps, trace.see_steps_total
    );
    Ok(true)
}

fn experiment(a: ExperimentArgs) -> Result<bool> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentSpec::preset(a.seed, a.episodes),
    };
    spec.master_seed = a.seed;
    if a.spec.is_none() {
        spec.episodes = a.episodes;
    }
    if let Some(b) = a.budgets {
        spec.budgets = b;
    }
    if a.noise.is_set() {
        spec.noises = vec![NamedNoise { name: "cli".into(), noise: a.noise.noise() }];
    }
    spec.config = a.config.apply(spec.config);
    let cells = run_cells(&spec)?;
    let rows = rows_from_cells(&spec, &cells);
    let table = render_table(&rows);
    if let Some(dir) = &a.out {
        save_traces(dir, &spec, &cells)?;
        write_csv(&rows, fs::File::create(dir.join("metrics.csv"))?)?;
        fs::write(dir.join("table.txt"), &table)?;
    }
    if let Some(path) = &a.csv {
        write_csv(&rows, fs::File::create(path)?)?;
    }
    print!("{table}");
    Ok(true)
}

fn calibrate(a: CalibrateArgs) -> Result<bool> {
    let mut spec = CalibrationSpec::new(a.noise.noise(), a.samples, a.seed);
    spec.num_goals = a.num_goals;
    spec.see = a.see.into();
    spec.config = a.config.apply(spec.config);
    if let Some(g) = a.omega_m_grid {
        spec.omega_m = g;
    }
    if let Some(g) = a.omega_g_grid {
        spec.omega_g = g;
    }
    let table = calibrate_thresholds(&spec)?;
    if let Some(path) = &a.json {
        fs::write(path, serde_json::to_string_pretty(&table)? + "\n")?;
    }
    print!("{}", render_calibration(&table));
    Ok(true)
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let mut cfg = VerifyConfig::new(a.seed);
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.random_scenes, a.random_scenes);
    set(&mut cfg.max_objects, a.max_objects);
    set(&mut cfg.episodes_per_point, a.episodes_per_point);
    set(&mut cfg.accuracy_trials, a.accuracy_trials);
    set(&mut cfg.bootstrap_resamples, a.bootstrap_resamples);
    if let Some(s) = a.see {
        cfg.see = s.into();
    }
    cfg.config = a.config.apply(cfg.config);
    if cfg.max_objects > rearrange_core::harness::oracle::BFS_OBJECT_CAP {
        bail!("--max-objects is capped at {}", rearrange_core::harness::oracle::BFS_OBJECT_CAP);
    }
    let report = verify_theorems(&cfg)?;
    if let Some(path) = &a.json {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    print!("{}", render_report(&report));
    Ok(report.pass())
}

fn report(a: ReportArgs) -> Result<bool> {
    let (spec, cells) = load_traces(&a.traces).with_context(|| format!("loading {}", a.traces.display()))?;
    let rows = rows_from_cells(&spec, &cells);
    if let Some(path) = &a.csv {
        write_csv(&rows, fs::File::create(path)?)?;
    }
    print!("{}", render_table(&rows));
    Ok(true)
}
