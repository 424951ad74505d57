use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use mfkrig_core::config::{EnvConfig, RunConfig};
use mfkrig_core::doe::{select_next, CandidateSet, DesignChoice, IgBudget, LevelCosts};
use mfkrig_core::experiments::{run_exp1, run_exp2, summarize, Exp1Report, Exp2Report};
use mfkrig_core::io;
use mfkrig_core::rare_event::{event_probability, EstimateRecord};
use mfkrig_core::scenarios::{self, build_lane_change_split, lane_change_bounds, SplitSpec};
use mfkrig_core::{
    fit_multifidelity, Bounds, DesignPoint, Direction, EnvironmentDistribution, EventSpec,
    FitConfig, MultiFidelityDataset, MultiFidelityModel,
};

use crate::{
    Builtin, Cli, Command, DesignArgs, DirectionArg, EstimateArgs, EventArgs, Experiment, FitArgs,
    PredictArgs, ReproduceArgs,
};

struct Session {
    config: Option<RunConfig>,
    seed_flag: Option<u64>,
}

impl Session {
    fn config(&self) -> RunConfig {
        self.config
            .clone()
            .unwrap_or_else(|| RunConfig::with_seed(self.seed_flag.unwrap_or(0)))
    }

    /// `--seed`, then any command-specific seed, then the config's.
    fn seed(&self, fallback: Option<u64>) -> Result<u64> {
        self.seed_flag
            .or(fallback)
            .or(self.config.as_ref().map(|c| c.seed))
            .ok_or_else(|| {
                anyhow!(mfkrig_core::Error::InvalidArgument(
                    "a seed is required: pass --seed or give `seed` in --config".into()
                ))
            })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli
        .config
        .as_deref()
        .map(|p| RunConfig::load(p).with_context(|| format!("loading config {}", p.display())))
        .transpose()?;
    let ctx = Session {
        config,
        seed_flag: cli.seed,
    };
    match cli.command {
        Command::Fit(args) => fit(&ctx, args),
        Command::Predict(args) => predict(&ctx, args),
        Command::EstimateProb(args) => estimate(&ctx, args),
        Command::DesignNext(args) => design_next(&ctx, args),
        Command::Reproduce(args) => reproduce(&ctx, args),
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(mfkrig_core::Error::InvalidArgument(msg.into()))
}

fn require_path(flag: Option<PathBuf>, from_config: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(from_config)
        .ok_or_else(|| invalid(format!("--{name} is required (or `{name}` in --config)")))
}

fn load_model(path: &Path) -> Result<MultiFidelityModel> {
    io::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// Writes `value` as JSON to `out`, or to stdout when no path is given.
/// Returns where the report went, for the summary.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<String> {
    match out {
        Some(p) => {
            io::write_json(p, value).with_context(|| format!("writing {}", p.display()))?;
            Ok(p.display().to_string())
        }
        None => {
            print!("{}", io::to_json_string(value)?);
            Ok("stdout".into())
        }
    }
}

/// Summary lines go to stdout, or stderr when stdout carries the JSON.
fn summary(summary_on_stdout: bool, line: impl AsRef<str>) {
    if summary_on_stdout {
        println!("{}", line.as_ref());
    } else {
        eprintln!("{}", line.as_ref());
    }
}

fn fit(ctx: &Session, args: FitArgs) -> Result<()> {
    let cfg = ctx.config();
    let seed = ctx.seed(None)?;
    let mut fit_cfg = FitConfig { seed, ..cfg.fit.clone() };
    let data: MultiFidelityDataset = match (args.builtin, args.data.or(cfg.data.clone())) {
        (Some(Builtin::OneD), _) => {
            fit_cfg.bounds.get_or_insert(Bounds::new(
                vec![scenarios::DOMAIN_1D.0],
                vec![scenarios::DOMAIN_1D.1],
            )?);
            scenarios::design_1d()?
        }
        (Some(Builtin::LaneChange), _) => {
            fit_cfg.bounds.get_or_insert(lane_change_bounds());
            let spec = SplitSpec { seed, ..cfg.split.clone() };
            build_lane_change_split(&spec, &cfg.lane_change)?.data
        }
        (None, Some(path)) => io::read_bundle(&path)
            .with_context(|| format!("reading bundle {}", path.display()))?,
        (None, None) => return Err(invalid("--data or --builtin is required")),
    };
    let model = fit_multifidelity(&data, &fit_cfg)?;
    io::save_model(&args.out, &model).with_context(|| format!("writing {}", args.out.display()))?;

    println!("fitted {} layer(s), seed {seed}", model.top());
    for (t, layer) in summarize(&model).iter().enumerate() {
        println!(
            "  layer {} [{}]: n={} beta={:.6} tau2={:.6e} theta={:?} nugget={:e} loglik={:.6}",
            t + 1,
            layer.label,
            layer.n,
            layer.beta,
            layer.tau2,
            layer.theta,
            layer.nugget,
            layer.log_likelihood
        );
    }
    println!("model written to {}", args.out.display());
    Ok(())
}

/// Tensor grid with `n` points per coordinate over `bounds`.
fn grid_points(bounds: &Bounds, n: usize) -> Result<Vec<DesignPoint>> {
    if n == 0 {
        return Err(invalid("--grid must be positive"));
    }
    let axes: Vec<Vec<f64>> = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&lo, &hi)| {
            if n == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        })
        .collect();
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    Ok(out.into_iter().map(DesignPoint::new).collect::<Result<_, _>>()?)
}

fn predict(ctx: &Session, args: PredictArgs) -> Result<()> {
    let cfg = ctx.config.clone();
    let model_path = require_path(args.model, cfg.and_then(|c| c.model), "model")?;
    let model = load_model(&model_path)?;
    let level = args.level.unwrap_or(model.top());
    if level == 0 || level > model.top() {
        return Err(invalid(format!("--level {level} out of range 1..={}", model.top())));
    }
    let points = match (&args.points, args.grid) {
        (Some(p), _) => io::read_points_file(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(n)) => grid_points(model.bounds(), n)?,
        (None, None) => return Err(invalid("--points or --grid is required")),
    };
    let preds = points
        .iter()
        .map(|x| model.predict(x, level))
        .collect::<mfkrig_core::Result<Vec<_>>>()?;
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    io::write_predictions(std::io::BufWriter::new(file), &points, &preds)?;
    println!(
        "{} prediction(s) at level {level} of {} written to {}",
        preds.len(),
        model.top(),
        args.out.display()
    );
    Ok(())
}

/// Resolves the environment and the optional seed it carries.
fn environment(
    ctx: &Session,
    args: &EventArgs,
    model: &MultiFidelityModel,
) -> Result<(EnvironmentDistribution, Option<u64>)> {
    let doc = match &args.env {
        Some(p) => Some(EnvConfig::load(p).with_context(|| format!("reading {}", p.display()))?),
        None => ctx.config.as_ref().and_then(|c| c.environment.clone()),
    };
    match doc {
        Some(d) => Ok((d.distribution()?, d.seed)),
        None => Ok((EnvironmentDistribution::uniform_box(model.bounds())?, None)),
    }
}

fn event_spec(ctx: &Session, args: &EventArgs) -> Result<EventSpec> {
    let from_config = ctx.config.as_ref().and_then(|c| c.event);
    let gamma = args
        .gamma
        .or(from_config.map(|e| e.gamma))
        .ok_or_else(|| invalid("--gamma is required (or `event` in --config)"))?;
    if !gamma.is_finite() {
        return Err(invalid("--gamma must be finite"));
    }
    let direction = match args.direction {
        Some(DirectionArg::Exceed) => Direction::Exceed,
        Some(DirectionArg::FallBelow) => Direction::FallBelow,
        None => from_config.map_or(Direction::Exceed, |e| e.direction),
    };
    Ok(EventSpec::new(gamma, direction)?)
}

fn estimate(ctx: &Session, args: EstimateArgs) -> Result<()> {
    let cfg = ctx.config();
    let model_path = require_path(args.model.clone(), cfg.model.clone(), "model")?;
    let model = load_model(&model_path)?;
    let spec = event_spec(ctx, &args.event)?;
    let (env, env_seed) = environment(ctx, &args.event, &model)?;
    let seed = ctx.seed(env_seed)?;
    let n_mc = args.n_mc.unwrap_or(cfg.n_mc);
    let est = event_probability(&model, &env, &spec, n_mc, seed)?;
    let record = EstimateRecord::new(&est, &spec);
    let dest = emit_json(args.out.as_deref(), &record)?;
    let summary_on_stdout = args.out.is_some();
    let op = match spec.direction {
        Direction::Exceed => ">=",
        Direction::FallBelow => "<=",
    };
    summary(
        summary_on_stdout,
        format!(
            "P(y_{}(x) {op} {}) = {:.6} (std error {:.3e}, n_mc {}, seed {seed})",
            model.top(),
            spec.gamma,
            est.value,
            est.std_error,
            est.n_samples
        ),
    );
    summary(summary_on_stdout, format!("estimate written to {dest}"));
    Ok(())
}

#[derive(Serialize)]
struct DesignReport<'a> {
    #[serde(flatten)]
    choice: &'a DesignChoice,
    p_n: f64,
    n_y: usize,
    n_mc: usize,
    seed: u64,
    table: &'a [DesignChoice],
}

fn design_next(ctx: &Session, args: DesignArgs) -> Result<()> {
    let cfg = ctx.config();
    let model_path = require_path(args.model.clone(), cfg.model.clone(), "model")?;
    let model = load_model(&model_path)?;
    let cand_path = require_path(args.candidates.clone(), cfg.candidates.clone(), "candidates")?;
    let points = io::read_points_file(&cand_path)
        .with_context(|| format!("reading {}", cand_path.display()))?;
    let levels = args
        .levels
        .clone()
        .or(cfg.levels.clone())
        .unwrap_or_else(|| (1..=model.top()).collect());
    let candidates = CandidateSet::new(points, levels)?;
    let costs = match args.costs.clone().or(cfg.costs.clone()) {
        Some(c) => LevelCosts::new(c)?,
        None => LevelCosts::default_for(model.top()),
    };
    if costs.costs().len() < model.top() {
        return Err(invalid(format!(
            "cost table has {} entries for a {}-level model",
            costs.costs().len(),
            model.top()
        )));
    }
    let spec = event_spec(ctx, &args.event)?;
    let (env, env_seed) = environment(ctx, &args.event, &model)?;
    let budget = IgBudget {
        n_y: args.n_y.unwrap_or(cfg.n_y),
        n_mc: args.n_mc.unwrap_or(cfg.ig_n_mc),
        seed: ctx.seed(env_seed)?,
    };
    let sel = select_next(&model, &env, &spec, &candidates, &costs, &budget)?;
    let report = DesignReport {
        choice: &sel.choice,
        p_n: sel.p_n,
        n_y: budget.n_y,
        n_mc: budget.n_mc,
        seed: budget.seed,
        table: &sel.table,
    };
    let dest = emit_json(args.out.as_deref(), &report)?;
    let summary_on_stdout = args.out.is_some();
    summary(
        summary_on_stdout,
        format!(
            "next experiment: x = {:?} at level {} (ig {:.4e}, cost {}, score {:.4e})",
            sel.choice.x.coords(),
            sel.choice.t,
            sel.choice.ig,
            sel.choice.cost,
            sel.choice.score
        ),
    );
    summary(
        summary_on_stdout,
        format!("current estimate {:.6}; {} candidate(s) scored; report written to {dest}", sel.p_n, sel.table.len()),
    );
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn exp1_summary(r: &Exp1Report, summary_on_stdout: bool) {
    summary(summary_on_stdout, format!("exp1 (seed {}, {} grid points)", r.seed, r.grid_points));
    summary(summary_on_stdout, format!("  kriging on g only      MSE = {:.6}", r.mse_kriging));
    summary(summary_on_stdout, format!("  h2 + g                 MSE = {:.6}", r.mse_two_level));
    summary(summary_on_stdout, format!("  h1 + h2 + g            MSE = {:.6}", r.mse_three_level));
    let c = &r.checks;
    summary(summary_on_stdout, format!("  ordering {}  halved {}  kriging band {}  three-level band {}",
        pass(c.ordering), pass(c.halved), pass(c.kriging_band), pass(c.three_level_band)));
}

fn exp2_summary(r: &Exp2Report, summary_on_stdout: bool) {
    summary(summary_on_stdout, format!("exp2 ({} run(s))", r.runs.len()));
    for run in &r.runs {
        summary(
            summary_on_stdout,
            format!(
                "  seed {:>4}: single MSE {:.6}  multi MSE {:.6}  reduction {:+.1}%",
                run.seed,
                run.mse_single,
                run.mse_multi,
                100.0 * run.reduction
            ),
        );
    }
    summary(
        summary_on_stdout,
        format!(
            "  multi-fidelity better in {}/{}; median reduction {:+.1}%",
            r.wins,
            r.runs.len(),
            100.0 * r.median_reduction
        ),
    );
}

fn reproduce(ctx: &Session, args: ReproduceArgs) -> Result<()> {
    let cfg = ctx.config();
    let seed = ctx.seed(None)?;
    let summary_on_stdout = args.out.is_some();
    match args.experiment {
        Experiment::Exp1 => {
            let report = run_exp1(seed, &cfg.fit)?;
            let dest = emit_json(args.out.as_deref(), &report)?;
            exp1_summary(&report, summary_on_stdout);
            summary(summary_on_stdout, format!("report written to {dest}"));
        }
        Experiment::Exp2 => {
            let runs = args.runs.unwrap_or(cfg.exp2_runs);
            let report = run_exp2(seed, runs, &cfg.split, &cfg.lane_change, &cfg.exp2_fit)?;
            let dest = emit_json(args.out.as_deref(), &report)?;
            exp2_summary(&report, summary_on_stdout);
            summary(summary_on_stdout, format!("report written to {dest}"));
        }
    }
    Ok(())
}
