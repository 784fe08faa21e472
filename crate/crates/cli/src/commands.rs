use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use qca_core::analysis::{
    classify_transition, g_along_critical, linspace, sweep as run_sweep, BaseParams, ClassifierConfig,
    InitialCondition,
};
use qca_core::classical::{sample_statistics, transition_matrix, BitRow, SamplingConfig};
use qca_core::exact::{basis_state, evolve, evolve_pure, initial_row, parse_pattern, RowChannel};
use qca_core::meanfield::{trajectory, MFState};
use qca_core::output::{self, Manifest};
use qca_core::qcp::{map_qca_to_qcp, qcp_coefficients, QCPRates};
use qca_core::{Boundary, EvolutionConfig, GateParams, Mode, UpdateOrder};

use crate::config::{ClassicalArgs, CriticalArgs, ExactArgs, MapQcpArgs, MeanFieldArgs, SweepArgs};
use crate::{CliError, Context};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `start:end:count`, a single number, or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("malformed number {s:?} in grid {text:?}")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, end, count] => {
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| usage(format!("malformed point count in grid {text:?}")))?;
            let (start, end) = (num(start)?, num(end)?);
            if end < start {
                return Err(usage(format!("grid {text:?} runs backwards")));
            }
            linspace(start, end, count)
        }
        [single] => single.split(',').map(num).collect::<Result<_, _>>()?,
        _ => return Err(usage(format!("malformed grid {text:?}; expected start:end:count"))),
    };
    if grid.is_empty() {
        return Err(usage(format!("grid {text:?} is empty")));
    }
    Ok(grid)
}

fn parse_boundary(s: &str) -> Result<Boundary, CliError> {
    match s {
        "fixed" | "fixed-empty" => Ok(Boundary::FixedEmpty),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(usage(format!("unknown boundary {s:?} (fixed, periodic)"))),
    }
}

fn parse_order(s: &str) -> Result<UpdateOrder, CliError> {
    match s {
        "ltr" | "left-to-right" => Ok(UpdateOrder::LeftToRight),
        "rtl" | "right-to-left" => Ok(UpdateOrder::RightToLeft),
        _ => s
            .split(',')
            .map(|k| k.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(UpdateOrder::Permutation)
            .map_err(|_| usage(format!("unknown order {s:?} (ltr, rtl, or a 0-based permutation)"))),
    }
}

fn parse_init(s: &str) -> Result<InitialCondition, CliError> {
    match s {
        "high" => Ok(InitialCondition::High),
        "low" => Ok(InitialCondition::Low),
        _ => Err(usage(format!("unknown initial condition {s:?} (high, low)"))),
    }
}

fn base_params((q_dec, p_coag, p_plus): (f64, f64, f64)) -> Result<BaseParams, CliError> {
    Ok(BaseParams::from_q_dec(q_dec, p_coag, p_plus)?)
}

fn gate_params(gate: (f64, f64, f64), p_branch: f64, lambda: f64) -> Result<GateParams, CliError> {
    let (q_dec, p_coag, p_plus) = gate;
    Ok(GateParams::from_q_dec(q_dec, p_coag, p_branch, p_plus, lambda)?)
}

fn pattern_for(sites: Option<usize>, pattern: &str) -> Result<Vec<bool>, CliError> {
    let bits = parse_pattern(pattern)?;
    if let Some(l) = sites {
        if l != bits.len() {
            return Err(usage(format!("--L {l} does not match pattern length {}", bits.len())));
        }
    }
    Ok(bits)
}

/// Collects output files of one run and writes the closing manifest.
struct Run<'a> {
    ctx: &'a Context,
    stem: String,
    manifest: Manifest,
}

impl<'a> Run<'a> {
    fn new(ctx: &'a Context, command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self, CliError> {
        let value = serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Self {
            ctx,
            stem: ctx.name.clone().unwrap_or_else(|| command.to_string()),
            manifest: Manifest::new(command, value, seed)?,
        })
    }

    fn file(&mut self, suffix: &str) -> Result<BufWriter<File>, CliError> {
        let name = format!("{}{suffix}", self.stem);
        let path: PathBuf = self.ctx.out_dir.join(&name);
        self.manifest.outputs.push(name);
        Ok(BufWriter::new(File::create(path)?))
    }

    fn note(&mut self, note: String) {
        self.manifest.notes.push(note);
    }

    fn finish(self) -> Result<(), CliError> {
        let path = self.ctx.out_dir.join(format!("{}.manifest.json", self.stem));
        self.manifest.write(BufWriter::new(File::create(&path)?))?;
        for o in &self.manifest.outputs {
            println!("wrote {}", self.ctx.out_dir.join(o).display());
        }
        println!("wrote {}", path.display());
        Ok(())
    }
}

pub fn sweep(ctx: &Context, args: SweepArgs) -> Result<(), CliError> {
    let base = base_params(args.gate())?;
    let lambdas = parse_grid(args.lambda.as_deref().unwrap_or_default())?;
    let ps = parse_grid(args.p_branch.as_deref().unwrap_or_default())?;
    let init = parse_init(args.init.as_deref().unwrap_or_default())?;
    let diagram = run_sweep(&base, &lambdas, &ps, args.iters.unwrap_or_default(), init)?;
    let mut run = Run::new(ctx, "sweep", &args, None)?;
    output::write_phase_diagram_csv(run.file(".csv")?, &diagram)?;
    if args.pgm {
        output::write_pgm(run.file(".pgm")?, &diagram)?;
    }
    run.finish()
}

pub fn exact(ctx: &Context, args: ExactArgs) -> Result<(), CliError> {
    let bits = pattern_for(args.sites, args.pattern.as_deref().unwrap_or_default())?;
    let params = gate_params(args.gate(), args.p_branch.unwrap_or_default(), args.lambda.unwrap_or_default())?;
    let seed = args.seed.unwrap_or_default();
    let mode = match args.mode.as_deref().unwrap_or_default() {
        "dense" => Mode::Dense,
        "trajectory" => Mode::Trajectory {
            samples: args.samples.unwrap_or_default(),
            seed,
        },
        m => return Err(usage(format!("unknown mode {m:?} (dense, trajectory)"))),
    };
    let cfg = EvolutionConfig {
        order: parse_order(args.order.as_deref().unwrap_or_default())?,
        boundary: parse_boundary(args.boundary.as_deref().unwrap_or_default())?,
        steps: args.steps.unwrap_or_default(),
        mode: mode.clone(),
    };
    cfg.validate(bits.len())?;
    let evolution = match mode {
        Mode::Dense => evolve(&initial_row(&bits)?, &params, &cfg)?,
        Mode::Trajectory { .. } => evolve_pure(&basis_state(&bits), &params, &cfg, false)?,
    };
    let seed = matches!(mode, Mode::Trajectory { .. }).then_some(seed);
    let mut run = Run::new(ctx, "exact", &args, seed)?;
    output::write_time_series_csv(run.file(".csv")?, &evolution)?;
    run.finish()
}

pub fn classical(ctx: &Context, args: ClassicalArgs) -> Result<(), CliError> {
    let bits = pattern_for(args.sites, args.pattern.as_deref().unwrap_or_default())?;
    let params = gate_params(args.gate(), args.p_branch.unwrap_or_default(), 0.0)?;
    let boundary = parse_boundary(args.boundary.as_deref().unwrap_or_default())?;
    let seed = args.seed.unwrap_or_default();
    let cfg = SamplingConfig {
        steps: args.steps.unwrap_or_default(),
        trials: args.trials.unwrap_or_default(),
        boundary,
        seed,
    };
    let stats = sample_statistics(&BitRow::new(bits.clone()), &params, &cfg)?;
    let mut run = Run::new(ctx, "classical", &args, Some(seed))?;
    if args.verify_exact {
        let channel = RowChannel::new(bits.len(), &params, &EvolutionConfig {
            boundary,
            ..EvolutionConfig::dense(UpdateOrder::LeftToRight, 1)
        })?;
        let t = transition_matrix(bits.len(), &params, boundary)?;
        let dev = (channel.population_map() - t).abs().max();
        let line = format!("verify-exact: max |P_exact - P_pca| = {dev:e} (L = {})", bits.len());
        println!("{line}");
        run.note(line);
    }
    output::write_classical_csv(run.file(".csv")?, &stats)?;
    run.finish()
}

pub fn map_qcp(ctx: &Context, args: MapQcpArgs) -> Result<(), CliError> {
    let dt = args.dt.unwrap_or_default();
    let rates_given = [args.gamma, args.kappa_c, args.kappa_b, args.omega].iter().any(Option::is_some);
    let (rates, negative_kappa_c) = if rates_given {
        let kappa_c = args.kappa_c.unwrap_or_default();
        let rates = QCPRates::new(
            args.gamma.unwrap_or_default(),
            kappa_c,
            args.kappa_b.unwrap_or_default(),
            args.omega.unwrap_or_default(),
            dt,
        )?;
        (rates, kappa_c < 0.0)
    } else {
        let params = gate_params(args.gate(), args.p_branch.unwrap_or_default(), args.lambda.unwrap_or_default())?;
        let mapping = map_qca_to_qcp(&params, dt)?;
        (mapping.rates, mapping.negative_kappa_c)
    };
    let disc = qcp_coefficients(&rates);
    let r = &rates;
    let report = json!({
        "gamma": r.gamma,
        "kappa_c": r.kappa_c,
        "kappa_b": r.kappa_b,
        "omega": r.omega,
        "dt": r.dt,
        "g": r.g.map_or(json!("undefined"), |g| json!(g)),
        "coefficients": disc.coefficients,
        "invalid_discretization": disc.invalid_discretization,
        "negative_kappa_c": negative_kappa_c,
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    let mut run = Run::new(ctx, "map-qcp", &args, None)?;
    use std::io::Write;
    writeln!(run.file(".json")?, "{text}")?;
    run.finish()
}

pub fn critical(ctx: &Context, args: CriticalArgs) -> Result<(), CliError> {
    let base = base_params(args.gate())?;
    let lambdas = parse_grid(args.lambda.as_deref().unwrap_or_default())?;
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("lambda values must be strictly increasing"));
    }
    let threshold = args.threshold.unwrap_or_default();
    let cfg = ClassifierConfig {
        p_resolution: args.resolution.unwrap_or_default(),
        jump_threshold: threshold,
        hysteresis_threshold: threshold,
        iters: args.iters.unwrap_or_default(),
        level: args.level.unwrap_or_default(),
    };
    let table = g_along_critical(&base, &lambdas, &cfg)?;
    let reports = lambdas
        .iter()
        .map(|&l| classify_transition(l, &base, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut run = Run::new(ctx, "critical", &args, None)?;
    output::write_critical_csv(run.file(".csv")?, &table)?;
    output::write_transitions_csv(run.file(".transitions.csv")?, &reports)?;
    let summary = match (table.lambda_star, table.g_star) {
        (Some(ls), Some(gs)) => format!("lambda* = {ls}, g* = {gs}"),
        (Some(ls), None) => format!("lambda* = {ls}, g* undefined"),
        _ => "no lambda* found in range".to_string(),
    };
    println!("{summary}");
    run.note(summary);
    for w in &table.warnings {
        eprintln!("warning: {w}");
        run.note(format!("warning: {w}"));
    }
    let all_failed = table.rows.iter().all(|r| r.p_c.is_none());
    run.finish()?;
    if all_failed {
        return Err(CliError::Numerical("no critical point found for any lambda".into()));
    }
    Ok(())
}

pub fn meanfield(ctx: &Context, args: MeanFieldArgs) -> Result<(), CliError> {
    let params = gate_params(args.gate(), args.p_branch.unwrap_or_default(), args.lambda.unwrap_or_default())?;
    let init = MFState::new(args.n0.unwrap_or_default(), args.x0.unwrap_or_default(), args.y0.unwrap_or_default())
        .map_err(|e| usage(e.to_string()))?;
    let states = trajectory(&params, &init, args.iters.unwrap_or_default())?;
    let mut run = Run::new(ctx, "meanfield", &args, None)?;
    output::write_mf_trajectory_csv(run.file(".csv")?, &states)?;
    run.finish()
}
