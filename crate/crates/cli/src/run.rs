use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use dyadic_core::equilibrium::{fixed_point_general, ForcingSpec};
use dyadic_core::io::{create, fmt_num, write_json, write_trajectory_csv, RunSummary};
use dyadic_core::model::{sobolev_norm, Closure};
use dyadic_core::simulator::{
    detect_crossing, integrate_with, BlowupSurrogate, DiagnosticsConfig, InitialRule, Scheme,
};
use dyadic_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, Format, Resolved, RunConfig};
use crate::{CliError, CliResult, ClosureArg, InitArg, RunArgs, SchemeArg};

/// Loads the config and applies the flags on top of it.
pub fn build_config(args: &RunArgs) -> CliResult<(RunConfig, config::Origin)> {
    let (mut cfg, origin) = config::load_or_default(args.config.as_deref())?;
    let m = &mut cfg.model;
    if let Some(n) = args.shells {
        m.n_shells = n;
    }
    if let Some(l) = args.lambda {
        m.lambda = l;
    }
    if let Some(f0) = args.f0 {
        m.forcing = [(0, f0)].into();
    }
    if let Some(path) = &args.forcing {
        m.forcing = config::load_forcing(path)?;
    }
    if let Some(c) = args.closure {
        m.closure = Some(match c {
            ClosureArg::Galerkin => Closure::Galerkin,
            ClosureArg::Tail => Closure::Tail,
        });
    }
    let lambda = m.lambda;
    if let Some(t) = args.t_end {
        cfg.run.t_end = t;
    }
    if let Some(init) = args.init {
        cfg.run.initial = match init {
            InitArg::Zero => InitialRule::Zero,
            InitArg::FixedPoint => InitialRule::FixedPoint,
            InitArg::Geometric => InitialRule::Geometric {
                amplitude: args.amplitude,
                ratio: args.ratio.unwrap_or(1.0 / lambda),
            },
            InitArg::Random => InitialRule::Random {
                seed: args.seed,
                energy: args.energy,
            },
        };
    }
    if cfg.run.initial == InitialRule::FixedPoint {
        cfg.diagnostics.fixed_point_reference = true;
    }
    let s = &mut cfg.solver;
    if let Some(v) = args.rel_tol {
        s.rel_tol = v;
    }
    if let Some(v) = args.abs_tol {
        s.abs_tol = v;
    }
    if let Some(v) = args.max_step {
        s.max_step = v;
    }
    if let Some(v) = args.record_every {
        s.record_every = v;
    }
    if let Some(v) = args.scheme {
        s.scheme = match v {
            SchemeArg::EmbeddedPair => Scheme::EmbeddedPair,
            SchemeArg::IntegratingFactor => Scheme::IntegratingFactor,
        };
    }
    if args.threshold.is_some() {
        cfg.surrogate.threshold = args.threshold;
    }
    if args.fixed_point_reference {
        cfg.diagnostics.fixed_point_reference = true;
    }
    if let Some(out) = &args.out {
        cfg.output.directory = out.clone();
    }
    Ok((cfg, origin))
}

/// Integrates one run and writes its artifacts into `dir`. Numerical failures
/// still produce the partial trajectory and a summary carrying the error.
pub fn execute(res: &Resolved, dir: &Path) -> CliResult<RunSummary> {
    let params = &res.params;
    let initial = res.initial.build(params)?;
    let fixed_point = if res.diagnostics.fixed_point_reference {
        Some(fixed_point_general(&ForcingSpec::from_params(params), params)?.state)
    } else {
        None
    };
    let diag = DiagnosticsConfig {
        sobolev_exponents: res.diagnostics.sobolev_exponents.clone(),
        flux_shells: res.diagnostics.flux_shells.clone(),
        box_shells: res.diagnostics.box_shells.clone(),
        fixed_point_reference: fixed_point,
    };
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;

    let start = Instant::now();
    let (traj, mut error) =
        match integrate_with(params, &initial, 0.0, res.t_end, &res.options, &diag) {
            Ok(t) => (t, None),
            Err(e @ Error::NonFinite { .. }) => {
                let msg = e.to_string();
                let Error::NonFinite { partial, .. } = e else {
                    unreachable!()
                };
                (*partial, Some(msg))
            }
            Err(e) => return Err(e.into()),
        };
    if error.is_none() && traj.is_truncated() {
        let last = traj
            .events
            .last()
            .map(|e| e.detail.clone())
            .unwrap_or_default();
        error = Some(format!(
            "integration stopped at t = {}: {last}",
            traj.end_time()
        ));
    }
    let s = &res.surrogate;
    let threshold = s
        .threshold
        .unwrap_or(s.relative_threshold * sobolev_norm(&initial, s.s));
    let crossing = (threshold > 0.0 && !traj.samples.is_empty())
        .then(|| detect_crossing(&traj, &BlowupSurrogate::with_exponent(s.s, threshold)));
    let wall = start.elapsed().as_secs_f64();

    for format in &res.output.formats {
        match format {
            Format::Csv => write_trajectory_csv(&traj, create(&dir.join("trajectory.csv"))?)?,
            Format::Json => write_json(&traj, &dir.join("trajectory.json"))?,
        }
    }
    let mut summary = RunSummary::new(
        &traj,
        &initial_label(&res.initial),
        res.t_end,
        crossing,
        wall,
    );
    summary.error = error;
    write_json(&summary, &dir.join("summary.json"))?;
    Ok(summary)
}

fn initial_label(rule: &InitialRule) -> String {
    serde_json::to_string(rule).unwrap_or_default()
}

pub fn cmd_simulate(args: &RunArgs) -> CliResult<()> {
    let (cfg, origin) = build_config(args)?;
    let res = cfg.resolve(&origin)?;
    let dir = res.output.directory.clone();
    let s = execute(&res, &dir)?;
    println!(
        "{}: {} samples to t = {}, E = {}",
        dir.display(),
        s.samples,
        s.final_time,
        s.energy_final
    );
    if let Some(t) = s.crossing.as_ref().and_then(|c| c.crossing_time) {
        println!("surrogate crossing at t = {t}");
    }
    if let Some(d) = s.max_dist_fp {
        println!("max distance to fixed point = {d:e}");
    }
    match &s.error {
        Some(msg) => Err(CliError::numerical(format!(
            "{msg} (partial output in {})",
            dir.display()
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated shell counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Comma-separated forcing amplitudes on shell 0; defaults to the
    /// configured forcing.
    #[arg(long, value_delimiter = ',')]
    pub f0_list: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    n_shells: usize,
    f0: Option<f64>,
    directory: PathBuf,
    final_time: f64,
    energy_final: f64,
    crossing_time: Option<f64>,
    error: Option<String>,
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let (base, origin) = build_config(&args.run)?;
    let f0s: Vec<Option<f64>> = if args.f0_list.is_empty() {
        vec![None]
    } else {
        args.f0_list.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for &n in &args.n_list {
        for &f0 in &f0s {
            let mut cfg = base.clone();
            cfg.model.n_shells = n;
            let mut name = format!("n{n}");
            if let Some(f0) = f0 {
                cfg.model.forcing = [(0, f0)].into();
                name.push_str(&format!("_f0_{f0}"));
            }
            let res = cfg
                .resolve(&origin)
                .map_err(|e| CliError::usage(format!("{name}: {}", e.message)))?;
            jobs.push((n, f0, base.output.directory.join(name), res));
        }
    }
    let outcomes: Vec<CliResult<SweepRow>> = jobs
        .par_iter()
        .map(|(n, f0, dir, res)| {
            let summary = execute(res, dir)?;
            Ok(SweepRow {
                n_shells: *n,
                f0: *f0,
                directory: dir.clone(),
                final_time: summary.final_time,
                energy_final: summary.energy_final,
                crossing_time: summary.crossing.as_ref().and_then(|c| c.crossing_time),
                error: summary.error,
            })
        })
        .collect();
    let rows: Vec<SweepRow> = outcomes.into_iter().collect::<CliResult<_>>()?;

    let dir = &base.output.directory;
    write_json(&rows, &dir.join("sweep.json"))?;
    let mut w = create(&dir.join("sweep.csv"))?;
    let io = |e: std::io::Error| CliError::usage(format!("writing sweep.csv: {e}"));
    writeln!(
        w,
        "n_shells,f0,final_time,energy_final,crossing_time,failed"
    )
    .map_err(io)?;
    for r in &rows {
        let opt = |v: Option<f64>| fmt_num(v.unwrap_or(f64::NAN));
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n_shells,
            opt(r.f0),
            fmt_num(r.final_time),
            fmt_num(r.energy_final),
            opt(r.crossing_time),
            u8::from(r.error.is_some())
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    for r in &rows {
        println!(
            "{}: t_end = {}, crossing = {}",
            r.directory.display(),
            r.final_time,
            r.crossing_time.map_or("none".into(), |t| t.to_string())
        );
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::numerical(format!(
            "{failed} of {} runs failed",
            rows.len()
        )));
    }
    Ok(())
}
