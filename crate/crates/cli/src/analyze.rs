use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use dyadic_core::analysis::{
    compare_with_bound, decay_check, energy_balance_audit, spectrum_fit, tile_windows,
    time_averaged_shell_energies,
};
use dyadic_core::equilibrium::{fixed_point_general, ForcingSpec};
use dyadic_core::io::{
    create, read_json, read_trajectory_csv, write_fit_csv, write_json, RunSummary,
};
use dyadic_core::model::{distance, sobolev_norm};
use dyadic_core::simulator::{detect_crossing, BlowupSurrogate, Trajectory};
use serde_json::json;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Run directory holding summary.json and trajectory.csv or trajectory.json.
    pub run: PathBuf,
    /// Shell range `lo:hi` for the spectrum fit; defaults to 3:min(16, N).
    #[arg(long)]
    pub fit_range: Option<String>,
    /// Time window `t1:t2` for averaging shell energies; defaults to the last
    /// half of the run.
    #[arg(long)]
    pub average: Option<String>,
    /// Width of the decay-check windows.
    #[arg(long, default_value_t = 0.5)]
    pub window: f64,
    /// Relative slack on the decay bound.
    #[arg(long, default_value_t = 0.1)]
    pub slack: f64,
    /// Regularity threshold on the H^(5/6) norm; defaults to the run's
    /// surrogate threshold, else 50 times the initial norm.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_pair<T: std::str::FromStr>(flag: &str, s: &str) -> CliResult<(T, T)> {
    let err = || CliError::usage(format!("{flag}: expected `lo:hi`, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(err)?;
    Ok((
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    ))
}

fn load_run(dir: &Path) -> CliResult<(RunSummary, Trajectory)> {
    let summary: RunSummary = read_json(&dir.join("summary.json"))
        .map_err(|e| CliError::usage(format!("{}: {e}", dir.join("summary.json").display())))?;
    let csv = dir.join("trajectory.csv");
    let traj = if csv.exists() {
        let file =
            File::open(&csv).map_err(|e| CliError::usage(format!("{}: {e}", csv.display())))?;
        read_trajectory_csv(file, &summary.params, &summary.options)
            .map_err(|e| CliError::usage(format!("{}: {e}", csv.display())))?
    } else {
        let path = dir.join("trajectory.json");
        read_json(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
    };
    if traj.samples.is_empty() {
        return Err(CliError::usage(format!(
            "{}: trajectory has no samples",
            dir.display()
        )));
    }
    Ok((summary, traj))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let (summary, traj) = load_run(&args.run)?;
    let params = &traj.params;
    let n = params.n_shells();
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;

    let (lo, hi) = match &args.fit_range {
        Some(s) => parse_pair::<usize>("--fit-range", s)?,
        None => (3.min(n), 16.min(n)),
    };
    if lo >= hi || hi > n {
        return Err(CliError::usage(format!(
            "--fit-range {lo}:{hi} is outside the shells 0..={n} of this run (need lo < hi <= {n})"
        )));
    }
    let (start, end) = (traj.start_time(), traj.end_time());
    let (energies, window) = match &args.average {
        Some(s) => {
            let (t1, t2) = parse_pair::<f64>("--average", s)?;
            let e = time_averaged_shell_energies(&traj, t1, t2)
                .map_err(|e| CliError::usage(format!("--average {s}: {e}")))?;
            (e, Some((t1, t2)))
        }
        None if traj.samples.len() >= 3 => {
            let t1 = start + 0.5 * (end - start);
            (
                time_averaged_shell_energies(&traj, t1, end)?,
                Some((t1, end)),
            )
        }
        None => (traj.last_state().expect("nonempty").shell_energies(), None),
    };
    let fit = spectrum_fit(&energies, lo, hi)?;
    write_fit_csv(&fit, create(&out.join("fit.csv"))?)?;
    write_json(
        &json!({
            "slope": fit.slope,
            "intercept": fit.intercept,
            "residual_rms": fit.residual_rms,
            "j_range": [lo, hi],
            "average_window": window,
        }),
        &out.join("fit.json"),
    )?;
    println!(
        "spectrum fit over j in [{lo}, {hi}]: slope {}, intercept {}",
        fit.slope, fit.intercept
    );

    let balance = energy_balance_audit(&traj, params.forcing());
    write_json(
        &json!({
            "closure": params.closure(),
            "max_defect": balance.max_defect,
            "final_defect": balance.final_defect,
            "elapsed": balance.elapsed,
            "defect_per_time": if balance.elapsed > 0.0 { balance.max_defect / balance.elapsed } else { 0.0 },
        }),
        &out.join("balance.json"),
    )?;
    println!(
        "energy balance defect {:e} over {}",
        balance.max_defect, balance.elapsed
    );

    if params.forcing().iter().all(|&f| f == 0.0) {
        let skipped = json!({ "skipped": "unforced run has no fixed point" });
        write_json(&skipped, &out.join("decay.json"))?;
        write_json(&skipped, &out.join("bound.json"))?;
        println!("unforced run: decay and blow-up bound skipped");
        return Ok(());
    }
    let fp = fixed_point_general(&ForcingSpec::from_params(params), params)?.state;
    let initial = traj.first_state().expect("nonempty");
    let threshold = match args.threshold {
        Some(t) if !(t.is_finite() && t > 0.0) => {
            return Err(CliError::usage(format!(
                "--threshold: must be > 0, got {t}"
            )));
        }
        Some(t) => t,
        None => summary
            .crossing
            .as_ref()
            .filter(|c| c.s == 5.0 / 6.0)
            .map(|c| c.threshold)
            .unwrap_or_else(|| 50.0 * sobolev_norm(initial, 5.0 / 6.0)),
    };
    if !(args.window.is_finite() && args.window > 0.0) {
        return Err(CliError::usage(format!(
            "--window: must be > 0, got {}",
            args.window
        )));
    }
    let mut windows = tile_windows(start, end, args.window);
    if windows.is_empty() && end > start {
        windows.push((start, end));
    }
    let decay = decay_check(&traj, &fp, &windows, threshold, args.slack)?;
    write_json(&decay, &out.join("decay.json"))?;
    match decay.pass_fraction {
        Some(f) => println!(
            "decay check: {} windows, pass fraction {f}",
            decay.windows.len()
        ),
        None => println!("decay check: every window excluded"),
    }

    let crossing = if threshold > 0.0 {
        detect_crossing(&traj, &BlowupSurrogate::new(threshold)).crossing_time
    } else {
        None
    };
    let bound = compare_with_bound(distance(initial, &fp)?, params.lambda(), crossing);
    write_json(&bound, &out.join("bound.json"))?;
    println!(
        "blow-up bound {}: crossing {}",
        bound.bound,
        crossing.map_or("none".into(), |t| t.to_string())
    );
    Ok(())
}
