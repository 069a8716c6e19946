use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use dyadic_core::equilibrium::{
    fixed_point_general, fixed_point_single, relative_residual, residual, ForcingSpec,
};
use dyadic_core::io::{create, write_json, write_pairs, write_state_csv};
use dyadic_core::model::{Closure, ModelParams, DEFAULT_LAMBDA};
use dyadic_core::spectral::{
    eigenvector, find_eigenvalues, functional_identity_residual, x_grid, CfConfig,
    DEFAULT_GRID_POINTS, DEFAULT_MU_MAX, DEFAULT_MU_MIN,
};
use serde_json::json;

use crate::config::{dense_forcing, load_forcing};
use crate::{CliError, CliResult, ClosureArg};

fn ensure_dir(dir: &PathBuf) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Debug, Clone, Args)]
pub struct FixedPointArgs {
    /// Single-mode forcing on shell 0.
    #[arg(long, required_unless_present = "forcing", conflicts_with = "forcing")]
    pub f0: Option<f64>,
    /// JSON file with a sparse forcing map.
    #[arg(long)]
    pub forcing: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 40)]
    pub shells: usize,
    /// Closure used when evaluating the residual.
    #[arg(long, value_enum, default_value = "tail")]
    pub closure: ClosureArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn cmd_fixed_point(args: &FixedPointArgs) -> CliResult<()> {
    let map: BTreeMap<usize, f64> = match (args.f0, &args.forcing) {
        (Some(f0), _) => {
            if !(f0.is_finite() && f0 > 0.0) {
                return Err(CliError::usage(format!("--f0: must be positive, got {f0}")));
            }
            [(0, f0)].into()
        }
        (None, Some(path)) => load_forcing(path)?,
        (None, None) => return Err(CliError::usage("one of --f0 or --forcing is required")),
    };
    if map.values().all(|&f| f == 0.0) {
        return Err(CliError::usage(
            "forcing: at least one entry must be positive",
        ));
    }
    let closure = match args.closure {
        ClosureArg::Galerkin => Closure::Galerkin,
        ClosureArg::Tail => Closure::Tail,
    };
    let params =
        ModelParams::new(args.lambda, args.shells, dense_forcing(&map))?.with_closure(closure);
    let single = params.forcing().iter().skip(1).all(|&f| f == 0.0);
    let fp = if single {
        fixed_point_single(params.forcing()[0], &params)?
    } else {
        fixed_point_general(&ForcingSpec::from_params(&params), &params)?
    };
    let res = residual(&params, &fp.state)?;
    let rel = relative_residual(&params, &fp.state)?;

    ensure_dir(&args.out)?;
    write_state_csv(&fp.state, "a_j", create(&args.out.join("fixed_point.csv"))?)?;
    let report = json!({
        "lambda": params.lambda(),
        "n_shells": params.n_shells(),
        "closure": params.closure(),
        "forcing": map,
        "C": fp.tail_constant,
        "tail_start": fp.tail_start,
        "residual": res,
        "relative_residual": rel,
    });
    write_json(&report, &args.out.join("fixed_point.json"))?;
    println!(
        "a_0 = {}, C = {}, tail from j = {}, residual = {res:e} (relative {rel:e})",
        fp.state[0], fp.tail_constant, fp.tail_start
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = DEFAULT_MU_MIN, allow_negative_numbers = true)]
    pub mu_min: f64,
    #[arg(long, default_value_t = DEFAULT_MU_MAX, allow_negative_numbers = true)]
    pub mu_max: f64,
    /// Grid points for X(mu) and the root bracketing scan.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Initial continued-fraction depth; doubled until converged.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    /// Length of the emitted eigenvectors.
    #[arg(long, default_value_t = 40)]
    pub shells: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Forcing amplitude for converting eigenvalues to physical time. The
    /// linearization is computed for f0 = lambda^(-1/3); a general f0 scales
    /// time by sqrt(f0 lambda^(1/3)).
    #[arg(long)]
    pub f0: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> CliResult<()> {
    if !(args.mu_min.is_finite() && args.mu_max.is_finite() && args.mu_min < args.mu_max) {
        return Err(CliError::usage(format!(
            "--mu-min/--mu-max: need mu_min < mu_max, got [{}, {}]",
            args.mu_min, args.mu_max
        )));
    }
    if args.grid < 2 {
        return Err(CliError::usage(format!(
            "--grid: need at least 2 points, got {}",
            args.grid
        )));
    }
    if !(args.lambda.is_finite() && args.lambda > 1.0) {
        return Err(CliError::usage(format!(
            "--lambda: must be > 1, got {}",
            args.lambda
        )));
    }
    if args.shells < 1 {
        return Err(CliError::usage("--shells: must be >= 1"));
    }
    let time_scale = match args.f0 {
        Some(f0) if !(f0.is_finite() && f0 > 0.0) => {
            return Err(CliError::usage(format!("--f0: must be positive, got {f0}")));
        }
        Some(f0) => (f0 * args.lambda.powf(1.0 / 3.0)).sqrt(),
        None => 1.0,
    };
    let cfg = CfConfig {
        depth: args.depth,
        ..CfConfig::default()
    };
    cfg.validate()
        .map_err(|e| CliError::usage(format!("--depth: {e}")))?;

    ensure_dir(&args.out)?;
    let grid = x_grid(args.mu_min, args.mu_max, args.grid, &cfg, args.lambda)?;
    write_pairs(["mu", "X"], grid, create(&args.out.join("x_grid.csv"))?)?;

    let roots = find_eigenvalues(args.mu_min, args.mu_max, args.grid, &cfg, args.lambda)?;
    let mut entries = Vec::new();
    for (k, &mu) in roots.iter().enumerate() {
        let identity = functional_identity_residual(mu, &cfg, args.lambda)?;
        let eig = eigenvector(mu, args.shells, &cfg, args.lambda)?;
        let file = format!("eigenvector_{k}.csv");
        write_state_csv(
            &dyadic_core::ShellState::new(eig.c.clone()),
            "c_j",
            create(&args.out.join(&file))?,
        )?;
        println!(
            "mu = {mu} (identity residual {identity:e}, eigen residual {:e})",
            eig.residual
        );
        entries.push(json!({
            "mu": mu,
            "mu_physical": mu * time_scale,
            "identity_residual": identity,
            "eigen_residual": eig.residual,
            "cf_depth_used": eig.cf_depth_used,
            "eigenvector": file,
        }));
    }
    if roots.is_empty() {
        println!("no eigenvalues in [{}, {}]", args.mu_min, args.mu_max);
    }
    let report = json!({
        "lambda": args.lambda,
        "interval": [args.mu_min, args.mu_max],
        "grid_points": args.grid,
        "cf_depth": args.depth,
        "time_scale": time_scale,
        "roots": entries,
    });
    write_json(&report, &args.out.join("roots.json"))?;
    Ok(())
}
