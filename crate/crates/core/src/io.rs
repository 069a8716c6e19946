//! CSV and JSON artifacts. CSV numbers carry 17 significant digits and JSON
//! numbers use the shortest representation that parses back to the same
//! value, so every file round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::FitResult;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ShellState};
use crate::simulator::{
    BlowupSurrogate, Diagnostics, DiagnosticsConfig, Event, RunStats, Sample, SolverOptions,
    Trajectory,
};

/// `x` with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_num(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{field}` is not a number")))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: line {}: {e}", path.display(), e.line())))
}

fn trajectory_header(traj: &Trajectory) -> Vec<String> {
    let cfg = &traj.diagnostics_config;
    let mut h = vec!["t".to_string()];
    h.extend((0..traj.params.dim()).map(|j| format!("a_{j}")));
    h.push("E".into());
    h.extend(cfg.sobolev_exponents.iter().map(|s| format!("Hs:{s}")));
    h.extend(cfg.flux_shells.iter().map(|j| format!("flux:{j}")));
    h.extend(cfg.box_shells.iter().map(|j| format!("box:{j}")));
    h.push("dist_fp".into());
    h
}

/// Columns `t, a_0..a_N, E, Hs:<s>.., flux:<J>.., box:<J>.., dist_fp`; the
/// last column is empty when no fixed-point reference was configured.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(trajectory_header(traj))?;
    for (sample, diag) in traj.samples.iter().zip(&traj.diagnostics) {
        let mut row = vec![fmt_num(sample.t)];
        row.extend(sample.state.as_slice().iter().map(|&a| fmt_num(a)));
        row.push(fmt_num(diag.energy));
        row.extend(diag.sobolev.iter().map(|&v| fmt_num(v)));
        row.extend(diag.fluxes.iter().map(|&v| fmt_num(v)));
        row.extend(diag.box_energies.iter().map(|&v| fmt_num(v)));
        row.push(diag.dist_fp.map(fmt_num).unwrap_or_default());
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

enum Column {
    Time,
    Shell,
    Energy,
    Sobolev,
    Flux,
    Box,
    DistFp,
}

/// Reads a trajectory CSV written by [`write_trajectory_csv`]. The model and
/// solver settings are not part of the CSV and must be supplied.
pub fn read_trajectory_csv<R: Read>(
    r: R,
    params: &ModelParams,
    options: &SolverOptions,
) -> Result<Trajectory> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    let mut cfg = DiagnosticsConfig {
        sobolev_exponents: Vec::new(),
        ..DiagnosticsConfig::default()
    };
    let mut columns = Vec::with_capacity(header.len());
    let mut shells = 0;
    for name in header.iter() {
        let col = if name == "t" {
            Column::Time
        } else if name == "E" {
            Column::Energy
        } else if name == "dist_fp" {
            Column::DistFp
        } else if let Some(j) = name.strip_prefix("a_") {
            if j.parse::<usize>().ok() != Some(shells) {
                return Err(Error::Parse(format!("line 1: unexpected column `{name}`")));
            }
            shells += 1;
            Column::Shell
        } else if let Some(s) = name.strip_prefix("Hs:") {
            cfg.sobolev_exponents.push(parse_num(s, 1)?);
            Column::Sobolev
        } else if let Some(j) = name.strip_prefix("flux:") {
            cfg.flux_shells.push(
                j.parse()
                    .map_err(|_| Error::Parse(format!("line 1: bad column `{name}`")))?,
            );
            Column::Flux
        } else if let Some(j) = name.strip_prefix("box:") {
            cfg.box_shells.push(
                j.parse()
                    .map_err(|_| Error::Parse(format!("line 1: bad column `{name}`")))?,
            );
            Column::Box
        } else {
            return Err(Error::Parse(format!("line 1: unknown column `{name}`")));
        };
        columns.push(col);
    }
    if shells != params.dim() {
        return Err(Error::LengthMismatch {
            expected: params.dim(),
            got: shells,
        });
    }
    cfg.validate(params)?;

    let mut samples = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        if record.len() != columns.len() {
            return Err(Error::Parse(format!(
                "line {line}: {} fields, header has {}",
                record.len(),
                columns.len()
            )));
        }
        let mut t = 0.0;
        let mut state = Vec::with_capacity(shells);
        let mut diag = Diagnostics {
            energy: 0.0,
            sobolev: Vec::new(),
            box_energies: Vec::new(),
            fluxes: Vec::new(),
            dist_fp: None,
        };
        for (field, col) in record.iter().zip(&columns) {
            match col {
                Column::DistFp if field.trim().is_empty() => {}
                Column::DistFp => diag.dist_fp = Some(parse_num(field, line)?),
                Column::Time => t = parse_num(field, line)?,
                Column::Shell => state.push(parse_num(field, line)?),
                Column::Energy => diag.energy = parse_num(field, line)?,
                Column::Sobolev => diag.sobolev.push(parse_num(field, line)?),
                Column::Flux => diag.fluxes.push(parse_num(field, line)?),
                Column::Box => diag.box_energies.push(parse_num(field, line)?),
            }
        }
        if let Some(prev) = samples.last().map(|s: &Sample| s.t) {
            if !(t > prev) {
                return Err(Error::Parse(format!(
                    "line {line}: time {t} does not increase"
                )));
            }
        }
        samples.push(Sample {
            t,
            state: ShellState::new(state),
        });
        diagnostics.push(diag);
    }
    Ok(Trajectory {
        params: params.clone(),
        options: options.clone(),
        diagnostics_config: cfg,
        samples,
        diagnostics,
        events: Vec::new(),
        stats: RunStats::default(),
    })
}

/// Columns `j, log2_shell_energy, fitted, residual`.
pub fn write_fit_csv<W: Write>(fit: &FitResult, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["j", "log2_shell_energy", "fitted", "residual"])?;
    for p in &fit.points {
        out.write_record([
            p.j.to_string(),
            fmt_num(p.log2_shell_energy),
            fmt_num(p.fitted),
            fmt_num(p.residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a two-or-more column numeric CSV with a header; returns the header
/// and the rows.
pub fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        rows.push(
            record
                .iter()
                .map(|f| parse_num(f, line))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((header, rows))
}

/// Writes `(name_x, name_y)` columns.
pub fn write_pairs<W: Write>(
    names: [&str; 2],
    rows: impl IntoIterator<Item = (f64, f64)>,
    w: W,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(names)?;
    for (x, y) in rows {
        out.write_record([fmt_num(x), fmt_num(y)])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `j, a_j`.
pub fn write_state_csv<W: Write>(state: &ShellState, value_name: &str, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["j", value_name])?;
    for (j, a) in state.as_slice().iter().enumerate() {
        out.write_record([j.to_string(), fmt_num(*a)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_state_csv<R: Read>(r: R) -> Result<ShellState> {
    let (_, rows) = read_table(r)?;
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 2 || row[0] != i as f64 {
            return Err(Error::Parse(format!(
                "line {}: expected `{i},<value>`",
                i + 2
            )));
        }
        values.push(row[1]);
    }
    Ok(ShellState::new(values))
}

/// Everything about a run except the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub params: ModelParams,
    pub options: SolverOptions,
    pub diagnostics: DiagnosticsConfig,
    pub initial: String,
    pub t_end: f64,
    pub samples: usize,
    pub final_time: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub max_dist_fp: Option<f64>,
    pub crossing: Option<BlowupSurrogate>,
    pub events: Vec<Event>,
    pub stats: RunStats,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn new(
        traj: &Trajectory,
        initial: &str,
        t_end: f64,
        crossing: Option<BlowupSurrogate>,
        wall_clock_seconds: f64,
    ) -> Self {
        RunSummary {
            params: traj.params.clone(),
            options: traj.options.clone(),
            diagnostics: traj.diagnostics_config.clone(),
            initial: initial.to_string(),
            t_end,
            samples: traj.samples.len(),
            final_time: traj.end_time(),
            energy_initial: traj.diagnostics.first().map_or(0.0, |d| d.energy),
            energy_final: traj.diagnostics.last().map_or(0.0, |d| d.energy),
            max_dist_fp: traj
                .diagnostics
                .iter()
                .filter_map(|d| d.dist_fp)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d)))),
            crossing,
            events: traj.events.clone(),
            stats: traj.stats.clone(),
            error: None,
            wall_clock_seconds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::spectrum_fit;
    use crate::model::DEFAULT_LAMBDA;
    use crate::simulator::{integrate_with, InitialRule};

    #[test]
    fn seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = fmt_num(x);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn trajectory_round_trip() {
        let params = ModelParams::single_mode(DEFAULT_LAMBDA, 6, 1.0).unwrap();
        let init = InitialRule::Random {
            seed: 1,
            energy: 0.5,
        }
        .build(&params)
        .unwrap();
        let cfg = DiagnosticsConfig {
            flux_shells: vec![1, 3],
            box_shells: vec![0, 2],
            fixed_point_reference: Some(ShellState::zeros(7)),
            ..DiagnosticsConfig::default()
        };
        let opts = SolverOptions {
            record_every: 0.05,
            ..SolverOptions::default()
        };
        let traj = integrate_with(&params, &init, 0.0, 0.3, &opts, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,a_0,a_1,a_2,a_3,a_4,a_5,a_6,E,Hs:0,Hs:0.8333333333333334,Hs:1,flux:1,flux:3,box:0,box:2,dist_fp\n"));
        assert!(!text.contains('\r'));
        let back = read_trajectory_csv(&buf[..], &params, &opts).unwrap();
        assert_eq!(back.samples, traj.samples);
        assert_eq!(back.diagnostics, traj.diagnostics);
        assert_eq!(back.diagnostics_config.flux_shells, cfg.flux_shells);
    }

    #[test]
    fn trajectory_csv_errors() {
        let params = ModelParams::single_mode(DEFAULT_LAMBDA, 1, 1.0).unwrap();
        let opts = SolverOptions::default();
        let bad = "t,a_0,a_1,E,bogus,dist_fp\n0,1,1,1,1,\n";
        assert!(matches!(
            read_trajectory_csv(bad.as_bytes(), &params, &opts),
            Err(Error::Parse(_))
        ));
        let short = "t,a_0,E,dist_fp\n0,1,0.5,\n";
        assert!(matches!(
            read_trajectory_csv(short.as_bytes(), &params, &opts),
            Err(Error::LengthMismatch { .. })
        ));
        let nonnum = "t,a_0,a_1,E,dist_fp\n0,1,x,1,\n";
        let err = read_trajectory_csv(nonnum.as_bytes(), &params, &opts).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let backwards = "t,a_0,a_1,E,dist_fp\n1,1,1,1,\n0,1,1,1,\n";
        assert!(read_trajectory_csv(backwards.as_bytes(), &params, &opts).is_err());
    }

    #[test]
    fn fit_and_state_tables() {
        let fit = spectrum_fit(&[1.0, 0.3, 0.2, 0.01], 0, 3).unwrap();
        let mut buf = Vec::new();
        write_fit_csv(&fit, &mut buf).unwrap();
        let (header, rows) = read_table(&buf[..]).unwrap();
        assert_eq!(header, ["j", "log2_shell_energy", "fitted", "residual"]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2][1], fit.points[2].log2_shell_energy);

        let state = ShellState::new(vec![1.0 / 3.0, 2.0, 1e-300]);
        let mut buf = Vec::new();
        write_state_csv(&state, "a_j", &mut buf).unwrap();
        assert_eq!(read_state_csv(&buf[..]).unwrap(), state);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempdir();
        let path = dir.join("x/y.json");
        let value = vec![0.1 + 0.2, 1e-300, -7.25];
        write_json(&value, &path).unwrap();
        let back: Vec<f64> = read_json(&path).unwrap();
        assert_eq!(back, value);
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempdir() -> std::path::PathBuf {
        let p = std::env::temp_dir().join(format!(
            "dyadic-io-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&p).unwrap();
        p
    }
}
