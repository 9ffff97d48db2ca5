//! CSV and JSON output of sweep results, read-back, and plot reshaping.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiment::{
    CellFailure, ExperimentResult, ExperimentSpec, InvalidSolution, MeanRow, Mode, ResultRow, SolutionRecord,
};

/// Column order of the per-cell results file.
pub const RESULT_HEADER: [&str; 9] = [
    "target_sinr_db",
    "realization",
    "algorithm",
    "network_power_w",
    "total_tx_power_w",
    "active_bs",
    "feasible",
    "iterations",
    "wall_ms",
];

/// Files written for one sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub means: PathBuf,
    pub metadata: PathBuf,
    pub solutions: PathBuf,
}

impl OutputPaths {
    /// A path ending in `.csv` names the results file; anything else is a
    /// directory receiving `results.csv`.
    pub fn new(path: &Path) -> Self {
        let results = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            path.to_path_buf()
        } else {
            path.join("results.csv")
        };
        let with = |suffix: &str| {
            let stem = results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            results.with_file_name(format!("{stem}{suffix}"))
        };
        OutputPaths {
            means: with(".means.csv"),
            metadata: with(".meta.json"),
            solutions: with(".solutions.jsonl"),
            results,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map_err(io_err(path))
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

/// Per-cell rows, header first. An empty table gives a header-only file.
pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_csv(path, &RESULT_HEADER, rows)
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    read_csv(path)
}

pub const MEANS_HEADER: [&str; 10] = [
    "target_sinr_db",
    "algorithm",
    "mode",
    "feasible",
    "infeasible",
    "failed",
    "mean_network_power_w",
    "mean_total_tx_power_w",
    "mean_active_bs",
    "mean_iterations",
];

pub fn write_means(path: &Path, means: &[MeanRow]) -> Result<()> {
    write_csv(path, &MEANS_HEADER, means)
}

pub fn read_means(path: &Path) -> Result<Vec<MeanRow>> {
    read_csv(path)
}

/// Run description stored next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub spec: ExperimentSpec,
    pub modes: BTreeMap<String, Mode>,
    /// Values chosen where the reference scenario is silent.
    pub assumed_defaults: BTreeMap<String, String>,
    /// Scenario constants that no swept quantity uses.
    pub unused_constants: BTreeMap<String, f64>,
    pub failures: Vec<CellFailure>,
    pub validated_solutions: usize,
    pub invalid_solutions: Vec<InvalidSolution>,
}

impl Metadata {
    pub fn new(spec: &ExperimentSpec, result: &ExperimentResult) -> Self {
        let modes = spec
            .algorithms
            .iter()
            .flat_map(|a| a.row_labels().into_iter().map(move |l| (l, a.mode())))
            .collect();
        let p = &spec.preset;
        let assumed_defaults = BTreeMap::from([
            ("kappa".to_string(), format!("{} (backhaul noise std, set equal to sigma by default)", p.kappa)),
            (
                "wireline_split".to_string(),
                format!("stations 1..={} wireline, the remaining {} wireless", p.num_wireline, p.num_bs - p.num_wireline),
            ),
            (
                "wireless_initial_budget".to_string(),
                format!(
                    "received power |g_l|^2 sum P~ + kappa^2 with every wireless station served at P~ = {} W",
                    p.initial_backhaul_power
                ),
            ),
        ]);
        Metadata {
            spec: spec.clone(),
            modes,
            assumed_defaults,
            unused_constants: BTreeMap::from([("delta".to_string(), 0.05)]),
            failures: result.failures.clone(),
            validated_solutions: result.validated,
            invalid_solutions: result.invalid.clone(),
        }
    }
}

/// Writes the results, means and metadata files, plus solution dumps when
/// the sweep kept them.
pub fn write_results(spec: &ExperimentSpec, result: &ExperimentResult, paths: &OutputPaths) -> Result<()> {
    write_rows(&paths.results, &result.rows)?;
    write_means(&paths.means, &result.means)?;
    let meta = serde_json::to_string_pretty(&Metadata::new(spec, result))?;
    fs::write(&paths.metadata, meta).map_err(io_err(&paths.metadata))?;
    if spec.dump_solutions {
        let mut w = BufWriter::new(create(&paths.solutions)?);
        for rec in &result.solutions {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n").map_err(io_err(&paths.solutions))?;
        }
        w.flush().map_err(io_err(&paths.solutions))?;
    }
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_solutions(path: &Path) -> Result<Vec<SolutionRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Which mean a plot series shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotMetric {
    NetworkPower,
    TotalTxPower,
    ActiveBs,
}

impl std::str::FromStr for PlotMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network-power" | "network_power_w" => Ok(PlotMetric::NetworkPower),
            "total-tx-power" | "total_tx_power_w" => Ok(PlotMetric::TotalTxPower),
            "active-bs" | "active_bs" => Ok(PlotMetric::ActiveBs),
            other => Err(Error::InvalidConfig(format!("unknown plot metric '{other}'"))),
        }
    }
}

/// One `(target, value)` series per algorithm, in ascending target order.
pub fn plot_series(means: &[MeanRow], metric: PlotMetric) -> BTreeMap<String, Vec<(f64, Option<f64>)>> {
    let mut out: BTreeMap<String, Vec<(f64, Option<f64>)>> = BTreeMap::new();
    for m in means {
        let v = match metric {
            PlotMetric::NetworkPower => m.mean_network_power_w,
            PlotMetric::TotalTxPower => m.mean_total_tx_power_w,
            PlotMetric::ActiveBs => m.mean_active_bs,
        };
        out.entry(m.algorithm.clone()).or_default().push((m.target_sinr_db, v));
    }
    for s in out.values_mut() {
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

/// Wide table: one row per target, one column per algorithm; missing values
/// are left empty.
pub fn plot_table(series: &BTreeMap<String, Vec<(f64, Option<f64>)>>) -> String {
    let mut targets: Vec<f64> = series.values().flatten().map(|(t, _)| *t).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let mut out = String::from("target_sinr_db");
    for name in series.keys() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in targets {
        out.push_str(&t.to_string());
        for s in series.values() {
            out.push(',');
            if let Some(v) = s.iter().find(|(x, _)| *x == t).and_then(|(_, v)| *v) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_plot_table(path: &Path, series: &BTreeMap<String, Vec<(f64, Option<f64>)>>) -> Result<()> {
    create(path)?.write_all(plot_table(series).as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn row(algorithm: &str, power: Option<f64>) -> ResultRow {
        ResultRow {
            target_sinr_db: 4.0,
            realization: 3,
            algorithm: algorithm.to_string(),
            network_power_w: power,
            total_tx_power_w: power.map(|p| p / 10.0),
            active_bs: 5,
            feasible: power.is_some(),
            iterations: 2,
            wall_ms: 12.5,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_rows(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{}\n", RESULT_HEADER.join(",")));
        assert!(read_rows(&path).unwrap().is_empty());
    }

    #[test]
    fn one_row_is_two_lines() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_rows(&path, &[row("sp+loop", Some(31.25))]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "4.0,3,sp+loop,31.25,3.125,5,true,2,12.5");
    }

    #[test]
    fn infeasible_values_are_blank() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_rows(&path, &[row("cb", None)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "4.0,3,cb,,,5,false,2,12.5");
        assert_eq!(read_rows(&path).unwrap(), vec![row("cb", None)]);
    }

    #[test]
    fn output_paths() {
        let p = OutputPaths::new(Path::new("out/sweep.csv"));
        assert_eq!(p.results, Path::new("out/sweep.csv"));
        assert_eq!(p.means, Path::new("out/sweep.means.csv"));
        assert_eq!(p.metadata, Path::new("out/sweep.meta.json"));
        let d = OutputPaths::new(Path::new("results/"));
        assert_eq!(d.results, Path::new("results/results.csv"));
        assert_eq!(d.means, Path::new("results/results.means.csv"));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_rows(Path::new("/nonexistent/dir/r.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/r.csv"));
    }

    #[test]
    fn plot_series_groups_by_algorithm() {
        let mean = |t: f64, a: &str, p: Option<f64>| MeanRow {
            target_sinr_db: t,
            algorithm: a.to_string(),
            mode: Mode::SingleShot,
            feasible: 1,
            infeasible: 0,
            failed: 0,
            mean_network_power_w: p,
            mean_total_tx_power_w: p.map(|v| v / 2.0),
            mean_active_bs: Some(3.0),
            mean_iterations: Some(1.0),
        };
        let means = [mean(2.0, "sp", Some(5.0)), mean(0.0, "sp", Some(4.0)), mean(0.0, "cb", None)];
        let s = plot_series(&means, PlotMetric::TotalTxPower);
        assert_eq!(s["sp"], vec![(0.0, Some(2.0)), (2.0, Some(2.5))]);
        assert_eq!(s["cb"], vec![(0.0, None)]);
        let dir = tempdir().unwrap();
        let path = dir.path().join("plot.csv");
        write_plot_table(&path, &s).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "target_sinr_db,cb,sp\n0,,2\n2,,2.5\n");
        assert_eq!("network-power".parse::<PlotMetric>().unwrap(), PlotMetric::NetworkPower);
    }

    proptest! {
        #[test]
        fn rows_round_trip(
            target in -20.0f64..40.0,
            realization in 0usize..1000,
            power in proptest::option::of(1e-9f64..1e4),
            tx in 1e-12f64..1e3,
            active in 0usize..64,
            iterations in 0usize..20,
            wall in 0.0f64..1e6,
            algo in 0usize..9,
        ) {
            let r = ResultRow {
                target_sinr_db: target,
                realization,
                algorithm: crate::harness::Algorithm::ALL[algo].label().to_string(),
                network_power_w: power,
                total_tx_power_w: power.map(|_| tx),
                active_bs: active,
                feasible: power.is_some(),
                iterations,
                wall_ms: wall,
            };
            let dir = tempdir().unwrap();
            let path = dir.path().join("r.csv");
            write_rows(&path, std::slice::from_ref(&r)).unwrap();
            prop_assert_eq!(read_rows(&path).unwrap(), vec![r]);
        }
    }
}
