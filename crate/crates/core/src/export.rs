//! CSV and manifest export of a run series.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::metrics::RunReport;

pub const STATUS_CENSUS_CSV: &str = "status_census.csv";
pub const MESSAGES_BY_STATUS_CSV: &str = "messages_by_status.csv";
pub const FILE_GROWTH_CSV: &str = "file_growth.csv";
pub const MESSAGES_PER_QUERY_CSV: &str = "messages_per_query.csv";
pub const QUERIES_FINISHED_CSV: &str = "queries_finished.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub mode: String,
    pub seed: u64,
    pub runs: usize,
    pub config: SimConfig,
    /// Configuration of the comparison arm, if any.
    pub baseline_config: Option<SimConfig>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(mode: &str, config: &SimConfig, baseline_config: Option<&SimConfig>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            seed: config.scenario.seed,
            runs: config.scenario.runs,
            config: config.clone(),
            baseline_config: baseline_config.cloned(),
            files: Vec::new(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn counts_table(reports: &[RunReport], pick: impl Fn(&RunReport) -> crate::metrics::StatusCounts) -> String {
    let mut out = String::from("run_index,normal_pct,suspended_pct,dormant_pct,normal,suspended,dormant\n");
    for r in reports {
        let c = pick(r);
        let p = c.percentages();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.run_index,
            num(p[0]),
            num(p[1]),
            num(p[2]),
            num(c.normal as f64),
            num(c.suspended as f64),
            num(c.dormant as f64)
        ));
    }
    out
}

pub fn status_census_csv(reports: &[RunReport]) -> String {
    counts_table(reports, |r| r.status_census)
}

pub fn messages_by_status_csv(reports: &[RunReport]) -> String {
    counts_table(reports, |r| r.messages_by_origin_status)
}

pub fn file_growth_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(
        "run_index,files_from_replication,files_from_download,cumulative_replication,cumulative_download,files_per_node\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.run_index,
            num(r.files_from_replication as f64),
            num(r.files_from_download as f64),
            num(r.cumulative_replication as f64),
            num(r.cumulative_download as f64),
            num(r.files_per_node)
        ));
    }
    out
}

/// Single-column series, or two columns paired by run when `baseline` is
/// given.
fn series(
    reports: &[RunReport],
    baseline: Option<&[RunReport]>,
    column: &str,
    value: impl Fn(&RunReport) -> Option<f64>,
) -> String {
    let mut out = match baseline {
        Some(_) => format!("run_index,qfeed_qrepl_{column},baseline_path_{column}\n"),
        None => format!("run_index,{column}\n"),
    };
    for (i, r) in reports.iter().enumerate() {
        match baseline {
            Some(b) => {
                let other = b.get(i).and_then(&value);
                out.push_str(&format!("{},{},{}\n", r.run_index, opt(value(r)), opt(other)));
            }
            None => out.push_str(&format!("{},{}\n", r.run_index, opt(value(r)))),
        }
    }
    out
}

pub fn messages_per_query_csv(reports: &[RunReport], baseline: Option<&[RunReport]>) -> String {
    series(reports, baseline, "avg_messages_per_successful_query", |r| r.avg_messages_per_successful_query)
}

pub fn queries_finished_csv(reports: &[RunReport], baseline: Option<&[RunReport]>) -> String {
    series(reports, baseline, "queries_finished_pct", |r| Some(r.queries_finished_pct))
}

/// Writes the five CSVs and the manifest into `out_dir`. With `baseline`,
/// the per-query series carry a second column for the comparison arm. On
/// failure every file written so far is removed.
pub fn export(
    reports: &[RunReport],
    baseline: Option<&[RunReport]>,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SimError::Export { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut manifest = manifest.clone();
    let tables = [
        (STATUS_CENSUS_CSV, status_census_csv(reports)),
        (MESSAGES_BY_STATUS_CSV, messages_by_status_csv(reports)),
        (FILE_GROWTH_CSV, file_growth_csv(reports)),
        (MESSAGES_PER_QUERY_CSV, messages_per_query_csv(reports, baseline)),
        (QUERIES_FINISHED_CSV, queries_finished_csv(reports, baseline)),
    ];
    manifest.files = tables.iter().map(|(name, _)| name.to_string()).collect();
    let manifest_json = serde_json::to_string_pretty(&manifest)? + "\n";

    let mut written = Vec::new();
    let outputs = tables.into_iter().chain(std::iter::once((MANIFEST_JSON, manifest_json)));
    for (name, body) in outputs {
        let path = out_dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(io_err(&path)(e));
        }
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::StatusCounts;

    fn report(i: u32) -> RunReport {
        RunReport {
            run_index: i,
            status_census: StatusCounts { normal: 900, suspended: 60, dormant: 40 },
            avg_messages_per_successful_query: Some(10.0 / 3.0),
            queries_finished_pct: 70.0,
            ..Default::default()
        }
    }

    #[test]
    fn one_row_per_run_and_fixed_precision() {
        let reports: Vec<RunReport> = (1..=9).map(report).collect();
        for csv in [
            status_census_csv(&reports),
            messages_by_status_csv(&reports),
            file_growth_csv(&reports),
            messages_per_query_csv(&reports, None),
            queries_finished_csv(&reports, None),
        ] {
            assert_eq!(csv.lines().count(), 10);
            assert!(csv.lines().next().unwrap().starts_with("run_index,"));
        }
        assert_eq!(status_census_csv(&reports).lines().nth(1).unwrap(), "1,90.0000,6.0000,4.0000,900.0000,60.0000,40.0000");
        assert_eq!(messages_per_query_csv(&reports, None).lines().nth(9).unwrap(), "9,3.3333");
    }

    #[test]
    fn compare_mode_pairs_columns() {
        let a: Vec<RunReport> = (1..=3).map(report).collect();
        let mut b = a.clone();
        b[1].avg_messages_per_successful_query = None;
        let csv = messages_per_query_csv(&a, Some(&b));
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 3);
        assert_eq!(csv.lines().nth(2).unwrap(), "2,3.3333,");
    }

    #[test]
    fn empty_series_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest::new("qfeed", &SimConfig::default(), None);
        let files = export(&[], None, &manifest, dir.path()).unwrap();
        assert_eq!(files.len(), 6);
        for name in [STATUS_CENSUS_CSV, MESSAGES_BY_STATUS_CSV, FILE_GROWTH_CSV, MESSAGES_PER_QUERY_CSV, QUERIES_FINISHED_CSV] {
            let body = fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(body.lines().count(), 1);
        }
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_JSON)).unwrap()).unwrap();
        assert_eq!(m.config, SimConfig::default());
        assert_eq!(m.files.len(), 5);
    }

    #[test]
    fn unwritable_target_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        // A directory squatting on one of the CSV names makes that write fail.
        fs::create_dir(dir.path().join(FILE_GROWTH_CSV)).unwrap();
        let manifest = RunManifest::new("qfeed", &SimConfig::default(), None);
        assert!(export(&[report(1)], None, &manifest, dir.path()).is_err());
        assert!(!dir.path().join(STATUS_CENSUS_CSV).exists());
        assert!(!dir.path().join(MESSAGES_BY_STATUS_CSV).exists());
    }
}
