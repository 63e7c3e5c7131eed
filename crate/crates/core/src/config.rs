//! Run configuration.
//!
//! A config file is TOML with five sections: `scenario`, `qfeed`, `qrepl`,
//! `search` and `reporting`. Every field has a default, so an empty file is a
//! valid (desk-scale) configuration. See `configs/` for complete examples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, SimError};

const WEIGHT_SUM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub qfeed: QFeedConfig,
    pub qrepl: QReplConfig,
    pub search: SearchConfig,
    pub reporting: ReportingConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            qfeed: QFeedConfig::default(),
            qrepl: QReplConfig::default(),
            search: SearchConfig::default(),
            reporting: ReportingConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Full-size preset: 10,000 nodes and 3,000 objects.
    pub fn full_scale() -> Self {
        let mut cfg = Self::default();
        cfg.scenario.node_count = 10_000;
        cfg.scenario.object_count = 3_000;
        cfg.scenario.keyword_pool = 30_000;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.qfeed.validate()?;
        self.qrepl.validate()?;
        self.search.validate()?;
        Ok(())
    }
}

/// How a query's keywords are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryModel {
    /// Pick an object by popularity, then keywords from that object.
    Object,
    /// Pick keywords straight from the pool by popularity rank.
    Keyword,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub object_count: usize,
    pub keyword_pool: usize,
    /// Upper bound on keywords per object; each object draws 1..=this many.
    pub max_keywords_per_object: usize,
    /// Zipf exponent of keyword frequency across the catalog (0 = uniform).
    pub keyword_zipf_exponent: f64,
    pub avg_degree: f64,
    pub up_fraction: f64,
    /// Inclusive range of initial copies placed for every object.
    pub copies_per_object: [usize; 2],
    pub bandwidth_values: Vec<f64>,
    pub storage_values: Vec<u32>,
    pub object_size: u32,
    pub queries_per_node: usize,
    pub query_interval_ticks: u64,
    pub query_model: QueryModel,
    /// Zipf exponent of request popularity over objects or keywords,
    /// depending on `query_model` (0 = uniform).
    pub query_zipf_exponent: f64,
    pub churn_interval_queries: u64,
    pub churn_fraction: f64,
    pub runs: usize,
    pub seed: u64,
    pub load_capacity_per_tick: u32,
    pub load_threshold: f64,
    /// Fraction of nodes that hide their files and discard received replicas.
    pub free_rider_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            node_count: 1_000,
            object_count: 300,
            keyword_pool: 3_000,
            max_keywords_per_object: 5,
            keyword_zipf_exponent: 0.0,
            avg_degree: 3.5,
            up_fraction: 0.8,
            copies_per_object: [1, 3],
            bandwidth_values: vec![32.0, 42.0, 64.0, 71.0, 77.0, 92.0, 98.0],
            storage_values: vec![40, 45, 47, 60, 63, 65, 69, 75],
            object_size: 1,
            queries_per_node: 100,
            query_interval_ticks: 20,
            query_model: QueryModel::Object,
            query_zipf_exponent: 0.8,
            churn_interval_queries: 50_000,
            churn_fraction: 0.5,
            runs: 9,
            seed: 42,
            load_capacity_per_tick: 100,
            load_threshold: 0.9,
            free_rider_fraction: 0.0,
        }
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<()> {
        if self.node_count < 2 {
            return Err(config_err("scenario.node_count must be at least 2"));
        }
        if self.avg_degree < 1.0 {
            return Err(config_err("scenario.avg_degree must be at least 1"));
        }
        if self.avg_degree >= (self.node_count - 1) as f64 && self.node_count > 2 {
            return Err(config_err("scenario.avg_degree must be below node_count - 1"));
        }
        if self.object_count == 0 {
            return Err(config_err("scenario.object_count must be positive"));
        }
        if self.keyword_pool < self.object_count {
            return Err(config_err("scenario.keyword_pool must be >= object_count"));
        }
        if self.max_keywords_per_object == 0 {
            return Err(config_err("scenario.max_keywords_per_object must be positive"));
        }
        if !(self.keyword_zipf_exponent >= 0.0 && self.query_zipf_exponent >= 0.0) {
            return Err(config_err("zipf exponents must be non-negative"));
        }
        if !(self.up_fraction > 0.0 && self.up_fraction <= 1.0) {
            return Err(config_err("scenario.up_fraction must lie in (0, 1]"));
        }
        let [lo, hi] = self.copies_per_object;
        if lo == 0 || lo > hi {
            return Err(config_err("scenario.copies_per_object must be a range [lo, hi] with 1 <= lo <= hi"));
        }
        if self.bandwidth_values.is_empty() || self.bandwidth_values.iter().any(|b| !(*b > 0.0)) {
            return Err(config_err("scenario.bandwidth_values must be non-empty and positive"));
        }
        if self.storage_values.is_empty() {
            return Err(config_err("scenario.storage_values must be non-empty"));
        }
        if self.object_size == 0 {
            return Err(config_err("scenario.object_size must be positive"));
        }
        if self.query_interval_ticks == 0 {
            return Err(config_err("scenario.query_interval_ticks must be positive"));
        }
        if self.churn_interval_queries == 0 {
            return Err(config_err("scenario.churn_interval_queries must be positive"));
        }
        if !(0.0..=1.0).contains(&self.churn_fraction) {
            return Err(config_err("scenario.churn_fraction must lie in [0, 1]"));
        }
        if self.runs == 0 {
            return Err(config_err("scenario.runs must be positive"));
        }
        if self.load_capacity_per_tick == 0 {
            return Err(config_err("scenario.load_capacity_per_tick must be positive"));
        }
        if !(self.load_threshold > 0.0 && self.load_threshold <= 1.0) {
            return Err(config_err("scenario.load_threshold must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.free_rider_fraction) {
            return Err(config_err("scenario.free_rider_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Nominal run length before the drain phase.
    pub fn run_length_ticks(&self) -> u64 {
        self.queries_per_node as u64 * self.query_interval_ticks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QFeedConfig {
    pub enabled: bool,
    pub alpha: f64,
    pub u1: f64,
    pub u2: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w_susp: f64,
    pub l_th: f64,
    pub u_th: f64,
    pub h_th: f64,
    pub n1_limit: u32,
    /// Ticks between dormant polls; 0 means once per period.
    pub poll_interval_ticks: u64,
    pub sample_stride: u32,
}

impl Default for QFeedConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha: 0.2,
            u1: 0.4,
            u2: 0.6,
            w1: 0.4,
            w2: 0.2,
            w3: 0.2,
            w4: 0.2,
            w_susp: 0.8,
            l_th: 100.0,
            u_th: 60.0,
            h_th: 0.1,
            n1_limit: 20,
            poll_interval_ticks: 0,
            sample_stride: 20,
        }
    }
}

impl QFeedConfig {
    fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.alpha) {
            return Err(config_err("qfeed.alpha must lie in (0, 1)"));
        }
        if !(open_unit(self.u1) && open_unit(self.u2)) || (self.u1 + self.u2 - 1.0).abs() > WEIGHT_SUM_EPS {
            return Err(config_err("qfeed.u1 + qfeed.u2 must equal 1 with both in (0, 1)"));
        }
        if self.u2 <= self.u1 {
            return Err(config_err("qfeed.u2 must exceed qfeed.u1"));
        }
        let w = [self.w1, self.w2, self.w3, self.w4];
        if w.iter().any(|x| !open_unit(*x)) || (w.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_EPS {
            return Err(config_err("qfeed.w1..w4 must lie in (0, 1) and sum to 1"));
        }
        if w[1..].iter().any(|x| *x >= self.w1) {
            return Err(config_err("qfeed.w1 must be the largest reward weight"));
        }
        if !open_unit(self.w_susp) {
            return Err(config_err("qfeed.w_susp must lie in (0, 1)"));
        }
        if !(self.u_th >= 0.0 && self.u_th < self.l_th) {
            return Err(config_err("qfeed.u_th must be below qfeed.l_th"));
        }
        if !(self.h_th >= 0.0 && self.h_th <= 1.0) {
            return Err(config_err("qfeed.h_th must lie in [0, 1]"));
        }
        if self.sample_stride == 0 {
            return Err(config_err("qfeed.sample_stride must be at least 1"));
        }
        Ok(())
    }
}

/// Which replication scheme the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplicationScheme {
    Qrepl,
    Path,
    None,
}

impl std::str::FromStr for ReplicationScheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "qrepl" => Ok(Self::Qrepl),
            "path" => Ok(Self::Path),
            "none" => Ok(Self::None),
            other => Err(format!("unknown replication scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QReplConfig {
    pub scheme: ReplicationScheme,
    pub eta: f64,
    pub p_th: f64,
    pub popularity_update_every: u32,
    /// Ticks between replication checks; 0 means once per period.
    pub replication_check_period_ticks: u64,
    /// Ticks before an unanswered reservation expires; 0 means one period.
    pub reservation_timeout_ticks: u64,
    pub hello_ttl: u32,
    pub hello_walkers: usize,
    pub d_min: f64,
    pub b_min: f64,
    pub s_min: f64,
    pub wr1: f64,
    pub wr2: f64,
    pub wr3: f64,
    pub alpha: f64,
}

impl Default for QReplConfig {
    fn default() -> Self {
        Self {
            scheme: ReplicationScheme::Qrepl,
            eta: 0.5,
            p_th: 30.0,
            popularity_update_every: 50,
            replication_check_period_ticks: 0,
            reservation_timeout_ticks: 0,
            hello_ttl: 3,
            hello_walkers: 2,
            d_min: 3.0,
            b_min: 64.0,
            s_min: 40.0,
            wr1: 0.4,
            wr2: 0.2,
            wr3: 0.4,
            alpha: 0.2,
        }
    }
}

impl QReplConfig {
    fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.eta) {
            return Err(config_err("qrepl.eta must lie in (0, 1)"));
        }
        if !open_unit(self.alpha) {
            return Err(config_err("qrepl.alpha must lie in (0, 1)"));
        }
        let w = [self.wr1, self.wr2, self.wr3];
        if w.iter().any(|x| !open_unit(*x)) || (w.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_EPS {
            return Err(config_err("qrepl.wr1..wr3 must lie in (0, 1) and sum to 1"));
        }
        if !(self.wr2 < self.wr1 && self.wr2 < self.wr3) {
            return Err(config_err("qrepl.wr2 must be the smallest reward weight"));
        }
        if !(self.d_min > 0.0 && self.b_min > 0.0 && self.s_min > 0.0) {
            return Err(config_err("qrepl minimums d_min, b_min, s_min must be positive"));
        }
        if self.popularity_update_every == 0 {
            return Err(config_err("qrepl.popularity_update_every must be positive"));
        }
        if self.hello_walkers == 0 {
            return Err(config_err("qrepl.hello_walkers must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub walkers: usize,
    pub ttl: u32,
    pub download_probability: f64,
    pub keywords_per_query: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { walkers: 6, ttl: 6, download_probability: 1.0, keywords_per_query: 1 }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.walkers == 0 {
            return Err(config_err("search.walkers must be positive"));
        }
        if !(0.0..=1.0).contains(&self.download_probability) {
            return Err(config_err("search.download_probability must lie in [0, 1]"));
        }
        if self.keywords_per_query == 0 {
            return Err(config_err("search.keywords_per_query must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportingConfig {
    pub out_dir: String,
    /// Run storage and replication invariant checks at every period boundary.
    pub audit: bool,
}

impl Default for ReportingConfig {
    fn default() -> Self {
        Self { out_dir: "out".into(), audit: true }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_valid_default() {
        let cfg = SimConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn roundtrips_through_toml() {
        let cfg = SimConfig::full_scale();
        let text = cfg.to_toml_string();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(SimConfig::from_toml_str("[qfeed]\nbogus = 1\n").is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let err = SimConfig::from_toml_str("[qfeed]\nu1 = 0.7\nu2 = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("u2"));
        assert!(SimConfig::from_toml_str("[qrepl]\nwr1 = 0.2\nwr2 = 0.4\nwr3 = 0.4\n").is_err());
        assert!(SimConfig::from_toml_str("[qfeed]\nu_th = 120.0\n").is_err());
    }

    #[test]
    fn rejects_degree_too_large() {
        let err = SimConfig::from_toml_str("[scenario]\nnode_count = 5\navg_degree = 4.0\n").unwrap_err();
        assert!(matches!(err, SimError::Config(_)));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = SimConfig::from_toml_str("[search]\nttl = 4\n[qrepl]\nscheme = \"path\"\n").unwrap();
        assert_eq!(cfg.search.ttl, 4);
        assert_eq!(cfg.search.walkers, 6);
        assert_eq!(cfg.qrepl.scheme, ReplicationScheme::Path);
    }
}
