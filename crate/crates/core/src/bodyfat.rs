//! Repeated random-split evaluation on a real dataset, plus full-sample
//! weights with bootstrap standard errors.
//!
//! Built around the body-fat table but works for any [`Dataset`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::random_split;
use crate::pipeline::{bootstrap_weight_se, evaluate, fit, BootstrapSummary, FitConfig, Method};
use crate::report::{Cell, Table};
use crate::rng::{derive_seed, Stream};
use crate::simulation::MeanSd;
use crate::solver::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitStudyConfig {
    pub n_tr: Vec<usize>,
    pub splits: usize,
    pub taus: Vec<f64>,
    pub methods: Vec<Method>,
    /// Bootstrap resamples for the full-sample weight table; 0 skips it.
    pub bootstrap: usize,
    /// Quantile level of the weight table.
    pub weights_tau: f64,
    pub seed: u64,
    pub fit: FitConfig,
}

impl Default for SplitStudyConfig {
    fn default() -> Self {
        Self {
            n_tr: vec![150, 200],
            splits: 500,
            taus: vec![0.5, 0.25, 0.75],
            methods: Method::ALL.to_vec(),
            bootstrap: 200,
            weights_tau: 0.5,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

impl SplitStudyConfig {
    /// Mean methods target the conditional mean, so they are compared
    /// against quantile methods only at the median.
    pub fn cells(&self) -> Vec<(usize, f64, Method)> {
        let mut taus = self.taus.clone();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let mut methods = self.methods.clone();
        crate::report::sort_methods(&mut methods);
        let mut out = Vec::new();
        for &n_tr in &self.n_tr {
            for &m in &methods {
                for &tau in &taus {
                    if m.is_quantile() || tau == 0.5 {
                        out.push((n_tr, tau, m));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::Config("need at least one split".into()));
        }
        if let Some(&bad) = self.n_tr.iter().find(|&&k| k == 0 || k >= n) {
            return Err(Error::Config(format!("training size {bad} must lie in 1..{n}")));
        }
        if self.bootstrap > 0 && self.bootstrap < 100 {
            return Err(Error::Config(format!("bootstrap needs at least 100 resamples, got {}", self.bootstrap)));
        }
        for &t in self.taus.iter().chain([&self.weights_tau]) {
            crate::error::check_tau(t)?;
        }
        if self.cells().is_empty() {
            return Err(Error::Config("no (method, tau) combination selected".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub n_tr: usize,
    pub tau: f64,
    pub method: Method,
    pub mpe_in: MeanSd,
    pub mpe_out: MeanSd,
    pub splits_used: usize,
    /// Per-split out-of-sample errors in split order.
    pub mpe_out_per_split: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub method: Method,
    pub weights: WeightVector,
    pub bootstrap: Option<BootstrapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFailure {
    pub n_tr: usize,
    pub tau: f64,
    pub method: Method,
    pub split: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStudyReport {
    pub names: Vec<String>,
    pub prediction: Vec<PredictionRow>,
    pub weights: Vec<WeightRow>,
    pub weights_tau: f64,
    pub failures: Vec<SplitFailure>,
}

impl SplitStudyReport {
    pub fn row(&self, n_tr: usize, tau: f64, method: Method) -> Option<&PredictionRow> {
        self.prediction.iter().find(|r| r.n_tr == n_tr && r.tau == tau && r.method == method)
    }
}

/// Runs every (n_tr, τ, method) cell over `splits` random partitions.
///
/// Split `k` uses the same partition in every cell. More than 1% failed
/// fits in any cell aborts the study.
pub fn run_split_study(data: &Dataset, cfg: &SplitStudyConfig) -> Result<SplitStudyReport> {
    cfg.validate(data.n())?;
    let cells = cfg.cells();
    let mut prediction = Vec::new();
    let mut failures = Vec::new();
    for &(n_tr, tau, method) in &cells {
        let fit_cfg = FitConfig { tau, method, ..cfg.fit.clone() };
        let outcomes: Vec<Result<(f64, f64)>> = (0..cfg.splits)
            .into_par_iter()
            .map(|k| {
                let split_seed = derive_seed(cfg.seed, Stream::Split, ((n_tr as u64) << 32) | k as u64);
                let split = random_split(data, n_tr, split_seed)?;
                let local = FitConfig { seed: derive_seed(split_seed, Stream::CrossValidation, 0), ..fit_cfg.clone() };
                let model = fit(&split.train, &local)?;
                Ok((evaluate(&model, &split.train)?.mpe, evaluate(&model, &split.test)?.mpe))
            })
            .collect();
        let (mut ins, mut outs) = (Vec::new(), Vec::new());
        let before = failures.len();
        for (k, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok((i, o)) => {
                    ins.push(i);
                    outs.push(o);
                }
                Err(e) => failures.push(SplitFailure { n_tr, tau, method, split: k, message: e.to_string() }),
            }
        }
        let failed = failures.len() - before;
        if failed as f64 > 0.01 * cfg.splits as f64 {
            let first = &failures[before];
            return Err(Error::InvalidInput(format!(
                "{method} at tau {tau}, n_tr {n_tr}: {failed} of {} splits failed (first, split {}: {})",
                cfg.splits, first.split, first.message
            )));
        }
        prediction.push(PredictionRow {
            n_tr,
            tau,
            method,
            mpe_in: MeanSd::of(&ins),
            mpe_out: MeanSd::of(&outs),
            splits_used: outs.len(),
            mpe_out_per_split: outs,
        });
    }

    let mut methods = cfg.methods.clone();
    crate::report::sort_methods(&mut methods);
    let weights = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let full_cfg = FitConfig {
                tau: cfg.weights_tau,
                method,
                seed: derive_seed(cfg.seed, Stream::CrossValidation, i as u64),
                ..cfg.fit.clone()
            };
            let model = fit(data, &full_cfg)?;
            let bootstrap = if cfg.bootstrap > 0 {
                Some(bootstrap_weight_se(data, &full_cfg, cfg.bootstrap, derive_seed(cfg.seed, Stream::Bootstrap, i as u64))?)
            } else {
                None
            };
            Ok(WeightRow { method, weights: model.weights, bootstrap })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitStudyReport {
        names: data.names().to_vec(),
        prediction,
        weights,
        weights_tau: cfg.weights_tau,
        failures,
    })
}

/// In- and out-of-sample errors per cell; the text view is scaled by 100.
pub fn prediction_table(report: &SplitStudyReport) -> Table {
    let mut t = Table::new(
        "Prediction error (x 1e-2) over random splits",
        &["tau", "method", "n_tr", "MPE in-sample", "MPE out-of-sample", "splits"],
    );
    t.scale = 100.0;
    let mut rows: Vec<&PredictionRow> = report.prediction.iter().collect();
    // Median first, as in the usual presentation, then by method and size.
    let tau_key = |t: f64| if t == 0.5 { (0, 0.0) } else { (1, t) };
    rows.sort_by(|a, b| {
        let (ka, kb) = (tau_key(a.tau), tau_key(b.tau));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.method.cmp(&b.method))
            .then(a.n_tr.cmp(&b.n_tr))
    });
    for r in rows {
        t.push(vec![
            Cell::Text(format!("{}", r.tau)),
            Cell::Text(r.method.to_string()),
            Cell::Int(r.n_tr as u64),
            Cell::MeanSd(r.mpe_in),
            Cell::MeanSd(r.mpe_out),
            Cell::Int(r.splits_used as u64),
        ]);
    }
    t
}

/// Full-sample weights with bootstrap standard errors, one column per method.
pub fn weight_table(report: &SplitStudyReport) -> Table {
    let mut cols = vec!["weight".to_string(), "covariate".to_string()];
    cols.extend(report.weights.iter().map(|w| w.method.to_string()));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(format!("Full-sample weights at tau = {} (bootstrap SE)", report.weights_tau), &col_refs);
    let p = report.names.len();
    for j in 0..=p {
        let mut row = vec![
            Cell::Text(format!("w{j}")),
            Cell::Text(if j == 0 { "intercept".into() } else { report.names[j - 1].clone() }),
        ];
        for w in &report.weights {
            let value = if j == 0 { w.weights.w0 } else { w.weights.w[j - 1] };
            row.push(match &w.bootstrap {
                Some(b) => Cell::MeanSd(MeanSd { mean: value, sd: b.standard_errors[j] }),
                None => Cell::Num(value),
            });
        }
        t.push(row);
    }
    t
}
