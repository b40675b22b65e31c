//! Synthetic data-generating processes and Monte Carlo studies.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::normal;
use crate::pipeline::{fit, predict_dataset, evaluate_mpe, FitConfig, Method};
use crate::rng::{derive_seed, rng_for, Stream};
use crate::solver::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorLaw {
    #[serde(rename = "SN", alias = "sn")]
    Sn,
    #[serde(rename = "T3", alias = "t3")]
    T3,
    #[serde(rename = "MN", alias = "mn")]
    Mn,
}

impl ErrorLaw {
    pub fn name(self) -> &'static str {
        match self {
            ErrorLaw::Sn => "SN",
            ErrorLaw::T3 => "T3",
            ErrorLaw::Mn => "MN",
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ErrorLaw::Sn => rng.sample(StandardNormal),
            ErrorLaw::T3 => StudentT::new(3.0).expect("valid degrees of freedom").sample(rng),
            ErrorLaw::Mn => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.gen_bool(0.05) {
                    10.0 * z
                } else {
                    z
                }
            }
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sn" => Ok(ErrorLaw::Sn),
            "t3" => Ok(ErrorLaw::T3),
            "mn" => Ok(ErrorLaw::Mn),
            _ => Err(Error::Config(format!("unknown error law '{s}' (expected sn, t3 or mn)"))),
        }
    }
}

/// `n` i.i.d. draws of the error law.
pub fn sample_error(law: ErrorLaw, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, Stream::Errors, 0);
    (0..n).map(|_| law.draw(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Example {
    #[serde(rename = "Ex1", alias = "1")]
    Ex1,
    #[serde(rename = "Ex2", alias = "2")]
    Ex2,
    #[serde(rename = "Ex3", alias = "3")]
    Ex3,
}

impl Example {
    pub fn true_support(self) -> TrueSupport {
        match self {
            Example::Ex1 | Example::Ex2 => TrueSupport::new(vec![1, 2, 3, 4]),
            Example::Ex3 => TrueSupport::new(vec![1, 2, 3, 4, 5]),
        }
    }

    pub fn min_p(self) -> usize {
        self.true_support().indices.len()
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Example::Ex1 => "Ex1",
            Example::Ex2 => "Ex2",
            Example::Ex3 => "Ex3",
        };
        f.write_str(s)
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches("ex") {
            "1" => Ok(Example::Ex1),
            "2" => Ok(Example::Ex2),
            "3" => Ok(Example::Ex3),
            _ => Err(Error::Config(format!("unknown example '{s}' (expected 1, 2 or 3)"))),
        }
    }
}

/// 1-based covariate indices carrying signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueSupport {
    pub indices: Vec<usize>,
}

impl TrueSupport {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub mod components {
    //! Component functions of the additive examples.

    use std::f64::consts::PI;

    pub fn ex1_m1(u: f64) -> f64 {
        -(2.0 * u).sin()
    }

    pub fn ex1_m2(u: f64) -> f64 {
        u * u - 25.0 / 12.0
    }

    pub fn ex1_m3(u: f64) -> f64 {
        u
    }

    pub fn ex1_m4(u: f64) -> f64 {
        (-u).exp() - 0.4 * 2.5f64.sinh()
    }

    pub fn ex2_m1(u: f64) -> f64 {
        2.0 * u
    }

    pub fn ex2_m2(u: f64) -> f64 {
        (2.0 * u - 1.0).powi(2)
    }

    pub fn ex2_m3(u: f64) -> f64 {
        let s = (2.0 * PI * u).sin();
        s / (2.0 - s)
    }

    pub fn ex2_m4(u: f64) -> f64 {
        let (s, c) = (2.0 * PI * u).sin_cos();
        0.1 * s + 0.2 * c + 0.3 * s * s + 0.4 * c.powi(3) + 0.5 * s.powi(3)
    }
}

fn uniform_columns(rng: &mut ChaCha8Rng, n: usize, p: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    // Row-major draws so that a prefix of rows does not depend on p.
    let mut cols = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        for col in cols.iter_mut() {
            col.push(rng.gen_range(lo..hi));
        }
    }
    cols
}

fn check_dims(n: usize, p: usize, min_p: usize) -> Result<()> {
    if n == 0 || p < min_p {
        return Err(Error::Config(format!("example needs n >= 1 and p >= {min_p}, got n = {n}, p = {p}")));
    }
    Ok(())
}

/// Additive model on `U(-2.5, 2.5)` covariates.
pub fn generate_example1(n: usize, p: usize, error: ErrorLaw, seed: u64) -> Result<Dataset> {
    use components::*;
    check_dims(n, p, 4)?;
    let x = uniform_columns(&mut rng_for(seed, Stream::Covariates, 0), n, p, -2.5, 2.5);
    let eps = sample_error(error, n, seed);
    let y = (0..n)
        .map(|i| ex1_m1(x[0][i]) + ex1_m2(x[1][i]) + ex1_m3(x[2][i]) + ex1_m4(x[3][i]) + eps[i])
        .collect();
    Dataset::new(x, y)
}

/// Additive model with a shared factor: `X_ij = (W_ij + t·U_i)/(1 + t)`.
pub fn generate_example2(n: usize, p: usize, error: ErrorLaw, t: f64, seed: u64) -> Result<Dataset> {
    use components::*;
    check_dims(n, p, 4)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Config(format!("common-factor weight t = {t} must be nonnegative")));
    }
    let mut rng = rng_for(seed, Stream::Covariates, 0);
    let mut x = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        let u: f64 = rng.gen();
        for col in x.iter_mut() {
            let w: f64 = rng.gen();
            col.push((w + t * u) / (1.0 + t));
        }
    }
    let eps = sample_error(error, n, seed);
    let scale = 1.74f64.sqrt();
    let y = (0..n)
        .map(|i| {
            3.0 * ex2_m1(x[0][i]) + 3.0 * ex2_m2(x[1][i]) + 2.0 * ex2_m3(x[2][i]) + 2.0 * ex2_m4(x[3][i])
                + scale * eps[i]
        })
        .collect();
    Dataset::new(x, y)
}

/// Conditional τ-quantile of the third example at `x` (at least 5 entries).
pub fn example3_quantile(x: &[f64], tau: f64) -> f64 {
    let z = normal::quantile(tau);
    1.0 + z + 2.0 * x[0] + 3.0 * x[1] * x[1] - (1.0 - x[2]).ln()
        + normal::quantile(x[3])
        + (1.0 + z - (1.0 - tau).ln()) * x[4]
}

/// Location part of the third example, shared by every quantile level.
fn example3_location(x: &[f64]) -> f64 {
    1.0 + 2.0 * x[0] + 3.0 * x[1] * x[1] - (1.0 - x[2]).ln() + normal::quantile(x[3]) + x[4]
}

/// `Y` as a strictly increasing function of a single uniform `u`, so the
/// conditional τ-quantile is the value at `u = τ`.
pub fn example3_response(x: &[f64], u: f64) -> f64 {
    example3_location(x) + (1.0 + x[4]) * normal::quantile(u) + x[4] * (-(1.0 - u).ln())
}

/// Quantile-specified model on `U(0, 1)` covariates. Returns the data and
/// the true conditional quantile function.
pub fn generate_example3(n: usize, p: usize, seed: u64) -> Result<(Dataset, fn(&[f64], f64) -> f64)> {
    check_dims(n, p, 5)?;
    let mut rng = rng_for(seed, Stream::Covariates, 0);
    let mut x = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        for col in x.iter_mut() {
            // Open interval keeps Φ⁻¹(x4) and log(1 − x3) finite.
            col.push(open_unit(&mut rng));
        }
    }
    let mut urng = rng_for(seed, Stream::Errors, 0);
    let y = (0..n)
        .map(|i| {
            let row = [x[0][i], x[1][i], x[2][i], x[3][i], x[4][i]];
            example3_response(&row, open_unit(&mut urng))
        })
        .collect();
    Ok((Dataset::new(x, y)?, example3_quantile))
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    /// True zeros estimated as zero.
    pub c: usize,
    /// True nonzeros estimated as zero.
    pub ic: usize,
    pub cf: bool,
}

/// Zero counts over the slope weights; the intercept is never counted.
pub fn selection_metrics(weights: &WeightVector, truth: &TrueSupport, p: usize) -> Result<SelectionMetrics> {
    if weights.p() != p || truth.indices.iter().any(|&j| j == 0 || j > p) {
        return Err(Error::InvalidInput(format!("support {:?} does not fit p = {p}", truth.indices)));
    }
    let (mut c, mut ic) = (0, 0);
    for (j, &w) in weights.w.iter().enumerate() {
        if w == 0.0 {
            if truth.contains(j + 1) {
                ic += 1;
            } else {
                c += 1;
            }
        }
    }
    Ok(SelectionMetrics { c, ic, cf: ic == 0 && c == p - truth.len() })
}

/// Half the mean absolute gap between true and estimated quantiles.
pub fn mean_estimation_error(true_q: &[f64], est_q: &[f64]) -> Result<f64> {
    if true_q.is_empty() || true_q.len() != est_q.len() {
        return Err(Error::InvalidInput(format!(
            "estimation error needs equal nonempty lengths, got {} and {}",
            true_q.len(),
            est_q.len()
        )));
    }
    Ok(true_q.iter().zip(est_q).map(|(a, b)| 0.5 * (a - b).abs()).sum::<f64>() / true_q.len() as f64)
}

fn default_t() -> f64 {
    1.0
}

fn default_n_te() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub example: Example,
    pub n_tr: usize,
    #[serde(default = "default_n_te")]
    pub n_te: usize,
    /// Ignored by the third example.
    pub error: ErrorLaw,
    pub tau: f64,
    pub replications: usize,
    pub seed: u64,
    /// Common-factor weight of the second example.
    #[serde(default = "default_t")]
    pub t: f64,
    /// Solver and smoother settings shared by every method; `tau` and
    /// `method` are overwritten per run.
    #[serde(default)]
    pub fit: FitConfig,
}

impl SimulationSpec {
    pub fn new(example: Example, n_tr: usize, error: ErrorLaw, tau: f64, replications: usize, seed: u64) -> Self {
        Self {
            example,
            n_tr,
            n_te: 100,
            error,
            tau,
            replications,
            seed,
            t: 1.0,
            fit: FitConfig::default(),
        }
    }

    /// `⌊√n_tr⌋`.
    pub fn p(&self) -> usize {
        let mut p = (self.n_tr as f64).sqrt().floor() as usize;
        while (p + 1) * (p + 1) <= self.n_tr {
            p += 1;
        }
        while p * p > self.n_tr {
            p -= 1;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_tau(self.tau)?;
        if self.replications < 2 {
            return Err(Error::Config("a Monte Carlo study needs at least 2 replications".into()));
        }
        if self.n_te == 0 {
            return Err(Error::Config("test size must be positive".into()));
        }
        if self.p() < self.example.min_p() {
            return Err(Error::Config(format!(
                "n_tr = {} gives p = {} below the {} signal covariates",
                self.n_tr,
                self.p(),
                self.example.min_p()
            )));
        }
        Ok(())
    }

    /// Draws `n` rows for replication seed `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        let p = self.p();
        match self.example {
            Example::Ex1 => generate_example1(n, p, self.error, seed),
            Example::Ex2 => generate_example2(n, p, self.error, self.t, seed),
            Example::Ex3 => generate_example3(n, p, seed).map(|(d, _)| d),
        }
    }

    fn true_quantiles(&self, data: &Dataset) -> Option<Vec<f64>> {
        (self.example == Example::Ex3).then(|| data.rows().iter().map(|r| example3_quantile(r, self.tau)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub c: usize,
    pub ic: usize,
    pub cf: bool,
    pub mpe_in: f64,
    pub mpe_out: f64,
    pub mee_in: Option<f64>,
    pub mee_out: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: Method,
    pub result: ReplicationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub tau: f64,
    pub replications_used: usize,
    pub failures: usize,
    pub c: MeanSd,
    pub ic: MeanSd,
    pub cf: MeanSd,
    pub mpe_in: MeanSd,
    pub mpe_out: MeanSd,
    pub mee_in: Option<MeanSd>,
    pub mee_out: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub spec: SimulationSpec,
    pub p: usize,
    pub rows: Vec<MethodSummary>,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
}

impl MonteCarloSummary {
    pub fn row(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Per-replication results for `method`, in replication order.
    pub fn results(&self, method: Method) -> impl Iterator<Item = &ReplicationRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }
}

fn run_replication(
    spec: &SimulationSpec,
    methods: &[Method],
    r: usize,
) -> (Vec<ReplicationRecord>, Vec<ReplicationFailure>) {
    let rep_seed = derive_seed(spec.seed, Stream::Replication, r as u64);
    let fail = |method, e: Error| ReplicationFailure { replication: r, method, message: e.to_string() };
    let drawn = spec
        .generate(spec.n_tr, rep_seed)
        .and_then(|tr| Ok((tr, spec.generate(spec.n_te, derive_seed(rep_seed, Stream::TestSet, 0))?)));
    let (train, test) = match drawn {
        Ok(d) => d,
        Err(e) => return (Vec::new(), vec![fail(None, e)]),
    };
    let truth = spec.example.true_support();
    let q_train = spec.true_quantiles(&train);
    let q_test = spec.true_quantiles(&test);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &method in methods {
        let cfg = FitConfig {
            method,
            tau: spec.tau,
            seed: derive_seed(rep_seed, Stream::CrossValidation, 0),
            ..spec.fit.clone()
        };
        let outcome = (|| -> Result<ReplicationResult> {
            let model = fit(&train, &cfg)?;
            let sel = selection_metrics(&model.weights, &truth, train.p())?;
            let pred_in = predict_dataset(&model, &train)?;
            let pred_out = predict_dataset(&model, &test)?;
            let mee = |q: &Option<Vec<f64>>, pred: &[f64]| q.as_ref().map(|q| mean_estimation_error(q, pred)).transpose();
            Ok(ReplicationResult {
                c: sel.c,
                ic: sel.ic,
                cf: sel.cf,
                mpe_in: evaluate_mpe(train.response(), &pred_in, spec.tau)?,
                mpe_out: evaluate_mpe(test.response(), &pred_out, spec.tau)?,
                mee_in: mee(&q_train, &pred_in)?,
                mee_out: mee(&q_test, &pred_out)?,
            })
        })();
        match outcome {
            Ok(result) => records.push(ReplicationRecord { replication: r, method, result }),
            Err(e) => failures.push(fail(Some(method), e)),
        }
    }
    (records, failures)
}

/// Runs `spec.replications` independent replications of every method.
///
/// Replications run in parallel and are reduced in replication order, so
/// the summary does not depend on the thread count.
pub fn run_monte_carlo(spec: &SimulationSpec, methods: &[Method]) -> Result<MonteCarloSummary> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    let per_rep: Vec<_> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, methods, r))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rec, fails) in per_rep {
        records.extend(rec);
        failures.extend(fails);
    }
    let rows = methods
        .iter()
        .map(|&method| {
            let res: Vec<&ReplicationResult> = records.iter().filter(|r| r.method == method).map(|r| &r.result).collect();
            let col = |f: &dyn Fn(&ReplicationResult) -> f64| MeanSd::of(&res.iter().map(|r| f(r)).collect::<Vec<_>>());
            let opt = |f: &dyn Fn(&ReplicationResult) -> Option<f64>| {
                let v: Vec<f64> = res.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| MeanSd::of(&v))
            };
            MethodSummary {
                method,
                tau: spec.tau,
                replications_used: res.len(),
                failures: spec.replications - res.len(),
                c: col(&|r| r.c as f64),
                ic: col(&|r| r.ic as f64),
                cf: col(&|r| if r.cf { 1.0 } else { 0.0 }),
                mpe_in: col(&|r| r.mpe_in),
                mpe_out: col(&|r| r.mpe_out),
                mee_in: opt(&|r| r.mee_in),
                mee_out: opt(&|r| r.mee_out),
            }
        })
        .collect();
    Ok(MonteCarloSummary { spec: spec.clone(), p: spec.p(), rows, records, failures })
}
