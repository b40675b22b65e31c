//! The two-step model-averaging procedure.
//!
//! Step one fits one marginal curve per covariate on the training set; step
//! two estimates the weights of their affine combination. The four method
//! variants differ in the marginal loss (quantile or mean) and in whether the
//! weights are SCAD-penalized.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_tau, Error, Result};
use crate::io::Transform;
use crate::penalty::{check_loss, ScadPenalty, DEFAULT_SCAD_A};
use crate::rng::{rng_for, Stream};
use crate::smoother::{build_marginal_models, BandwidthPlan, EvalMode, MarginalModel, PilotRule, QuantileScaling};
use crate::solver::{
    lambda_grid, quantile_lambda_max, select_lambda_cv, select_lambda_msic, solve_penalized_least_squares,
    solve_penalized_quantile, CvSelection, MsicObjective, MsicSelection, MsicSettings, SolverOptions, SolverReport, WeightVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SMAMP")]
    Smamp,
    #[serde(rename = "PSMAMP")]
    Psmamp,
    #[serde(rename = "SMAQP")]
    Smaqp,
    #[serde(rename = "PSMAQP")]
    Psmaqp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smamp, Method::Psmamp, Method::Smaqp, Method::Psmaqp];

    pub fn is_penalized(self) -> bool {
        matches!(self, Method::Psmamp | Method::Psmaqp)
    }

    pub fn is_quantile(self) -> bool {
        matches!(self, Method::Smaqp | Method::Psmaqp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Smamp => "SMAMP",
            Method::Psmamp => "PSMAMP",
            Method::Smaqp => "SMAQP",
            Method::Psmaqp => "PSMAQP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected SMAQP, PSMAQP, SMAMP or PSMAMP)")))
    }
}

/// The `C_n` multiplier of the information criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnRule {
    One,
    LogP,
}

impl CnRule {
    pub fn value(self, p: usize) -> f64 {
        match self {
            CnRule::One => 1.0,
            CnRule::LogP => (p as f64).ln().max(f64::MIN_POSITIVE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub tau: f64,
    pub method: Method,
    pub cn_rule: CnRule,
    pub msic_objective: MsicObjective,
    /// Per-covariate pilot (least-squares) bandwidths replacing the rule of thumb.
    pub bandwidth_overrides: Option<Vec<f64>>,
    pub pilot_rule: PilotRule,
    pub quantile_scaling: QuantileScaling,
    /// Per-covariate quantile levels for the marginal fits; defaults to `tau`.
    pub marginal_taus: Option<Vec<f64>>,
    pub eval_mode: EvalMode,
    pub scad_a: f64,
    pub solver: SolverOptions,
    pub grid_size: usize,
    pub grid_min_ratio: f64,
    pub cv_folds: usize,
    /// Seeds the cross-validation folds of PSMAMP.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            method: Method::Psmaqp,
            cn_rule: CnRule::LogP,
            msic_objective: MsicObjective::default(),
            bandwidth_overrides: None,
            pilot_rule: PilotRule::default(),
            quantile_scaling: QuantileScaling::default(),
            marginal_taus: None,
            eval_mode: EvalMode::Refit,
            scad_a: DEFAULT_SCAD_A,
            solver: SolverOptions::default(),
            grid_size: 50,
            grid_min_ratio: 1e-3,
            cv_folds: 5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn new(method: Method, tau: f64) -> Self {
        Self { method, tau, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        ScadPenalty::new(0.0, self.scad_a)?;
        if self.grid_size == 0 {
            return Err(Error::Config("grid size must be at least 1".into()));
        }
        if !(self.grid_min_ratio > 0.0 && self.grid_min_ratio <= 1.0) {
            return Err(Error::Config(format!("grid min ratio {} must lie in (0, 1]", self.grid_min_ratio)));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_sweeps == 0 {
            return Err(Error::Config("solver tolerance and sweep cap must be positive".into()));
        }
        if let Some(taus) = &self.marginal_taus {
            taus.iter().try_for_each(|&t| check_tau(t))?;
        }
        if let Some(h) = &self.bandwidth_overrides {
            if h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Config("bandwidth overrides must be positive".into()));
            }
        }
        Ok(())
    }
}

/// How λ was chosen for a penalized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum Selection {
    Msic(MsicSelection),
    CrossValidation(CvSelection),
}

impl Selection {
    pub fn chosen_lambda(&self) -> f64 {
        match self {
            Selection::Msic(s) => s.chosen_lambda,
            Selection::CrossValidation(s) => s.chosen_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingModel {
    pub config: FitConfig,
    /// Training column names, in covariate order.
    #[serde(default)]
    pub predictor_names: Vec<String>,
    /// Transform applied to raw predictor columns before `predict`.
    #[serde(default)]
    pub input_transform: Transform,
    pub marginals: Vec<MarginalModel>,
    pub weights: WeightVector,
    pub selection: Option<Selection>,
    /// Present for the quantile methods.
    pub report: Option<SolverReport>,
}

impl AveragingModel {
    pub fn p(&self) -> usize {
        self.marginals.len()
    }

    pub fn tau(&self) -> f64 {
        self.config.tau
    }
}

/// Fits marginal models and weights on `train`.
pub fn fit(train: &Dataset, config: &FitConfig) -> Result<AveragingModel> {
    config.validate()?;
    let (n, p) = (train.n(), train.p());
    if n < 50 {
        return Err(Error::InvalidInput(format!("need at least 50 training rows, got {n}")));
    }
    if p == 0 {
        return Err(Error::InvalidInput("no predictors".into()));
    }
    if let Some(row) = train.first_non_finite_row() {
        return Err(Error::NonFinite { row });
    }
    let tau = config.tau;
    let taus = match &config.marginal_taus {
        Some(t) if t.len() == p => t.clone(),
        Some(t) => return Err(Error::Config(format!("{} marginal quantile levels for {p} covariates", t.len()))),
        None => vec![tau; p],
    };
    let plans = (0..p)
        .map(|j| {
            let plan = match &config.bandwidth_overrides {
                Some(h) if h.len() == p => BandwidthPlan::with_pilot(h[j], taus[j], config.quantile_scaling),
                Some(h) => Err(Error::Config(format!("{} bandwidth overrides for {p} covariates", h.len()))),
                None => config
                    .pilot_rule
                    .bandwidth(train.column(j), train.response())
                    .and_then(|h| BandwidthPlan::with_pilot(h, taus[j], config.quantile_scaling)),
            };
            plan.map_err(|e| Error::Covariate { index: j + 1, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let fits = build_marginal_models(train, &taus, &plans, !config.method.is_quantile(), config.eval_mode)?;
    let design = &fits.design;
    let y = train.response();
    let a = config.scad_a;

    let (weights, selection, report) = match config.method {
        Method::Smaqp => {
            let pen = ScadPenalty::new(0.0, a)?;
            let (w, rep) = solve_penalized_quantile(design, y, tau, &pen, &WeightVector::zeros(p), &config.solver)?;
            (w, None, Some(rep))
        }
        Method::Psmaqp => {
            let lmax = quantile_lambda_max(design, y, tau)?;
            let grid = if lmax > 0.0 {
                lambda_grid(lmax, config.grid_size, config.grid_min_ratio)
            } else {
                vec![0.0]
            };
            let settings = MsicSettings { c_n: config.cn_rule.value(p), scad_a: a, objective: config.msic_objective };
            let sel = select_lambda_msic(design, y, tau, &grid, &settings, &config.solver)?;
            let (w, rep) = (sel.chosen_weights.clone(), sel.chosen_report.clone());
            (w, Some(Selection::Msic(sel)), Some(rep))
        }
        Method::Smamp => {
            let w = solve_penalized_least_squares(design, y, &ScadPenalty::new(0.0, a)?)?;
            (w, None, None)
        }
        Method::Psmamp => {
            let sel = select_lambda_cv(design, y, config.grid_size, config.grid_min_ratio, a, config.cv_folds, config.seed)?;
            (sel.chosen_weights.clone(), Some(Selection::CrossValidation(sel)), None)
        }
    };
    Ok(AveragingModel {
        config: config.clone(),
        predictor_names: train.names().to_vec(),
        input_transform: Transform::None,
        marginals: fits.models,
        weights,
        selection,
        report,
    })
}

/// `ŵ0 + Σ ŵ_j·m̂_j(x_j)` for each row. Marginals with zero weight are not
/// evaluated.
pub fn predict(model: &AveragingModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = model.p();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != p {
                return Err(Error::InvalidInput(format!("row {i} has {} values, model expects {p}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
            let mut acc = model.weights.w0;
            for ((m, &w), &x) in model.marginals.iter().zip(&model.weights.w).zip(row) {
                if w != 0.0 {
                    acc += w * m.evaluate(x).map_err(|e| Error::InvalidInput(format!("row {i}: {e}")))?;
                }
            }
            Ok(acc)
        })
        .collect()
}

pub fn predict_dataset(model: &AveragingModel, data: &Dataset) -> Result<Vec<f64>> {
    predict(model, &data.rows())
}

/// Mean check loss `Σ ρ_τ(y_i − ŷ_i)/|I|`.
pub fn evaluate_mpe(y: &[f64], yhat: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::InvalidInput(format!(
            "prediction error needs equal nonempty lengths, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| check_loss(a - b, tau)).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub predictions: Vec<f64>,
    pub mpe: f64,
    pub n_eval: usize,
}

/// Predicts on `data` and scores with the model's τ.
pub fn evaluate(model: &AveragingModel, data: &Dataset) -> Result<PredictionReport> {
    let predictions = predict_dataset(model, data)?;
    let mpe = evaluate_mpe(data.response(), &predictions, model.tau())?;
    Ok(PredictionReport { n_eval: predictions.len(), predictions, mpe })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Standard deviations of `(w0, w1, …, wp)` over successful resamples.
    pub standard_errors: Vec<f64>,
    pub replicates_used: usize,
    /// Resamples whose fit failed twice and were dropped.
    pub skipped: usize,
}

/// Nonparametric bootstrap of the weights: `b` row resamples with
/// replacement, each refit from scratch (marginals included).
pub fn bootstrap_weight_se(train: &Dataset, config: &FitConfig, b: usize, seed: u64) -> Result<BootstrapSummary> {
    if b < 100 {
        return Err(Error::Config(format!("bootstrap needs at least 100 resamples, got {b}")));
    }
    config.validate()?;
    let n = train.n();
    let draws: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            for attempt in 0..2u64 {
                let mut rng = rng_for(seed, Stream::Bootstrap, (k as u64) * 2 + attempt);
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                if let Ok(m) = fit(&train.subset(&idx), config) {
                    let mut v = vec![m.weights.w0];
                    v.extend(m.weights.w);
                    return Some(v);
                }
            }
            None
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.iter().flatten().cloned().collect();
    if ok.len() < 2 {
        return Err(Error::InvalidInput(format!("only {} bootstrap refits succeeded", ok.len())));
    }
    let dim = ok[0].len();
    let m = ok.len() as f64;
    let standard_errors = (0..dim)
        .map(|j| {
            let mean = ok.iter().map(|v| v[j]).sum::<f64>() / m;
            (ok.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapSummary {
        standard_errors,
        replicates_used: ok.len(),
        skipped: b - ok.len(),
    })
}

pub const MODEL_FORMAT: &str = "smaqp-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: AveragingModel,
}

pub fn save_model(model: &AveragingModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_model(path: &Path) -> Result<AveragingModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::InvalidInput(format!("{} is not a {MODEL_FORMAT} file", path.display())));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::InvalidInput(format!("unsupported model version {}", file.version)));
    }
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn additive(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = (0..n)
            .map(|i| (2.0 * cols[0][i]).sin() + cols[1][i] * cols[1][i] + 0.3 * rng.gen_range(-1.0..1.0))
            .collect();
        Dataset::new(cols, y).unwrap()
    }

    #[test]
    fn evaluate_mpe_examples() {
        assert_eq!(evaluate_mpe(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap(), 0.0);
        assert_eq!(evaluate_mpe(&[1.0, -1.0], &[0.0, 0.0], 0.5).unwrap(), 0.5);
        assert_eq!(evaluate_mpe(&[1.0], &[0.0], 0.75).unwrap(), 0.75);
        assert!(evaluate_mpe(&[], &[], 0.5).is_err());
        let y = [0.3, -2.0, 1.5];
        let yh = [0.0, 0.5, 1.0];
        let mae = y.iter().zip(&yh).map(|(a, b): (&f64, &f64)| (a - b).abs()).sum::<f64>() / 3.0;
        assert!((evaluate_mpe(&y, &yh, 0.5).unwrap() - mae / 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_perfect_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..120).map(|_| rng.gen_range(0.0..1.0)).collect();
        // A straight line is reproduced exactly by the local linear fit.
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let data = Dataset::new(vec![x], y).unwrap();
        let m = fit(&data, &FitConfig::new(Method::Smaqp, 0.5)).unwrap();
        assert!(m.weights.w0.abs() < 1e-6);
        assert!((m.weights.w[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prediction_at_training_rows_matches_design() {
        let data = additive(120, 4, 5);
        let m = fit(&data, &FitConfig::new(Method::Smaqp, 0.5)).unwrap();
        let preds = predict_dataset(&m, &data).unwrap();
        for i in [0, 10, 77] {
            let row: Vec<f64> = m.marginals.iter().zip(data.row(i)).map(|(mm, x)| mm.evaluate(x).unwrap()).collect();
            assert!((preds[i] - m.weights.combine(&row)).abs() < 1e-12);
            assert!(preds[i].is_finite());
        }
    }

    #[test]
    fn intercept_only_model_predicts_constant() {
        let data = additive(80, 3, 6);
        let mut m = fit(&data, &FitConfig::new(Method::Smaqp, 0.5)).unwrap();
        m.weights = WeightVector { w0: 1.25, w: vec![0.0; 3] };
        let preds = predict(&m, &[vec![f64::MAX.sqrt(), 0.0, 0.0], vec![0.1, 0.2, 0.3]]).unwrap();
        assert_eq!(preds, vec![1.25, 1.25]);
    }

    #[test]
    fn prediction_is_affine_in_weights() {
        let data = additive(100, 3, 7);
        let mut m = fit(&data, &FitConfig::new(Method::Smaqp, 0.5)).unwrap();
        m.weights = WeightVector { w0: 0.0, w: vec![1.0, 2.0, -1.0] };
        let rows = vec![vec![0.2, -0.3, 0.5], vec![0.9, 0.1, -0.7]];
        let base = predict(&m, &rows).unwrap();
        m.weights.w = vec![2.0, 4.0, -2.0];
        let doubled = predict(&m, &rows).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_rows_are_reported() {
        let data = additive(80, 2, 8);
        let m = fit(&data, &FitConfig::new(Method::Smaqp, 0.5)).unwrap();
        let err = predict(&m, &[vec![0.1, 0.1], vec![f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1 }));
    }

    #[test]
    fn penalized_fit_is_deterministic_and_sparse() {
        let data = additive(200, 6, 9);
        let cfg = FitConfig::new(Method::Psmaqp, 0.5);
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights.support(), vec![1, 2]);
        let c = fit(&data, &FitConfig::new(Method::Psmamp, 0.5)).unwrap();
        assert!(c.weights.support().contains(&1));
    }

    #[test]
    fn unpenalized_in_sample_loss_is_smaller() {
        let data = additive(150, 5, 10);
        let s = fit(&data, &FitConfig::new(Method::Smaqp, 0.5)).unwrap();
        let ps = fit(&data, &FitConfig::new(Method::Psmaqp, 0.5)).unwrap();
        let es = evaluate(&s, &data).unwrap().mpe;
        let eps = evaluate(&ps, &data).unwrap().mpe;
        assert!(es <= eps + 1e-8);
    }

    #[test]
    fn constant_response_has_zero_bootstrap_se() {
        let mut data = additive(60, 2, 11);
        data = Dataset::new(data.columns().to_vec(), vec![3.0; 60]).unwrap();
        let s = bootstrap_weight_se(&data, &FitConfig::new(Method::Smaqp, 0.5), 100, 1).unwrap();
        assert!(s.standard_errors.iter().all(|v| v.abs() < 1e-8), "{:?}", s.standard_errors);
        assert_eq!(s.skipped, 0);
        assert!(bootstrap_weight_se(&data, &FitConfig::new(Method::Smaqp, 0.5), 99, 1).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let data = additive(90, 3, 12);
        let m = fit(&data, &FitConfig::new(Method::Psmaqp, 0.25)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        let rows = vec![vec![0.3, -0.2, 0.1], vec![1.4, 0.0, -1.2]];
        assert_eq!(predict(&m, &rows).unwrap(), predict(&back, &rows).unwrap());
        std::fs::write(&path, "{\"format\":\"other\",\"version\":1,\"model\":null}").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::new(Method::Psmaqp, 1.0).validate().is_err());
        let bad_a = FitConfig { scad_a: 2.0, ..FitConfig::default() };
        assert!(bad_a.validate().is_err());
        assert_eq!("psmaqp".parse::<Method>().unwrap(), Method::Psmaqp);
        assert!("lasso".parse::<Method>().is_err());
    }
}
