//! `smaqp`: fit, apply and study model-averaging quantile predictors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smaqp_core::bodyfat::{prediction_table, run_split_study, weight_table, SplitStudyConfig};
use smaqp_core::io::{check_input, load_csv, load_prediction_rows, ColumnSchema, Transform};
use smaqp_core::pipeline::{evaluate, evaluate_mpe, load_model, save_model};
use smaqp_core::report::{emit_report, simulation_table, sort_methods, Cell, Table};
use smaqp_core::simulation::{run_monte_carlo, ErrorLaw, Example, SimulationSpec};
use smaqp_core::{fit, predict, Error, ErrorKind, Method, Result};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "smaqp", version, about = "Semiparametric model-averaging quantile prediction")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo study on a synthetic example.
    Simulate(SimulateArgs),
    /// Fit a model on a CSV file and save it.
    Fit(FitArgs),
    /// Apply a saved model to a CSV file.
    Predict(PredictArgs),
    /// Random-split study and weight table on the body-fat data.
    Bodyfat(BodyfatArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// 1, 2 or 3.
    #[arg(long)]
    example: Option<Example>,
    #[arg(long)]
    ntr: Option<usize>,
    #[arg(long)]
    nte: Option<usize>,
    /// sn, t3 or mn (ignored by example 3).
    #[arg(long)]
    error: Option<ErrorLaw>,
    /// One or more quantile levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma separated subset of SMAMP, PSMAMP, SMAQP, PSMAQP.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// TOML column schema; without it `--response` is required.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Response column when no schema is given.
    #[arg(long)]
    response: Option<String>,
    /// Log-transform predictors when no schema is given.
    #[arg(long)]
    log: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the model file.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Response column; when present the check-loss error is reported.
    #[arg(long)]
    response: Option<String>,
    /// Predictions CSV (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BodyfatArgs {
    /// Body-fat CSV (see README for the layout).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Training sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    ntr: Vec<usize>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    /// Bootstrap resamples for the weight table (at least 100).
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Skip the bootstrap standard errors.
    #[arg(long, conflicts_with = "bootstrap")]
    no_bootstrap: bool,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a, &cfg),
        Command::Fit(a) => fit_cmd(a, &cfg),
        Command::Predict(a) => predict_cmd(a),
        Command::Bodyfat(a) => bodyfat(a, &cfg),
    }
}

fn pick<T>(flag: Vec<T>, file: Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.unwrap_or(default)
    }
}

fn simulate(a: SimulateArgs, cfg: &RunConfig) -> Result<()> {
    let s = &cfg.simulate;
    let example = a
        .example
        .or(s.example)
        .ok_or_else(|| Error::Config("--example is required".into()))?;
    let n_tr = a.ntr.or(s.n_tr).ok_or_else(|| Error::Config("--ntr is required".into()))?;
    let taus = pick(a.tau, s.taus.clone(), vec![0.5]);
    let mut methods = pick(a.methods, s.methods.clone(), Method::ALL.to_vec());
    sort_methods(&mut methods);
    let out = a.out.or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let mut spec = SimulationSpec::new(
        example,
        n_tr,
        a.error.or(s.error).unwrap_or(ErrorLaw::Sn),
        taus[0],
        a.reps.or(s.replications).unwrap_or(500),
        a.seed.or(cfg.seed).unwrap_or(0),
    );
    spec.n_te = a.nte.or(s.n_te).unwrap_or(100);
    spec.t = s.t.unwrap_or(1.0);
    spec.fit = cfg.fit_config();
    // Validate every cell before the first replication runs.
    for &tau in &taus {
        SimulationSpec { tau, ..spec.clone() }.validate()?;
    }
    spec.fit.validate()?;

    let mut summaries = Vec::new();
    for &tau in &taus {
        let run = SimulationSpec { tau, ..spec.clone() };
        let summary = run_monte_carlo(&run, &methods)?;
        for f in &summary.failures {
            let who = f.method.map_or("data".to_string(), |m| m.to_string());
            eprintln!("replication {} ({who}, tau {tau}) failed: {}", f.replication, f.message);
        }
        summaries.push(summary);
    }
    let table = simulation_table(&summaries);
    let error = if example == Example::Ex3 { String::new() } else { format!("_{}", spec.error.name().to_lowercase()) };
    let stem = format!("simulate_{}_n{}{error}", example.to_string().to_lowercase(), n_tr);
    let (txt, csv) = emit_report(&table, &out, &stem)?;
    print!("{}", table.to_text());
    eprintln!("wrote {} and {}", txt.display(), csv.display());
    Ok(())
}

fn fit_cmd(a: FitArgs, cfg: &RunConfig) -> Result<()> {
    let input = a
        .input
        .or(cfg.data.input.clone())
        .ok_or_else(|| Error::Config("--input is required".into()))?;
    check_input(&input)?;
    let schema = match (&a.schema, &a.response, &cfg.data.schema) {
        (Some(path), _, _) => ColumnSchema::from_toml_file(path)?,
        (None, Some(resp), _) => {
            let mut s = ColumnSchema::new(resp.as_str());
            if a.log {
                s.transform = Transform::Log;
            }
            s
        }
        (None, None, Some(s)) => s.clone(),
        (None, None, None) => return Err(Error::Config("give --schema or --response".into())),
    };
    let mut fc = cfg.fit_config();
    if let Some(t) = a.tau {
        fc.tau = t;
    }
    if let Some(m) = a.method {
        fc.method = m;
    }
    if let Some(s) = a.seed.or(cfg.seed) {
        fc.seed = s;
    }
    fc.validate()?;
    let model_path = a.model.or(cfg.data.model.clone()).unwrap_or_else(|| PathBuf::from("model.json"));

    let data = load_csv(&input, &schema)?;
    eprintln!("loaded {} rows, {} predictors from {}", data.n(), data.p(), input.display());
    let mut model = fit(&data, &fc)?;
    model.input_transform = schema.transform;
    save_model(&model, &model_path)?;

    let mut table = Table::new(
        format!("{} at tau = {}", fc.method, fc.tau),
        &["weight", "covariate", "value"],
    );
    table.push(vec![Cell::Text("w0".into()), Cell::Text("intercept".into()), Cell::Num(model.weights.w0)]);
    for (j, (name, w)) in data.names().iter().zip(&model.weights.w).enumerate() {
        table.push(vec![Cell::Text(format!("w{}", j + 1)), Cell::Text(name.clone()), Cell::Num(*w)]);
    }
    print!("{}", table.to_text());
    if let Some(sel) = &model.selection {
        println!("chosen lambda: {}", sel.chosen_lambda());
    }
    println!("in-sample check loss: {:.6}", evaluate(&model, &data)?.mpe);
    eprintln!("wrote {}", model_path.display());
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    check_input(&a.model)?;
    check_input(&a.input)?;
    let model = load_model(&a.model)?;
    let (rows, y) = load_prediction_rows(&a.input, &model.predictor_names, a.response.as_deref(), model.input_transform)?;
    let preds = predict(&model, &rows)?;
    let mut text = String::from("row,prediction\n");
    for (i, p) in preds.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, p));
    }
    write_or_print(a.output.as_deref(), &text)?;
    if let Some(y) = y {
        eprintln!("check loss at tau {}: {:.6}", model.tau(), evaluate_mpe(&y, &preds, model.tau())?);
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { context: format!("writing {}", p.display()), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn bodyfat(a: BodyfatArgs, cfg: &RunConfig) -> Result<()> {
    let b = &cfg.bodyfat;
    let input = a
        .input
        .or(b.input.clone())
        .or_else(|| std::env::var_os("SMAQP_BODYFAT_CSV").map(PathBuf::from))
        .ok_or_else(|| Error::Config("--input (or SMAQP_BODYFAT_CSV) is required".into()))?;
    check_input(&input)?;
    let defaults = SplitStudyConfig::default();
    let bootstrap = if a.no_bootstrap { 0 } else { a.bootstrap.or(b.bootstrap).unwrap_or(defaults.bootstrap) };
    if !a.no_bootstrap && bootstrap < 100 {
        return Err(Error::Config(format!("--bootstrap must be at least 100, got {bootstrap}")));
    }
    let study = SplitStudyConfig {
        n_tr: pick(a.ntr, b.n_tr.clone(), defaults.n_tr),
        splits: a.splits.or(b.splits).unwrap_or(defaults.splits),
        taus: pick(a.tau, b.taus.clone(), defaults.taus),
        methods: pick(a.methods, b.methods.clone(), defaults.methods),
        bootstrap,
        weights_tau: b.weights_tau.unwrap_or(0.5),
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        fit: cfg.fit_config(),
    };
    let out = a.out.or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let data = load_csv(&input, &ColumnSchema::bodyfat())?;
    study.validate(data.n())?;
    eprintln!("loaded {} rows, {} predictors from {}", data.n(), data.p(), input.display());
    let report = run_split_study(&data, &study)?;
    for f in &report.failures {
        eprintln!("split {} ({} tau {}, n_tr {}) failed: {}", f.split, f.method, f.tau, f.n_tr, f.message);
    }
    let pred = prediction_table(&report);
    let weights = weight_table(&report);
    emit_report(&pred, &out, "bodyfat_prediction")?;
    emit_report(&weights, &out, "bodyfat_weights")?;
    print!("{}\n{}", pred.to_text(), weights.to_text());
    eprintln!("wrote reports to {}", out.display());
    Ok(())
}
