//! Command-line front end: settings resolution, the five subcommands and
//! their CSV reports.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::backtest::{self, ModelPredictor, PriceSeries, ReturnPredictor, WindowPlan};
use crate::data::{self, ColumnManifest, LoadOptions};
use crate::error::{Error, Result};
use crate::evaluation::{self, ModelKind, NoiseFamily, SimulationSettings};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{self, Family};
use crate::model_io::{self, ModelFile};
use crate::optimizer::FitOptions;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "mvproc", version, about = "Multi-output Gaussian and Student-t process regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Shared {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// se or seard
    #[arg(long)]
    kernel: Option<String>,
    /// mvgp, mvtp, gp, tp; comma-separated where a command compares models
    #[arg(long)]
    model: Option<String>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// Flat key = value settings file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other setting as key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Repeated two-output synthetic benchmark; writes ARMSE tables
    Simulate {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        repetitions: Option<usize>,
        /// mgp, mtp or both (comma-separated)
        #[arg(long)]
        noise: Option<String>,
    },
    /// Fit one model on a CSV and write the model file
    Fit {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: Option<PathBuf>,
        /// air, bike or a manifest file
        #[arg(long)]
        manifest: Option<String>,
        #[arg(long)]
        inputs: Option<String>,
        #[arg(long)]
        outputs: Option<String>,
        #[arg(long)]
        drop_incomplete: bool,
    },
    /// Predict with a saved model at the inputs of a CSV
    Predict {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        model_file: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        drop_incomplete: bool,
    },
    /// Blocked k-fold comparison of the four regressors
    Crossval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        drop_incomplete: bool,
    },
    /// Rolling-window trading backtest on OHLC CSVs
    Backtest {
        #[command(flatten)]
        shared: Shared,
        /// name=path,... for the traded stocks
        #[arg(long)]
        stocks: Option<String>,
        /// name=path,... for the index series used as inputs
        #[arg(long)]
        indices: Option<String>,
        #[arg(long)]
        fee: Option<f64>,
    },
}

const COMMON_KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("restarts", "10"),
    ("max_iters", "200"),
    ("grad_tol", "1e-6"),
    ("workers", "0"),
    ("out", "out"),
];

fn command_keys(cmd: &str) -> &'static [(&'static str, &'static str)] {
    match cmd {
        "simulate" => &[
            ("kernel", "se"),
            ("model", "mvgp,gp,mvtp,tp"),
            ("repetitions", "100"),
            ("noise", "mgp,mtp"),
            // the benchmark's noise kernel, ℓ and s_f² as plain values
            ("noise_lengthscale", "0.0009995003330835331"),
            ("noise_signal_variance", "1.6094379124341003"),
        ],
        "fit" => &[
            ("kernel", "seard"),
            ("model", "mvtp"),
            ("data", ""),
            ("manifest", ""),
            ("inputs", ""),
            ("outputs", ""),
            ("drop_incomplete", "false"),
            ("model_file", ""),
        ],
        "predict" => &[
            ("model_file", ""),
            ("data", ""),
            ("drop_incomplete", "false"),
            ("predictions", ""),
        ],
        "crossval" => &[
            ("kernel", "seard"),
            ("model", "mvgp,gp,mvtp,tp"),
            ("data", ""),
            ("manifest", ""),
            ("folds", ""),
            ("drop_incomplete", "false"),
        ],
        "backtest" => &[
            ("kernel", "seard"),
            ("model", "mvgp,mvtp,gp,tp"),
            ("stocks", ""),
            ("indices", ""),
            ("fee", "0.00025"),
            ("initial", "100"),
            ("train_len", "303"),
            ("horizon", "10"),
            ("windows", "20"),
        ],
        _ => &[],
    }
}

/// Fully resolved settings of one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: String,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Defaults, then the config file, then explicit settings.
    pub fn resolve(command: &str, file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = COMMON_KEYS
            .iter()
            .chain(command_keys(command))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut set = |k: &str, v: &str, origin: &str| -> Result<()> {
            match values.get_mut(k) {
                Some(slot) => {
                    *slot = v.to_string();
                    Ok(())
                }
                None => Err(Error::Config(format!("unknown setting '{k}' for '{command}' ({origin})"))),
            }
        };
        if let Some(text) = file {
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("config line {}: expected 'key = value'", lineno + 1))
                })?;
                set(k.trim(), v.trim(), &format!("config line {}", lineno + 1))?;
            }
        }
        for (k, v) in overrides {
            set(k, v, "command line")?;
        }
        Ok(Self {
            command: command.to_string(),
            values,
        })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map_or("", String::as_str)
    }

    pub fn required(&self, key: &str) -> Result<&str> {
        match self.get(key) {
            "" => Err(Error::Config(format!("'{}' needs the '{key}' setting", self.command))),
            v => Ok(v),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.required(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("setting '{key}' has invalid value '{raw}'")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => Err(Error::Config(format!("setting '{key}' must be true or false, got '{other}'"))),
        }
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// Short digest of every setting that can influence results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        for (k, v) in &self.values {
            if matches!(k.as_str(), "workers" | "out") {
                continue;
            }
            h.update(format!("\n{k}={v}").as_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn header(&self) -> Result<String> {
        Ok(format!(
            "# mvproc {VERSION} seed={} config={}\n",
            self.parse::<u64>("seed")?,
            self.hash()
        ))
    }

    pub fn fit_options(&self) -> Result<FitOptions> {
        let o = FitOptions {
            restarts: self.parse("restarts")?,
            max_iters: self.parse("max_iters")?,
            grad_tol: self.parse("grad_tol")?,
            seed: self.parse("seed")?,
            ..FitOptions::default()
        };
        o.validate()?;
        Ok(o)
    }

    pub fn kernel_family(&self) -> Result<KernelFamily> {
        self.required("kernel")?.parse()
    }

    pub fn models(&self) -> Result<Vec<ModelKind>> {
        let m = self.list("model").iter().map(|s| s.parse()).collect::<Result<Vec<ModelKind>>>()?;
        if m.is_empty() {
            return Err(Error::Config("no model selected".into()));
        }
        Ok(m)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = PathBuf::from(self.required("out")?);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        e if e.is_numerical() => 4,
        _ => 3,
    }
}

fn shared_overrides(s: &Shared, out: &mut Vec<(String, String)>) -> Result<()> {
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    push("seed", s.seed.map(|v| v.to_string()));
    push("restarts", s.restarts.map(|v| v.to_string()));
    push("kernel", s.kernel.clone());
    push("model", s.model.clone());
    push("workers", s.workers.map(|v| v.to_string()));
    push("out", s.out.as_ref().map(|p| p.display().to_string()));
    for kv in &s.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(())
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut ov: Vec<(String, String)> = Vec::new();
    let push = |ov: &mut Vec<(String, String)>, k: &str, v: Option<String>| {
        if let Some(v) = v {
            ov.push((k.to_string(), v));
        }
    };
    let (name, shared) = match &cli.command {
        Command::Simulate {
            shared,
            repetitions,
            noise,
        } => {
            push(&mut ov, "repetitions", repetitions.map(|v| v.to_string()));
            push(&mut ov, "noise", noise.clone());
            ("simulate", shared)
        }
        Command::Fit {
            shared,
            data,
            manifest,
            inputs,
            outputs,
            drop_incomplete,
        } => {
            push(&mut ov, "data", path_str(data));
            push(&mut ov, "manifest", manifest.clone());
            push(&mut ov, "inputs", inputs.clone());
            push(&mut ov, "outputs", outputs.clone());
            push(&mut ov, "drop_incomplete", drop_incomplete.then(|| "true".into()));
            ("fit", shared)
        }
        Command::Predict {
            shared,
            model_file,
            data,
            drop_incomplete,
        } => {
            push(&mut ov, "model_file", path_str(model_file));
            push(&mut ov, "data", path_str(data));
            push(&mut ov, "drop_incomplete", drop_incomplete.then(|| "true".into()));
            ("predict", shared)
        }
        Command::Crossval {
            shared,
            data,
            manifest,
            folds,
            drop_incomplete,
        } => {
            push(&mut ov, "data", path_str(data));
            push(&mut ov, "manifest", manifest.clone());
            push(&mut ov, "folds", folds.map(|v| v.to_string()));
            push(&mut ov, "drop_incomplete", drop_incomplete.then(|| "true".into()));
            ("crossval", shared)
        }
        Command::Backtest {
            shared,
            stocks,
            indices,
            fee,
        } => {
            push(&mut ov, "stocks", stocks.clone());
            push(&mut ov, "indices", indices.clone());
            push(&mut ov, "fee", fee.map(|v| v.to_string()));
            ("backtest", shared)
        }
    };
    // command-specific flags go after the shared ones; both beat the file
    let mut all = Vec::new();
    shared_overrides(shared, &mut all)?;
    all.extend(ov);
    let file = match &shared.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    ExperimentConfig::resolve(name, file.as_deref(), &all)
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match resolve(&cli).and_then(|cfg| execute(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs an already resolved configuration.
pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let workers: usize = cfg.parse("workers")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| match cfg.command.as_str() {
        "simulate" => cmd_simulate(cfg),
        "fit" => cmd_fit(cfg),
        "predict" => cmd_predict(cfg),
        "crossval" => cmd_crossval(cfg),
        "backtest" => cmd_backtest(cfg),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    })
}

fn write_report(path: &Path, cfg: &ExperimentConfig, body: &str) -> Result<()> {
    fs::write(path, format!("{}{body}", cfg.header()?))?;
    Ok(())
}

fn csv_line(cells: impl IntoIterator<Item = String>) -> String {
    let cells: Vec<String> = cells
        .into_iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c
            }
        })
        .collect();
    format!("{}\n", cells.join(","))
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<()> {
    let reps: usize = cfg.parse("repetitions")?;
    let noises = cfg.list("noise").iter().map(|s| s.parse()).collect::<Result<Vec<NoiseFamily>>>()?;
    let models = cfg.models()?;
    let spec = KernelSpec::unit(cfg.kernel_family()?, 1);
    let opts = cfg.fit_options()?;
    let (ell, sf2): (f64, f64) = (cfg.parse("noise_lengthscale")?, cfg.parse("noise_signal_variance")?);
    if !(ell > 0.0 && sf2 > 0.0) {
        return Err(Error::Config("noise kernel settings must be positive".into()));
    }
    let settings = SimulationSettings {
        noise_log_lengthscale: ell.ln(),
        noise_log_signal_variance: sf2.ln(),
        ..SimulationSettings::default()
    };
    let out = cfg.out_dir()?;
    let outputs = ["y1", "y2"];
    let mut table = csv_line(
        std::iter::once("noise".to_string())
            .chain(outputs.iter().flat_map(|o| models.iter().map(move |m| format!("{o}:{}", m.label())))),
    );
    let mut raw = csv_line(["noise", "repetition", "model", "output", "rmse"].map(String::from));
    for noise in noises {
        let report = evaluation::simulation_study(noise, reps, &models, &spec, &opts, &settings)?;
        let a = report.armse()?;
        let cells = (0..outputs.len()).flat_map(|j| (0..models.len()).map(move |m| (m, j)));
        table.push_str(&csv_line(
            std::iter::once(noise.to_string()).chain(cells.map(|(m, j)| format!("{}", a[m][j]))),
        ));
        for (r, per_model) in report.rmse.iter().enumerate() {
            for (m, per_out) in per_model.iter().enumerate() {
                for (j, v) in per_out.iter().enumerate() {
                    raw.push_str(&csv_line([
                        noise.to_string(),
                        (r + 1).to_string(),
                        models[m].label().to_string(),
                        outputs[j].to_string(),
                        format!("{v}"),
                    ]));
                }
            }
        }
    }
    write_report(&out.join("simulate_armse.csv"), cfg, &table)?;
    write_report(&out.join("simulate_rmse.csv"), cfg, &raw)
}

fn load_manifest(cfg: &ExperimentConfig) -> Result<ColumnManifest> {
    match cfg.get("manifest") {
        "" => {
            let inputs = cfg.list("inputs");
            let outputs = cfg.list("outputs");
            if inputs.is_empty() || outputs.is_empty() {
                return Err(Error::Config("give a manifest or both inputs and outputs".into()));
            }
            Ok(ColumnManifest {
                inputs,
                outputs,
                ..ColumnManifest::default()
            })
        }
        name => ColumnManifest::load(name).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read manifest '{name}': {io}")),
            other => other,
        }),
    }
}

fn single_family(kind: ModelKind) -> Result<Family> {
    if !kind.is_joint() {
        return Err(Error::Config(format!(
            "fit writes one joint model; use mvgp or mvtp (a single-output CSV gives the {} case)",
            kind.label()
        )));
    }
    Ok(kind.family())
}

pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let opts = LoadOptions {
        drop_incomplete: cfg.flag("drop_incomplete")?,
    };
    let ds = data::read_dataset(Path::new(cfg.required("data")?), &manifest, &opts)?;
    let kinds = cfg.models()?;
    let [kind] = kinds[..] else {
        return Err(Error::Config("fit takes exactly one model".into()));
    };
    let family = single_family(kind)?;
    let spec = KernelSpec::unit(cfg.kernel_family()?, ds.x.ncols());
    let m = model::fit(family, &ds.x, &ds.y, &spec, &cfg.fit_options()?)?;
    if !m.converged() {
        eprintln!("warning: no restart met the convergence tolerance; kept the lowest objective");
    }
    let path = match cfg.get("model_file") {
        "" => cfg.out_dir()?.join("model.mvp"),
        p => PathBuf::from(p),
    };
    model_io::save(
        &ModelFile {
            model: m,
            input_names: ds.input_names,
            output_names: ds.output_names,
        },
        &path,
    )
}

pub fn cmd_predict(cfg: &ExperimentConfig) -> Result<()> {
    let file = model_io::load(Path::new(cfg.required("model_file")?)).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("cannot read model file: {io}")),
        other => other,
    })?;
    // outputs need not be present in the test file
    let manifest = ColumnManifest {
        inputs: file.input_names.clone(),
        outputs: vec![file.input_names[0].clone()],
        ..ColumnManifest::default()
    };
    let opts = LoadOptions {
        drop_incomplete: cfg.flag("drop_incomplete")?,
    };
    let ds = data::read_dataset(Path::new(cfg.required("data")?), &manifest, &opts)?;
    let pred = file.model.predict(&ds.x)?;
    let sd = pred.pointwise_std();
    let mut header: Vec<String> = Vec::new();
    for o in &file.output_names {
        header.extend([format!("{o}_mean"), format!("{o}_std"), format!("{o}_lo196"), format!("{o}_hi196")]);
    }
    if pred.df.is_some() {
        header.push("df".into());
    }
    let mut body = csv_line(header);
    for i in 0..pred.mean.nrows() {
        let mut row = Vec::new();
        for j in 0..pred.mean.ncols() {
            let (m, s) = (pred.mean[(i, j)], sd[(i, j)]);
            row.extend([m, s, m - 1.96 * s, m + 1.96 * s].map(|v| format!("{v}")));
        }
        if let Some(df) = pred.df {
            row.push(format!("{df}"));
        }
        body.push_str(&csv_line(row));
    }
    let path = match cfg.get("predictions") {
        "" => cfg.out_dir()?.join("predictions.csv"),
        p => PathBuf::from(p),
    };
    write_report(&path, cfg, &body)
}

/// Renders a crossval table: rows = outputs then MMO, one column per model.
pub fn crossval_table(report: &evaluation::CrossValReport, mae: bool) -> Result<String> {
    let (labels, rows) = report.table(mae)?;
    let mut s = csv_line(
        std::iter::once("output".to_string()).chain(report.models.iter().map(|m| m.label().to_string())),
    );
    for (label, row) in labels.iter().zip(&rows) {
        s.push_str(&csv_line(std::iter::once(label.clone()).chain(row.iter().map(|v| format!("{v}")))));
    }
    Ok(s)
}

pub fn cmd_crossval(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let opts = LoadOptions {
        drop_incomplete: cfg.flag("drop_incomplete")?,
    };
    let ds = data::read_dataset(Path::new(cfg.required("data")?), &manifest, &opts)?;
    let folds = match cfg.get("folds") {
        "" => manifest
            .folds
            .ok_or_else(|| Error::Config("no fold count in settings or manifest".into()))?,
        _ => cfg.parse("folds")?,
    };
    let models = cfg.models()?;
    let spec = KernelSpec::unit(cfg.kernel_family()?, ds.x.ncols());
    let report = evaluation::cross_validate(&ds, folds, &models, &spec, &cfg.fit_options()?)?;
    let out = cfg.out_dir()?;
    write_report(&out.join("crossval_mse.csv"), cfg, &crossval_table(&report, false)?)?;
    write_report(&out.join("crossval_mae.csv"), cfg, &crossval_table(&report, true)?)?;
    let mut raw = csv_line(["model", "fold", "output", "mse", "mae"].map(String::from));
    for (m, per_fold) in report.folds.iter().enumerate() {
        for (f, met) in per_fold.iter().enumerate() {
            for (j, name) in report.output_names.iter().enumerate() {
                raw.push_str(&csv_line([
                    models[m].label().to_string(),
                    (f + 1).to_string(),
                    name.clone(),
                    format!("{}", met.mse[j]),
                    format!("{}", met.mae[j]),
                ]));
            }
        }
    }
    write_report(&out.join("crossval_folds.csv"), cfg, &raw)
}

fn read_series_list(spec: &str, what: &str) -> Result<Vec<PriceSeries>> {
    let items: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("no {what} given")));
    }
    items
        .iter()
        .map(|item| {
            let (name, path) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{what} entry '{item}' must be name=path")))?;
            PriceSeries::from_csv(Path::new(path.trim()), name.trim())
        })
        .collect()
}

fn safe_file_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn cmd_backtest(cfg: &ExperimentConfig) -> Result<()> {
    let stocks = read_series_list(cfg.required("stocks")?, "stocks")?;
    let indices = read_series_list(cfg.required("indices")?, "indices")?;
    let plan = WindowPlan {
        train_len: cfg.parse("train_len")?,
        horizon: cfg.parse("horizon")?,
        n_windows: cfg.parse("windows")?,
    };
    let spec = KernelSpec::unit(cfg.kernel_family()?, indices.len());
    let opts = cfg.fit_options()?;
    let predictors: Vec<ModelPredictor> = cfg
        .models()?
        .into_iter()
        .map(|kind| ModelPredictor {
            kind,
            spec: spec.clone(),
            opts: opts.clone(),
        })
        .collect();
    let refs: Vec<&dyn ReturnPredictor> = predictors.iter().map(|p| p as &dyn ReturnPredictor).collect();
    let result = backtest::sliding_window_backtest(
        &stocks,
        &indices,
        plan,
        &refs,
        cfg.parse("fee")?,
        cfg.parse("initial")?,
    )?;
    write_backtest(cfg, &result)
}

fn write_backtest(cfg: &ExperimentConfig, r: &backtest::BacktestResult) -> Result<()> {
    let out = cfg.out_dir()?;
    let ns = r.stock_names.len();
    let bh_of = |stock: usize| -> Vec<&(String, Vec<f64>)> {
        std::iter::once(&r.buy_and_hold[stock]).chain(&r.buy_and_hold[ns..]).collect()
    };
    for (j, name) in r.stock_names.iter().enumerate() {
        let bh = bh_of(j);
        let mut header = vec!["day".to_string(), "date".to_string()];
        for run in &r.runs {
            header.push(format!("{} action", run.label));
            header.push(format!("{} dollar", run.label));
        }
        header.extend(bh.iter().map(|(n, _)| n.clone()));
        let mut body = csv_line(header);
        for (d, date) in r.dates.iter().enumerate() {
            let mut row = vec![(d + 1).to_string(), date.clone()];
            for run in &r.runs {
                let rec = run.ledgers[j].records[d];
                row.push(rec.action.to_string());
                row.push(format!("{}", rec.value));
            }
            row.extend(bh.iter().map(|(_, v)| format!("{}", v[d])));
            body.push_str(&csv_line(row));
        }
        let stem = safe_file_name(name);
        write_report(&out.join(format!("ledger_{stem}.csv")), cfg, &body)?;

        let (cols, rows) = r.period_table(j);
        let mut body = csv_line(std::iter::once("period".to_string()).chain(cols));
        for (p, row) in rows.iter().enumerate() {
            let label = if p == 0 { "Beginning".to_string() } else { format!("Period {p}") };
            body.push_str(&csv_line(std::iter::once(label).chain(row.iter().map(|v| format!("{v}")))));
        }
        write_report(&out.join(format!("periods_{stem}.csv")), cfg, &body)?;
    }
    // equal-weight portfolio over all stocks
    let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
    for run in &r.runs {
        let traj: Vec<Vec<f64>> = run.ledgers.iter().map(|l| l.values()).collect();
        cols.push((run.label.clone(), backtest::equal_weight(&traj)?));
    }
    let stocks_bh: Vec<Vec<f64>> = r.buy_and_hold[..ns].iter().map(|(_, v)| v.clone()).collect();
    cols.push(("Buy&Hold".into(), backtest::equal_weight(&stocks_bh)?));
    let mut body = csv_line(std::iter::once("period".to_string()).chain(cols.iter().map(|(n, _)| n.clone())));
    body.push_str(&csv_line(
        std::iter::once("Beginning".to_string()).chain(cols.iter().map(|_| format!("{}", r.initial))),
    ));
    for p in 1..=r.plan.n_windows {
        let day = p * r.plan.horizon - 1;
        body.push_str(&csv_line(
            std::iter::once(format!("Period {p}")).chain(cols.iter().map(|(_, v)| format!("{}", v[day]))),
        ));
    }
    write_report(&out.join("portfolio_periods.csv"), cfg, &body)
}
