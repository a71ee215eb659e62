use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use xnb::classifier::{fit_detailed, Method, XnbConfig, XnbModel, DEFAULT_FLOOR};
use xnb::dataset::{ClassColumn, Dataset};
use xnb::diagnostics::{self, CiScanConfig};
use xnb::evaluation::{emit_report, evaluate_cv, ReportFormat, DEFAULT_FOLDS};
use xnb::hellinger::hellinger_table;
use xnb::kde::{BandwidthRule, KdeBank, KernelKind, DEFAULT_MU};
use xnb::selection::{select_class_specific, DEFAULT_THETA};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "xnb", version, about = "Class-specific kernel density naive Bayes")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// gaussian | uniform | epanechnikov | biweight | triweight
    #[arg(long, global = true, default_value = "gaussian")]
    kernel: KernelKind,

    /// scott | silverman | silverman-adaptive
    #[arg(long, global = true, default_value = "silverman")]
    bandwidth: BandwidthRule,

    /// Grid points per variable for the Hellinger distances.
    #[arg(long, global = true, default_value_t = DEFAULT_MU)]
    mu: usize,

    /// Discriminatory power a class subset must exceed.
    #[arg(long, global = true, default_value_t = DEFAULT_THETA)]
    theta: f64,

    /// Density floor applied before taking logarithms.
    #[arg(long, global = true, default_value_t = DEFAULT_FLOOR)]
    floor: f64,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Class column, NAME or @INDEX (negative indices count from the end).
    #[arg(long = "class-col", global = true, default_value = "@-1")]
    class_col: ClassColumn,

    /// Columns to skip when reading data (repeatable).
    #[arg(long = "ignore-col", global = true)]
    ignore_col: Vec<String>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Model file to write (fit) or read (predict).
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Write output here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model on a labeled CSV and save it.
    Fit {
        data: PathBuf,
        #[arg(long, default_value = "xnb", value_parser = ["xnb", "fnb"])]
        method: String,
    },
    /// Label the rows of a CSV with a saved model.
    Predict { data: PathBuf },
    /// Stratified cross-validation of GNB / FNB / XNB.
    Evaluate {
        data: PathBuf,
        /// Comma-separated subset of gnb,fnb,xnb.
        #[arg(long, default_value = "gnb,xnb", value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
    },
    /// Emit the class-specific variable subsets as JSON.
    Select { data: PathBuf },
    /// Normality and conditional-dependence scans.
    Diagnose {
        data: PathBuf,
        #[arg(long, default_value_t = diagnostics::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long = "p-max", default_value_t = diagnostics::DEFAULT_P_MAX)]
        p_max: f64,
        #[arg(long = "r-min", default_value_t = diagnostics::DEFAULT_R_MIN)]
        r_min: f64,
        /// Pair budget before sampling; 0 means examine every pair.
        #[arg(long = "max-pairs", default_value_t = diagnostics::DEFAULT_MAX_PAIRS)]
        max_pairs: usize,
    },
    /// Inspect intermediate results.
    Inspect {
        #[command(subcommand)]
        what: Inspect,
    },
}

#[derive(Subcommand, Debug)]
enum Inspect {
    /// Hellinger distance of every variable and class pair, as TSV.
    Hellinger { data: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(xnb::Error),
}

impl From<xnb::Error> for Failure {
    fn from(e: xnb::Error) -> Self {
        Failure::Data(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |source| {
        Failure::Data(xnb::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl Global {
    fn config(&self) -> XnbConfig {
        XnbConfig {
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            mu: self.mu,
            theta: self.theta,
            floor: self.floor,
            ..Default::default()
        }
    }

    fn load(&self, path: &Path) -> Result<Dataset, Failure> {
        let d = Dataset::load_csv_with(path, &self.class_col, &self.ignore_col)?;
        info!(
            "loaded {}: {} samples, {} variables, {} classes",
            path.display(),
            d.n_samples(),
            d.n_vars(),
            d.n_classes()
        );
        Ok(d)
    }

    fn out(&self) -> Result<Box<dyn Write>, Failure> {
        Ok(match &self.output {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn model_path(&self) -> Result<&Path, Failure> {
        self.model
            .as_deref()
            .ok_or_else(|| Failure::Usage("--model is required for this command".into()))
    }
}

fn write_text(g: &Global, text: &str) -> Result<(), Failure> {
    let mut out = g.out()?;
    let target = g.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    out.write_all(text.as_bytes()).map_err(io_err(&target))?;
    out.flush().map_err(io_err(&target))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let cfg = g.config();
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    match &cli.command {
        Command::Fit { data, method } => {
            let model_path = g.model_path()?;
            let d = g.load(data)?;
            let method: Method = method.parse()?;
            let fit = fit_detailed(&d, &cfg, method)?;
            fit.model.save(model_path)?;
            let mut summary = String::new();
            for (class, vars) in fit.model.classes().iter().zip(fit.model.features()) {
                summary.push_str(&format!("{class}\t{}\t{}\n", vars.len(), vars.join(",")));
            }
            write_text(g, &summary)
        }
        Command::Predict { data } => {
            let model = XnbModel::load(g.model_path()?)?;
            let d = Dataset::load_csv_unlabeled(data, model.variables())?;
            let preds = model.predict_dataset(&d)?;
            let text = match g.format.unwrap_or(Format::Tsv) {
                Format::Tsv => {
                    let mut s = String::from("row\tlabel");
                    for c in model.classes() {
                        s.push_str(&format!("\tlog_score_{c}"));
                    }
                    s.push('\n');
                    for (i, p) in preds.iter().enumerate() {
                        s.push_str(&format!("{i}\t{}", p.label));
                        for v in &p.log_scores {
                            s.push_str(&format!("\t{v:?}"));
                        }
                        s.push('\n');
                    }
                    s
                }
                Format::Json => {
                    let rows: Vec<_> = preds
                        .iter()
                        .map(|p| {
                            let scores: serde_json::Map<_, _> = model
                                .classes()
                                .iter()
                                .cloned()
                                .zip(p.log_scores.iter().map(|&v| serde_json::json!(v)))
                                .collect();
                            serde_json::json!({ "label": p.label, "log_scores": scores })
                        })
                        .collect();
                    serde_json::to_string_pretty(&rows).map_err(xnb::Error::from)? + "\n"
                }
            };
            write_text(g, &text)
        }
        Command::Evaluate { data, methods, folds } => {
            let d = g.load(data)?;
            let report = evaluate_cv(&d, methods, *folds, g.seed, &cfg)?;
            let format = match g.format.unwrap_or(Format::Tsv) {
                Format::Json => ReportFormat::Json,
                Format::Tsv => ReportFormat::Tsv,
            };
            let mut out = g.out()?;
            emit_report(&report, format, &mut out)?;
            out.flush().map_err(io_err(Path::new("<stdout>")))
        }
        Command::Select { data } => {
            let d = g.load(data)?;
            let bank = KdeBank::fit(&d, cfg.kernel, cfg.bandwidth)?;
            let table = hellinger_table(&d, &bank, cfg.mu)?;
            let map = select_class_specific(&table, &cfg.selection())?;
            write_text(g, &(serde_json::to_string_pretty(&map.to_json()).map_err(xnb::Error::from)? + "\n"))
        }
        Command::Diagnose {
            data,
            alpha,
            p_max,
            r_min,
            max_pairs,
        } => {
            let d = g.load(data)?;
            let ci = CiScanConfig {
                p_max: *p_max,
                r_min: *r_min,
                max_pairs: (*max_pairs > 0).then_some(*max_pairs),
                seed: g.seed,
            };
            let report = diagnostics::diagnose(&d, *alpha, &ci)?;
            eprintln!("{}", report.summary());
            write_text(g, &(serde_json::to_string_pretty(&report).map_err(xnb::Error::from)? + "\n"))
        }
        Command::Inspect {
            what: Inspect::Hellinger { data },
        } => {
            let d = g.load(data)?;
            let bank = KdeBank::fit(&d, cfg.kernel, cfg.bandwidth)?;
            let table = hellinger_table(&d, &bank, cfg.mu)?;
            write_text(g, &table.to_tsv())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Ok(Err(Failure::Data(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
