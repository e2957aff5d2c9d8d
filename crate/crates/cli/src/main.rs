use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use actens::config::{Command, RunConfig};
use actens::data::{load_dataset, parse_shape, DataSource};
use actens::ensemble::{accuracy, fuse_sum};
use actens::eval::{run_experiment, ExperimentReport, ExperimentResults, NamedDataset};
use actens::gradcheck::{self, FamilyReport, KERNEL_TOLERANCE};
use actens::nn::{train, NetworkSpec};
use actens::seed::derive_seed;
use actens::{build_melu_basis, Error, Network, Result, ScoreMatrix};

/// Learnable activation functions and activation ensembles.
#[derive(Debug, Parser)]
#[command(name = "actens", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train one network per model on each full dataset and save checkpoints.
    Train,
    /// Cross-validate every model, fuse ENS/eENS and write the report.
    Evaluate,
    /// Sum-rule fusion of score CSV files.
    Ensemble {
        /// Score matrices written by `evaluate`.
        #[arg(required = true)]
        scores: Vec<PathBuf>,
        /// One class index per line; prints the fused accuracy.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Finite-difference check of every activation kernel.
    Gradcheck {
        /// Accepted sample points per family.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Print the MeLU hat schedule as CSV.
    Basis,
    /// Rebuild the report tables from a results directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON file of run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset: a CSV file or an `images,labels` IDX pair. Repeatable.
    #[arg(long, global = true)]
    data: Vec<String>,
    /// Activation labels, e.g. `relu,melu4,aplu`.
    #[arg(long, global = true, value_delimiter = ',')]
    family: Vec<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    max_input: Vec<f64>,
    /// MeLU parameters per channel.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// APLU hinges per channel.
    #[arg(long, global = true)]
    hinges: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample shape for CSV features, `CxHxW`.
    #[arg(long, global = true)]
    shape: Option<String>,
    /// Rescale features to [0, max_input] of each model.
    #[arg(long, global = true)]
    normalize_to_maxinput: bool,
    /// Use the published SReLU/APLU breakpoint gradients.
    #[arg(long, global = true)]
    published_gradients: bool,
    /// Disable flip/rescale augmentation during training.
    #[arg(long, global = true)]
    no_augment: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Flags {
    fn resolve(&self, command: Command) -> Result<(RunConfig, bool)> {
        let (mut cfg, file_families) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let raw: serde_json::Value = serde_json::from_str(&text)?;
                (RunConfig::from_json(&text)?, raw.get("families").is_some())
            }
            None => (RunConfig::default(), false),
        };
        cfg.command = Some(command);
        if !self.data.is_empty() {
            cfg.datasets = self.data.clone();
        }
        if !self.family.is_empty() {
            cfg.families = self.family.clone();
        }
        if !self.max_input.is_empty() {
            cfg.max_inputs = self.max_input.clone();
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(k => k, hinges => hinges, batch_size => batch_size, lr => learning_rate,
             epochs => epochs, folds => folds, seed => seed);
        if self.shape.is_some() {
            cfg.shape = self.shape.clone();
        }
        cfg.normalize_to_maxinput |= self.normalize_to_maxinput;
        cfg.published_gradients |= self.published_gradients;
        if self.no_augment {
            cfg.augment = false;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.to_string_lossy().into_owned());
        }
        cfg.validate()?;
        Ok((cfg, file_families || !self.family.is_empty()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let command = match cli.command {
        Cmd::Train => Command::Train,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::Ensemble { .. } => Command::Ensemble,
        Cmd::Gradcheck { .. } => Command::Gradcheck,
        Cmd::Basis => Command::Basis,
        Cmd::Report { .. } => Command::Report,
    };
    let (cfg, families_given) = cli.flags.resolve(command)?;
    match cli.command {
        Cmd::Train => train_command(&cfg),
        Cmd::Evaluate => evaluate_command(&cfg),
        Cmd::Ensemble { scores, labels } => ensemble_command(&cfg, &scores, labels.as_deref()),
        Cmd::Gradcheck { points } => gradcheck_command(&cfg, points, families_given),
        Cmd::Basis => basis_command(&cfg),
        Cmd::Report { dir } => report_command(&cfg, &dir),
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(cfg.out.as_deref().unwrap_or("out"))
}

fn load_datasets(cfg: &RunConfig) -> Result<Vec<NamedDataset>> {
    if cfg.datasets.is_empty() {
        return Err(Error::Config("no datasets given (use --data)".into()));
    }
    let shape = cfg.shape.as_deref().map(parse_shape).transpose()?;
    cfg.datasets
        .iter()
        .map(|spec| {
            let source = DataSource::parse(spec)?;
            let data = load_dataset(&source, shape, None)?;
            Ok(NamedDataset { name: source.name(), data })
        })
        .collect()
}

fn train_command(cfg: &RunConfig) -> Result<ExitCode> {
    let datasets = load_datasets(cfg)?;
    let models = cfg.model_ids()?;
    let out = out_dir(cfg);
    for ds in &datasets {
        std::fs::create_dir_all(out.join(&ds.name))?;
        for id in &models {
            let name = id.to_string();
            let data = if cfg.normalize_to_maxinput {
                ds.data.normalized_to(id.max_input())
            } else {
                ds.data.clone()
            };
            let seed = derive_seed(cfg.seed, &[&ds.name, &name, "train"]);
            let spec = NetworkSpec::default_for(data.sample_shape(), data.classes());
            let mut net = Network::new(spec, id.family.clone(), seed)?;
            let tc = actens::TrainConfig { seed: actens::seed::mix64(seed), ..cfg.train_config() };
            let report = train(&mut net, &data, &tc)?;
            let path = out.join(&ds.name).join(format!("{name}.json"));
            net.save(&path)?;
            let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!("{}\t{name}\tfinal loss {last:.6}\t{}", ds.name, path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate_command(cfg: &RunConfig) -> Result<ExitCode> {
    let datasets = load_datasets(cfg)?;
    let models = cfg.model_ids()?;
    let results = run_experiment(&datasets, &models, &cfg.experiment_config())?;
    let out = out_dir(cfg);
    results.write_dir(&out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    let report = ExperimentReport::from_results(&results)?;
    report.write_dir(&out)?;
    print!("{}", report.to_markdown());
    Ok(ExitCode::SUCCESS)
}

fn ensemble_command(cfg: &RunConfig, paths: &[PathBuf], labels: Option<&Path>) -> Result<ExitCode> {
    let matrices = paths
        .iter()
        .map(|p| ScoreMatrix::from_csv(&std::fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ScoreMatrix> = matrices.iter().collect();
    let fused = fuse_sum(&refs)?;
    match &cfg.out {
        Some(out) => std::fs::write(out, fused.to_csv())?,
        None => print!("{}", fused.to_csv()),
    }
    if let Some(path) = labels {
        let labels = std::fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.parse::<usize>().map_err(|_| Error::Parse {
                    location: actens::Location::Line(i + 1),
                    message: format!("`{l}` is not a class index"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let acc = accuracy(&fused, &labels)?;
        if cfg.out.is_some() {
            println!("accuracy {acc}");
        } else {
            eprintln!("accuracy {acc}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck_command(cfg: &RunConfig, points: Option<usize>, families_given: bool) -> Result<ExitCode> {
    let families = if families_given {
        let mut all = Vec::new();
        for id in cfg.model_ids()? {
            all.push(id.family);
        }
        all
    } else {
        gradcheck::default_families()
            .into_iter()
            .map(|f| f.with_gradient_mode(cfg.gradient_mode()))
            .collect()
    };
    let points = points.unwrap_or(cfg.gradcheck_points);
    let reports = gradcheck::run_suite(&families, points, cfg.seed, KERNEL_TOLERANCE)?;
    let mut ok = true;
    for r in &reports {
        print_family(r);
        ok &= r.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn print_family(r: &FamilyReport) {
    let id = actens::ModelId::new(r.family.clone());
    println!(
        "{:<16} params/channel {:>2}  checked {:>5}  rejected {:>4}  max rel err {:.3e}  {}",
        id.to_string(),
        r.family.param_count(),
        r.checked,
        r.rejected,
        r.max_rel_error,
        if r.passed() { "ok" } else { "FAIL" }
    );
    for s in &r.skipped {
        println!("    skipped (intentional): {s}");
    }
    for f in &r.failures {
        let what = f.param_index.map_or("d/dx".to_string(), |i| format!("param {i}"));
        println!(
            "    x = {:e}  {what}: analytic {:e}  numeric {:e}  rel err {:.3e}  params {:?}",
            f.x, f.analytic, f.numeric, f.rel_error, f.params
        );
    }
}

fn basis_command(cfg: &RunConfig) -> Result<ExitCode> {
    if cfg.k < 2 {
        return Err(Error::Config(format!("MeLU k = {} has no hat functions", cfg.k)));
    }
    println!("max_input,j,a,lambda");
    for &m in &cfg.max_inputs {
        let basis = build_melu_basis(m, cfg.k - 1)?;
        for (j, h) in basis.hats().iter().enumerate() {
            println!("{m},{},{},{}", j + 1, h.center, h.half_width);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report_command(cfg: &RunConfig, dir: &Path) -> Result<ExitCode> {
    let results = ExperimentResults::read_dir(dir)?;
    let report = ExperimentReport::from_results(&results)?;
    let out = cfg.out.as_ref().map_or_else(|| dir.to_path_buf(), PathBuf::from);
    report.write_dir(&out)?;
    print!("{}", report.to_markdown());
    Ok(ExitCode::SUCCESS)
}
