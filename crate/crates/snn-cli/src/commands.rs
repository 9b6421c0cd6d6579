//! Bodies of the five subcommands, shared between the binary and the
//! integration tests.

use crate::config::{self, AppConfig, Source};
use crate::plot;
use snn_core::events::dataset::{load_dataset, save_dataset, write_frequency_csv};
use snn_core::events::synth;
use snn_core::nn::checkpoint::{self, Checkpoint};
use snn_core::train::{
    self, attention_sweep, placement_sweep, Dataset, FusionMode, SweepRow, TrainError,
};
use snn_core::train::report::PerturbReport;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

/// Failures carrying the process exit code: config 2, data 3, runtime 4.
#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(errs) => {
                for (i, e) in errs.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "config error: {e}")?;
                }
                Ok(())
            }
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Runtime(e) => write!(f, "runtime error: {e}"),
        }
    }
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(msg) => CliError::Config(vec![msg]),
        TrainError::Synth(e) => CliError::Config(vec![e.to_string()]),
        TrainError::EmptyDataset | TrainError::Event(_) => CliError::Data(e.to_string()),
        TrainError::Protocol(msg) => CliError::Runtime(msg),
    }
}

fn io_data<T>(path: &Path) -> impl FnOnce(T) -> CliError + '_
where
    T: fmt::Display,
{
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Arguments shared by the config-driven subcommands.
pub struct Invocation {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sets: Vec<String>,
}

/// Reads, overrides, and validates the experiment config.
pub fn load(inv: &Invocation) -> Result<AppConfig, CliError> {
    let text = fs::read_to_string(&inv.config)
        .map_err(|e| CliError::Config(vec![format!("{}: {e}", inv.config.display())]))?;
    let mut cfg = config::parse(&text).map_err(CliError::Config)?;
    let mut errors = Vec::new();
    for set in &inv.sets {
        if let Err(e) = config::apply_set(&mut cfg, set) {
            errors.push(e);
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    if let Some(seed) = inv.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &inv.out {
        cfg.out_dir = out.display().to_string();
    }
    let errors = config::validate(&cfg);
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    Ok(cfg)
}

fn build_dataset(cfg: &AppConfig) -> Result<Dataset, CliError> {
    match cfg.source {
        Source::Synth => {
            Dataset::synthetic(&cfg.synth, cfg.train.seed, cfg.train_per_combo, cfg.test_per_combo)
                .map_err(train_err)
        }
        Source::Dir => {
            let root = Path::new(&cfg.root);
            let (train, test) = load_dataset(root).map_err(|e| CliError::Data(e.to_string()))?;
            Dataset::from_parts(train, test, cfg.synth.n_classes(), cfg.synth.class_names())
                .map_err(train_err)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_data(dir))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_data(&path))
}

/// Generates the synthetic dataset and writes it (events as EVT1, frames as
/// portable pixmaps, plus the manifest, per-split frequency statistics, and
/// the config echo) into the output directory.
pub fn cmd_synth(cfg: &AppConfig) -> Result<(), CliError> {
    let seed = cfg.train.seed;
    let train = synth::generate_split(&cfg.synth, seed, cfg.train_per_combo, synth::SPLIT_TRAIN)
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let test = synth::generate_split(&cfg.synth, seed, cfg.test_per_combo, synth::SPLIT_TEST)
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let out = Path::new(&cfg.out_dir);
    ensure_dir(out)?;
    save_dataset(out, &train, &test).map_err(|e| CliError::Data(e.to_string()))?;
    let names = cfg.synth.class_names();
    write_frequency_csv(&out.join("frequency_train.csv"), &train, &names)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_frequency_csv(&out.join("frequency_test.csv"), &test, &names)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_text(out, "config.ini", &config::echo(cfg))?;
    println!(
        "wrote {} train and {} test samples to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

/// Trains one model per the config and writes the report bundle: config
/// echo, per-epoch CSV, confusion CSV, summary text, and the checkpoint.
pub fn cmd_train(cfg: &AppConfig) -> Result<(), CliError> {
    let data = build_dataset(cfg)?;
    let outcome = train::train(&data, &cfg.train, &cfg.arch).map_err(train_err)?;
    let out = Path::new(&cfg.out_dir);
    ensure_dir(out)?;
    write_text(out, "config.ini", &config::echo(cfg))?;
    write_text(out, "epochs.csv", &outcome.report.epochs_csv())?;
    write_text(out, "confusion.csv", &outcome.report.confusion_csv())?;
    write_text(out, "summary.txt", &outcome.report.summary())?;
    let mut model = outcome.model;
    let ck = checkpoint::capture(&mut model, &config::echo(cfg));
    let ck_path = out.join("model.snck");
    ck.save(&ck_path).map_err(|e| CliError::Data(e.to_string()))?;
    print!("{}", outcome.report.summary());
    println!("bundle written to {}", out.display());
    Ok(())
}

/// Evaluates a trained checkpoint under the two timing perturbations:
/// timestamp confusion at inference, and time elimination via retraining.
/// Writes the three-condition table with formatted percentage drops.
pub fn cmd_perturb(cfg: &AppConfig) -> Result<(), CliError> {
    if cfg.checkpoint.is_empty() {
        return Err(CliError::Config(vec![
            "perturbation.checkpoint: required (the confusion study perturbs a trained model)"
                .into(),
        ]));
    }
    let data = build_dataset(cfg)?;
    let ck_path = Path::new(&cfg.checkpoint);
    let ck = Checkpoint::load(ck_path).map_err(|e| CliError::Data(e.to_string()))?;
    let mut model = train::build_model(
        &cfg.train,
        &cfg.arch,
        data.n_classes,
        data.height as usize,
        data.width as usize,
    )
    .map_err(train_err)?;
    checkpoint::restore(&mut model, &ck).map_err(|e| {
        CliError::Data(format!("{}: {e}", ck_path.display()))
    })?;

    let (baseline, _) =
        train::evaluate(&mut model, &data.test, &cfg.train, data.n_classes).map_err(train_err)?;
    let (confusion, _) = train::evaluate_confused(&mut model, &data.test, &cfg.train, data.n_classes)
        .map_err(train_err)?;
    let elim = train::run_elimination(&data, &cfg.train, &cfg.arch).map_err(train_err)?;
    let report =
        PerturbReport { baseline, confusion, elimination: elim.report.final_test_acc() };

    let out = Path::new(&cfg.out_dir);
    ensure_dir(out)?;
    write_text(out, "config.ini", &config::echo(cfg))?;
    write_text(out, "perturb.csv", &report.render())?;
    write_text(out, "elimination_epochs.csv", &elim.report.epochs_csv())?;
    print!("{}", report.render());
    println!("bundle written to {}", out.display());
    Ok(())
}

fn sweep_csv(rows: &[(&str, &SweepRow)]) -> String {
    let mut out = String::from("sweep,variant,per_seed,mean\n");
    for (sweep, row) in rows {
        let per_seed =
            row.per_seed.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(";");
        out.push_str(&format!("{sweep},{},{per_seed},{:.2}\n", row.name, row.mean));
    }
    out
}

/// Runs the attention-assignment sweep (the four score-generation
/// strategies) and the placement sweep (every conv depth) of the
/// cross-modality module, one row per variant.
pub fn cmd_ablate(cfg: &AppConfig) -> Result<(), CliError> {
    let data = build_dataset(cfg)?;
    let seeds = [cfg.train.seed];
    let mut train_cfg = cfg.train.clone();
    train_cfg.fusion = FusionMode::Cma;
    let att = attention_sweep(&data, &train_cfg, &cfg.arch, &seeds).map_err(train_err)?;
    let place = placement_sweep(&data, &train_cfg, &cfg.arch, &seeds).map_err(train_err)?;
    let mut rows: Vec<(&str, &SweepRow)> = Vec::new();
    rows.extend(att.iter().map(|r| ("attention", r)));
    rows.extend(place.iter().map(|r| ("placement", r)));
    let csv = sweep_csv(&rows);
    let out = Path::new(&cfg.out_dir);
    ensure_dir(out)?;
    write_text(out, "config.ini", &config::echo(cfg))?;
    write_text(out, "ablation.csv", &csv)?;
    print!("{csv}");
    println!("bundle written to {}", out.display());
    Ok(())
}

fn read_csv_rows(path: &Path, expect_header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(io_data(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty CSV", path.display())))?;
    if header != expect_header {
        return Err(CliError::Data(format!(
            "{}: expected header {expect_header:?}, found {header:?}",
            path.display()
        )));
    }
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn field_f64(path: &Path, row: &[String], idx: usize) -> Result<f64, CliError> {
    let cell = row.get(idx).ok_or_else(|| {
        CliError::Data(format!("{}: row {:?} is missing column {idx}", path.display(), row))
    })?;
    // Accuracy cells may carry a trailing drop annotation; the number leads.
    let lead = cell.split_whitespace().next().unwrap_or("");
    lead.parse::<f64>().map_err(|_| {
        CliError::Data(format!("{}: unreadable number {cell:?}", path.display()))
    })
}

/// Renders the bundle's CSVs into deterministic SVG plots: the accuracy
/// curve from `epochs.csv`, the variant comparison from `ablation.csv`, and
/// the perturbation conditions from `perturb.csv`.
pub fn cmd_report(bundle: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let out = out.unwrap_or(bundle);
    ensure_dir(out)?;
    let mut made = 0usize;

    let epochs_path = bundle.join("epochs.csv");
    if epochs_path.exists() {
        let rows = read_csv_rows(&epochs_path, "epoch,train_loss,train_acc,test_acc")?;
        let mut parsed = Vec::with_capacity(rows.len());
        for row in &rows {
            let epoch = field_f64(&epochs_path, row, 0)? as usize;
            parsed.push((epoch, field_f64(&epochs_path, row, 2)?, field_f64(&epochs_path, row, 3)?));
        }
        write_text(out, "acc_curve.svg", &plot::acc_curve_svg(&parsed))?;
        println!("acc_curve.svg from {} epochs", parsed.len());
        made += 1;
    }

    let ablation_path = bundle.join("ablation.csv");
    if ablation_path.exists() {
        let rows = read_csv_rows(&ablation_path, "sweep,variant,per_seed,mean")?;
        let mut parsed = Vec::with_capacity(rows.len());
        for row in &rows {
            let label = format!("{} {}", row.first().map_or("", |s| s), row.get(1).map_or("", |s| s));
            parsed.push((label, field_f64(&ablation_path, row, 3)?));
        }
        write_text(out, "comparison.svg", &plot::bar_chart_svg("variant accuracy", &parsed))?;
        println!("comparison.svg from {} variants", parsed.len());
        made += 1;
    }

    let perturb_path = bundle.join("perturb.csv");
    if perturb_path.exists() {
        let rows = read_csv_rows(&perturb_path, "condition,accuracy")?;
        let mut parsed = Vec::with_capacity(rows.len());
        for row in &rows {
            parsed.push((row.first().cloned().unwrap_or_default(), field_f64(&perturb_path, row, 1)?));
        }
        write_text(out, "perturbation.svg", &plot::bar_chart_svg("perturbation accuracy", &parsed))?;
        println!("perturbation.svg from {} conditions", parsed.len());
        made += 1;
    }

    if made == 0 {
        return Err(CliError::Data(format!(
            "{}: no epochs.csv, ablation.csv, or perturb.csv to plot",
            bundle.display()
        )));
    }
    Ok(())
}
