//! `msdeeponet` command-line driver.
//!
//! Outputs are CSV (header row, `.` decimal, newline-terminated) or JSON:
//!
//! * `generate`: `<out>/records.json` plus one `time,acceleration` CSV per record.
//! * `preprocess`: the same layout for the downsampled records, plus
//!   `spectra/<id>.csv` (`frequency_hz,before,after`) and `theorem.csv`
//!   (`id,factor,max_deviation`) for the unfiltered aliasing check.
//! * `dataset`: `<out>/manifest.json` plus `samples/<id>.csv` (`t,P,y1..yl`).
//! * `train`: `<out>/checkpoint.json` and `<out>/metrics.csv`
//!   (`epoch,train_rel_l2,test_rel_l2,train_mse`).
//! * `predict`: `t,y1..yl` on the requested grid.
//! * `experiment`: `summary.json`, `<arm>_curves.csv`, `<arm>_spectrum.csv`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing input, 4 runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use msdeeponet::config::{load_config, RunConfig};
use msdeeponet::dataset::{build_dataset, load_dataset, sample_sensors, save_dataset};
use msdeeponet::deeponet::OperatorModel;
use msdeeponet::dsp::{amplitude_spectrum, antialias_downsample, verify_downsampling_theorem_real};
use msdeeponet::excitation::{generate_ensemble, import_record_csv, read_record_set, write_record_set, SeismicRecord};
use msdeeponet::experiments::{
    amplitude_separation_study, run_pipeline, scale_spacing_study, structure_study, AmplitudeConfig,
    ExperimentReport, PipelineConfig, ScaleSpacingConfig, StructureConfig,
};
use msdeeponet::neural::{from_json, to_json};
use msdeeponet::training::{evaluate, fit_normalization, train};
use msdeeponet::{Error, TimeSeries};

const FORMATS: &str = "Multiscale DeepONet seismic-response workbench.

Outputs:
  generate     <out>/records.json and one time,acceleration CSV per record
  preprocess   downsampled record set, spectra/<id>.csv (frequency_hz,before,after)
               and theorem.csv (id,factor,max_deviation)
  dataset      <out>/manifest.json and samples/<id>.csv (t,P,y1..yl)
  train        <out>/checkpoint.json and metrics.csv (epoch,train_rel_l2,test_rel_l2,train_mse)
  predict      t,y1..yl on the requested grid; prints the inference time
  experiment   summary.json, <arm>_curves.csv and <arm>_spectrum.csv

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 runtime failure.";

#[derive(Parser)]
#[command(name = "msdeeponet", version, about = "Multiscale DeepONet seismic-response workbench", long_about = FORMATS)]
struct Cli {
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the generator and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the full reference network sizes.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Overrides the training epoch count.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a record ensemble.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Anti-alias and downsample a record set.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve building responses and write train/test samples.
    Dataset {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict floor responses for one record CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output grid length; defaults to the record's own grid.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run one of the comparison studies.
    Experiment {
        name: Study,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    ScaleSpacing,
    Structures,
    AmplitudeSeparation,
    Multifloor,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::MissingInput(_) => 3,
                _ => 4,
            })
        }
    }
}

fn settings(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::MissingInput(path.clone()));
            }
            load_config(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.generator.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.runtime.threads = threads;
    }
    if let Some(epochs) = cli.epochs {
        cfg.training.epochs = epochs;
    }
    cfg.runtime.paper_scale |= cli.paper_scale;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = settings(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.runtime.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("runtime.threads: {e}")))?;
    match &cli.command {
        Command::Generate { out } => generate(&cfg, out),
        Command::Preprocess { input, out } => preprocess(&cfg, input, out),
        Command::Dataset { input, out } => dataset(&cfg, input, out),
        Command::Train { data, out } => train_cmd(&cfg, data, out),
        Command::Predict { checkpoint, record, out, points } => predict(checkpoint, record, out, *points),
        Command::Experiment { name, out } => experiment(&cfg, *name, out),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let generator = cfg.generator.generation();
    let records = generate_ensemble(&generator, cfg.generator.count)?;
    write_record_set(&records, out, Some(generator), None)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn preprocess(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), Error> {
    let (set, records) = read_record_set(input)?;
    let factor = cfg.preprocess.factor;
    let spectra = out.join("spectra");
    create_dir(&spectra)?;
    let mut theorem = String::from("id,factor,max_deviation\n");
    let mut processed = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for record in records {
        let n = record.series.len();
        if n % factor != 0 {
            failures.push(format!("{}: length {n} is not divisible by {factor}", record.id));
            continue;
        }
        let values = antialias_downsample(&record.series.values, factor, cfg.preprocess.filter_order)?;
        let coarse = TimeSeries::new(record.series.dt * factor as f64, values)?;
        let deviation = verify_downsampling_theorem_real(&record.series.values, factor)?;
        let _ = writeln!(theorem, "{},{factor},{deviation:e}", record.id);
        let before = amplitude_spectrum(&record.series.values, record.series.dt)?;
        let after = amplitude_spectrum(&coarse.values, coarse.dt)?;
        let mut csv = String::from("frequency_hz,before,after\n");
        for (i, (f, a)) in before.iter().enumerate() {
            // The coarse spectrum has a bin at every `factor`-th fine frequency below its Nyquist limit.
            let b = after.get(i).filter(|(g, _)| (g - f).abs() < 1e-9 * f.max(1.0)).map(|(_, v)| format!("{v:e}"));
            let _ = writeln!(csv, "{f:e},{a:e},{}", b.unwrap_or_default());
        }
        write(&spectra.join(format!("{}.csv", record.id)), &csv)?;
        processed.push(SeismicRecord { series: coarse, ..record });
    }
    if !failures.is_empty() {
        return Err(Error::InvalidArgument(failures.join("; ")));
    }
    write_record_set(&processed, out, set.generator, Some(factor))?;
    write(&out.join("theorem.csv"), &theorem)?;
    println!("downsampled {} records by {factor} into {}", processed.len(), out.display());
    Ok(())
}

fn dataset(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), Error> {
    let (_, records) = read_record_set(input)?;
    let data = build_dataset(&records, &cfg.building.build()?, &cfg.dataset.dataset())?;
    save_dataset(&data, out)?;
    println!("wrote {} train and {} test samples to {}", data.train.len(), data.test.len(), out.display());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Error> {
    let data = load_dataset(data)?;
    let spec = cfg.model.spec(cfg.runtime.paper_scale)?;
    let arch = spec.build(data.sensors, data.floors.len(), cfg.training.seed)?;
    let model = fit_normalization(arch, &data.train)?;
    let (model, history) = train(model, &data.train, &data.test, &cfg.training.train())?;
    create_dir(out)?;
    write(&out.join("checkpoint.json"), &to_json(&model)?)?;
    history.write_csv(&out.join("metrics.csv"))?;
    if !data.test.is_empty() {
        println!("final test relative L2 {:.6}", evaluate(&model, &data.test)?);
    }
    Ok(())
}

fn predict(checkpoint: &Path, record: &Path, out: &Path, points: Option<usize>) -> Result<(), Error> {
    let text = std::fs::read_to_string(checkpoint).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(checkpoint.to_path_buf()),
        _ => Error::Io { path: checkpoint.to_path_buf(), source },
    })?;
    let model: OperatorModel = from_json(&text)?;
    let record = import_record_csv(record)?;
    let sensors = model.sensors();
    if record.series.len() < sensors {
        return Err(Error::InvalidArgument(format!(
            "record has {} samples but the model expects {sensors} sensors",
            record.series.len()
        )));
    }
    let n = points.unwrap_or(record.series.len());
    if n < 2 {
        return Err(Error::InvalidArgument("the output grid needs at least two points".into()));
    }
    let horizon = record.series.duration();
    let times: Vec<f64> = (0..n).map(|j| horizon * j as f64 / (n - 1) as f64).collect();
    let start = Instant::now();
    let u = sample_sensors(&record.series, sensors)?;
    let pred = model.predict_one(&u, &times)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut csv = String::from("t");
    for f in 1..=model.floors() {
        let _ = write!(csv, ",y{f}");
    }
    csv.push('\n');
    for (j, t) in times.iter().enumerate() {
        let _ = write!(csv, "{t:e}");
        for v in pred.row(j) {
            let _ = write!(csv, ",{v:e}");
        }
        csv.push('\n');
    }
    write(out, &csv)?;
    println!("inference time {elapsed:.6} s for {n} points");
    Ok(())
}

fn experiment(cfg: &RunConfig, study: Study, out: &Path) -> Result<(), Error> {
    let paper = cfg.runtime.paper_scale;
    let building = cfg.building.build()?;
    let seed = cfg.training.seed;
    let epochs = cfg.training.epochs;
    let report: ExperimentReport = match study {
        Study::ScaleSpacing => {
            let mut c = if paper { ScaleSpacingConfig::paper() } else { ScaleSpacingConfig::desk() };
            if !paper {
                c.kappa_up = cfg.experiment.kappa_up();
                c.case.generator.duration = cfg.experiment.single_case_duration;
            }
            c.train.seed = seed;
            c.train.epochs = epochs;
            scale_spacing_study(&c, &building)?
        }
        Study::Structures => {
            let mut c = if paper { StructureConfig::paper() } else { StructureConfig::desk() };
            if !paper {
                c.kappa_up = cfg.experiment.kappa_up();
                c.case.generator.duration = cfg.experiment.single_case_duration;
            }
            c.train.seed = seed;
            c.train.epochs = epochs;
            structure_study(&c, &building)?
        }
        Study::AmplitudeSeparation => {
            let mut c = if paper { AmplitudeConfig::paper() } else { AmplitudeConfig::desk() };
            c.train.seed = seed;
            c.train.epochs = epochs;
            amplitude_separation_study(&c)?
        }
        Study::Multifloor => {
            let mut c: PipelineConfig = cfg.pipeline()?;
            if c.dataset.floors.len() < 2 {
                c.dataset.floors = (1..cfg.building.floors).collect();
            }
            run_pipeline(&c, &building, "multifloor")?.report
        }
    };
    report.write(out)?;
    for arm in &report.arms {
        println!(
            "{}: parameters {} final mse {:.3e} train L2 {:.4} test L2 {}",
            arm.name,
            arm.parameters,
            arm.final_mse,
            arm.final_train_rel_l2,
            arm.final_test_rel_l2.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    for note in &report.notes {
        println!("{note}");
    }
    Ok(())
}
