//! Command-line surface. [`run`] takes argv and writers and returns the
//! process exit status: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audio_io::{load_clip, load_manifest, Manifest};
use crate::cv::{assign_folds, run_with_assignment, CvRunConfig};
use crate::dsp::{export_spectrogram_pgm, mel_db_to_csv};
use crate::features::{
    clip_mel_db, extract_features, extract_manifest, FeatureConfig, FeatureTable,
};
use crate::forest::{
    predict_label, train_forest, FeatureSchema, ForestModel, ForestParams, TrainingSet,
};

#[derive(Debug, Parser)]
#[command(
    name = "prosody-screen",
    version,
    about = "Acoustic screening pipeline for child speech clips"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract feature vectors for every clip of a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature CSV destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Render the mel spectrogram of a WAV file as PGM, or as a CSV matrix
    /// when the output path ends in `.csv`.
    Spectrogram {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign subjects to cross-validation folds.
    Folds {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Subject-grouped cross-validation of the forest.
    Cv {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Directory for report.json, folds.csv, per-fold ROC CSVs and
        /// models (report goes to stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        forest: ForestOverrides,
    },
    /// Train a forest on a labelled feature table.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        forest: ForestOverrides,
    },
    /// Score a WAV clip or the rows of a feature table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(
            long,
            conflicts_with = "features",
            required_unless_present = "features"
        )]
        wav: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default)]
pub struct ForestOverrides {
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub min_weight_fraction_leaf: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl ForestOverrides {
    fn resolve(&self, seed: u64) -> Result<ForestParams, Failure> {
        let d = ForestParams::with_seed(seed);
        let p = ForestParams {
            n_estimators: self.n_estimators.unwrap_or(d.n_estimators),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            max_features: self.max_features.unwrap_or(d.max_features),
            min_samples_split: self.min_samples_split.unwrap_or(d.min_samples_split),
            min_samples_leaf: self.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            min_weight_fraction_leaf: self
                .min_weight_fraction_leaf
                .unwrap_or(d.min_weight_fraction_leaf),
            seed,
        };
        // dimension-independent checks only; max_features is checked against data
        p.validate(usize::MAX)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

fn data<E: std::fmt::Display>(context: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", context.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(data(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(data(path))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("stdout: {e}"))),
    }
}

fn load_manifest_file(path: &Path) -> Result<Manifest, Failure> {
    load_manifest(&read_text(path)?).map_err(data(path))
}

fn load_table(path: &Path) -> Result<FeatureTable, Failure> {
    FeatureTable::from_csv(&read_text(path)?).map_err(data(path))
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("--jobs {jobs}: {e}")))?;
    Ok(pool.install(f))
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Extract {
            manifest,
            out,
            jobs,
        } => {
            let m = load_manifest_file(&manifest)?;
            let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
            let config = FeatureConfig::default();
            let vectors = with_pool(jobs, || extract_manifest(&m, &base, &config))?
                .map_err(data(&manifest))?;
            let table = FeatureTable { config, vectors };
            let text = table.to_csv().map_err(data(&manifest))?;
            emit(out.as_deref(), &text, stdout)
        }
        Command::Spectrogram { wav, out } => {
            let config = FeatureConfig::default();
            let clip = load_clip(&wav, clip_id_of(&wav), "", None, config.sample_rate)
                .map_err(data(&wav))?;
            let mel = clip_mel_db(&clip, &config).map_err(data(&wav))?;
            let bytes = if out.extension().is_some_and(|e| e == "csv") {
                mel_db_to_csv(&mel).into_bytes()
            } else {
                export_spectrogram_pgm(&mel)
            };
            write_file(&out, &bytes)
        }
        Command::Folds {
            manifest,
            seed,
            k,
            out,
        } => {
            if k < 2 {
                return Err(Failure::Usage(format!("--k must be at least 2, got {k}")));
            }
            let m = load_manifest_file(&manifest)?;
            let a = assign_folds(&m, k, seed).map_err(data(&manifest))?;
            emit(out.as_deref(), &a.to_csv(), stdout)
        }
        Command::Cv {
            manifest,
            features,
            seed,
            k,
            out,
            jobs,
            forest,
        } => {
            if k < 2 {
                return Err(Failure::Usage(format!("--k must be at least 2, got {k}")));
            }
            let params = forest.resolve(seed)?;
            let m = load_manifest_file(&manifest)?;
            let table = load_table(&features)?;
            let config = CvRunConfig {
                forest: params,
                features: table.config,
                k,
                seed,
            };
            let assignment = assign_folds(&m, k, seed).map_err(data(&manifest))?;
            let outcome = with_pool(jobs, || {
                run_with_assignment(&m, &table, &assignment, &config)
            })?
            .map_err(data(&features))?;
            match out {
                None => emit(None, &outcome.report.to_json(), stdout),
                Some(dir) => {
                    fs::create_dir_all(&dir).map_err(data(&dir))?;
                    write_file(
                        &dir.join("report.json"),
                        outcome.report.to_json().as_bytes(),
                    )?;
                    write_file(
                        &dir.join("folds.csv"),
                        outcome.assignment.to_csv().as_bytes(),
                    )?;
                    for (f, (fold, model)) in
                        outcome.report.folds.iter().zip(&outcome.models).enumerate()
                    {
                        if let Some(roc) = &fold.roc {
                            write_file(
                                &dir.join(format!("roc_fold{f}.csv")),
                                roc.to_csv().as_bytes(),
                            )?;
                        }
                        write_file(
                            &dir.join(format!("model_fold{f}.json")),
                            model.to_json().as_bytes(),
                        )?;
                    }
                    Ok(())
                }
            }
        }
        Command::Train {
            features,
            seed,
            out,
            jobs,
            forest,
        } => {
            let params = forest.resolve(seed)?;
            let table = load_table(&features)?;
            let data_set = TrainingSet::from_vectors(&table.vectors).map_err(data(&features))?;
            let schema = FeatureSchema::from_config(&table.config);
            let model = with_pool(jobs, || train_forest(&data_set, schema, &params))?
                .map_err(data(&features))?;
            emit(out.as_deref(), &model.to_json(), stdout)
        }
        Command::Predict {
            model,
            wav,
            features,
        } => {
            let forest = ForestModel::from_json(&read_text(&model)?).map_err(data(&model))?;
            let mut lines = String::new();
            let mut push = |clip_id: &str, p: f64| {
                lines.push_str(&format!("{clip_id},{p},{}\n", predict_label(p)));
            };
            if let Some(wav) = wav {
                let config = forest.schema.extraction;
                let clip = load_clip(&wav, clip_id_of(&wav), "", None, config.sample_rate)
                    .map_err(data(&wav))?;
                let v = extract_features(&clip, &config).map_err(data(&wav))?;
                let p = crate::forest::predict_proba(&forest, &v).map_err(data(&wav))?;
                push(&v.clip_id, p);
            } else if let Some(path) = features {
                let table = load_table(&path)?;
                if table.names() != forest.schema.names {
                    return Err(Failure::Data(format!(
                        "{}: feature columns do not match the model schema",
                        path.display()
                    )));
                }
                for v in &table.vectors {
                    let p = crate::forest::predict_proba(&forest, v).map_err(data(&path))?;
                    push(&v.clip_id, p);
                }
            }
            emit(None, &lines, stdout)
        }
    }
}

fn clip_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
        Err(Failure::Data(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            2
        }
    }
}
