use std::collections::BTreeSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use chronocost::abstraction::{
    assemble_matrix, build_corpus, read_member_costs, write_member_costs, Corpus, FeatureMatrix, FeatureSet,
    FeatureSetSpec,
};
use chronocost::eval::{build_buckets, score, BucketMapping, PenaltyMatrix};
use chronocost::experiment::{build_cell_matrices, evaluate_cells, render_tables, ExperimentInputs, ExperimentReport, ExperimentSpec};
use chronocost::ingest::{filter_enrolled, parse_claims, parse_enrollment, Category, StudyWindow, TaxonomyConfig};
use chronocost::model::{fit, GbdtModel, TrainConfig};
use chronocost::spikes::{corpus_spike_features, SpikeConfig};
use chronocost::synth::{self, generate_corpus, SynthConfig};

const COSTS_FILE: &str = "observation_costs.csv";
const MATRIX_FILE: &str = "features.csv";
const MODEL_FILE: &str = "model.json";
const REPORT_JSON: &str = "report.json";
const REPORT_TXT: &str = "report.txt";

#[derive(Parser)]
#[command(name = "chronocost", version, about = "Healthcare cost prediction from claims time series")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with optional [window], [synth] and [experiment] tables
    /// and a `taxonomy` path.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for generation, folds and subsampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic claims corpus.
    Generate {
        #[arg(long)]
        members: Option<usize>,
    },
    /// Build a feature matrix from claims and enrollment files.
    Featurize {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "FS")]
        feature_set: FeatureSet,
        /// Comma-separated subset of cost, visit, medical.
        #[arg(long, default_value = "cost,visit")]
        categories: String,
        #[arg(long, default_value_t = 1)]
        window_months: u32,
        #[arg(long, default_value_t = 2.0)]
        pelt_rho: f64,
        #[arg(long)]
        standardize_before_pelt: bool,
    },
    /// Fit a boosted model on a feature matrix.
    Train {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score a trained model on a feature matrix.
    Evaluate {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Observation-period costs used for the bucket boundaries.
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        buckets: usize,
    },
    /// Run the feature-set grid with cross-validation and paired tests.
    Experiment {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated feature sets, e.g. `FS,F,C`.
        #[arg(long)]
        feature_sets: Option<String>,
        /// Category combinations separated by `;`, each comma-separated.
        #[arg(long)]
        categories: Option<String>,
        /// Add the leave-one-spike-feature-out cells.
        #[arg(long)]
        ablations: bool,
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        /// Write every cell matrix and the observation costs to `<out-dir>/matrices`.
        #[arg(long)]
        save_matrices: bool,
        /// Evaluate matrices previously written with --save-matrices instead of featurizing.
        #[arg(long, conflicts_with = "save_matrices")]
        from_matrices: Option<PathBuf>,
    },
    /// Render the text tables of a saved experiment report.
    Report {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding claims.csv, enrollment.csv and optionally taxonomy.toml.
    #[arg(long, default_value = ".")]
    input_dir: PathBuf,
    #[arg(long)]
    claims: Option<PathBuf>,
    #[arg(long)]
    enrollment: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    subsample: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, config: &mut TrainConfig) {
        if let Some(v) = self.n_trees {
            config.n_trees = v;
        }
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.max_depth {
            config.max_depth = v;
        }
        if let Some(v) = self.min_samples_leaf {
            config.min_samples_leaf = v;
        }
        if let Some(v) = self.subsample {
            config.subsample = v;
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    window: Option<StudyWindow>,
    taxonomy: Option<PathBuf>,
    synth: Option<SynthConfig>,
    experiment: Option<ExperimentSpec>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: FileConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(s) = &config.synth {
            s.validate().with_context(|| format!("[synth] in {}", path.display()))?;
        }
        if let Some(e) = &config.experiment {
            e.validate().with_context(|| format!("[experiment] in {}", path.display()))?;
        }
        Ok(config)
    }

    fn window(&self) -> StudyWindow {
        self.window.unwrap_or_default()
    }
}

fn parse_categories(raw: &str) -> Result<BTreeSet<Category>> {
    let set: BTreeSet<Category> = raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Category>().map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    if set.is_empty() {
        bail!("no categories given in `{raw}`");
    }
    Ok(set)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path, what: &str) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("{what} file {} is missing or unreadable", path.display()))
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::read_csv(open(path, "matrix")?).with_context(|| format!("reading matrix {}", path.display()))
}

fn load_corpus(input: &InputArgs, file: &FileConfig, window_months: u32) -> Result<Corpus> {
    let claims_path = input.claims.clone().unwrap_or_else(|| input.input_dir.join(synth::CLAIMS_FILE));
    let enrollment_path = input
        .enrollment
        .clone()
        .unwrap_or_else(|| input.input_dir.join(synth::ENROLLMENT_FILE));
    let sibling = input.input_dir.join(synth::TAXONOMY_FILE);
    let taxonomy = match input.taxonomy.as_ref().or(file.taxonomy.as_ref()) {
        Some(path) => TaxonomyConfig::load(path).with_context(|| format!("taxonomy {}", path.display()))?,
        None if sibling.exists() => {
            log::info!("using taxonomy {}", sibling.display());
            TaxonomyConfig::load(&sibling).with_context(|| format!("taxonomy {}", sibling.display()))?
        }
        None => TaxonomyConfig::default(),
    };
    let window = file.window();

    let claims = parse_claims(open(&claims_path, "claims")?)
        .with_context(|| format!("parsing claims {}", claims_path.display()))?;
    let enrollment = parse_enrollment(open(&enrollment_path, "enrollment")?)
        .with_context(|| format!("parsing enrollment {}", enrollment_path.display()))?;
    let filtered = filter_enrolled(claims, &enrollment, &window);
    log::info!(
        "{} eligible members, {} claims, {} members dropped",
        filtered.members.len(),
        filtered.claims.len(),
        filtered.dropped_members
    );
    Ok(build_corpus(&filtered.claims, &filtered.members, &taxonomy, &window, window_months)?)
}

fn cmd_generate(common: &Common, file: &FileConfig, members: Option<usize>) -> Result<()> {
    let mut config = file.synth.clone().unwrap_or_default();
    if let Some(w) = file.window {
        config.window = w;
    }
    if let Some(n) = members {
        config.n_members = n;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let corpus = generate_corpus(&config)?;
    corpus.write_to_dir(&common.out_dir)?;
    println!(
        "wrote {} members and {} claims to {}",
        corpus.labels.len(),
        corpus.claims.len(),
        common.out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_featurize(
    common: &Common,
    file: &FileConfig,
    input: &InputArgs,
    feature_set: FeatureSet,
    categories: &str,
    window_months: u32,
    pelt_rho: f64,
    standardize: bool,
) -> Result<()> {
    let corpus = load_corpus(input, file, window_months)?;
    let spec = FeatureSetSpec::new(feature_set, parse_categories(categories)?);
    let spikes = if feature_set == FeatureSet::FS {
        let mut config = file.experiment.as_ref().map(|e| e.spikes.clone()).unwrap_or_else(SpikeConfig::default);
        config.pelt.penalty_rho = pelt_rho;
        config.standardize = standardize;
        config.pelt.validate()?;
        Some(corpus_spike_features(&corpus, &config)?)
    } else {
        None
    };
    let matrix = assemble_matrix(&corpus, &spec, spikes.as_ref())?;
    let path = common.out_dir.join(MATRIX_FILE);
    matrix.write_csv(create(&path)?)?;
    write_member_costs(&corpus.observation_cost, create(&common.out_dir.join(COSTS_FILE))?)?;
    println!(
        "wrote {} rows x {} features to {}",
        matrix.n_rows(),
        matrix.n_cols(),
        path.display()
    );
    Ok(())
}

fn cmd_train(common: &Common, file: &FileConfig, matrix: Option<&Path>, args: &ModelArgs) -> Result<()> {
    let matrix_path = matrix.map_or_else(|| common.out_dir.join(MATRIX_FILE), Path::to_path_buf);
    let matrix = read_matrix(&matrix_path)?;
    let mut config = file.experiment.as_ref().map(|e| e.model.clone()).unwrap_or_default();
    args.apply(&mut config);
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let model = fit(&matrix, &config)?;
    let path = common.out_dir.join(MODEL_FILE);
    model.save(create(&path)?)?;
    println!("trained {} trees on {} rows; model at {}", model.trees.len(), matrix.n_rows(), path.display());
    Ok(())
}

fn cmd_evaluate(
    common: &Common,
    file: &FileConfig,
    matrix: Option<&Path>,
    model: Option<&Path>,
    costs: Option<&Path>,
    buckets: usize,
) -> Result<()> {
    let matrix = read_matrix(&matrix.map_or_else(|| common.out_dir.join(MATRIX_FILE), Path::to_path_buf))?;
    let model_path = model.map_or_else(|| common.out_dir.join(MODEL_FILE), Path::to_path_buf);
    let model = GbdtModel::load(open(&model_path, "model")?).with_context(|| format!("loading model {}", model_path.display()))?;
    let costs_path = costs.map_or_else(|| common.out_dir.join(COSTS_FILE), Path::to_path_buf);
    let costs = read_member_costs(open(&costs_path, "observation costs")?)?;

    let scheme = build_buckets(&costs, buckets)?;
    let window = file.window();
    let mapping = BucketMapping::for_spans(window.observation_months, window.result_months);
    let predicted = model.predict_matrix(&matrix).context("matrix does not match the model's features")?;
    let actual: Vec<f64> = matrix.targets().iter().map(|&t| t as f64).collect();
    let scores = score(&actual, &predicted, &scheme, &mapping, &PenaltyMatrix::absolute_difference(buckets))?;

    let path = common.out_dir.join("evaluation.json");
    let mut text = serde_json::to_string_pretty(&scores)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "MAPE {:.4}, penalty {:.4}, accuracy {:.4} over {} members; report at {}",
        scores.mape,
        scores.penalty_error,
        scores.accuracy,
        scores.n_members,
        path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    common: &Common,
    file: &FileConfig,
    input: &InputArgs,
    feature_sets: Option<&str>,
    categories: Option<&str>,
    ablations: bool,
    folds: Option<usize>,
    model: &ModelArgs,
    save_matrices: bool,
    from_matrices: Option<&Path>,
) -> Result<()> {
    let mut spec = file.experiment.clone().unwrap_or_default();
    if let Some(raw) = feature_sets {
        spec.feature_sets = raw
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<FeatureSet>().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?;
    }
    if let Some(raw) = categories {
        spec.category_combos = raw.split(';').map(parse_categories).collect::<Result<_>>()?;
    }
    spec.ablations |= ablations;
    if let Some(k) = folds {
        spec.folds.k_folds = k;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    model.apply(&mut spec.model);
    spec.validate()?;
    let window = file.window();

    let (cells, inputs) = match from_matrices {
        Some(dir) => {
            let cells = spec
                .cells()
                .into_iter()
                .map(|cell| {
                    let matrix = read_matrix(&dir.join(format!("{}.csv", cell.key())))?;
                    Ok((cell, matrix))
                })
                .collect::<Result<Vec<_>>>()?;
            let costs = read_member_costs(open(&dir.join(COSTS_FILE), "observation costs")?)?;
            let inputs = ExperimentInputs {
                observation_cost: costs,
                observation_months: window.observation_months,
                result_months: window.result_months,
            };
            (cells, inputs)
        }
        None => {
            let mut input = InputArgs {
                input_dir: input.input_dir.clone(),
                claims: input.claims.clone().or_else(|| spec.claims.clone()),
                enrollment: input.enrollment.clone().or_else(|| spec.enrollment.clone()),
                taxonomy: input.taxonomy.clone(),
            };
            if input.taxonomy.is_none() {
                input.taxonomy = spec.taxonomy.clone();
            }
            let corpus = load_corpus(&input, file, spec.window_months)?;
            let cells = build_cell_matrices(&corpus, &spec)?;
            if save_matrices {
                let dir = common.out_dir.join("matrices");
                for (cell, matrix) in &cells {
                    matrix.write_csv(create(&dir.join(format!("{}.csv", cell.key())))?)?;
                }
                write_member_costs(&corpus.observation_cost, create(&dir.join(COSTS_FILE))?)?;
            }
            (cells, ExperimentInputs::from_corpus(&corpus))
        }
    };

    let report = evaluate_cells(&cells, &inputs, &spec)?;
    let json_path = common.out_dir.join(REPORT_JSON);
    fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
    fs::write(&json_path, report.to_json()).with_context(|| format!("writing {}", json_path.display()))?;
    let tables = render_tables(&report);
    fs::write(common.out_dir.join(REPORT_TXT), &tables).context("writing report tables")?;
    print!("{tables}");
    Ok(())
}

fn cmd_report(common: &Common, input: Option<&Path>) -> Result<()> {
    let path = input.map_or_else(|| common.out_dir.join(REPORT_JSON), Path::to_path_buf);
    let text = fs::read_to_string(&path).with_context(|| format!("report {} is missing or unreadable", path.display()))?;
    let report = ExperimentReport::from_json(&text).with_context(|| format!("parsing report {}", path.display()))?;
    print!("{}", render_tables(&report));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let common = &cli.common;
    match &cli.command {
        Command::Generate { members } => cmd_generate(common, &file, *members),
        Command::Featurize {
            input,
            feature_set,
            categories,
            window_months,
            pelt_rho,
            standardize_before_pelt,
        } => cmd_featurize(
            common,
            &file,
            input,
            *feature_set,
            categories,
            *window_months,
            *pelt_rho,
            *standardize_before_pelt,
        ),
        Command::Train { matrix, model } => cmd_train(common, &file, matrix.as_deref(), model),
        Command::Evaluate {
            matrix,
            model,
            costs,
            buckets,
        } => cmd_evaluate(common, &file, matrix.as_deref(), model.as_deref(), costs.as_deref(), *buckets),
        Command::Experiment {
            input,
            feature_sets,
            categories,
            ablations,
            folds,
            model,
            save_matrices,
            from_matrices,
        } => cmd_experiment(
            common,
            &file,
            input,
            feature_sets.as_deref(),
            categories.as_deref(),
            *ablations,
            *folds,
            model,
            *save_matrices,
            from_matrices.as_deref(),
        ),
        Command::Report { input } => cmd_report(common, input.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHRONOCOST_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("chronocost: error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
