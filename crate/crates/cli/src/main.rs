//! `icdlab`: file-level driver for the ICD-coding pipeline.
//!
//! Every subcommand reads one JSON config document (all sections optional),
//! writes its artifacts into `--out`, and finishes with `manifest.json`.
//! Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O
//! errors.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use icdlab::classifier::{
    importance_summary, linear_shap, train_logreg, write_importance_csv, LogRegModel, TrainConfig,
};
use icdlab::corpus::{
    default_catalog, generate_corpus, load_catalog, load_corpus, save_catalog, save_corpus, stratified_split,
    CatalogConfig, CatalogDocument, GenerateConfig, LabeledCorpus, SplitRatios, Tier,
};
use icdlab::digest::{derive_seed, json_digest, sha256_hex};
use icdlab::experiments::{
    class_list, evaluate_classifier, impute, run_augmentation, AugmentationConfig, ExtractorSpec,
};
use icdlab::extractor::{evaluate_extractor, train_lexicon_extractor, Extractor, LexiconConfig, LexiconExtractorModel};
use icdlab::features::{encode_gold, NumericStats};
use icdlab::{Error, Result};

#[derive(Parser)]
#[command(name = "icdlab", version, about = "Semi-self-supervised ICD coding lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config document; missing sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a catalog, a gold corpus and an unannotated pool.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Stratified train/validation/test split of a corpus.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train the lexicon extractor.
    TrainExtractor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        train: PathBuf,
    },
    /// Score an extractor against gold annotations.
    EvalExtractor {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        test: PathBuf,
    },
    /// Encode a corpus from extractor output.
    Impute {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train the ICD classifier on gold training rows plus an imputed pool.
    TrainClf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Notes to impute and add to the training rows.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Trained extractor for the pool; otherwise the config's extractor.
        #[arg(long)]
        extractor_model: Option<PathBuf>,
    },
    /// Per-class report of a classifier on gold test features.
    EvalClf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Mean absolute SHAP contributions per feature and class.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Run the augmentation grid.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Where extractor output comes from: a trained model file, or the config's
/// extractor built on `--train`.
#[derive(Args, Clone)]
struct Source {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training corpus: extractor training data and numeric statistics.
    #[arg(long)]
    train: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct PoolConfig {
    n_notes: usize,
    id_prefix: String,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { n_notes: 750, id_prefix: "pool".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct ExplainConfig {
    top_n: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { top_n: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    seed: u64,
    catalog: CatalogConfig,
    generate: GenerateConfig,
    pool: PoolConfig,
    split: SplitRatios,
    lexicon: LexiconConfig,
    extractor: ExtractorSpec,
    tier: Tier,
    classifier: TrainConfig,
    explain: ExplainConfig,
    augment: AugmentationConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            catalog: CatalogConfig::default(),
            generate: GenerateConfig::default(),
            pool: PoolConfig::default(),
            split: SplitRatios::default(),
            lexicon: LexiconConfig::default(),
            extractor: ExtractorSpec::default(),
            tier: Tier::Three,
            classifier: TrainConfig::default(),
            explain: ExplainConfig::default(),
            augment: AugmentationConfig::default(),
        }
    }
}

impl Config {
    /// Loads the document and pushes the master seed into every section
    /// that records one.
    fn resolve(common: &Common) -> Result<Self> {
        let mut config: Config = match &common.config {
            Some(path) => serde_json::from_slice(&at_path(path, fs::read(path).map_err(Error::from))?)?,
            None => Config::default(),
        };
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        config.lexicon.seed = config.seed;
        config.classifier.seed = config.seed;
        config.augment.seed = config.seed;
        Ok(config)
    }
}

/// Classifier file: the model plus what is needed to encode new notes.
#[derive(Serialize, Deserialize)]
struct ClassifierBundle {
    tier: Tier,
    stats: NumericStats,
    model: LogRegModel,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config_digest: String,
    seed: u64,
    jobs: Option<usize>,
    config: &'a Config,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    wall_clock_seconds: f64,
}

/// Collects inputs and outputs of one command and writes the manifest.
struct Run<'a> {
    command: &'a str,
    out: PathBuf,
    config: Config,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    jobs: Option<usize>,
    started: Instant,
}

impl<'a> Run<'a> {
    fn start(command: &'a str, common: &Common) -> Result<Self> {
        let config = Config::resolve(common)?;
        fs::create_dir_all(&common.out)?;
        Ok(Self {
            command,
            out: common.out.clone(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            jobs: None,
            started: Instant::now(),
        })
    }

    fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// Registers an output file name and returns its full path.
    fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.output(name);
        fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let digest = |p: &Path| -> Result<FileDigest> {
            Ok(FileDigest { path: p.display().to_string(), sha256: sha256_hex(&fs::read(p)?) })
        };
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_digest: json_digest(&self.config),
            seed: self.config.seed,
            jobs: self.jobs,
            config: &self.config,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|name| Ok(FileDigest { path: name.clone(), ..digest(&self.out.join(name))? }))
                .collect::<Result<_>>()?,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

/// Names the offending file in filesystem errors.
fn at_path<T>(path: &Path, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn catalog_of(run: &mut Run, path: &Path) -> Result<CatalogDocument> {
    at_path(path, load_catalog(run.input(path)))
}

fn corpus_of(run: &mut Run, path: &Path) -> Result<LabeledCorpus> {
    at_path(path, load_corpus(run.input(path)))
}

/// Resolves an extractor for `targets` plus the numeric statistics used to
/// encode its output.
fn extractor_of(
    run: &mut Run,
    source: &Source,
    doc: &CatalogDocument,
    targets: &[&LabeledCorpus],
) -> Result<(Box<dyn Extractor>, Option<NumericStats>)> {
    let train = source.train.as_deref().map(|p| corpus_of(run, p)).transpose()?;
    let stats = train.as_ref().map(|t| NumericStats::fit(&t.notes, &doc.catalog)).transpose()?;
    let extractor: Box<dyn Extractor> = match (&source.model, &train) {
        (Some(path), _) => {
            let text = at_path(path, fs::read_to_string(run.input(path)).map_err(Error::from))?;
            Box::new(LexiconExtractorModel::from_json(&text)?)
        }
        (None, Some(train)) => run.config.extractor.build(train, targets, &doc.catalog, run.config.seed)?,
        (None, None) => return Err(Error::InvalidConfig("either --model or --train is required".into())),
    };
    Ok((extractor, stats))
}

fn load_bundle(run: &mut Run, path: &Path) -> Result<ClassifierBundle> {
    let bytes = at_path(path, fs::read(run.input(path)).map_err(Error::from))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { common } => {
            let mut run = Run::start("gen", &common)?;
            let config = run.config.clone();
            let doc = default_catalog(&config.catalog)?;
            let gold = generate_corpus(&doc, &config.generate, derive_seed(config.seed, &["gold"]))?;
            save_catalog(&doc, run.output("catalog.json"))?;
            save_corpus(&gold, run.output("corpus.jsonl"))?;
            if config.pool.n_notes > 0 {
                let pool_config = GenerateConfig {
                    n_notes: config.pool.n_notes,
                    id_prefix: config.pool.id_prefix.clone(),
                    ..config.generate.clone()
                };
                let pool = generate_corpus(&doc, &pool_config, derive_seed(config.seed, &["pool"]))?;
                save_corpus(&pool, run.output("pool.jsonl"))?;
            }
            run.finish()
        }
        Command::Split { common, corpus } => {
            let mut run = Run::start("split", &common)?;
            let corpus = corpus_of(&mut run, &corpus)?;
            let split = stratified_split(&corpus, run.config.split, run.config.seed)?;
            save_corpus(&split.train, run.output("train.jsonl"))?;
            save_corpus(&split.validation, run.output("validation.jsonl"))?;
            save_corpus(&split.test, run.output("test.jsonl"))?;
            run.finish()
        }
        Command::TrainExtractor { common, catalog, train } => {
            let mut run = Run::start("train-extractor", &common)?;
            let doc = catalog_of(&mut run, &catalog)?;
            let train = corpus_of(&mut run, &train)?;
            let (model, report) = train_lexicon_extractor(&train, &doc.catalog, &run.config.lexicon)?;
            let path = run.output("model.json");
            fs::write(path, model.to_json()? + "\n")?;
            run.write_json("training_report.json", &report)?;
            run.finish()
        }
        Command::EvalExtractor { common, source, test } => {
            let mut run = Run::start("eval-extractor", &common)?;
            let doc = catalog_of(&mut run, &source.catalog)?;
            let test = corpus_of(&mut run, &test)?;
            let (extractor, _) = extractor_of(&mut run, &source, &doc, &[&test])?;
            let report = evaluate_extractor(extractor.as_ref(), &test, &doc.catalog)?;
            run.write_json("report.json", &report)?;
            run.finish()
        }
        Command::Impute { common, source, corpus } => {
            let mut run = Run::start("impute", &common)?;
            let doc = catalog_of(&mut run, &source.catalog)?;
            let corpus = corpus_of(&mut run, &corpus)?;
            let (extractor, stats) = extractor_of(&mut run, &source, &doc, &[&corpus])?;
            let stats =
                stats.ok_or_else(|| Error::InvalidConfig("--train is required for numeric statistics".into()))?;
            let x = impute(extractor.as_ref(), &corpus, &doc.catalog, &stats)?;
            run.output("features.csv");
            run.output("features.schema.json");
            x.save(&run.out, "features")?;
            run.finish()
        }
        Command::TrainClf { common, catalog, train, pool, extractor_model } => {
            let mut run = Run::start("train-clf", &common)?;
            let doc = catalog_of(&mut run, &catalog)?;
            let source = Source { catalog: catalog.clone(), model: extractor_model, train: Some(train.clone()) };
            let train = corpus_of(&mut run, &train)?;
            let stats = NumericStats::fit(&train.notes, &doc.catalog)?;
            let mut x = encode_gold(&train.notes, &doc.catalog, &stats)?;
            if let Some(pool) = pool {
                let pool = corpus_of(&mut run, &pool)?;
                let (extractor, _) = extractor_of(&mut run, &source, &doc, &[&pool])?;
                x = x.vstack(&impute(extractor.as_ref(), &pool, &doc.catalog, &stats)?)?;
            }
            let tier = run.config.tier;
            let model = train_logreg(&x.tier_view(tier), &run.config.classifier)?;
            run.write_json("model.json", &ClassifierBundle { tier, stats, model })?;
            run.finish()
        }
        Command::EvalClf { common, catalog, model, test } => {
            let mut run = Run::start("eval-clf", &common)?;
            let doc = catalog_of(&mut run, &catalog)?;
            let bundle = load_bundle(&mut run, &model)?;
            let test = corpus_of(&mut run, &test)?;
            let x = encode_gold(&test.notes, &doc.catalog, &bundle.stats)?.tier_view(bundle.tier);
            let mut classes = class_list(&[&test.notes]);
            classes.extend(bundle.model.classes.iter().cloned());
            classes.sort();
            classes.dedup();
            let report = evaluate_classifier(&bundle.model, &x, &classes)?;
            let csv = report.to_csv()?;
            fs::write(run.output("class_report.csv"), csv)?;
            run.write_json("class_report.json", &report)?;
            run.finish()
        }
        Command::Explain { common, catalog, model, corpus } => {
            let mut run = Run::start("explain", &common)?;
            let doc = catalog_of(&mut run, &catalog)?;
            let bundle = load_bundle(&mut run, &model)?;
            let corpus = corpus_of(&mut run, &corpus)?;
            let x = encode_gold(&corpus.notes, &doc.catalog, &bundle.stats)?.tier_view(bundle.tier);
            let explanation = linear_shap(&bundle.model, &x)?;
            let rows = importance_summary(&explanation, run.config.explain.top_n)?;
            let file = fs::File::create(run.output("shap_summary.csv"))?;
            let mut out = BufWriter::new(file);
            write_importance_csv(&rows, &bundle.model.classes, &mut out)?;
            out.flush()?;
            run.finish()
        }
        Command::Augment { common, catalog, gold, pool, jobs } => {
            let mut run = Run::start("augment", &common)?;
            if jobs == 0 {
                return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
            }
            run.jobs = Some(jobs);
            let doc = catalog_of(&mut run, &catalog)?;
            let gold = corpus_of(&mut run, &gold)?;
            let pool = corpus_of(&mut run, &pool)?;
            let curves = run_augmentation(&doc.catalog, &gold, &pool, &run.config.augment, jobs)?;
            let file = fs::File::create(run.output("curves.csv"))?;
            let mut out = BufWriter::new(file);
            curves.write_csv(&mut out)?;
            out.flush()?;
            run.write_json("curves.json", &curves)?;
            run.finish()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational =
                matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            if informational {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icdlab: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
