use std::fs;
use std::io::{self, BufRead, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use topicmodel::coherence::{coherence_report, CoherenceMetric, CoherenceSettings};
use topicmodel::corpus::{load_corpus, FieldMap, InputFormat, Label, StopwordSets};
use topicmodel::ctc::{ctc_report, CtcSettings, RecordingTransport, DEFAULT_API_KEY_ENV};
use topicmodel::distance::Metric;
use topicmodel::embedding::{fetch_embeddings, known_model_dim, EmbedInput, EmbeddingMatrix, EmbeddingProvider, HashingProvider, ProviderSpec};
use topicmodel::hdbscan::SelectionMethod;
use topicmodel::pipeline::{
    align_embeddings, at, cluster_cell, export_projection, extract_topics, read_json, read_labels, render_report,
    run_pipeline, write_json, write_labels, CtcConfig, PipelineConfig, PipelineError, ProjectionInput, Stage,
    TopicsConfig,
};
use topicmodel::sweep::{load_records, merge_records, persist_records, run_grid, select_diverse, select_top, GridSpec, RunRecord};
use topicmodel::topics::{TopicMethod, TopicModel};
use topicmodel::{Corpus, UmapParams};

#[derive(Debug, Parser)]
#[command(name = "topicmodel", version, about = "Embedding-based topic modeling and evaluation")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Log filter, e.g. `info` or `topicmodel=debug`.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load an article collection and write it as corpus JSONL.
    Ingest(IngestArgs),
    /// Normalize document texts (emoji removal, covid19 token).
    Preprocess {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed a corpus through a provider and write an EMB1 file.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a UMAP x HDBSCAN grid scored by DBCV.
    Sweep(SweepArgs),
    /// Merge record files, sorted by parameters.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the records chosen by the selection rules.
    Select {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value_t = Rule::Both)]
        rule: Rule,
    },
    /// Re-run the selected cell and write per-document labels.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value_t = Rule::Top)]
        rule: Rule,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract topic words per cluster.
    Topics(TopicsArgs),
    /// Score topics with the classical coherence metrics.
    Coherence(CoherenceArgs),
    /// Score topics with LLM-judged intrusion and rating tasks.
    Ctc(CtcArgs),
    /// Export a joint 2-D projection as CSV for plotting.
    Project(ProjectArgs),
    /// Summarize a finished run directory.
    Report {
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Run every stage from the configuration file.
    Run,
    /// Deterministic hashing encoder honouring the provider contract.
    MockProvider {
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ids_out: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        dim: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rule {
    Top,
    Diverse,
    Both,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long)]
    id_col: Option<String>,
    #[arg(long, default_value = "text")]
    text_col: String,
    #[arg(long, default_value = "country")]
    country_col: String,
    #[arg(long, default_value = "language")]
    language_col: String,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Split filter; all three of country, language and label are required
    /// together.
    #[arg(long, requires_all = ["language", "label"])]
    country: Option<String>,
    #[arg(long, requires = "country")]
    language: Option<String>,
    #[arg(long, requires = "country")]
    label: Option<Label>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// Provider executable, or `builtin:hashing[:dim]`.
    #[arg(long)]
    provider_cmd: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl ProviderArgs {
    fn spec(&self) -> Option<ProviderSpec> {
        let command = self.provider_cmd.as_ref()?;
        let mut spec = ProviderSpec::new(command, self.model.as_deref().unwrap_or("default"));
        spec.batch_size = self.batch_size;
        Some(spec)
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Grid file (TOML); flags below replace its lists.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_neighbors: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    min_dist: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    n_components: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    min_samples: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    min_cluster_size: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    selection_method: Vec<SelectionMethod>,
    #[arg(long)]
    n_epochs: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TopicsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "ctfidf")]
    method: TopicMethod,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    /// Document embeddings, needed by the keybert method.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long)]
    stopwords_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CoherenceArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "c_v,u_mass,c_uci,c_npmi")]
    metrics: Vec<CoherenceMetric>,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    include_outlier: bool,
    #[arg(long)]
    stopwords_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CtcArgs {
    #[arg(long)]
    topics: PathBuf,
    /// Recorded responses (JSONL of prompt_hash, response).
    #[arg(long, conflicts_with = "endpoint")]
    replay: Option<PathBuf>,
    /// Chat-completion endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "")]
    model: String,
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    api_key_env: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, default_value_t = 5)]
    intruders: usize,
    #[arg(long)]
    include_outlier: bool,
    /// Where to save the exchanges for later replay.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// One EMB1 file per corpus.
    #[arg(long, required = true)]
    embeddings: Vec<PathBuf>,
    /// One labels CSV per corpus, in the same order.
    #[arg(long, required = true)]
    labels: Vec<PathBuf>,
    /// One nation tag per corpus, in the same order.
    #[arg(long, required = true)]
    nation: Vec<String>,
    #[arg(long, default_value_t = 15)]
    n_neighbors: usize,
    #[arg(long, default_value_t = 0.1)]
    min_dist: f64,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings shared by every subcommand after flags override the config.
struct Context {
    config: PipelineConfig,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, PipelineError> {
        let mut config = match &cli.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        if let Some(dir) = &cli.out_dir {
            config.out_dir = dir.clone();
        }
        Ok(Context { config })
    }

    /// `explicit`, or `name` inside the output directory (created on demand).
    fn output(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf, PipelineError> {
        let path = explicit.clone().unwrap_or_else(|| self.config.out_dir.join(name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| PipelineError::Config(format!("{}: {e}", parent.display())))?;
        }
        Ok(path)
    }

    fn stopwords(&self, dir: &Option<PathBuf>) -> Result<StopwordSets, PipelineError> {
        match dir {
            Some(d) => StopwordSets::load_dir(d).map_err(|e| PipelineError::Config(e.to_string())),
            None => self.config.stopwords(),
        }
    }
}

fn load_corpus_jsonl(path: &Path, stage: Stage) -> Result<Corpus, PipelineError> {
    Corpus::load_jsonl(path).map_err(at(stage))
}

fn read_embeddings(path: &Path, stage: Stage) -> Result<EmbeddingMatrix, PipelineError> {
    EmbeddingMatrix::read(path).map_err(|e| at(stage)(format!("{}: {e}", path.display())))
}

fn pick(records: &[RunRecord], rule: Rule) -> Result<RunRecord, PipelineError> {
    match rule {
        Rule::Top | Rule::Both => select_top(records).cloned(),
        Rule::Diverse => select_diverse(records).cloned(),
    }
    .map_err(at(Stage::Select))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("values serialize"));
}

fn execute(cli: &Cli, ctx: &Context) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Ingest(a) => {
            let format = a
                .format
                .or_else(|| InputFormat::from_path(&a.input))
                .ok_or_else(|| PipelineError::Config(format!("cannot tell the format of {}; pass --format", a.input.display())))?;
            let fields = FieldMap {
                id: a.id_col.clone(),
                text: a.text_col.clone(),
                country: Some(a.country_col.clone()),
                language: Some(a.language_col.clone()),
                label: Some(a.label_col.clone()),
                published: None,
            };
            let report = load_corpus(&a.input, format, &fields).map_err(at(Stage::Ingest))?;
            let corpus = match (&a.country, &a.language, a.label) {
                (Some(c), Some(l), Some(label)) => report.corpus.filter_split(c, l, label).map_err(at(Stage::Ingest))?,
                _ => report.corpus,
            };
            let out = ctx.output(&a.out, "corpus.raw.jsonl")?;
            corpus.save_jsonl(&out).map_err(at(Stage::Ingest))?;
            println!(
                "{} documents ({} empty skipped, {} malformed) -> {}",
                corpus.len(),
                report.skipped_empty,
                report.malformed.len(),
                out.display()
            );
        }
        Command::Preprocess { corpus, out } => {
            let corpus = load_corpus_jsonl(corpus, Stage::Preprocess)?.preprocessed();
            let out = ctx.output(out, "corpus.jsonl")?;
            corpus.save_jsonl(&out).map_err(at(Stage::Preprocess))?;
            println!("{} documents -> {}", corpus.len(), out.display());
        }
        Command::Embed { corpus, provider, out } => {
            let spec = provider
                .spec()
                .or_else(|| ctx.config.embedding.provider.clone())
                .ok_or_else(|| PipelineError::Config("no provider: pass --provider-cmd and --model".into()))?;
            let corpus = load_corpus_jsonl(corpus, Stage::Embed)?;
            let built = spec.build().map_err(at(Stage::Embed))?;
            let matrix = fetch_embeddings(&corpus, built.as_ref()).map_err(at(Stage::Embed))?;
            let out = ctx.output(out, "embeddings.emb")?;
            matrix.write(&out).map_err(at(Stage::Embed))?;
            println!("{}x{} -> {}", matrix.n_rows(), matrix.dim(), out.display());
        }
        Command::Sweep(a) => {
            let mut grid = match &a.grid {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str::<GridSpec>(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
                }
                None => ctx.config.sweep.clone(),
            };
            grid.seed = ctx.config.seed;
            macro_rules! replace {
                ($field:ident) => {
                    if !a.$field.is_empty() {
                        grid.$field = a.$field.clone();
                    }
                };
            }
            replace!(n_neighbors);
            replace!(min_dist);
            replace!(n_components);
            replace!(min_samples);
            replace!(min_cluster_size);
            if !a.selection_method.is_empty() {
                grid.selection_methods = a.selection_method.clone();
            }
            if let Some(e) = a.n_epochs {
                grid.n_epochs = e;
            }
            if let Some(m) = a.metric {
                grid.metric = m;
            }
            grid.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            let matrix = read_embeddings(&a.embeddings, Stage::Sweep)?;
            let records = run_grid(matrix.to_array().view(), &grid).map_err(at(Stage::Sweep))?;
            let out = ctx.output(&a.out, "records.jsonl")?;
            persist_records(&records, &out).map_err(at(Stage::Sweep))?;
            let scored = records.iter().filter(|r| r.dbcv.is_some()).count();
            println!("{} cells ({scored} scored) -> {}", records.len(), out.display());
        }
        Command::Merge { inputs, out } => {
            let paths: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            let records = merge_records(&paths).map_err(at(Stage::Sweep))?;
            let out = ctx.output(out, "records.jsonl")?;
            persist_records(&records, &out).map_err(at(Stage::Sweep))?;
            println!("{} records -> {}", records.len(), out.display());
        }
        Command::Select { records, rule } => {
            let records = load_records(records).map_err(at(Stage::Select))?;
            let mut chosen = serde_json::Map::new();
            if matches!(rule, Rule::Top | Rule::Both) {
                chosen.insert("top".into(), serde_json::to_value(pick(&records, Rule::Top)?).expect("records serialize"));
            }
            if matches!(rule, Rule::Diverse | Rule::Both) {
                chosen.insert(
                    "diverse".into(),
                    serde_json::to_value(pick(&records, Rule::Diverse)?).expect("records serialize"),
                );
            }
            print_json(&chosen);
        }
        Command::Cluster {
            embeddings,
            records,
            rule,
            out,
        } => {
            let records = load_records(records).map_err(at(Stage::Select))?;
            let record = pick(&records, *rule)?;
            let matrix = read_embeddings(embeddings, Stage::Cluster)?;
            let labeling = cluster_cell(&matrix.to_array(), &record.params, record.seed)?;
            let out = ctx.output(out, "labels.csv")?;
            write_labels(&out, matrix.ids(), &labeling)?;
            println!(
                "{} clusters, {} noise -> {}",
                labeling.n_clusters(),
                labeling.n_noise(),
                out.display()
            );
        }
        Command::Topics(a) => {
            let corpus = load_corpus_jsonl(&a.corpus, Stage::Topics)?;
            let (ids, labels) = read_labels(&a.labels)?;
            if ids != corpus.ids() {
                return Err(at(Stage::Topics)("labels file ids do not match the corpus order"));
            }
            let tokens = corpus.tokenize(&ctx.stopwords(&a.stopwords_dir)?);
            let embeddings = match &a.embeddings {
                Some(p) => Some(align_embeddings(&read_embeddings(p, Stage::Topics)?, &ids)?),
                None => None,
            };
            let spec = a.provider.spec().or_else(|| ctx.config.embedding.provider.clone());
            let config = TopicsConfig {
                method: a.method,
                top: a.top,
                candidates: a.candidates,
            };
            let model = extract_topics(&config, &tokens, &labels, embeddings.as_ref(), spec.as_ref())?;
            let out = ctx.output(&a.out, "topics.json")?;
            write_json(&out, &model, Stage::Topics)?;
            println!("{} topics -> {}", model.topics.len(), out.display());
        }
        Command::Coherence(a) => {
            let corpus = load_corpus_jsonl(&a.corpus, Stage::Coherence)?;
            let model: TopicModel = read_json(&a.topics, Stage::Coherence)?;
            let tokens = corpus.tokenize(&ctx.stopwords(&a.stopwords_dir)?);
            let settings = CoherenceSettings {
                metrics: a.metrics.clone(),
                n_words: a.top,
                include_outlier: a.include_outlier,
            };
            let report = coherence_report(&model, &tokens, &settings).map_err(at(Stage::Coherence))?;
            let out = ctx.output(&a.out, "coherence.json")?;
            write_json(&out, &report, Stage::Coherence)?;
            print_json(&report.mean);
        }
        Command::Ctc(a) => {
            let model: TopicModel = read_json(&a.topics, Stage::Ctc)?;
            let config = CtcConfig {
                replay: a.replay.clone(),
                endpoint: a.endpoint.clone(),
                model: a.model.clone(),
                api_key_env: a.api_key_env.clone(),
                settings: CtcSettings {
                    n_topic_words: a.top,
                    n_intruders: a.intruders,
                    include_outlier: a.include_outlier,
                    ..CtcSettings::default()
                },
            };
            let recorder = RecordingTransport::new(config.transport()?);
            let scores = ctc_report(&model, &recorder, &config.settings, ctx.config.seed).map_err(at(Stage::Ctc))?;
            if let Some(path) = &a.record {
                recorder.save(path).map_err(at(Stage::Ctc))?;
            }
            let out = ctx.output(&a.out, "ctc.json")?;
            write_json(&out, &scores, Stage::Ctc)?;
            println!(
                "intrusion={:?} rating={:?} -> {}",
                scores.intrusion,
                scores.rating,
                out.display()
            );
        }
        Command::Project(a) => {
            if a.embeddings.len() != a.labels.len() || a.embeddings.len() != a.nation.len() {
                return Err(PipelineError::Config(
                    "--embeddings, --labels and --nation must be given the same number of times".into(),
                ));
            }
            let mut matrices = Vec::new();
            let mut labels = Vec::new();
            for (emb, lab) in a.embeddings.iter().zip(&a.labels) {
                let (ids, l) = read_labels(lab)?;
                matrices.push(align_embeddings(&read_embeddings(emb, Stage::Project)?, &ids)?);
                labels.push(l);
            }
            let parts: Vec<ProjectionInput> = a
                .nation
                .iter()
                .zip(&matrices)
                .zip(&labels)
                .map(|((nation, embeddings), labels)| ProjectionInput {
                    nation: nation.clone(),
                    embeddings,
                    labels,
                })
                .collect();
            let params = UmapParams {
                n_neighbors: a.n_neighbors,
                min_dist: a.min_dist,
                metric: a.metric,
                seed: ctx.config.seed,
                ..UmapParams::default()
            };
            let csv = export_projection(&parts, &params)?;
            let out = ctx.output(&a.out, "projection.csv")?;
            fs::write(&out, csv).map_err(at(Stage::Project))?;
            println!("{}", out.display());
        }
        Command::Report { run_dir } => {
            let dir = run_dir.clone().unwrap_or_else(|| ctx.config.out_dir.clone());
            print!("{}", render_report(&dir)?);
        }
        Command::Run => {
            if cli.config.is_none() {
                return Err(PipelineError::Config("run needs --config".into()));
            }
            let manifest = run_pipeline(&ctx.config)?;
            println!(
                "{} documents, {} sweep cells -> {}",
                manifest.n_documents,
                manifest.sweep_cells,
                ctx.config.out_dir.join("manifest.json").display()
            );
        }
        Command::MockProvider {
            model,
            out,
            ids_out,
            batch_size: _,
            dim,
        } => {
            let dim = dim.or_else(|| known_model_dim(model)).unwrap_or(HashingProvider::DEFAULT_DIM);
            let mut inputs = Vec::new();
            for (i, line) in io::stdin().lock().lines().enumerate() {
                let line = line.map_err(at(Stage::Embed))?;
                if line.trim().is_empty() {
                    continue;
                }
                let input: EmbedInput =
                    serde_json::from_str(&line).map_err(|e| at(Stage::Embed)(format!("stdin line {}: {e}", i + 1)))?;
                inputs.push(input);
            }
            let matrix = HashingProvider::new(dim, 0).embed(&inputs).map_err(at(Stage::Embed))?;
            matrix.write(out).map_err(at(Stage::Embed))?;
            let written = topicmodel::embedding::ids_path(out);
            if let Some(target) = ids_out.as_ref().filter(|t| **t != written) {
                fs::rename(&written, target).map_err(at(Stage::Embed))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_ansi(io::stderr().is_terminal())
        .with_writer(io::stderr)
        .init();

    let result = Context::new(&cli).and_then(|ctx| execute(&cli, &ctx));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
