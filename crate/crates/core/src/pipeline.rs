//! End-to-end orchestration: configuration, the stage functions shared with
//! the command line, the full run with its manifest, and 2-D projection
//! export for plotting.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coherence::{coherence_report, CoherenceMetric, CoherenceReport, CoherenceSettings};
use crate::corpus::{load_corpus, Corpus, FieldMap, InputFormat, Label, LoadReport, StopwordSets, TokenizedDocument};
use crate::ctc::{ctc_report, CtcScores, CtcSettings, HttpTransport, LlmTransport, RecordingTransport, ReplayTransport, DEFAULT_API_KEY_ENV};
use crate::distance::Metric;
use crate::embedding::{fetch_embeddings, EmbeddingMatrix, ProviderSpec};
use crate::hdbscan::{hdbscan_cluster, Labeling};
use crate::sweep::{persist_records, run_grid, select_diverse, select_top, CellParams, GridSpec, RunRecord};
use crate::topics::{ctfidf, keybert_topics, merge_cluster_docs, TopicMethod, TopicModel};
use crate::umap::{umap_reduce, UmapParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Preprocess,
    Embed,
    Sweep,
    Select,
    Cluster,
    Topics,
    Coherence,
    Ctc,
    Project,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Embed => "embed",
            Stage::Sweep => "sweep",
            Stage::Select => "select",
            Stage::Cluster => "cluster",
            Stage::Topics => "topics",
            Stage::Coherence => "coherence",
            Stage::Ctc => "ctc",
            Stage::Project => "project",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit status: 1 for a failed stage, 2 for bad configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }
}

/// Wraps any error as a failure of `stage`.
pub fn at<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub corpus: PathBuf,
    /// Guessed from the extension when absent.
    pub format: Option<InputFormat>,
    pub fields: FieldMap,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            corpus: PathBuf::new(),
            format: None,
            fields: FieldMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub country: String,
    pub language: String,
    pub label: Label,
}

/// Where document embeddings come from. A `path` that exists is loaded; a
/// missing `path` with a provider is computed and cached there; without a
/// path the provider output goes to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub path: Option<PathBuf>,
    pub provider: Option<ProviderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    pub method: TopicMethod,
    /// Words kept per topic in the written topic file.
    pub top: usize,
    /// c-TF-IDF candidates re-ranked per topic by the keyword method.
    pub candidates: usize,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        TopicsConfig {
            method: TopicMethod::Ctfidf,
            top: 10,
            candidates: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceConfig {
    pub metrics: Vec<CoherenceMetric>,
    pub n_words: usize,
    pub include_outlier: bool,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        let s = CoherenceSettings::default();
        CoherenceConfig {
            metrics: s.metrics,
            n_words: s.n_words,
            include_outlier: s.include_outlier,
        }
    }
}

impl CoherenceConfig {
    pub fn settings(&self) -> CoherenceSettings {
        CoherenceSettings {
            metrics: self.metrics.clone(),
            n_words: self.n_words,
            include_outlier: self.include_outlier,
        }
    }
}

/// LLM-judged scoring. Exactly one of `replay` (a recorded JSONL file) or
/// `endpoint` (a chat-completion URL) must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtcConfig {
    pub replay: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key_env: String,
    pub settings: CtcSettings,
}

impl Default for CtcConfig {
    fn default() -> Self {
        CtcConfig {
            replay: None,
            endpoint: None,
            model: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            settings: CtcSettings::default(),
        }
    }
}

impl CtcConfig {
    pub fn transport(&self) -> Result<Box<dyn LlmTransport>, PipelineError> {
        match (&self.replay, &self.endpoint) {
            (Some(path), None) => Ok(Box::new(ReplayTransport::load(path).map_err(at(Stage::Ctc))?)),
            (None, Some(url)) => Ok(Box::new(HttpTransport::new(url, &self.model, &self.api_key_env))),
            _ => Err(PipelineError::Config("ctc needs exactly one of replay or endpoint".into())),
        }
    }
}

/// Everything a run needs. The sweep seed is always the global `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub input: InputConfig,
    pub split: Option<SplitConfig>,
    /// Directory with `<language>.txt` stopword lists; bundled lists otherwise.
    pub stopwords_dir: Option<PathBuf>,
    pub embedding: EmbeddingConfig,
    pub sweep: GridSpec,
    pub topics: TopicsConfig,
    pub coherence: CoherenceConfig,
    pub ctc: Option<CtcConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            input: InputConfig::default(),
            split: None,
            stopwords_dir: None,
            embedding: EmbeddingConfig::default(),
            sweep: GridSpec::default(),
            topics: TopicsConfig::default(),
            coherence: CoherenceConfig::default(),
            ctc: None,
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.input.corpus);
        self.stopwords_dir.iter_mut().for_each(fix);
        self.embedding.path.iter_mut().for_each(fix);
        if let Some(ctc) = &mut self.ctc {
            ctc.replay.iter_mut().for_each(fix);
        }
    }

    pub fn input_format(&self) -> Result<InputFormat, PipelineError> {
        self.input
            .format
            .or_else(|| InputFormat::from_path(&self.input.corpus))
            .ok_or_else(|| {
                PipelineError::Config(format!(
                    "cannot tell the format of {}; set input.format",
                    self.input.corpus.display()
                ))
            })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let config = |m: String| Err(PipelineError::Config(m));
        if !self.input.corpus.is_file() {
            return config(format!("corpus {} does not exist", self.input.corpus.display()));
        }
        self.input_format()?;
        if let Some(dir) = &self.stopwords_dir {
            if !dir.is_dir() {
                return config(format!("stopword directory {} does not exist", dir.display()));
            }
        }
        let have_file = self.embedding.path.as_ref().is_some_and(|p| p.is_file());
        if !have_file && self.embedding.provider.is_none() {
            return config(match &self.embedding.path {
                Some(p) => format!("embeddings {} do not exist and no provider is configured", p.display()),
                None => "no embeddings file and no provider configured".into(),
            });
        }
        if self.topics.method == TopicMethod::Keybert && self.embedding.provider.is_none() {
            return config("the keybert method needs an embedding provider for candidate words".into());
        }
        if self.topics.top == 0 || self.topics.candidates == 0 {
            return config("topics.top and topics.candidates must be positive".into());
        }
        if self.coherence.n_words < 2 {
            return config("coherence.n_words must be at least 2".into());
        }
        self.sweep.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(ctc) = &self.ctc {
            match (&ctc.replay, &ctc.endpoint) {
                (Some(p), None) if !p.is_file() => return config(format!("replay file {} does not exist", p.display())),
                (Some(_), None) | (None, Some(_)) => {}
                _ => return config("ctc needs exactly one of replay or endpoint".into()),
            }
        }
        Ok(())
    }

    pub fn stopwords(&self) -> Result<StopwordSets, PipelineError> {
        match &self.stopwords_dir {
            Some(dir) => StopwordSets::load_dir(dir).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(StopwordSets::bundled()),
        }
    }
}

/// Loads the corpus and applies the configured split filter.
pub fn ingest(config: &PipelineConfig) -> Result<LoadReport, PipelineError> {
    let mut report = load_corpus(&config.input.corpus, config.input_format()?, &config.input.fields).map_err(at(Stage::Ingest))?;
    if let Some(split) = &config.split {
        report.corpus = report
            .corpus
            .filter_split(&split.country, &split.language, split.label)
            .map_err(at(Stage::Ingest))?;
    }
    Ok(report)
}

/// Picks the rows of `matrix` for `ids`, in that order.
pub fn align_embeddings(matrix: &EmbeddingMatrix, ids: &[String]) -> Result<EmbeddingMatrix, PipelineError> {
    if matrix.ids() == ids {
        return Ok(matrix.clone());
    }
    let index: HashMap<&str, usize> = matrix.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut values = Vec::with_capacity(ids.len() * matrix.dim());
    for id in ids {
        let row = index.get(id.as_str()).ok_or_else(|| PipelineError::Stage {
            stage: Stage::Embed,
            message: format!("no embedding for document {id:?}"),
        })?;
        values.extend_from_slice(matrix.row(*row));
    }
    EmbeddingMatrix::new(ids.to_vec(), matrix.dim(), values).map_err(at(Stage::Embed))
}

/// Loads or computes embeddings for `corpus`. Returns the matrix and a
/// description of where it came from.
pub fn embed(config: &PipelineConfig, corpus: &Corpus) -> Result<(EmbeddingMatrix, String), PipelineError> {
    if let Some(path) = config.embedding.path.as_ref().filter(|p| p.is_file()) {
        let matrix = EmbeddingMatrix::read(path).map_err(at(Stage::Embed))?;
        return Ok((align_embeddings(&matrix, &corpus.ids())?, format!("file {}", path.display())));
    }
    let spec = config
        .embedding
        .provider
        .as_ref()
        .ok_or_else(|| PipelineError::Config("no embeddings file and no provider configured".into()))?;
    let provider = spec.build().map_err(at(Stage::Embed))?;
    let matrix = fetch_embeddings(corpus, provider.as_ref()).map_err(at(Stage::Embed))?;
    let target = config
        .embedding
        .path
        .clone()
        .unwrap_or_else(|| config.out_dir.join("embeddings.emb"));
    matrix.write(&target).map_err(at(Stage::Embed))?;
    Ok((matrix, format!("provider {} model {}", spec.command, spec.model_name)))
}

/// Reproduces the clustering of one sweep cell.
pub fn cluster_cell(data: &Array2<f64>, params: &CellParams, seed: u64) -> Result<Labeling, PipelineError> {
    let projection = umap_reduce(data.view(), &params.umap(seed)).map_err(at(Stage::Cluster))?;
    hdbscan_cluster(projection.coords.view(), &params.hdbscan(), Metric::Euclidean).map_err(at(Stage::Cluster))
}

pub fn write_labels(path: &Path, ids: &[String], labeling: &Labeling) -> Result<(), PipelineError> {
    let mut out = csv::Writer::from_path(path).map_err(at(Stage::Cluster))?;
    out.write_record(["id", "cluster", "probability"]).map_err(at(Stage::Cluster))?;
    for (i, id) in ids.iter().enumerate() {
        out.write_record([id.clone(), labeling.labels[i].to_string(), labeling.probabilities[i].to_string()])
            .map_err(at(Stage::Cluster))?;
    }
    out.flush().map_err(at(Stage::Cluster))
}

/// Reads a labels file back as (ids, labels).
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<i32>), PipelineError> {
    let mut reader = csv::Reader::from_path(path).map_err(at(Stage::Cluster))?;
    let (mut ids, mut labels) = (Vec::new(), Vec::new());
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(at(Stage::Cluster))?;
        let bad = || PipelineError::Stage {
            stage: Stage::Cluster,
            message: format!("{} line {}: expected id,cluster[,probability]", path.display(), i + 2),
        };
        ids.push(row.get(0).ok_or_else(bad)?.to_string());
        labels.push(row.get(1).and_then(|v| v.trim().parse().ok()).ok_or_else(bad)?);
    }
    Ok((ids, labels))
}

/// Topic words for a labeling, truncated to `config.top` words per topic.
pub fn extract_topics(
    config: &TopicsConfig,
    tokens: &[TokenizedDocument],
    labels: &[i32],
    embeddings: Option<&EmbeddingMatrix>,
    provider: Option<&ProviderSpec>,
) -> Result<TopicModel, PipelineError> {
    let classes = merge_cluster_docs(tokens, labels).map_err(at(Stage::Topics))?;
    let mut model = match config.method {
        TopicMethod::Ctfidf => ctfidf(&classes).map_err(at(Stage::Topics))?,
        TopicMethod::Keybert => {
            let (embeddings, spec) = embeddings.zip(provider).ok_or_else(|| {
                PipelineError::Config("the keybert method needs document embeddings and a provider".into())
            })?;
            let provider = spec.build().map_err(at(Stage::Topics))?;
            keybert_topics(&classes, embeddings, labels, provider.as_ref(), config.candidates).map_err(at(Stage::Topics))?
        }
    };
    for words in model.topics.values_mut() {
        words.truncate(config.top);
    }
    Ok(model)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: Stage) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(at(stage))?;
    text.push('\n');
    fs::write(path, text).map_err(at(stage))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: Stage) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| at(stage)(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| at(stage)(format!("{}: {e}", path.display())))
}

/// One corpus in a joint projection.
#[derive(Clone)]
pub struct ProjectionInput<'a> {
    pub nation: String,
    pub embeddings: &'a EmbeddingMatrix,
    pub labels: &'a [i32],
}

/// Joint 2-D UMAP over the concatenated matrices, as CSV with columns
/// id, nation, cluster, x, y.
pub fn export_projection(parts: &[ProjectionInput<'_>], params: &UmapParams) -> Result<String, PipelineError> {
    for p in parts {
        if p.labels.len() != p.embeddings.n_rows() {
            return Err(at(Stage::Project)(format!(
                "{}: {} labels for {} embeddings",
                p.nation,
                p.labels.len(),
                p.embeddings.n_rows()
            )));
        }
    }
    let matrices: Vec<&EmbeddingMatrix> = parts.iter().map(|p| p.embeddings).collect();
    let joint = EmbeddingMatrix::concat(&matrices).map_err(at(Stage::Project))?;
    let params = UmapParams {
        n_components: 2,
        ..params.clone()
    };
    let projection = umap_reduce(joint.to_array().view(), &params).map_err(at(Stage::Project))?;

    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["id", "nation", "cluster", "x", "y"]).map_err(at(Stage::Project))?;
    let mut row = 0;
    for p in parts {
        for (id, label) in p.embeddings.ids().iter().zip(p.labels) {
            let xy = projection.coords.row(row);
            out.write_record([id.clone(), p.nation.clone(), label.to_string(), xy[0].to_string(), xy[1].to_string()])
                .map_err(at(Stage::Project))?;
            row += 1;
        }
    }
    let bytes = out.into_inner().map_err(at(Stage::Project))?;
    String::from_utf8(bytes).map_err(at(Stage::Project))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub record: Option<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub n_documents: usize,
    pub skipped_empty: usize,
    pub malformed_rows: usize,
    /// Documents with no tokens left after stopword removal.
    pub empty_documents: usize,
    pub embedding_source: String,
    pub embedding_dim: usize,
    pub sweep_cells: usize,
    pub sweep_failures: BTreeMap<String, usize>,
    pub selections: BTreeMap<String, SelectionSummary>,
    /// Output files relative to the output directory, with their SHA-256.
    pub files: BTreeMap<String, String>,
}

/// Output names for one selection rule, relative to the output directory.
pub fn rule_files(rule: &str) -> [String; 4] {
    ["labels.csv", "topics.json", "coherence.json", "ctc.json"].map(|f| format!("{rule}/{f}"))
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(at(Stage::Report))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Runs every stage and writes all artifacts plus `manifest.json` under
/// `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| PipelineError::Config(format!("{}: {e}", out.display())))?;
    let stopwords = config.stopwords()?;

    let loaded = ingest(config)?;
    tracing::info!(documents = loaded.corpus.len(), "ingested");
    if loaded.corpus.is_empty() {
        return Err(at(Stage::Ingest)("corpus has no documents"));
    }
    let corpus = loaded.corpus.preprocessed();
    corpus.save_jsonl(&out.join("corpus.jsonl")).map_err(at(Stage::Preprocess))?;
    let tokens = corpus.tokenize(&stopwords);
    let empty_documents = tokens.iter().filter(|t| t.is_empty()).count();

    let (embeddings, embedding_source) = embed(config, &corpus)?;
    tracing::info!(rows = embeddings.n_rows(), dim = embeddings.dim(), "embeddings ready");
    let data = embeddings.to_array();

    let grid = GridSpec {
        seed: config.seed,
        ..config.sweep.clone()
    };
    let records = run_grid(data.view(), &grid).map_err(at(Stage::Sweep))?;
    persist_records(&records, &out.join("records.jsonl")).map_err(at(Stage::Sweep))?;
    tracing::info!(cells = records.len(), "sweep done");

    let top = select_top(&records).map_err(at(Stage::Select))?.clone();
    let mut selections = BTreeMap::new();
    let mut chosen = vec![("top", top.clone())];
    selections.insert(
        "top".to_string(),
        SelectionSummary {
            record: Some(top),
            error: None,
        },
    );
    match select_diverse(&records) {
        Ok(r) => {
            chosen.push(("diverse", r.clone()));
            selections.insert(
                "diverse".to_string(),
                SelectionSummary {
                    record: Some(r.clone()),
                    error: None,
                },
            );
        }
        Err(e) => {
            tracing::warn!("diverse selection: {e}");
            selections.insert(
                "diverse".to_string(),
                SelectionSummary {
                    record: None,
                    error: Some(e.to_string()),
                },
            );
        }
    }
    write_json(&out.join("selection.json"), &selections, Stage::Select)?;

    let ids = corpus.ids();
    for (rule, record) in &chosen {
        let dir = out.join(rule);
        fs::create_dir_all(&dir).map_err(at(Stage::Cluster))?;
        let [labels_file, topics_file, coherence_file, ctc_file] = rule_files(rule).map(|f| out.join(f));

        let labeling = cluster_cell(&data, &record.params, record.seed)?;
        write_labels(&labels_file, &ids, &labeling)?;

        let model = extract_topics(
            &config.topics,
            &tokens,
            &labeling.labels,
            Some(&embeddings),
            config.embedding.provider.as_ref(),
        )?;
        write_json(&topics_file, &model, Stage::Topics)?;

        let coherence: CoherenceReport =
            coherence_report(&model, &tokens, &config.coherence.settings()).map_err(at(Stage::Coherence))?;
        write_json(&coherence_file, &coherence, Stage::Coherence)?;

        if let Some(ctc) = &config.ctc {
            let recorder = RecordingTransport::new(ctc.transport()?);
            let scores: CtcScores = ctc_report(&model, &recorder, &ctc.settings, config.seed).map_err(at(Stage::Ctc))?;
            write_json(&ctc_file, &scores, Stage::Ctc)?;
            recorder.save(&dir.join("ctc_replay.jsonl")).map_err(at(Stage::Ctc))?;
        }
        tracing::info!(rule, clusters = labeling.n_clusters(), "rule done");
    }

    let mut files = BTreeMap::new();
    let mut names = vec!["corpus.jsonl".to_string(), "records.jsonl".to_string(), "selection.json".to_string()];
    if config.embedding.path.is_none() {
        names.push("embeddings.emb".into());
        names.push("embeddings.ids.txt".into());
    }
    for (rule, _) in &chosen {
        names.extend(rule_files(rule));
        names.push(format!("{rule}/ctc_replay.jsonl"));
    }
    for name in names {
        let path = out.join(&name);
        if path.is_file() {
            files.insert(name, sha256_file(&path)?);
        }
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        n_documents: corpus.len(),
        skipped_empty: loaded.skipped_empty,
        malformed_rows: loaded.malformed.len(),
        empty_documents,
        embedding_source,
        embedding_dim: embeddings.dim(),
        sweep_cells: records.len(),
        sweep_failures: crate::sweep::failure_summary(&records),
        selections,
        files,
    };
    write_json(&out.join("manifest.json"), &manifest, Stage::Report)?;
    Ok(manifest)
}

fn describe(record: &RunRecord) -> String {
    let p = &record.params;
    format!(
        "n_neighbors={} min_dist={} n_components={} min_samples={} min_cluster_size={} method={} | dbcv={} clusters={}{}",
        p.n_neighbors,
        p.min_dist,
        p.n_components,
        p.min_samples,
        p.min_cluster_size,
        p.cluster_selection_method,
        record.dbcv.map_or("n/a".to_string(), |d| format!("{d:.3}")),
        record.reported_clusters(),
        if record.has_outlier { " (O)" } else { "" }
    )
}

/// Plain-text summary of a finished run directory.
pub fn render_report(out_dir: &Path) -> Result<String, PipelineError> {
    let manifest: Manifest = read_json(&out_dir.join("manifest.json"), Stage::Report)?;
    let mut text = format!(
        "{} {} | seed {} | {} documents ({} empty after stopwords) | embeddings: {} (dim {})\n",
        manifest.tool,
        manifest.version,
        manifest.seed,
        manifest.n_documents,
        manifest.empty_documents,
        manifest.embedding_source,
        manifest.embedding_dim
    );
    text += &format!("sweep: {} cells", manifest.sweep_cells);
    for (stage, n) in &manifest.sweep_failures {
        text += &format!(", {n} failed at {stage}");
    }
    text.push('\n');
    for (rule, summary) in &manifest.selections {
        text.push('\n');
        match (&summary.record, &summary.error) {
            (Some(r), _) => text += &format!("[{rule}] {}\n", describe(r)),
            (None, e) => {
                text += &format!("[{rule}] no selection: {}\n", e.as_deref().unwrap_or("unknown"));
                continue;
            }
        }
        let [_, topics_file, coherence_file, ctc_file] = rule_files(rule).map(|f| out_dir.join(f));
        let model: TopicModel = read_json(&topics_file, Stage::Report)?;
        for (topic, words) in &model.topics {
            let list: Vec<&str> = words.iter().map(|w| w.word.as_str()).collect();
            let size = model.cluster_sizes.get(topic).copied().unwrap_or(0);
            text += &format!("  topic {topic:>3} ({size:>4} docs): {}\n", list.join(", "));
        }
        let coherence: CoherenceReport = read_json(&coherence_file, Stage::Report)?;
        let means: Vec<String> = coherence.mean.iter().map(|(m, v)| format!("{m}={v:.4}")).collect();
        text += &format!("  coherence: {}\n", means.join(" "));
        if ctc_file.is_file() {
            let ctc: CtcScores = read_json(&ctc_file, Stage::Report)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            text += &format!(
                "  ctc: intrusion={} rating={} (valid {}/{})\n",
                fmt(ctc.intrusion),
                fmt(ctc.rating),
                ctc.valid_intrusion,
                ctc.valid_rating
            );
        }
    }
    Ok(text)
}
