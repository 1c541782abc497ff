//! Grid search over UMAP and HDBSCAN settings scored by DBCV, with the two
//! selection rules: best score overall, and best score among clusterings
//! with at least three non-noise clusters.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dbcv::dbcv_score;
use crate::distance::Metric;
use crate::hdbscan::{hdbscan_cluster, HdbscanParams, Labeling, SelectionMethod};
use crate::umap::{umap_reduce, Projection, UmapParams};

/// Minimum non-noise clusters for the diverse selection.
pub const DIVERSE_MIN_CLUSTERS: usize = 3;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("no record has a DBCV score")]
    NoSelectable,
    #[error("no record with at least {min} clusters besides the top one{nearest}")]
    EmptySelection { min: usize, nearest: String },
    #[error("{path} line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which space DBCV is computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbcvSpace {
    /// The UMAP output the clustering ran on (Euclidean).
    #[default]
    Reduced,
    /// The input embeddings, under the UMAP metric.
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n_neighbors: Vec<usize>,
    pub min_dist: Vec<f64>,
    pub n_components: Vec<usize>,
    pub min_samples: Vec<usize>,
    pub min_cluster_size: Vec<usize>,
    pub selection_methods: Vec<SelectionMethod>,
    pub seed: u64,
    pub metric: Metric,
    pub n_epochs: usize,
    pub dbcv_space: DbcvSpace,
    /// Store wall-clock time per cell. Off by default so that record files
    /// are reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_neighbors: vec![5, 20, 50, 100, 200],
            min_dist: vec![0.0, 0.09],
            n_components: vec![2, 20, 100, 200],
            min_samples: vec![5, 10],
            min_cluster_size: vec![10, 15, 20, 30],
            selection_methods: vec![SelectionMethod::Eom],
            seed: 42,
            metric: Metric::Cosine,
            n_epochs: UmapParams::default().n_epochs,
            dbcv_space: DbcvSpace::Reduced,
            record_timing: false,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        let empty = [
            ("n_neighbors", self.n_neighbors.is_empty()),
            ("min_dist", self.min_dist.is_empty()),
            ("n_components", self.n_components.is_empty()),
            ("min_samples", self.min_samples.is_empty()),
            ("min_cluster_size", self.min_cluster_size.is_empty()),
            ("selection_methods", self.selection_methods.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(SweepError::Grid(format!("{name} has no values")));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_neighbors.len()
            * self.min_dist.len()
            * self.n_components.len()
            * self.min_samples.len()
            * self.min_cluster_size.len()
            * self.selection_methods.len()
    }

    fn umap_settings(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::new();
        for &k in &self.n_neighbors {
            for &d in &self.min_dist {
                for &c in &self.n_components {
                    out.push((k, d, c));
                }
            }
        }
        out
    }

    fn hdbscan_settings(&self) -> Vec<HdbscanParams> {
        let mut out = Vec::new();
        for &ms in &self.min_samples {
            for &mcs in &self.min_cluster_size {
                for &method in &self.selection_methods {
                    out.push(HdbscanParams {
                        min_cluster_size: mcs,
                        min_samples: ms,
                        cluster_selection_method: method,
                    });
                }
            }
        }
        out
    }
}

/// Every setting that shapes one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_components: usize,
    pub metric: Metric,
    pub n_epochs: usize,
    pub min_samples: usize,
    pub min_cluster_size: usize,
    pub cluster_selection_method: SelectionMethod,
}

impl CellParams {
    pub fn umap(&self, seed: u64) -> UmapParams {
        UmapParams {
            n_neighbors: self.n_neighbors,
            n_components: self.n_components,
            min_dist: self.min_dist,
            metric: self.metric,
            n_epochs: self.n_epochs,
            seed,
            ..UmapParams::default()
        }
    }

    pub fn hdbscan(&self) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            cluster_selection_method: self.cluster_selection_method,
        }
    }

    /// Lexicographic order over the fields in declaration order.
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.n_neighbors
            .cmp(&other.n_neighbors)
            .then(self.min_dist.total_cmp(&other.min_dist))
            .then(self.n_components.cmp(&other.n_components))
            .then(self.metric.to_string().cmp(&other.metric.to_string()))
            .then(self.n_epochs.cmp(&other.n_epochs))
            .then(self.min_samples.cmp(&other.min_samples))
            .then(self.min_cluster_size.cmp(&other.min_cluster_size))
            .then(self.cluster_selection_method.cmp(&other.cluster_selection_method))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub params: CellParams,
    /// `None` when the cell could not be scored; `failure` says why.
    pub dbcv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub n_clusters: usize,
    pub has_outlier: bool,
    pub n_noise: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

impl RunRecord {
    /// Table-style cluster count: non-noise clusters plus one for the
    /// outlier group when present.
    pub fn reported_clusters(&self) -> usize {
        self.n_clusters + self.has_outlier as usize
    }
}

/// Seed for one UMAP setting, derived from the grid seed and the UMAP
/// parameters only. Adding values to the grid never changes existing cells,
/// and cells that differ only in HDBSCAN settings share one projection.
pub fn cell_seed(grid_seed: u64, n_neighbors: usize, min_dist: f64, n_components: usize, metric: Metric, n_epochs: usize) -> u64 {
    let key = format!(
        "{grid_seed}|{n_neighbors}|{:016x}|{n_components}|{metric}|{n_epochs}",
        min_dist.to_bits()
    );
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn census(labeling: &Labeling) -> (usize, bool, usize) {
    let n_noise = labeling.n_noise();
    (labeling.n_clusters(), n_noise > 0, n_noise)
}

/// Scores one labeling of `projection`.
fn score_cell(
    data: ArrayView2<'_, f64>,
    projection: &Projection,
    labeling: &Labeling,
    grid: &GridSpec,
) -> Result<f64, String> {
    let report = match grid.dbcv_space {
        DbcvSpace::Reduced => dbcv_score(projection.coords.view(), &labeling.labels, Metric::Euclidean),
        DbcvSpace::Original => dbcv_score(data, &labeling.labels, grid.metric),
    };
    report.map(|r| r.score).map_err(|e| e.to_string())
}

/// Evaluates every cell of `grid` on the rows of `data`. Cells that cannot
/// be projected, clustered or scored are kept with a failure reason.
/// Records come back sorted by parameters.
pub fn run_grid(data: ArrayView2<'_, f64>, grid: &GridSpec) -> Result<Vec<RunRecord>, SweepError> {
    grid.validate()?;
    let hdb = grid.hdbscan_settings();
    let mut records = Vec::with_capacity(grid.n_cells());
    for (k, d, c) in grid.umap_settings() {
        let seed = cell_seed(grid.seed, k, d, c, grid.metric, grid.n_epochs);
        let base = CellParams {
            n_neighbors: k,
            min_dist: d,
            n_components: c,
            metric: grid.metric,
            n_epochs: grid.n_epochs,
            min_samples: 0,
            min_cluster_size: 0,
            cluster_selection_method: SelectionMethod::Eom,
        };
        let started = Instant::now();
        let projection = umap_reduce(data, &base.umap(seed));
        let umap_ms = started.elapsed().as_millis() as u64;
        tracing::info!(n_neighbors = k, min_dist = d, n_components = c, ok = projection.is_ok(), "umap");

        for h in &hdb {
            let params = CellParams {
                min_samples: h.min_samples,
                min_cluster_size: h.min_cluster_size,
                cluster_selection_method: h.cluster_selection_method,
                ..base.clone()
            };
            let started = Instant::now();
            let mut record = RunRecord {
                params,
                dbcv: None,
                failure: None,
                n_clusters: 0,
                has_outlier: false,
                n_noise: 0,
                seed,
                elapsed_ms: None,
            };
            match &projection {
                Err(e) => record.failure = Some(format!("umap: {e}")),
                Ok(p) => match hdbscan_cluster(p.coords.view(), h, Metric::Euclidean) {
                    Err(e) => record.failure = Some(format!("hdbscan: {e}")),
                    Ok(labeling) => {
                        (record.n_clusters, record.has_outlier, record.n_noise) = census(&labeling);
                        match score_cell(data, p, &labeling, grid) {
                            Ok(score) => record.dbcv = Some(score),
                            Err(e) => record.failure = Some(format!("dbcv: {e}")),
                        }
                    }
                },
            }
            if grid.record_timing {
                record.elapsed_ms = Some(umap_ms + started.elapsed().as_millis() as u64);
            }
            records.push(record);
        }
    }
    records.sort_by(|a, b| a.params.cmp_key(&b.params).then(a.seed.cmp(&b.seed)));
    Ok(records)
}

/// Higher score first, then fewer clusters, then smaller parameters.
fn better(a: &RunRecord, b: &RunRecord) -> Ordering {
    let (sa, sb) = (a.dbcv.unwrap_or(f64::NEG_INFINITY), b.dbcv.unwrap_or(f64::NEG_INFINITY));
    sb.total_cmp(&sa)
        .then(a.n_clusters.cmp(&b.n_clusters))
        .then(a.params.cmp_key(&b.params))
}

/// The record with the highest DBCV.
pub fn select_top(records: &[RunRecord]) -> Result<&RunRecord, SweepError> {
    records
        .iter()
        .filter(|r| r.dbcv.is_some())
        .min_by(|a, b| better(a, b))
        .ok_or(SweepError::NoSelectable)
}

/// The highest-DBCV record with at least three non-noise clusters, other
/// than the record [`select_top`] picks.
pub fn select_diverse(records: &[RunRecord]) -> Result<&RunRecord, SweepError> {
    let top = select_top(records)?;
    let pick = records
        .iter()
        .filter(|r| r.dbcv.is_some() && r.n_clusters >= DIVERSE_MIN_CLUSTERS && !std::ptr::eq(*r, top))
        .min_by(|a, b| better(a, b));
    pick.ok_or_else(|| {
        let nearest = records
            .iter()
            .filter(|r| r.dbcv.is_some() && !std::ptr::eq(*r, top))
            .max_by(|a, b| a.n_clusters.cmp(&b.n_clusters).then(better(b, a)))
            .map(|r| {
                format!(
                    "; nearest miss has {} clusters at dbcv {:.3}",
                    r.n_clusters,
                    r.dbcv.unwrap_or(f64::NAN)
                )
            })
            .unwrap_or_default();
        SweepError::EmptySelection {
            min: DIVERSE_MIN_CLUSTERS,
            nearest,
        }
    })
}

pub fn persist_records(records: &[RunRecord], path: &Path) -> Result<(), SweepError> {
    let mut out = fs::File::create(path)?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("records serialize"))?;
    }
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, SweepError> {
    let file = fs::File::open(path)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| SweepError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Concatenates record files, sorts by parameters and drops exact
/// duplicates.
pub fn merge_records(paths: &[&Path]) -> Result<Vec<RunRecord>, SweepError> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_records(p)?);
    }
    all.sort_by(|a, b| a.params.cmp_key(&b.params).then(a.seed.cmp(&b.seed)));
    all.dedup();
    Ok(all)
}

/// Counts of failure reasons, for reporting.
pub fn failure_summary(records: &[RunRecord]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        if let Some(f) = &r.failure {
            let stage = f.split(':').next().unwrap_or("").to_string();
            *out.entry(stage).or_insert(0) += 1;
        }
    }
    out
}
