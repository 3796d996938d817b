//! Precompute stage: every neighbor graph and metric column for a bundle,
//! persisted under the dataset's cache directories.
//!
//! A run is planned first (which k values are feasible, which files hold
//! which column), then only the planned entries whose cache is missing or
//! stale are computed. Each cached file carries a digest of its inputs, so a
//! rerun on unchanged inputs reads nothing but descriptors and writes
//! nothing.

pub mod cache;
mod status;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loader::Dataset;
use crate::manifest::{CachePaths, ColumnEntry, GraphEntry, Manifest, Precomputed, MANIFEST_FILE};
use crate::metrics::{
    self, preservation_params, stability_params, AnchorSet, TripletSampler, DEFAULT_MAX_ANCHORS,
    DEFAULT_TRIPLETS_PER_POINT,
};
use crate::model::{DatasetBundle, MetricColumn, MetricName, Params, HD_SPACE};
use crate::neighbors::{
    build_approx_knn, build_exact_knn, Exactness, GraphDescriptor, NeighborGraph,
    EXACT_FALLBACK_MAX_N,
};

use cache::{
    column_state, digest_matrix, digest_parts, graph_state, CacheState, MetricDescriptorKey,
    WriteLock,
};

pub use status::{status, status_with, ColumnStatus, GraphStatus, StatusReport};

pub const DEFAULT_STABILITY_K: usize = 50;
pub const DEFAULT_RECALL_TARGET: f64 = 0.95;
/// Metric columns that describe the bundle rather than one embedding live
/// under this directory name, which no embedding can take.
pub const BUNDLE_DIR: &str = "_bundle";

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputeConfig {
    pub k_list: Vec<usize>,
    pub seed: u64,
    pub triplets_per_point: usize,
    /// `None`: `min(n - 1, 1000)`.
    pub anchor_count: Option<usize>,
    pub force: bool,
    /// Capped at `n - 1`.
    pub stability_k: usize,
    /// Only used when the HD graph is approximate.
    pub recall_target: f64,
}

impl Default for PrecomputeConfig {
    fn default() -> Self {
        Self {
            k_list: crate::manifest::DEFAULT_K_LIST.to_vec(),
            seed: crate::manifest::DEFAULT_SEED,
            triplets_per_point: DEFAULT_TRIPLETS_PER_POINT,
            anchor_count: None,
            force: false,
            stability_k: DEFAULT_STABILITY_K,
            recall_target: DEFAULT_RECALL_TARGET,
        }
    }
}

impl PrecomputeConfig {
    /// Defaults with the manifest's k list and seed.
    pub fn from_manifest(manifest: &Manifest) -> Self {
        Self {
            k_list: manifest.k_list.clone(),
            seed: manifest.seed,
            ..Self::default()
        }
    }

    pub fn kmax(&self) -> Option<usize> {
        self.k_list.iter().copied().max()
    }

    fn validate(&self) -> Result<()> {
        if self.k_list.contains(&0) {
            return Err(Error::invalid("k values must be positive"));
        }
        if self.triplets_per_point == 0 {
            return Err(Error::invalid("triplets_per_point must be positive"));
        }
        if self.stability_k == 0 {
            return Err(Error::invalid("stability k must be positive"));
        }
        if let Some(m) = self.anchor_count {
            if m < 4 {
                return Err(Error::invalid(format!(
                    "anchor_count must be at least 4, got {m}"
                )));
            }
        }
        if !(self.recall_target > 0.0 && self.recall_target <= 1.0) {
            return Err(Error::invalid(format!(
                "recall_target must be in (0, 1], got {}",
                self.recall_target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedGraph {
    pub space_id: String,
    pub k: usize,
    pub exactness: Exactness,
    /// Stem relative to the dataset root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedColumn {
    pub embedding: Option<String>,
    pub metric_name: MetricName,
    pub params: Params,
    /// Array file relative to the dataset root.
    pub path: String,
}

impl PlannedColumn {
    pub fn entry(&self) -> ColumnEntry {
        ColumnEntry {
            embedding: self.embedding.clone(),
            metric_name: self.metric_name,
            params: self.params.clone(),
            path: self.path.clone(),
        }
    }

    pub fn label(&self) -> String {
        let owner = self.embedding.as_deref().unwrap_or(BUNDLE_DIR);
        format!("{owner}/{}", file_stem(&self.path))
    }
}

fn file_stem(path: &str) -> &str {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.strip_suffix(".bin").unwrap_or(name)
}

/// Everything one run will produce, derived from the bundle shape and the
/// config alone.
#[derive(Debug, Clone)]
pub struct Plan {
    pub n: usize,
    /// Feasible k values, ascending.
    pub k_list: Vec<usize>,
    pub seed: u64,
    pub recall_target: f64,
    pub graphs: Vec<PlannedGraph>,
    pub columns: Vec<PlannedColumn>,
    pub warnings: Vec<String>,
    triplets: Option<TripletSampler>,
    anchors: Option<AnchorSet>,
    stability_k: Option<usize>,
}

impl Plan {
    pub fn new(
        bundle: &DatasetBundle,
        cache: &CachePaths,
        config: &PrecomputeConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = bundle.n();
        let names: Vec<&str> = bundle.embeddings().iter().map(|e| e.name()).collect();
        let mut warnings = Vec::new();

        let mut requested = config.k_list.clone();
        requested.sort_unstable();
        requested.dedup();
        let mut k_list = Vec::new();
        for k in requested {
            if k < n {
                k_list.push(k);
            } else {
                warnings.push(format!(
                    "k={k} skipped: needs at least {} points, dataset has {n}",
                    k + 1
                ));
            }
        }
        let stability_k = (names.len() >= 2).then(|| config.stability_k.min(n - 1));
        let graph_k = k_list.iter().copied().chain(stability_k).max();

        let triplets = if n < 3 {
            warnings.push(format!(
                "triplet accuracy skipped: needs at least 3 points, dataset has {n}"
            ));
            None
        } else if TripletSampler::pairs_per_point(n) <= config.triplets_per_point {
            Some(TripletSampler::exhaustive())
        } else {
            Some(TripletSampler::sampled(
                config.seed,
                config.triplets_per_point,
            ))
        };
        let anchors = if n < 4 {
            warnings.push(format!(
                "distance rank correlation skipped: needs at least 4 points, dataset has {n}"
            ));
            None
        } else {
            let m = config
                .anchor_count
                .unwrap_or((n - 1).min(DEFAULT_MAX_ANCHORS));
            Some(AnchorSet::sample(n, m.min(n), config.seed)?)
        };

        let hd_exactness = if n > EXACT_FALLBACK_MAX_N {
            Exactness::Approximate
        } else {
            Exactness::Exact
        };
        let neighbors = cache.neighbors.trim_end_matches('/');
        let metrics_dir = cache.metrics.trim_end_matches('/');
        let mut graphs = Vec::new();
        if let Some(k) = graph_k {
            graphs.push(PlannedGraph {
                space_id: HD_SPACE.into(),
                k,
                exactness: hd_exactness,
                path: format!("{neighbors}/hd.k{k}"),
            });
            for name in &names {
                graphs.push(PlannedGraph {
                    space_id: (*name).into(),
                    k,
                    exactness: Exactness::Exact,
                    path: format!("{neighbors}/ld.{name}.k{k}"),
                });
            }
        }

        let mut columns = Vec::new();
        for name in &names {
            let col = |metric_name: MetricName, params: Params, file: String| PlannedColumn {
                embedding: Some((*name).into()),
                metric_name,
                params,
                path: format!("{metrics_dir}/{name}/{file}.bin"),
            };
            for &k in &k_list {
                columns.push(col(
                    MetricName::NeighborhoodPreservation,
                    preservation_params(k, hd_exactness, Exactness::Exact),
                    format!("neighborhood_preservation.k{k}"),
                ));
            }
            if let Some(t) = &triplets {
                let file = match t.mode {
                    metrics::TripletMode::Exhaustive => "triplet_accuracy.exhaustive".to_owned(),
                    metrics::TripletMode::Sampled => {
                        format!("triplet_accuracy.s{}.t{}", t.seed, t.triplets_per_point)
                    }
                };
                columns.push(col(MetricName::TripletAccuracy, t.params(), file));
            }
            if let Some(a) = &anchors {
                columns.push(col(
                    MetricName::DistanceRankCorrelation,
                    a.params(),
                    format!("distance_rank_correlation.a{}.s{}", a.len(), a.seed()),
                ));
            }
        }
        if let Some(k) = stability_k {
            columns.push(PlannedColumn {
                embedding: None,
                metric_name: MetricName::PointStability,
                params: stability_params(k, names.len()),
                path: format!("{metrics_dir}/{BUNDLE_DIR}/point_stability.k{k}.bin"),
            });
        }

        Ok(Self {
            n,
            k_list,
            seed: config.seed,
            recall_target: config.recall_target,
            graphs,
            columns,
            warnings,
            triplets,
            anchors,
            stability_k,
        })
    }

    pub fn graph_k(&self) -> Option<usize> {
        self.graphs.first().map(|g| g.k)
    }

    /// Manifest record of this plan.
    pub fn precomputed(&self) -> Precomputed {
        Precomputed {
            graphs: self
                .graphs
                .iter()
                .map(|g| GraphEntry {
                    space_id: g.space_id.clone(),
                    k: g.k,
                    exactness: g.exactness,
                    path: g.path.clone(),
                })
                .collect(),
            columns: self.columns.iter().map(PlannedColumn::entry).collect(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Input digests for every planned graph and column. Changing the points,
/// coordinates or graph-shaping parameters changes the digest.
#[derive(Debug, Clone)]
struct Digests {
    graphs: Vec<GraphDescriptor>,
    columns: Vec<String>,
}

impl Digests {
    fn new(bundle: &DatasetBundle, plan: &Plan) -> Self {
        let hd = digest_matrix(bundle.hd_points());
        let emb: Vec<String> = bundle
            .embeddings()
            .iter()
            .map(|e| digest_matrix(e.coords()))
            .collect();
        let graphs: Vec<GraphDescriptor> = plan
            .graphs
            .iter()
            .enumerate()
            .map(|(g, pg)| {
                let data = if g == 0 { &hd } else { &emb[g - 1] };
                let k = pg.k.to_string();
                let input_digest = match pg.exactness {
                    Exactness::Exact => digest_parts(["graph", data, &k, "exact"]),
                    Exactness::Approximate => digest_parts([
                        "graph",
                        data.as_str(),
                        &k,
                        "approximate",
                        &plan.seed.to_string(),
                        &plan.recall_target.to_string(),
                    ]),
                };
                GraphDescriptor {
                    space_id: pg.space_id.clone(),
                    k: pg.k,
                    exactness: pg.exactness,
                    seed: plan.seed,
                    input_digest,
                }
            })
            .collect();
        let emb_index = |name: &str| bundle.embeddings().iter().position(|e| e.name() == name);
        let columns = plan
            .columns
            .iter()
            .map(|c| {
                let metric = c.metric_name.as_str();
                match (c.metric_name, c.embedding.as_deref().and_then(emb_index)) {
                    (MetricName::NeighborhoodPreservation, Some(e)) => {
                        digest_parts([metric, &graphs[0].input_digest, &graphs[e + 1].input_digest])
                    }
                    (MetricName::PointStability, _) => digest_parts(
                        std::iter::once(metric)
                            .chain(graphs[1..].iter().map(|g| g.input_digest.as_str())),
                    ),
                    (_, Some(e)) => digest_parts([metric, &hd, &emb[e]]),
                    (_, None) => digest_parts([metric, &hd]),
                }
            })
            .collect();
        Self { graphs, columns }
    }
}

/// Wall time per stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StageTimes {
    pub hd_knn: f64,
    pub ld_knn: f64,
    pub preservation: f64,
    pub triplets: f64,
    pub rank_correlation: f64,
    pub stability: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.hd_knn
            + self.ld_knn
            + self.preservation
            + self.triplets
            + self.rank_correlation
            + self.stability
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

struct Store<'a> {
    root: &'a Path,
    force: bool,
}

struct RunOutput {
    /// Indexed like `Plan::columns`; `None` for reused cache entries.
    columns: Vec<Option<MetricColumn>>,
    graphs_built: Vec<String>,
    times: StageTimes,
}

fn run(
    bundle: &DatasetBundle,
    plan: &Plan,
    digests: &Digests,
    store: Option<&Store<'_>>,
) -> Result<RunOutput> {
    let n = plan.n;
    let todo: Vec<bool> = plan
        .columns
        .iter()
        .zip(&digests.columns)
        .map(|(c, digest)| match store {
            None => true,
            Some(s) => {
                s.force
                    || column_state(
                        &s.root.join(&c.path),
                        &MetricDescriptorKey {
                            metric_name: c.metric_name,
                            params: &c.params,
                            input_digest: digest,
                        },
                        n,
                    ) != CacheState::Present
            }
        })
        .collect();
    let pending = |metric: MetricName| {
        plan.columns
            .iter()
            .zip(&todo)
            .enumerate()
            .filter(move |(_, (c, &t))| t && c.metric_name == metric)
            .map(|(ci, (c, _))| (ci, c))
    };
    let embeddings = bundle.embeddings();
    let emb_index = |name: &Option<String>| {
        let name = name.as_deref().expect("per-embedding column");
        embeddings
            .iter()
            .position(|e| e.name() == name)
            .expect("planned embedding exists")
    };

    let mut times = StageTimes::default();
    let mut graphs_built = Vec::new();
    let mut columns: Vec<Option<MetricColumn>> = vec![None; plan.columns.len()];

    // graphs: built when missing, loaded only when a pending column reads them
    let stability_pending = pending(MetricName::PointStability).next().is_some();
    let mut graphs: Vec<Option<NeighborGraph>> = Vec::with_capacity(plan.graphs.len());
    for (g, pg) in plan.graphs.iter().enumerate() {
        let needed = if g == 0 {
            pending(MetricName::NeighborhoodPreservation)
                .next()
                .is_some()
        } else {
            stability_pending
                || pending(MetricName::NeighborhoodPreservation)
                    .any(|(_, c)| emb_index(&c.embedding) == g - 1)
        };
        let expected = &digests.graphs[g];
        let slot = if g == 0 {
            &mut times.hd_knn
        } else {
            &mut times.ld_knn
        };
        let graph = match store {
            Some(s)
                if !s.force
                    && graph_state(&s.root.join(&pg.path), expected, n) == CacheState::Present =>
            {
                if needed {
                    Some(NeighborGraph::load(&s.root.join(&pg.path))?.0)
                } else {
                    None
                }
            }
            _ if store.is_none() && !needed => None,
            _ => {
                let graph = timed(slot, || {
                    if g == 0 {
                        match pg.exactness {
                            Exactness::Exact => build_exact_knn(bundle.hd_points(), pg.k),
                            Exactness::Approximate => build_approx_knn(
                                bundle.hd_points(),
                                pg.k,
                                plan.recall_target,
                                plan.seed,
                            ),
                        }
                    } else {
                        build_exact_knn(embeddings[g - 1].coords(), pg.k)
                    }
                })?
                .with_space_id(pg.space_id.clone());
                if let Some(s) = store {
                    graph.save(&s.root.join(&pg.path), expected)?;
                }
                tracing::info!(graph = %pg.path, "built neighbor graph");
                graphs_built.push(pg.path.clone());
                Some(graph)
            }
        };
        graphs.push(graph);
    }

    let mut finish = |ci: usize, column: MetricColumn| -> Result<()> {
        let planned = &plan.columns[ci];
        if column.params != planned.params {
            return Err(Error::invalid(format!(
                "internal: {} computed with params {:?}, planned {:?}",
                planned.label(),
                column.params,
                planned.params
            )));
        }
        if let Some(s) = store {
            cache::write_column(&s.root.join(&planned.path), &column, &digests.columns[ci])?;
        }
        tracing::info!(column = %planned.label(), "computed");
        columns[ci] = Some(column);
        Ok(())
    };

    let preservation: Vec<(usize, usize, usize)> = pending(MetricName::NeighborhoodPreservation)
        .map(|(ci, c)| {
            (
                ci,
                emb_index(&c.embedding),
                c.params["k"].as_u64().expect("k param") as usize,
            )
        })
        .collect();
    for (ci, e, k) in preservation {
        let hd = graphs[0].as_ref().expect("hd graph loaded");
        let ld = graphs[e + 1].as_ref().expect("embedding graph loaded");
        let column = timed(&mut times.preservation, || {
            metrics::neighborhood_preservation(hd, ld, k)
        })?;
        finish(ci, column)?;
    }

    let batch = |metric: MetricName| -> (Vec<usize>, Vec<usize>) {
        pending(metric)
            .map(|(ci, c)| (ci, emb_index(&c.embedding)))
            .unzip()
    };
    let (cis, es) = batch(MetricName::TripletAccuracy);
    if !cis.is_empty() {
        let sampler = plan.triplets.as_ref().expect("triplets planned");
        let coords: Vec<_> = es.iter().map(|&e| embeddings[e].coords()).collect();
        let out = timed(&mut times.triplets, || {
            metrics::triplet_accuracy_many(bundle.hd_points(), &coords, sampler)
        })?;
        for (ci, column) in cis.into_iter().zip(out) {
            finish(ci, column)?;
        }
    }
    let (cis, es) = batch(MetricName::DistanceRankCorrelation);
    if !cis.is_empty() {
        let anchors = plan.anchors.as_ref().expect("anchors planned");
        let coords: Vec<_> = es.iter().map(|&e| embeddings[e].coords()).collect();
        let out = timed(&mut times.rank_correlation, || {
            metrics::distance_rank_correlation_many(bundle.hd_points(), &coords, anchors)
        })?;
        for (ci, column) in cis.into_iter().zip(out) {
            finish(ci, column)?;
        }
    }
    let stability: Vec<usize> = pending(MetricName::PointStability)
        .map(|(ci, _)| ci)
        .collect();
    for ci in stability {
        let k = plan.stability_k.expect("stability planned");
        let ld: Vec<&NeighborGraph> = graphs[1..]
            .iter()
            .map(|g| g.as_ref().expect("embedding graph loaded"))
            .collect();
        let column = timed(&mut times.stability, || metrics::point_stability(&ld, k))?;
        finish(ci, column)?;
    }

    Ok(RunOutput {
        columns,
        graphs_built,
        times,
    })
}

/// Outcome of a cached precompute run.
#[derive(Debug, Clone)]
pub struct PrecomputeReport {
    pub manifest: Manifest,
    /// Cache files (relative paths) written by this run.
    pub computed: Vec<String>,
    pub reused: Vec<String>,
    pub graphs_built: Vec<String>,
    pub manifest_written: bool,
    pub times: StageTimes,
    pub warnings: Vec<String>,
}

/// Builds every planned graph and column that is not already cached,
/// persists them and records them in the manifest. Holds the dataset write
/// lock for the duration.
pub fn precompute(dataset: &Dataset, config: &PrecomputeConfig) -> Result<PrecomputeReport> {
    let bundle = &dataset.bundle;
    let plan = Plan::new(bundle, &dataset.manifest.cache, config)?;
    let root = dataset.root.as_path();
    let _lock = WriteLock::acquire(&root.join(&dataset.manifest.cache.metrics))?;
    for w in &plan.warnings {
        tracing::warn!("{w}");
    }
    let digests = Digests::new(bundle, &plan);
    let store = Store {
        root,
        force: config.force,
    };
    let out = run(bundle, &plan, &digests, Some(&store))?;

    let mut manifest = dataset.manifest.clone();
    let mut k_list = config.k_list.clone();
    k_list.sort_unstable();
    k_list.dedup();
    manifest.k_list = k_list;
    manifest.seed = config.seed;
    manifest.precomputed = plan.precomputed();
    let path = root.join(MANIFEST_FILE);
    let bytes = manifest.to_bytes();
    let manifest_written = match fs::read(&path) {
        Ok(current) if current == bytes => false,
        _ => {
            manifest.save(root)?;
            true
        }
    };

    let (computed, reused) = plan.columns.iter().zip(&out.columns).fold(
        (Vec::new(), Vec::new()),
        |(mut c, mut r), (pc, col)| {
            if col.is_some() { &mut c } else { &mut r }.push(pc.path.clone());
            (c, r)
        },
    );
    Ok(PrecomputeReport {
        manifest,
        computed,
        reused,
        graphs_built: out.graphs_built,
        manifest_written,
        times: out.times,
        warnings: plan.warnings,
    })
}

/// Result of an in-memory run: every planned column, in plan order.
#[derive(Debug, Clone)]
pub struct Computed {
    pub plan: Plan,
    pub columns: Vec<MetricColumn>,
    pub times: StageTimes,
}

impl Computed {
    pub fn columns_for<'a>(
        &'a self,
        embedding: Option<&'a str>,
        metric: MetricName,
    ) -> impl Iterator<Item = &'a MetricColumn> + 'a {
        self.plan
            .columns
            .iter()
            .zip(&self.columns)
            .filter(move |(p, _)| p.embedding.as_deref() == embedding && p.metric_name == metric)
            .map(|(_, c)| c)
    }
}

/// The full precompute without touching disk.
pub fn compute_in_memory(bundle: &DatasetBundle, config: &PrecomputeConfig) -> Result<Computed> {
    let plan = Plan::new(bundle, &CachePaths::default(), config)?;
    let digests = Digests::new(bundle, &plan);
    let out = run(bundle, &plan, &digests, None)?;
    let columns = out
        .columns
        .into_iter()
        .map(|c| c.expect("in-memory run computes all"))
        .collect();
    Ok(Computed {
        plan,
        columns,
        times: out.times,
    })
}
