//! File-based orchestration: `gen` writes datasets, `train` writes one result
//! file per (dataset, space, architecture), `analyze` turns results into
//! verdicts and reports.
//!
//! Output layout under the study's `out_dir`:
//!
//! ```text
//! manifest.csv  kg_summary.csv  datasets/<name>.tsv  spaces/random.vec
//! results/<dataset>/<space>.<arch>.csv  train_failures.csv
//! analysis/{baseline.csv, verdicts.csv, aggregate.csv, report.txt, unanalyzable.txt}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{load_embeddings, make_random_space, seed_vocabulary, EmbeddingSpace, KindRules};
use crate::error::{Error, Result};
use crate::forge::{self, ForgeConfig, ManifestRow, PairType, RelationDataset};
use crate::kg::{self, KnowledgeGraph, NodeKind};
use crate::probe::{self, ArchKind, ExperimentResult, RunMetrics, TrainingConfig};
use crate::seed::derive_seed;
use crate::verdict::{self, BaselineRange, Metric, Significance};

pub const RANDOM_SPACE: &str = "random";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceEntry {
    pub name: String,
    /// Required for real spaces; a random space without a path is synthesized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "all_kinds")]
    pub covers: Vec<NodeKind>,
    #[serde(default)]
    pub is_random: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_types: Option<Vec<PairType>>,
    #[serde(default)]
    pub unary: bool,
}

/// Optional overrides of [`TrainingConfig`] defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    /// `[[max_positives, epochs], ...]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_tiers: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archs: Option<Vec<ArchKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau_patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_lr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kg_path: PathBuf,
    #[serde(default = "default_kg_name")]
    pub kg_name: String,
    pub spaces: Vec<SpaceEntry>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_random_sizes")]
    pub random_sizes: Vec<usize>,
    #[serde(default = "default_random_pair_type")]
    pub random_pair_type: PairType,
    /// Dimension of a synthesized random space; defaults to the first real
    /// space's dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_dim: Option<usize>,
    #[serde(default = "default_min_total")]
    pub min_total: usize,
    #[serde(default = "default_pair_types")]
    pub default_pair_types: Vec<PairType>,
    #[serde(default)]
    pub relations: BTreeMap<String, RelationEntry>,
    #[serde(default)]
    pub training: TrainingOverrides,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn all_kinds() -> Vec<NodeKind> {
    NodeKind::ALL.to_vec()
}

fn default_kg_name() -> String {
    "kg".into()
}

fn default_random_sizes() -> Vec<usize> {
    ForgeConfig::default().random_sizes
}

fn default_random_pair_type() -> PairType {
    PairType::WordWord
}

fn default_min_total() -> usize {
    ForgeConfig::default().min_total
}

fn default_pair_types() -> Vec<PairType> {
    PairType::BINARY.to_vec()
}

fn default_out_dir() -> PathBuf {
    "out".into()
}

impl StudyConfig {
    /// Parses a TOML study file. Relative paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: StudyConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.kg_path = resolve(&cfg.kg_path);
        cfg.out_dir = resolve(&cfg.out_dir);
        for s in &mut cfg.spaces {
            s.path = s.path.as_deref().map(resolve);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.random_sizes.is_empty() || self.random_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("random_sizes must be non-empty and strictly increasing".into());
        }
        if self.spaces.is_empty() {
            return bad("at least one embedding space is required".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.spaces {
            if s.name.is_empty() || s.name.contains(['/', '\\', '.']) {
                return bad(format!("invalid space name `{}`", s.name));
            }
            if !names.insert(s.name.as_str()) {
                return bad(format!("duplicate space name `{}`", s.name));
            }
            if !s.is_random && s.path.is_none() {
                return bad(format!("space `{}` needs a path", s.name));
            }
        }
        if self.spaces.iter().filter(|s| s.is_random).count() > 1 {
            return bad("at most one random-embedding space may be configured".into());
        }
        if !self.spaces.iter().any(|s| s.is_random) && names.contains(RANDOM_SPACE) {
            return bad(format!("space name `{RANDOM_SPACE}` is reserved for the synthesized random space"));
        }
        if self.default_pair_types.is_empty() {
            return bad("default_pair_types must not be empty".into());
        }
        self.training_config(ArchKind::NN2)?.validate()
    }

    pub fn random_space_name(&self) -> &str {
        self.spaces
            .iter()
            .find(|s| s.is_random)
            .map(|s| s.name.as_str())
            .unwrap_or(RANDOM_SPACE)
    }

    pub fn archs(&self) -> Vec<ArchKind> {
        self.training.archs.clone().unwrap_or_else(|| vec![ArchKind::NN2])
    }

    pub fn training_config(&self, arch: ArchKind) -> Result<TrainingConfig> {
        let t = &self.training;
        let mut c = TrainingConfig {
            arch,
            ..TrainingConfig::default()
        };
        if let Some(v) = t.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = t.dropout {
            c.dropout = v;
        }
        if let Some(v) = t.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = t.runs {
            c.runs = v;
        }
        if let Some(v) = &t.epoch_tiers {
            c.epoch_tiers = v.clone();
        }
        if let Some(v) = t.perturbation {
            c.perturbation = v;
        }
        if let Some(v) = t.plateau_factor {
            c.plateau.factor = v;
        }
        if let Some(v) = t.plateau_patience {
            c.plateau.patience = v;
        }
        if let Some(v) = t.min_lr {
            c.plateau.min_lr = v;
        }
        if t.archs.as_ref().is_some_and(|a| a.is_empty()) {
            return Err(Error::Config("training.archs must not be empty".into()));
        }
        c.validate()?;
        Ok(c)
    }

    fn forge_config(&self, relation_filter: Option<&glob::Pattern>) -> ForgeConfig {
        ForgeConfig {
            master_seed: self.master_seed,
            default_pair_types: self.default_pair_types.clone(),
            pair_types: self
                .relations
                .iter()
                .filter_map(|(k, v)| v.pair_types.clone().map(|p| (k.clone(), p)))
                .collect(),
            min_total: self.min_total,
            random_sizes: self.random_sizes.clone(),
            random_pair_type: self.random_pair_type,
            relation_filter: relation_filter.cloned(),
            ..ForgeConfig::default()
        }
    }
}

/// Paths of every pipeline artifact.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }

    pub fn kg_summary(&self) -> PathBuf {
        self.root.join("kg_summary.csv")
    }

    pub fn dataset(&self, name: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{name}.tsv"))
    }

    pub fn random_space(&self, name: &str) -> PathBuf {
        self.root.join("spaces").join(format!("{name}.vec"))
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn result(&self, dataset: &str, space: &str, arch: ArchKind) -> PathBuf {
        self.results_dir().join(dataset).join(format!("{space}.{arch}.csv"))
    }

    pub fn train_failures(&self) -> PathBuf {
        self.root.join("train_failures.csv")
    }

    pub fn analysis(&self, file: &str) -> PathBuf {
        self.root.join("analysis").join(file)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenSummary {
    pub manifest: Vec<ManifestRow>,
    pub seed_sizes: BTreeMap<NodeKind, usize>,
    pub random_space_written: bool,
}

fn load_kg_annotated(cfg: &StudyConfig) -> Result<KnowledgeGraph> {
    let mut g = kg::load_kg(&cfg.kg_path)?;
    let groups = cfg
        .relations
        .iter()
        .filter_map(|(k, v)| v.group.clone().map(|g| (k.clone(), g)))
        .collect();
    let unary = cfg
        .relations
        .iter()
        .filter(|(_, v)| v.unary)
        .map(|(k, _)| k.clone())
        .collect();
    g.annotate(&groups, &unary);
    Ok(g)
}

fn load_space(entry: &SpaceEntry, path: &Path) -> Result<EmbeddingSpace> {
    log::info!("loading space `{}` from {}", entry.name, path.display());
    load_embeddings(path, entry.name.clone(), &KindRules::default())
}

/// Builds every dataset, the manifest, the KG summary and (unless one is
/// configured) the random-embedding space.
pub fn cmd_gen(cfg: &StudyConfig, relation_filter: Option<&glob::Pattern>) -> Result<GenSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let graph = load_kg_annotated(cfg)?;

    let mut loaded = Vec::new();
    for entry in &cfg.spaces {
        if let Some(path) = &entry.path {
            loaded.push((entry, load_space(entry, path)?));
        }
    }
    let real: Vec<(&EmbeddingSpace, BTreeSet<NodeKind>)> = loaded
        .iter()
        .filter(|(e, _)| !e.is_random)
        .map(|(e, s)| (s, e.covers.iter().copied().collect()))
        .collect();
    let basis = if real.is_empty() {
        loaded.iter().map(|(e, s)| (s, e.covers.iter().copied().collect())).collect()
    } else {
        real
    };
    let seed = seed_vocabulary(&basis)?.restrict(|n| graph.nodes().contains(n));
    let seed_sizes = NodeKind::ALL.iter().map(|k| (*k, seed.get(*k).len())).collect();

    let out = forge::forge_all(&graph, &seed, &cfg.forge_config(relation_filter))?;

    let mut random_space_written = false;
    if !cfg.spaces.iter().any(|s| s.is_random && s.path.is_some()) {
        let dim = match cfg.random_dim {
            Some(d) => d,
            None => basis
                .first()
                .map(|(s, _)| s.dim())
                .ok_or_else(|| Error::Config("random_dim is required without a real space".into()))?,
        };
        let vocab = seed.all();
        if !vocab.is_empty() {
            let name = cfg.random_space_name();
            let space = make_random_space(name, &vocab, dim, derive_seed(cfg.master_seed, &["random_space"]))?;
            let path = layout.random_space(name);
            let mut buf = Vec::new();
            space
                .write_text(&KindRules::default(), &mut buf)
                .map_err(|e| Error::io(&path, e))?;
            write_atomic(&path, &buf)?;
            random_space_written = true;
        }
    }

    for ds in &out.datasets {
        let path = layout.dataset(&ds.name);
        let mut buf = Vec::new();
        ds.write_tsv(&mut buf).map_err(|e| Error::io(&path, e))?;
        write_atomic(&path, &buf)?;
    }
    write_atomic(&layout.manifest(), &csv_bytes(|b| forge::write_manifest(&out.manifest, b))?)?;
    write_atomic(&layout.kg_summary(), &csv_bytes(|b| kg::write_summary(&graph, b))?)?;
    Ok(GenSummary {
        manifest: out.manifest,
        seed_sizes,
        random_space_written,
    })
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub jobs: usize,
    pub relation_filter: Option<glob::Pattern>,
    pub space_filter: Option<glob::Pattern>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSummary {
    pub trained: usize,
    pub already_done: usize,
    /// `(dataset, space)` pairs the space does not cover.
    pub uncovered: Vec<(String, String)>,
    /// `(dataset, space, arch, error)`
    pub failures: Vec<(String, String, String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    dataset: String,
    relation: String,
    group: String,
    pair_type: PairType,
    space: String,
    arch: ArchKind,
    run_index: usize,
    final_epoch: usize,
    precision: f64,
    recall: f64,
    accuracy: f64,
    f1: f64,
}

pub fn write_result<W: Write>(r: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for run in &r.runs {
        w.serialize(ResultRow {
            dataset: r.dataset.clone(),
            relation: r.relation.clone(),
            group: r.group.clone(),
            pair_type: r.pair_type,
            space: r.space.clone(),
            arch: r.arch,
            run_index: run.run_index,
            final_epoch: run.final_epoch,
            precision: run.precision,
            recall: run.recall,
            accuracy: run.accuracy,
            f1: run.f1,
        })?;
    }
    w.flush().map_err(|e| Error::io("<result>", e))?;
    Ok(())
}

pub fn read_result(path: &Path) -> Result<ExperimentResult> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<ResultRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let first = rows
        .first()
        .ok_or_else(|| Error::Dataset(format!("{}: result file has no runs", path.display())))?;
    let mut res = ExperimentResult {
        dataset: first.dataset.clone(),
        relation: first.relation.clone(),
        group: first.group.clone(),
        pair_type: first.pair_type,
        space: first.space.clone(),
        arch: first.arch,
        runs: Vec::new(),
        precision: Default::default(),
        recall: Default::default(),
        accuracy: Default::default(),
        f1: Default::default(),
    };
    res.runs = rows
        .iter()
        .map(|r| RunMetrics {
            run_index: r.run_index,
            final_epoch: r.final_epoch,
            precision: r.precision,
            recall: r.recall,
            accuracy: r.accuracy,
            f1: r.f1,
        })
        .collect();
    res.summarize();
    Ok(res)
}

/// All result files under `results/`, sorted by path.
pub fn read_results(layout: &Layout) -> Result<Vec<ExperimentResult>> {
    let dir = layout.results_dir();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let list = |d: &Path| -> Result<Vec<PathBuf>> {
        fs::read_dir(d)
            .map_err(|e| Error::io(d, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(d, e)))
            .collect()
    };
    let mut paths = Vec::new();
    for sub in list(&dir)?.into_iter().filter(|p| p.is_dir()) {
        paths.extend(
            list(&sub)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|e| e == "csv")),
        );
    }
    paths.sort();
    paths.iter().map(|p| read_result(p)).collect()
}

fn load_datasets(layout: &Layout, manifest: &[ManifestRow]) -> Result<Vec<RelationDataset>> {
    manifest
        .iter()
        .filter(|m| m.is_ok())
        .map(|m| {
            RelationDataset::read_tsv(&layout.dataset(&m.dataset), &m.dataset, &m.relation, &m.group, m.pair_type)
        })
        .collect()
}

/// Trains every missing (dataset, space, architecture) result. Existing
/// result files are left untouched.
pub fn cmd_train(cfg: &StudyConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let manifest = forge::read_manifest(&layout.manifest())?;
    let rel_ok = |r: &str| opts.relation_filter.as_ref().is_none_or(|p| p.matches(r));
    let selected: Vec<ManifestRow> = manifest.into_iter().filter(|m| rel_ok(&m.relation)).collect();
    let datasets = load_datasets(&layout, &selected)?;

    let random_name = cfg.random_space_name().to_string();
    let mut spaces: Vec<(EmbeddingSpace, BTreeSet<NodeKind>)> = Vec::new();
    let mut entries: Vec<SpaceEntry> = cfg.spaces.clone();
    if !entries.iter().any(|s| s.is_random) {
        entries.push(SpaceEntry {
            name: random_name.clone(),
            path: None,
            covers: all_kinds(),
            is_random: true,
        });
    }
    for e in &entries {
        if opts.space_filter.as_ref().is_some_and(|p| !p.matches(&e.name)) {
            continue;
        }
        let path = match &e.path {
            Some(p) => p.clone(),
            None => layout.random_space(&e.name),
        };
        let covers = if e.is_random { all_kinds() } else { e.covers.clone() };
        spaces.push((load_space(e, &path)?, covers.into_iter().collect()));
    }

    let archs = cfg.archs();
    let configs: Vec<TrainingConfig> = archs
        .iter()
        .map(|a| cfg.training_config(*a))
        .collect::<Result<_>>()?;

    let mut summary = TrainSummary::default();
    let mut tasks = Vec::new();
    for ds in &datasets {
        let need = ds.required_kinds();
        for (space, covers) in &spaces {
            if !need.is_subset(covers) {
                log::info!("skipping {} on `{}`: space does not cover {:?}", ds.name, space.name(), need);
                summary.uncovered.push((ds.name.clone(), space.name().to_string()));
                continue;
            }
            for tc in &configs {
                if layout.result(&ds.name, space.name(), tc.arch).exists() {
                    summary.already_done += 1;
                } else {
                    tasks.push((ds, space, tc));
                }
            }
        }
    }
    log::info!("{} experiments to train, {} already done", tasks.len(), summary.already_done);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(String, String, ArchKind, Result<()>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(ds, space, tc)| {
                let res = probe::run_experiment(ds, space, tc, cfg.master_seed).and_then(|r| {
                    log::info!("{} on `{}` ({}): f1 {:.3} +- {:.3}", ds.name, space.name(), tc.arch, r.f1.mean, r.f1.std);
                    let bytes = csv_bytes(|b| write_result(&r, b))?;
                    write_atomic(&layout.result(&ds.name, space.name(), tc.arch), &bytes)
                });
                (ds.name.clone(), space.name().to_string(), tc.arch, res)
            })
            .collect()
    });
    for (ds, space, arch, res) in outcomes {
        match res {
            Ok(()) => summary.trained += 1,
            Err(e) => {
                log::error!("{ds} on `{space}` ({arch}) failed: {e}");
                summary.failures.push((ds, space, arch.to_string(), e.to_string()));
            }
        }
    }
    let path = layout.train_failures();
    if summary.failures.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    } else {
        let bytes = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["dataset", "space", "arch", "error"])?;
            for f in &summary.failures {
                w.write_record([&f.0, &f.1, &f.2, &f.3])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            Ok(())
        })?;
        write_atomic(&path, &bytes)?;
    }
    Ok(summary)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyzeSummary {
    pub range: Option<BaselineRange>,
    pub n_verdicts: usize,
    pub classification_counts: BTreeMap<String, usize>,
    /// Relation datasets without a random-embedding result, and random
    /// datasets without any result.
    pub unanalyzable: Vec<String>,
}

impl AnalyzeSummary {
    pub fn complete(&self) -> bool {
        self.range.is_some() && self.unanalyzable.is_empty()
    }
}

/// Computes the baseline range, verdicts and aggregates from the result
/// files and writes them under `analysis/`.
pub fn cmd_analyze(cfg: &StudyConfig) -> Result<AnalyzeSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let manifest = forge::read_manifest(&layout.manifest())?;
    let results = read_results(&layout)?;
    let random_space = cfg.random_space_name();

    let mut missing: BTreeSet<String> = BTreeSet::new();
    for m in manifest.iter().filter(|m| m.is_ok()) {
        let has = |space: Option<&str>| {
            results
                .iter()
                .any(|r| r.dataset == m.dataset && space.is_none_or(|s| r.space == s))
        };
        if forge::is_random_name(&m.relation) {
            if !has(None) {
                missing.insert(m.dataset.clone());
            }
        } else if !has(Some(random_space)) {
            missing.insert(m.dataset.clone());
        }
    }

    let random_results: Vec<ExperimentResult> =
        results.iter().filter(|r| r.is_random_dataset()).cloned().collect();
    let range = verdict::baseline_range(&random_results, Metric::F1).ok();
    let mut summary = AnalyzeSummary {
        range: range.clone(),
        ..AnalyzeSummary::default()
    };

    let dir = layout.analysis("");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    if let Some(range) = &range {
        let classified = verdict::classify_all(&results, range, random_space);
        missing.extend(classified.unanalyzable.iter().cloned());
        let rows = verdict::aggregate(&classified.verdicts, &manifest, &cfg.kg_name);
        for v in &classified.verdicts {
            *summary
                .classification_counts
                .entry(v.classification.to_string())
                .or_default() += 1;
        }
        summary.n_verdicts = classified.verdicts.len();

        let baseline = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.serialize(range)?;
            w.flush().map_err(|e| Error::io("<baseline>", e))?;
            Ok(())
        })?;
        write_atomic(&layout.analysis("baseline.csv"), &baseline)?;
        write_atomic(
            &layout.analysis("verdicts.csv"),
            &csv_bytes(|b| verdict::write_verdicts(&classified.verdicts, b))?,
        )?;
        write_atomic(
            &layout.analysis("aggregate.csv"),
            &csv_bytes(|b| verdict::write_aggregate_csv(&rows, b))?,
        )?;
        let report = format!(
            "baseline range (f1): [{:.4}, {:.4}] from {} runs, mean {:.4}, std {:.4}\n\n{}",
            range.lower,
            range.upper,
            range.n_results,
            range.source_mean,
            range.source_std,
            verdict::render_table(&rows)
        );
        write_atomic(&layout.analysis("report.txt"), report.as_bytes())?;
    } else {
        log::error!("no baseline range: fewer than two random-dataset runs");
    }
    summary.unanalyzable = missing.into_iter().collect();
    let mut text = String::new();
    for d in &summary.unanalyzable {
        text.push_str(d);
        text.push('\n');
    }
    write_atomic(&layout.analysis("unanalyzable.txt"), text.as_bytes())?;
    Ok(summary)
}

/// The text report written by [`cmd_analyze`].
pub fn cmd_report(cfg: &StudyConfig) -> Result<String> {
    let path = Layout::new(&cfg.out_dir).analysis("report.txt");
    fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Gradient check on the tiny probes plus small metric and statistics
/// oracles.
pub fn cmd_check() -> Vec<CheckLine> {
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(CheckLine {
            name: name.to_string(),
            passed,
            detail,
        })
    };

    for kind in [ArchKind::NN2, ArchKind::NN3] {
        let mut arch = probe::tiny_probe();
        if kind == ArchKind::NN3 {
            arch.kind = kind;
            arch.hidden = vec![6, 5, 4];
        }
        let err = probe::gradient_check(&arch, 11);
        push(
            &format!("gradient {kind}"),
            err <= 1e-3,
            format!("max relative error {err:.3e}"),
        );
    }

    let c = probe::Confusion {
        tp: 3,
        fp: 1,
        fn_: 2,
        tn: 4,
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    push(
        "confusion metrics",
        close(c.precision(), 0.75) && close(c.recall(), 0.6) && close(c.f1(), 2.0 / 3.0) && close(c.accuracy(), 0.7),
        format!("p {} r {} f1 {} acc {}", c.precision(), c.recall(), c.f1(), c.accuracy()),
    );

    match BaselineRange::from_values(Metric::F1, &[0.4, 0.5, 0.6]) {
        Ok(r) => push(
            "baseline range",
            close(r.lower, 0.3) && close(r.upper, 0.7),
            format!("[{}, {}]", r.lower, r.upper),
        ),
        Err(e) => push("baseline range", false, e.to_string()),
    }

    let table = [
        ((0.75, 0.02, 0.55, 0.05), Significance::Better),
        ((0.30, 0.03, 0.55, 0.05), Significance::Worse),
        ((0.5, 0.125, 0.25, 0.0), Significance::NotSignificant),
        ((0.25, 0.0, 0.5, 0.125), Significance::NotSignificant),
        ((0.5, 0.0, 0.5, 0.0), Significance::NotSignificant),
    ];
    let bad: Vec<String> = table
        .iter()
        .filter(|((m, s, mr, sr), want)| verdict::significance_of(*m, *s, *mr, *sr) != *want)
        .map(|(args, want)| format!("{args:?} != {want:?}"))
        .collect();
    push("significance", bad.is_empty(), if bad.is_empty() { "5 cases".into() } else { bad.join("; ") });

    let tc = TrainingConfig::default();
    let epochs: Vec<usize> = [250, 4000, 20000, 60000].iter().map(|&n| tc.epochs_for(n)).collect();
    push("epoch tiers", epochs == [48, 24, 12, 6], format!("{epochs:?}"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let text = r#"
kg_path = "kg.tsv"
[[spaces]]
name = "glove"
path = "glove.vec"
covers = ["word"]
"#;
        let cfg: StudyConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.random_sizes, vec![200, 500, 1000, 5000, 10000, 50000]);
        assert_eq!(cfg.random_space_name(), RANDOM_SPACE);
        assert_eq!(cfg.archs(), vec![ArchKind::NN2]);
        cfg.validate().unwrap();

        let mut bad = cfg.clone();
        bad.random_sizes = vec![500, 200];
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.spaces.push(SpaceEntry {
            name: "r1".into(),
            path: None,
            covers: all_kinds(),
            is_random: true,
        });
        bad.spaces.push(SpaceEntry {
            name: "r2".into(),
            path: None,
            covers: all_kinds(),
            is_random: true,
        });
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.training.learning_rate = Some(-1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "kg_path = \"kg.tsv\"\nspaces = []\nbogus = 1\n";
        assert!(toml::from_str::<StudyConfig>(text).is_err());
    }

    #[test]
    fn training_overrides_apply() {
        let text = r#"
kg_path = "kg.tsv"
[[spaces]]
name = "a"
path = "a.vec"
[training]
learning_rate = 0.001
runs = 5
archs = ["NN2", "NN3"]
epoch_tiers = [[100, 3], [18446744073709551615, 1]]
"#;
        let cfg: StudyConfig = toml::from_str(text).unwrap();
        let tc = cfg.training_config(ArchKind::NN3).unwrap();
        assert_eq!(tc.learning_rate, 0.001);
        assert_eq!(tc.runs, 5);
        assert_eq!(tc.arch, ArchKind::NN3);
        assert_eq!(tc.epochs_for(50), 3);
        assert_eq!(cfg.archs().len(), 2);
        let back: StudyConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn result_file_round_trip() {
        let r = ExperimentResult {
            dataset: "hyp__word_word".into(),
            relation: "hyp".into(),
            group: "Hypernymy".into(),
            pair_type: PairType::WordWord,
            space: "glove".into(),
            arch: ArchKind::NN2,
            runs: vec![
                RunMetrics {
                    run_index: 0,
                    final_epoch: 24,
                    precision: 0.1 + 0.2,
                    recall: 1.0 / 3.0,
                    accuracy: 0.5,
                    f1: 0.7,
                },
                RunMetrics {
                    run_index: 1,
                    final_epoch: 24,
                    precision: 0.9,
                    recall: 0.8,
                    accuracy: 0.85,
                    f1: 0.84,
                },
            ],
            precision: Default::default(),
            recall: Default::default(),
            accuracy: Default::default(),
            f1: Default::default(),
        };
        let mut r = r;
        r.summarize();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, &csv_bytes(|b| write_result(&r, b)).unwrap()).unwrap();
        assert_eq!(read_result(&path).unwrap(), r);
    }

    #[test]
    fn check_passes() {
        for line in cmd_check() {
            assert!(line.passed, "{}: {}", line.name, line.detail);
        }
    }
}
