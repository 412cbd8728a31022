//! Dataset generation: positive extraction with word-level projection,
//! negative switching with fallbacks, random baseline datasets and stratified
//! splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::SeedVocabulary;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NodeId, NodeKind};
use crate::seed::derive_seed;

/// Largest number of distinct classes a unary relation may use as objects.
pub const MAX_UNARY_CLASSES: usize = 64;

/// Above this many candidate cells, pair sampling switches from enumeration
/// to rejection sampling.
const ENUMERATION_LIMIT: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    ConceptConcept,
    WordConcept,
    WordWord,
    /// Subject-only datasets against a fixed class object.
    Unary,
}

impl PairType {
    pub const BINARY: [PairType; 3] = [
        PairType::ConceptConcept,
        PairType::WordConcept,
        PairType::WordWord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairType::ConceptConcept => "concept_concept",
            PairType::WordConcept => "word_concept",
            PairType::WordWord => "word_word",
            PairType::Unary => "unary",
        }
    }

    /// Node kinds an embedding space must cover to train on this pair type.
    /// Unary datasets depend on their subjects, see [`RelationDataset::required_kinds`].
    pub fn required_kinds(self) -> BTreeSet<NodeKind> {
        match self {
            PairType::ConceptConcept => [NodeKind::Concept].into(),
            PairType::WordConcept => [NodeKind::Word, NodeKind::Concept].into(),
            PairType::WordWord | PairType::Unary => [NodeKind::Word].into(),
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concept_concept" => Ok(PairType::ConceptConcept),
            "word_concept" => Ok(PairType::WordConcept),
            "word_word" => Ok(PairType::WordWord),
            "unary" => Ok(PairType::Unary),
            other => Err(Error::Config(format!("unknown pair type `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sample {
    pub subject: NodeId,
    pub object: NodeId,
    pub label: u8,
}

impl Sample {
    pub fn positive(subject: NodeId, object: NodeId) -> Self {
        Sample {
            subject,
            object,
            label: 1,
        }
    }

    pub fn negative(subject: NodeId, object: NodeId) -> Self {
        Sample {
            subject,
            object,
            label: 0,
        }
    }

    fn key(&self) -> (NodeId, NodeId) {
        (self.subject.clone(), self.object.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationDataset {
    pub name: String,
    /// Source relation, or `random_<x>` for baseline datasets.
    pub relation: String,
    pub group: String,
    pub pair_type: PairType,
    pub samples: Vec<Sample>,
    pub splits: Vec<Split>,
    pub generation_seed: u64,
}

impl RelationDataset {
    pub fn is_random(&self) -> bool {
        is_random_name(&self.relation)
    }

    pub fn n_positive(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.samples.len() - self.n_positive()
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == which)
            .map(|(x, _)| x)
    }

    /// Node kinds that appear as inputs to a probe.
    pub fn required_kinds(&self) -> BTreeSet<NodeKind> {
        let mut kinds = BTreeSet::new();
        for s in &self.samples {
            kinds.insert(coverage_kind(s.subject.kind()));
            if self.pair_type != PairType::Unary {
                kinds.insert(coverage_kind(s.object.kind()));
            }
        }
        if kinds.is_empty() {
            self.pair_type.required_kinds()
        } else {
            kinds
        }
    }

    /// Writes `subject<TAB>object<TAB>label<TAB>split` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, split) in self.samples.iter().zip(&self.splits) {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                s.subject,
                s.object,
                s.label,
                split.as_str()
            )?;
        }
        Ok(())
    }

    pub fn read_tsv(
        path: &Path,
        name: &str,
        relation: &str,
        group: &str,
        pair_type: PairType,
    ) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut samples = Vec::new();
        let mut splits = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Dataset(format!("{}:{}: {msg}", path.display(), i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", f.len())));
            }
            let label = match f[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("bad label `{other}`"))),
            };
            samples.push(Sample {
                subject: NodeId::parse(f[0]).map_err(|e| bad(e.to_string()))?,
                object: NodeId::parse(f[1]).map_err(|e| bad(e.to_string()))?,
                label,
            });
            splits.push(f[3].parse().map_err(|e: Error| bad(e.to_string()))?);
        }
        Ok(RelationDataset {
            name: name.to_string(),
            relation: relation.to_string(),
            group: group.to_string(),
            pair_type,
            samples,
            splits,
            generation_seed: 0,
        })
    }
}

/// Instances are embedded alongside concepts; spaces declare concept coverage
/// for both.
fn coverage_kind(kind: NodeKind) -> NodeKind {
    match kind {
        NodeKind::Instance => NodeKind::Concept,
        k => k,
    }
}

pub fn is_random_name(relation: &str) -> bool {
    relation
        .strip_prefix("random_")
        .is_some_and(|x| x.parse::<usize>().is_ok())
}

/// Nodes an endpoint stands for at the word level.
fn lift_words<'a>(kg: &'a KnowledgeGraph, n: &'a NodeId) -> Vec<&'a NodeId> {
    if n.kind() == NodeKind::Word {
        vec![n]
    } else {
        kg.words_of_ref(n)
            .map(|ws| ws.iter().collect())
            .unwrap_or_default()
    }
}

/// Projects a relation's triples onto one pair type. Word-level endpoints are
/// taken as they are; concepts and instances are replaced by their words.
/// Result is sorted and deduplicated.
pub fn project_pairs(
    kg: &KnowledgeGraph,
    pairs: &[(NodeId, NodeId)],
    pair_type: PairType,
) -> Vec<(NodeId, NodeId)> {
    let mut out = BTreeSet::new();
    for (s, o) in pairs {
        match pair_type {
            PairType::ConceptConcept => {
                if s.kind().is_conceptual() && o.kind().is_conceptual() {
                    out.insert((s.clone(), o.clone()));
                }
            }
            PairType::WordConcept => {
                if o.kind().is_conceptual() {
                    for w in lift_words(kg, s) {
                        out.insert((w.clone(), o.clone()));
                    }
                }
            }
            PairType::WordWord => {
                let objects = lift_words(kg, o);
                for w in lift_words(kg, s) {
                    for v in &objects {
                        out.insert((w.clone(), (*v).clone()));
                    }
                }
            }
            PairType::Unary => {
                out.insert((s.clone(), o.clone()));
            }
        }
    }
    out.into_iter().collect()
}

fn needs_word_relation(pairs: &[(NodeId, NodeId)], pair_type: PairType) -> bool {
    match pair_type {
        PairType::WordConcept => pairs
            .iter()
            .any(|(s, o)| s.kind().is_conceptual() && o.kind().is_conceptual()),
        PairType::WordWord => pairs
            .iter()
            .any(|(s, o)| s.kind().is_conceptual() || o.kind().is_conceptual()),
        _ => false,
    }
}

/// Positive samples of `relation` for one pair type, restricted to the seed
/// vocabulary. Unary objects are class nodes and need not be embedded.
pub fn extract_positive_pairs(
    kg: &KnowledgeGraph,
    relation: &str,
    seed: &SeedVocabulary,
    pair_type: PairType,
) -> Result<Vec<Sample>> {
    let pairs = kg.pairs(relation)?;
    if kg.word_concept_relation().is_none() && needs_word_relation(pairs, pair_type) {
        return Err(Error::MissingWordRelation);
    }
    Ok(project_pairs(kg, pairs, pair_type)
        .into_iter()
        .filter(|(s, o)| seed.contains(s) && (pair_type == PairType::Unary || seed.contains(o)))
        .map(|(s, o)| Sample::positive(s, o))
        .collect())
}

/// Draws up to `count` distinct pairs uniformly from `subjects x objects`,
/// skipping excluded pairs and, unless allowed, reflexive ones.
fn sample_pairs(
    subjects: &[NodeId],
    objects: &[NodeId],
    exclude: &HashSet<(NodeId, NodeId)>,
    allow_reflexive: bool,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId)> {
    if count == 0 || subjects.is_empty() || objects.is_empty() {
        return Vec::new();
    }
    let total = subjects.len().saturating_mul(objects.len());
    let eligible = |s: &NodeId, o: &NodeId| {
        (allow_reflexive || s != o) && !exclude.contains(&(s.clone(), o.clone()))
    };
    // candidate count is at least total - |exclude| - |reflexive cells|
    let lower_bound = total
        .saturating_sub(exclude.len())
        .saturating_sub(subjects.len().min(objects.len()));
    if total <= ENUMERATION_LIMIT || lower_bound < count.saturating_mul(2) {
        let mut cells: Vec<(usize, usize)> = (0..subjects.len())
            .flat_map(|i| (0..objects.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| eligible(&subjects[i], &objects[j]))
            .collect();
        let take = count.min(cells.len());
        let (chosen, _) = cells.partial_shuffle(rng, take);
        return chosen
            .iter()
            .map(|&(i, j)| (subjects[i].clone(), objects[j].clone()))
            .collect();
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.random_range(0..subjects.len());
        let j = rng.random_range(0..objects.len());
        if eligible(&subjects[i], &objects[j]) && seen.insert((i, j)) {
            out.push((subjects[i].clone(), objects[j].clone()));
        }
    }
    out
}

/// Negative switching: recombines the subjects and objects of the positive
/// pairs. Returns at most `target_count` label-0 samples; fewer when the
/// cross product is exhausted.
pub fn negative_switch(positives: &[Sample], target_count: usize, rng_seed: u64) -> Vec<Sample> {
    let subjects: BTreeSet<&NodeId> = positives.iter().map(|s| &s.subject).collect();
    let objects: BTreeSet<&NodeId> = positives.iter().map(|s| &s.object).collect();
    let subjects: Vec<NodeId> = subjects.into_iter().cloned().collect();
    let objects: Vec<NodeId> = objects.into_iter().cloned().collect();
    switch_over(positives, &subjects, &objects, target_count, rng_seed)
}

fn switch_over(
    positives: &[Sample],
    subjects: &[NodeId],
    objects: &[NodeId],
    target_count: usize,
    rng_seed: u64,
) -> Vec<Sample> {
    let exclude: HashSet<(NodeId, NodeId)> = positives.iter().map(Sample::key).collect();
    let allow_reflexive = positives.iter().any(|s| s.subject == s.object);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_pairs(subjects, objects, &exclude, allow_reflexive, target_count, &mut rng)
        .into_iter()
        .map(|(s, o)| Sample::negative(s, o))
        .collect()
}

/// Negatives gathered when switching runs short.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fallback {
    pub samples: Vec<Sample>,
    pub from_other: usize,
    pub from_random: usize,
}

/// Fills a negative shortfall, first with positives of other relations of
/// the same pair type, then with uniform random pairs from the seed
/// vocabulary. `taken` holds the dataset's positives and negatives so far;
/// none of them is drawn again.
pub fn fallback_negatives(
    kg: &KnowledgeGraph,
    relation: &str,
    pair_type: PairType,
    seed: &SeedVocabulary,
    taken: &[Sample],
    shortfall: usize,
    rng_seed: u64,
) -> Result<Fallback> {
    if shortfall == 0 {
        return Err(Error::Dataset("fallback requested with no shortfall".into()));
    }
    kg.relation(relation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut exclude: HashSet<(NodeId, NodeId)> = taken.iter().map(Sample::key).collect();
    let allow_reflexive = taken
        .iter()
        .any(|s| s.label == 1 && s.subject == s.object);
    // unary datasets fix the object
    let fixed_object: Option<NodeId> = if pair_type == PairType::Unary {
        taken.first().map(|s| s.object.clone())
    } else {
        None
    };
    let mut out = Fallback::default();

    let mut pool = BTreeSet::new();
    for other in kg.relations() {
        if other.name == relation || kg.word_concept_relation() == Some(other.name.as_str()) {
            continue;
        }
        for (s, o) in project_pairs(kg, kg.pairs(&other.name)?, pair_type) {
            if fixed_object.as_ref().is_some_and(|f| f != &o) {
                continue;
            }
            let in_seed = seed.contains(&s) && (pair_type == PairType::Unary || seed.contains(&o));
            if in_seed && (allow_reflexive || s != o) && !exclude.contains(&(s.clone(), o.clone())) {
                pool.insert((s, o));
            }
        }
    }
    let mut pool: Vec<(NodeId, NodeId)> = pool.into_iter().collect();
    let take = shortfall.min(pool.len());
    let (chosen, _) = pool.partial_shuffle(&mut rng, take);
    for (s, o) in chosen.iter().cloned() {
        exclude.insert((s.clone(), o.clone()));
        out.samples.push(Sample::negative(s, o));
    }
    out.from_other = take;

    let remaining = shortfall - take;
    if remaining > 0 {
        let (subjects, objects): (Vec<NodeId>, Vec<NodeId>) = match pair_type {
            PairType::ConceptConcept => {
                let c: Vec<NodeId> = seed.conceptual().into_iter().collect();
                (c.clone(), c)
            }
            PairType::WordConcept => (
                seed.get(NodeKind::Word).iter().cloned().collect(),
                seed.conceptual().into_iter().collect(),
            ),
            PairType::WordWord => {
                let w: Vec<NodeId> = seed.get(NodeKind::Word).iter().cloned().collect();
                (w.clone(), w)
            }
            PairType::Unary => {
                let kinds: BTreeSet<NodeKind> = taken.iter().map(|s| s.subject.kind()).collect();
                (
                    kinds.iter().flat_map(|k| seed.get(*k).iter().cloned()).collect(),
                    fixed_object.into_iter().collect(),
                )
            }
        };
        let drawn = sample_pairs(&subjects, &objects, &exclude, allow_reflexive, remaining, &mut rng);
        out.from_random = drawn.len();
        out.samples
            .extend(drawn.into_iter().map(|(s, o)| Sample::negative(s, o)));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.90,
            val: 0.05,
            test: 0.05,
        }
    }
}

/// Smallest dataset that leaves every split non-empty.
pub const MIN_SPLIT_SAMPLES: usize = 20;

/// Label-stratified split assignment, parallel to `samples`.
pub fn split_dataset(samples: &[Sample], ratios: SplitRatios, rng_seed: u64) -> Result<Vec<Split>> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || (train + val + test - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios must be in [0, 1] and sum to 1, got ({train}, {val}, {test})"
        )));
    }
    let n = samples.len();
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::Dataset(format!(
            "{n} samples is too few to split (need at least {MIN_SPLIT_SAMPLES})"
        )));
    }
    let n_test = ((n as f64 * test).round() as usize).max(1);
    let n_val = ((n as f64 * val).round() as usize).max(1);
    if n_test + n_val >= n {
        return Err(Error::Config("split ratios leave no training samples".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut by_label: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in samples.iter().enumerate() {
        by_label[usize::from(s.label == 1)].push(i);
    }
    for v in by_label.iter_mut() {
        v.shuffle(&mut rng);
    }
    // alternate labels so every prefix is balanced within one
    let first = usize::from(rng.random_bool(0.5));
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let (mut a, mut b) = (by_label[first].iter(), by_label[1 - first].iter());
    loop {
        match (a.next(), b.next()) {
            (None, None) => break,
            (x, y) => order.extend(x.into_iter().chain(y).copied()),
        }
    }
    let mut splits = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_test {
            Split::Test
        } else if rank < n_test + n_val {
            Split::Val
        } else {
            Split::Train
        };
    }
    Ok(splits)
}

/// Random baseline dataset `random_<x>`: `x` random pairs labeled 1 and `x`
/// further disjoint random pairs labeled 0.
pub fn gen_random_dataset(
    seed: &SeedVocabulary,
    pair_type: PairType,
    x: usize,
    rng_seed: u64,
) -> Result<RelationDataset> {
    let (subjects, objects): (Vec<NodeId>, Vec<NodeId>) = match pair_type {
        PairType::ConceptConcept => {
            let c: Vec<NodeId> = seed.conceptual().into_iter().collect();
            (c.clone(), c)
        }
        PairType::WordConcept => (
            seed.get(NodeKind::Word).iter().cloned().collect(),
            seed.conceptual().into_iter().collect(),
        ),
        PairType::WordWord => {
            let w: Vec<NodeId> = seed.get(NodeKind::Word).iter().cloned().collect();
            (w.clone(), w)
        }
        PairType::Unary => {
            return Err(Error::Config("random datasets are pairwise; unary is not supported".into()))
        }
    };
    let overlap = subjects.iter().filter(|s| objects.binary_search(s).is_ok()).count();
    let capacity = subjects.len() * objects.len() - overlap;
    if capacity < 2 * x || x == 0 {
        return Err(Error::Dataset(format!(
            "random_{x}: vocabulary admits {capacity} distinct pairs, need {}",
            2 * x
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pairs = sample_pairs(&subjects, &objects, &HashSet::new(), false, 2 * x, &mut rng);
    let samples: Vec<Sample> = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (s, o))| Sample {
            subject: s,
            object: o,
            label: u8::from(i < x),
        })
        .collect();
    let splits = split_dataset(&samples, SplitRatios::default(), rng.random())?;
    let name = format!("random_{x}");
    Ok(RelationDataset {
        name: name.clone(),
        relation: name.clone(),
        group: "random".into(),
        pair_type,
        samples,
        splits,
        generation_seed: rng_seed,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub dataset: String,
    pub relation: String,
    pub group: String,
    pub pair_type: PairType,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_fallback_other: usize,
    pub n_fallback_random: usize,
    pub status: String,
}

impl ManifestRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const STATUS_OK: &str = "ok";
pub const STATUS_TOO_SMALL: &str = "skipped:too_small";
pub const STATUS_UNBALANCED: &str = "skipped:unbalanced";
pub const STATUS_NO_WORD_RELATION: &str = "skipped:no_word_relation";
pub const STATUS_TOO_MANY_CLASSES: &str = "skipped:too_many_classes";

#[derive(Clone, Debug)]
pub struct ForgeConfig {
    pub master_seed: u64,
    /// Pair types for relations without an explicit entry.
    pub default_pair_types: Vec<PairType>,
    pub pair_types: BTreeMap<String, Vec<PairType>>,
    /// Minimum balanced dataset size (positives plus negatives).
    pub min_total: usize,
    pub random_sizes: Vec<usize>,
    pub random_pair_type: PairType,
    pub ratios: SplitRatios,
    /// Only relations matching this glob get datasets.
    pub relation_filter: Option<glob::Pattern>,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            master_seed: 0,
            default_pair_types: PairType::BINARY.to_vec(),
            pair_types: BTreeMap::new(),
            min_total: 100,
            random_sizes: vec![200, 500, 1000, 5000, 10000, 50000],
            random_pair_type: PairType::WordWord,
            ratios: SplitRatios::default(),
            relation_filter: None,
        }
    }
}

pub const MIN_TOTAL_FLOOR: usize = 40;

#[derive(Clone, Debug, Default)]
pub struct ForgeOutput {
    pub datasets: Vec<RelationDataset>,
    pub manifest: Vec<ManifestRow>,
}

/// Replaces characters that are awkward in file names.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.' | '@' | '+') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Task {
    relation: String,
    group: String,
    pair_type: PairType,
    /// Fixed class object for unary datasets.
    class: Option<NodeId>,
    positives: Vec<Sample>,
    /// Subject and object vocabularies for switching.
    subjects: Vec<NodeId>,
    objects: Vec<NodeId>,
}

impl Task {
    fn dataset_name(&self) -> String {
        match &self.class {
            Some(c) => sanitize(&format!("{}@{}__unary", self.relation, c.name())),
            None => sanitize(&format!("{}__{}", self.relation, self.pair_type)),
        }
    }
}

fn skipped(name: String, relation: &str, group: &str, pair_type: PairType, n_pos: usize, status: &str) -> ManifestRow {
    ManifestRow {
        dataset: name,
        relation: relation.to_string(),
        group: group.to_string(),
        pair_type,
        n_pos,
        n_neg: 0,
        n_fallback_other: 0,
        n_fallback_random: 0,
        status: status.to_string(),
    }
}

/// Generates every relation dataset and every random baseline dataset.
/// Skipped datasets are listed in the manifest with a reason.
pub fn forge_all(kg: &KnowledgeGraph, seed: &SeedVocabulary, config: &ForgeConfig) -> Result<ForgeOutput> {
    if config.min_total < MIN_TOTAL_FLOOR {
        return Err(Error::Config(format!(
            "min_total must be at least {MIN_TOTAL_FLOOR}, got {}",
            config.min_total
        )));
    }
    let mut manifest = Vec::new();
    let mut tasks = Vec::new();
    for rel in kg.relations() {
        if kg.word_concept_relation() == Some(rel.name.as_str()) {
            continue;
        }
        if let Some(p) = &config.relation_filter {
            if !p.matches(&rel.name) {
                continue;
            }
        }
        if rel.unary {
            let positives = extract_positive_pairs(kg, &rel.name, seed, PairType::Unary)?;
            let classes: BTreeSet<&NodeId> = positives.iter().map(|s| &s.object).collect();
            if classes.len() > MAX_UNARY_CLASSES {
                manifest.push(skipped(
                    sanitize(&format!("{}__unary", rel.name)),
                    &rel.name,
                    &rel.group,
                    PairType::Unary,
                    positives.len(),
                    STATUS_TOO_MANY_CLASSES,
                ));
                continue;
            }
            let subjects: Vec<NodeId> = positives
                .iter()
                .map(|s| s.subject.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for class in classes {
                tasks.push(Task {
                    relation: rel.name.clone(),
                    group: rel.group.clone(),
                    pair_type: PairType::Unary,
                    class: Some(class.clone()),
                    positives: positives.iter().filter(|s| &s.object == class).cloned().collect(),
                    subjects: subjects.clone(),
                    objects: vec![class.clone()],
                });
            }
            continue;
        }
        let pair_types = config
            .pair_types
            .get(&rel.name)
            .unwrap_or(&config.default_pair_types);
        for &pt in pair_types.iter().filter(|pt| **pt != PairType::Unary) {
            match extract_positive_pairs(kg, &rel.name, seed, pt) {
                Ok(positives) => {
                    let subjects: BTreeSet<NodeId> = positives.iter().map(|s| s.subject.clone()).collect();
                    let objects: BTreeSet<NodeId> = positives.iter().map(|s| s.object.clone()).collect();
                    tasks.push(Task {
                        relation: rel.name.clone(),
                        group: rel.group.clone(),
                        pair_type: pt,
                        class: None,
                        positives,
                        subjects: subjects.into_iter().collect(),
                        objects: objects.into_iter().collect(),
                    })
                }
                Err(Error::MissingWordRelation) => manifest.push(skipped(
                    sanitize(&format!("{}__{}", rel.name, pt)),
                    &rel.name,
                    &rel.group,
                    pt,
                    0,
                    STATUS_NO_WORD_RELATION,
                )),
                Err(e) => return Err(e),
            }
        }
    }

    let results: Vec<Result<(ManifestRow, Option<RelationDataset>)>> = tasks
        .par_iter()
        .map(|task| forge_one(kg, seed, config, task))
        .collect();
    let mut datasets = Vec::new();
    for r in results {
        let (row, ds) = r?;
        manifest.push(row);
        datasets.extend(ds);
    }

    for &x in &config.random_sizes {
        let rng_seed = derive_seed(config.master_seed, &["random", &x.to_string()]);
        let name = format!("random_{x}");
        match gen_random_dataset(seed, config.random_pair_type, x, rng_seed) {
            Ok(ds) => {
                manifest.push(ManifestRow {
                    dataset: name.clone(),
                    relation: name,
                    group: ds.group.clone(),
                    pair_type: ds.pair_type,
                    n_pos: x,
                    n_neg: x,
                    n_fallback_other: 0,
                    n_fallback_random: 0,
                    status: STATUS_OK.into(),
                });
                datasets.push(ds);
            }
            Err(Error::Dataset(msg)) => {
                log::warn!("{msg}");
                manifest.push(skipped(name.clone(), &name, "random", config.random_pair_type, 0, STATUS_TOO_SMALL));
            }
            Err(e) => return Err(e),
        }
    }

    manifest.sort_by(|a, b| a.dataset.cmp(&b.dataset));
    datasets.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(ForgeOutput { datasets, manifest })
}

fn forge_one(
    kg: &KnowledgeGraph,
    seed: &SeedVocabulary,
    config: &ForgeConfig,
    task: &Task,
) -> Result<(ManifestRow, Option<RelationDataset>)> {
    let name = task.dataset_name();
    let n_pos = task.positives.len();
    let mut row = skipped(name.clone(), &task.relation, &task.group, task.pair_type, n_pos, STATUS_TOO_SMALL);
    if 2 * n_pos < config.min_total {
        return Ok((row, None));
    }
    let generation_seed = derive_seed(config.master_seed, &["forge", &name]);
    let switch_seed = derive_seed(generation_seed, &["switch"]);
    let mut negatives = switch_over(&task.positives, &task.subjects, &task.objects, n_pos, switch_seed);
    if negatives.len() < n_pos {
        let mut taken = task.positives.clone();
        taken.extend(negatives.iter().cloned());
        let fb = fallback_negatives(
            kg,
            &task.relation,
            task.pair_type,
            seed,
            &taken,
            n_pos - negatives.len(),
            derive_seed(generation_seed, &["fallback"]),
        )?;
        row.n_fallback_other = fb.from_other;
        row.n_fallback_random = fb.from_random;
        negatives.extend(fb.samples);
    }
    row.n_neg = negatives.len();
    if n_pos - negatives.len() > 1 {
        row.status = STATUS_UNBALANCED.into();
        return Ok((row, None));
    }
    if n_pos + negatives.len() < config.min_total {
        return Ok((row, None));
    }
    let mut samples = task.positives.clone();
    samples.extend(negatives);
    let splits = split_dataset(&samples, config.ratios, derive_seed(generation_seed, &["split"]))?;
    row.status = STATUS_OK.into();
    Ok((
        row,
        Some(RelationDataset {
            name,
            relation: task.relation.clone(),
            group: task.group.clone(),
            pair_type: task.pair_type,
            samples,
            splits,
            generation_seed,
        }),
    ))
}

pub fn write_manifest<W: Write>(rows: &[ManifestRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
