//! Relation probes: feed-forward classifiers over concatenated embedding
//! pairs, trained with per-batch input perturbation.

mod adam;
mod metrics;
mod mlp;
mod scheduler;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamParams};
pub use metrics::{f1_score, mean_std, Confusion, RunMetrics};
pub use mlp::Mlp;
pub use scheduler::{PlateauParams, ReduceOnPlateau};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::forge::{PairType, RelationDataset, Sample, Split};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    NN2,
    NN3,
}

impl ArchKind {
    /// Hidden widths for a 600-wide input.
    fn base_hidden(self) -> &'static [usize] {
        match self {
            ArchKind::NN2 => &[750, 400],
            ArchKind::NN3 => &[750, 500, 250],
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::NN2 => "NN2",
            ArchKind::NN3 => "NN3",
        })
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NN2" => Ok(ArchKind::NN2),
            "NN3" => Ok(ArchKind::NN3),
            _ => Err(Error::Config(format!("unknown architecture `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeArchitecture {
    pub kind: ArchKind,
    pub input_width: usize,
    pub hidden: Vec<usize>,
}

impl ProbeArchitecture {
    /// Hidden widths scale with the input (rounded to the nearest 10, at
    /// least 10); a 600-wide input gets exactly the base widths.
    pub fn for_input(kind: ArchKind, input_width: usize) -> Self {
        let hidden = kind
            .base_hidden()
            .iter()
            .map(|&h| {
                let scaled = h as f64 * input_width as f64 / 600.0;
                (((scaled / 10.0).round() as usize) * 10).max(10)
            })
            .collect();
        ProbeArchitecture {
            kind,
            input_width,
            hidden,
        }
    }

    /// Architecture for a dataset embedded in a `dim`-dimensional space.
    pub fn for_dataset(kind: ArchKind, pair_type: PairType, dim: usize) -> Self {
        Self::for_input(kind, input_width(pair_type, dim))
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width];
        sizes.extend(&self.hidden);
        sizes.push(2);
        sizes
    }
}

pub fn input_width(pair_type: PairType, dim: usize) -> usize {
    match pair_type {
        PairType::Unary => dim,
        _ => 2 * dim,
    }
}

/// `(max_positives, epochs)`: a dataset with fewer positives than
/// `max_positives` trains for `epochs`.
pub type EpochTier = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub epoch_tiers: Vec<EpochTier>,
    pub batch_size: usize,
    pub runs: usize,
    pub plateau: PlateauParams,
    pub adam: AdamParams,
    pub perturbation: bool,
    pub arch: ArchKind,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-5,
            dropout: 0.5,
            epoch_tiers: vec![(300, 48), (5000, 24), (30000, 12), (usize::MAX, 6)],
            batch_size: 64,
            runs: 3,
            plateau: PlateauParams::default(),
            adam: AdamParams::default(),
            perturbation: true,
            arch: ArchKind::NN2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 || self.runs == 0 {
            return bad("batch_size and runs must be positive");
        }
        if self.epoch_tiers.is_empty()
            || self.epoch_tiers.windows(2).any(|w| w[0].0 >= w[1].0)
        {
            return bad("epoch_tiers must be non-empty and strictly increasing");
        }
        Ok(())
    }

    /// Epoch count for a dataset with `n_positive` positives.
    pub fn epochs_for(&self, n_positive: usize) -> usize {
        self.epoch_tiers
            .iter()
            .find(|(max, _)| n_positive < *max)
            .or(self.epoch_tiers.last())
            .map(|(_, e)| *e)
            .unwrap_or(1)
    }
}

/// Probe input for one sample: `(subject + v) ++ (object + v)`, or the
/// perturbed subject alone for unary datasets.
pub fn compose_input(
    space: &EmbeddingSpace,
    sample: &Sample,
    pair_type: PairType,
    perturbation: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(input_width(pair_type, space.dim()));
    compose_into(space, sample, pair_type, perturbation, &mut out)?;
    Ok(out)
}

fn compose_into(
    space: &EmbeddingSpace,
    sample: &Sample,
    pair_type: PairType,
    perturbation: Option<&[f64]>,
    out: &mut Vec<f64>,
) -> Result<()> {
    if let Some(v) = perturbation {
        if v.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: v.len(),
            });
        }
    }
    let mut push = |x: &[f64]| match perturbation {
        Some(v) => out.extend(x.iter().zip(v).map(|(a, b)| a + b)),
        None => out.extend_from_slice(x),
    };
    push(space.lookup(&sample.subject)?);
    if pair_type != PairType::Unary {
        push(space.lookup(&sample.object)?);
    }
    Ok(())
}

/// Perturbation vector with components uniform on `[-s, s]`, `s` the space's
/// component standard deviation.
pub fn draw_perturbation<R: Rng>(space: &EmbeddingSpace, rng: &mut R) -> Vec<f64> {
    let s = space.component_std();
    if s == 0.0 {
        return vec![0.0; space.dim()];
    }
    (0..space.dim()).map(|_| rng.random_range(-s..=s)).collect()
}

fn batch_matrix(
    space: &EmbeddingSpace,
    samples: &[&Sample],
    pair_type: PairType,
    perturbation: Option<&[f64]>,
) -> Result<Array2<f64>> {
    let width = input_width(pair_type, space.dim());
    let mut data = Vec::with_capacity(samples.len() * width);
    for s in samples {
        compose_into(space, s, pair_type, perturbation, &mut data)?;
    }
    Ok(Array2::from_shape_vec((samples.len(), width), data).expect("batch shape"))
}

/// Per-epoch record of one training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Learning rate used during each epoch.
    pub learning_rates: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedProbe {
    pub model: Mlp,
    pub metrics: RunMetrics,
    pub history: TrainingHistory,
}

/// Trains one probe on the train split and evaluates it on the test split.
pub fn train_probe(
    dataset: &RelationDataset,
    space: &EmbeddingSpace,
    arch: &ProbeArchitecture,
    cfg: &TrainingConfig,
    run_index: usize,
    run_seed: u64,
) -> Result<TrainedProbe> {
    cfg.validate()?;
    let expected = input_width(dataset.pair_type, space.dim());
    if arch.input_width != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: arch.input_width,
        });
    }
    for s in &dataset.samples {
        space.lookup(&s.subject)?;
        if dataset.pair_type != PairType::Unary {
            space.lookup(&s.object)?;
        }
    }
    let mut train: Vec<&Sample> = dataset.split(Split::Train).collect();
    let val: Vec<&Sample> = dataset.split(Split::Val).collect();
    if train.is_empty() {
        return Err(Error::Dataset(format!("{}: empty train split", dataset.name)));
    }
    let val_x = if val.is_empty() {
        None
    } else {
        Some((
            batch_matrix(space, &val, dataset.pair_type, None)?,
            val.iter().map(|s| s.label).collect::<Vec<u8>>(),
        ))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let mut model = Mlp::new(&arch.layer_sizes(), &mut rng);
    let mut adam = Adam::new(model.params().len(), cfg.adam);
    let mut sched = ReduceOnPlateau::new(cfg.learning_rate, cfg.plateau);
    let mut grad = vec![0.0; model.params().len()];
    let mut history = TrainingHistory::default();
    let epochs = cfg.epochs_for(dataset.n_positive());

    for epoch in 0..epochs {
        let lr = sched.lr();
        train.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, batch) in train.chunks(cfg.batch_size).enumerate() {
            // one shared vector per batch keeps subject - object unchanged
            let v = cfg.perturbation.then(|| draw_perturbation(space, &mut rng));
            let x = batch_matrix(space, batch, dataset.pair_type, v.as_deref())?;
            let y: Vec<u8> = batch.iter().map(|s| s.label).collect();
            let loss = model.loss_and_grad(x.view(), &y, cfg.dropout, &mut rng, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(model.params_mut(), &grad, lr);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        history.train_loss.push(loss_sum / seen as f64);
        history.learning_rates.push(lr);
        if let Some((vx, vy)) = &val_x {
            let vl = model.loss(vx.view(), vy);
            if !vl.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: 0 });
            }
            history.val_loss.push(vl);
            sched.step(vl);
        }
    }
    let metrics = evaluate(&model, dataset, space, run_index, epochs)?;
    Ok(TrainedProbe {
        model,
        metrics,
        history,
    })
}

/// Test-split metrics with no perturbation and no dropout.
pub fn evaluate(
    model: &Mlp,
    dataset: &RelationDataset,
    space: &EmbeddingSpace,
    run_index: usize,
    final_epoch: usize,
) -> Result<RunMetrics> {
    let test: Vec<&Sample> = dataset.split(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::Dataset(format!("{}: empty test split", dataset.name)));
    }
    let x = batch_matrix(space, &test, dataset.pair_type, None)?;
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let predicted = model.predict(x.view());
    let c = Confusion::from_predictions(&labels, &predicted);
    Ok(RunMetrics::from_confusion(&c, run_index, final_epoch))
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MetricSummary { mean, std }
    }
}

/// All runs of one (dataset, space, architecture) combination.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub dataset: String,
    pub relation: String,
    pub group: String,
    pub pair_type: PairType,
    pub space: String,
    pub arch: ArchKind,
    pub runs: Vec<RunMetrics>,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub accuracy: MetricSummary,
    pub f1: MetricSummary,
}

impl ExperimentResult {
    pub fn from_runs(
        dataset: &RelationDataset,
        space: &str,
        arch: ArchKind,
        runs: Vec<RunMetrics>,
    ) -> Self {
        let mut r = ExperimentResult {
            dataset: dataset.name.clone(),
            relation: dataset.relation.clone(),
            group: dataset.group.clone(),
            pair_type: dataset.pair_type,
            space: space.to_string(),
            arch,
            runs,
            precision: MetricSummary::default(),
            recall: MetricSummary::default(),
            accuracy: MetricSummary::default(),
            f1: MetricSummary::default(),
        };
        r.summarize();
        r
    }

    /// Recomputes the summaries from `runs`.
    pub fn summarize(&mut self) {
        let col = |f: fn(&RunMetrics) -> f64| self.runs.iter().map(f).collect::<Vec<_>>();
        self.precision = MetricSummary::of(&col(|r| r.precision));
        self.recall = MetricSummary::of(&col(|r| r.recall));
        self.accuracy = MetricSummary::of(&col(|r| r.accuracy));
        self.f1 = MetricSummary::of(&col(|r| r.f1));
    }

    pub fn is_random_dataset(&self) -> bool {
        crate::forge::is_random_name(&self.relation)
    }
}

/// Seed of one training run.
pub fn run_seed(master_seed: u64, dataset: &str, space: &str, arch: ArchKind, run: usize) -> u64 {
    derive_seed(
        master_seed,
        &["train", dataset, space, &arch.to_string(), &run.to_string()],
    )
}

/// Trains `cfg.runs` independent probes and aggregates their metrics.
pub fn run_experiment(
    dataset: &RelationDataset,
    space: &EmbeddingSpace,
    cfg: &TrainingConfig,
    master_seed: u64,
) -> Result<ExperimentResult> {
    let arch = ProbeArchitecture::for_dataset(cfg.arch, dataset.pair_type, space.dim());
    let runs = (0..cfg.runs)
        .map(|i| {
            let seed = run_seed(master_seed, &dataset.name, space.name(), cfg.arch, i);
            train_probe(dataset, space, &arch, cfg, i, seed).map(|t| t.metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::from_runs(dataset, space.name(), cfg.arch, runs))
}

/// Compares analytic gradients of the cross-entropy loss with central finite
/// differences (step 1e-4, dropout off) on a small random batch and returns
/// the largest relative error over all parameters.
pub fn gradient_check(arch: &ProbeArchitecture, probe_seed: u64) -> f64 {
    gradient_check_impl(arch, probe_seed, false)
}

pub(crate) fn gradient_check_impl(arch: &ProbeArchitecture, probe_seed: u64, corrupt: bool) -> f64 {
    const STEP: f64 = 1e-4;
    const BATCH: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let mut model = Mlp::new(&arch.layer_sizes(), &mut rng);
    model.corrupt_backward = corrupt;
    let x = Array2::from_shape_fn((BATCH, arch.input_width), |_| rng.random_range(-1.0..1.0));
    let y: Vec<u8> = (0..BATCH).map(|i| (i % 2) as u8).collect();

    let mut analytic = vec![0.0; model.params().len()];
    model.loss_and_grad(x.view(), &y, 0.0, &mut rng, &mut analytic);

    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + STEP;
        let up = model.loss(x.view(), &y);
        model.params_mut()[i] = orig - STEP;
        let down = model.loss(x.view(), &y);
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// The small network used by the gradient harness: 8 inputs, hidden (6, 4).
pub fn tiny_probe() -> ProbeArchitecture {
    ProbeArchitecture {
        kind: ArchKind::NN2,
        input_width: 8,
        hidden: vec![6, 4],
    }
}
