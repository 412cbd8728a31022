//! Statistical analysis of probe results: baseline ranges from random
//! datasets, dataset-bias detection through random-embedding probes, the 2σ
//! significance rule, and per-group aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::ManifestRow;
use crate::probe::{mean_std, ArchKind, ExperimentResult, RunMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
    Accuracy,
    F1,
}

impl Metric {
    pub fn of(self, r: &RunMetrics) -> f64 {
        match self {
            Metric::Precision => r.precision,
            Metric::Recall => r.recall,
            Metric::Accuracy => r.accuracy,
            Metric::F1 => r.f1,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
        })
    }
}

/// `[mean - 2 std, mean + 2 std]` of a metric pooled over random-dataset runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRange {
    pub metric: Metric,
    pub lower: f64,
    pub upper: f64,
    pub source_mean: f64,
    pub source_std: f64,
    pub n_results: usize,
}

impl BaselineRange {
    pub fn from_values(metric: Metric, values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Statistics(format!(
                "baseline range needs at least 2 pooled values, got {}",
                values.len()
            )));
        }
        let (mean, std) = mean_std(values);
        Ok(BaselineRange {
            metric,
            lower: mean - 2.0 * std,
            upper: mean + 2.0 * std,
            source_mean: mean,
            source_std: std,
            n_results: values.len(),
        })
    }

    /// Closed interval membership.
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Pools the per-run values of `metric` over every given result.
pub fn baseline_range(random_results: &[ExperimentResult], metric: Metric) -> Result<BaselineRange> {
    let values: Vec<f64> = random_results
        .iter()
        .flat_map(|r| r.runs.iter().map(move |run| metric.of(run)))
        .collect();
    BaselineRange::from_values(metric, &values)
}

/// True when a random-embedding probe's mean f1 leaves the baseline range.
pub fn detect_bias(random_embedding_result: &ExperimentResult, range: &BaselineRange) -> bool {
    let runs: Vec<f64> = random_embedding_result
        .runs
        .iter()
        .map(|r| range.metric.of(r))
        .collect();
    let (mean, _) = mean_std(&runs);
    !range.contains(mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Significance {
    Better,
    Worse,
    NotSignificant,
}

/// The 2σ rule on mean f1: the gap between the means must strictly exceed
/// twice the larger of the two standard deviations.
pub fn significance(result: &ExperimentResult, random: &ExperimentResult) -> Result<Significance> {
    if result.dataset != random.dataset {
        return Err(Error::MismatchedDatasets {
            a: result.dataset.clone(),
            b: random.dataset.clone(),
        });
    }
    Ok(significance_of(
        result.f1.mean,
        result.f1.std,
        random.f1.mean,
        random.f1.std,
    ))
}

pub fn significance_of(mu: f64, sigma: f64, mu_rand: f64, sigma_rand: f64) -> Significance {
    let margin = 2.0 * sigma.max(sigma_rand);
    if mu - mu_rand > margin {
        Significance::Better
    } else if mu_rand - mu > margin {
        Significance::Worse
    } else {
        Significance::NotSignificant
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    BiasedDataset,
    NotSignificant,
    PredictableBetter,
    PredictableWorse,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::BiasedDataset => "biased_dataset",
            Classification::NotSignificant => "not_significant",
            Classification::PredictableBetter => "predictable_better",
            Classification::PredictableWorse => "predictable_worse",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "biased_dataset" => Classification::BiasedDataset,
            "not_significant" => Classification::NotSignificant,
            "predictable_better" => Classification::PredictableBetter,
            "predictable_worse" => Classification::PredictableWorse,
            other => return Err(Error::Statistics(format!("unknown classification `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationVerdict {
    pub dataset: String,
    pub relation: String,
    pub group: String,
    pub pair_type: String,
    pub space: String,
    pub arch: ArchKind,
    pub classification: Classification,
    /// Absent for biased datasets.
    pub mu_f1: Option<f64>,
    pub delta_mu_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Classified {
    pub verdicts: Vec<RelationVerdict>,
    /// Datasets without a random-embedding result.
    pub unanalyzable: Vec<String>,
    /// Datasets flagged as biased.
    pub biased: BTreeSet<String>,
}

/// Classifies every relation-dataset result against the random-embedding
/// result on the same dataset and architecture. Random datasets and the
/// random space's own results produce no verdicts.
pub fn classify_all(results: &[ExperimentResult], range: &BaselineRange, random_space: &str) -> Classified {
    let mut by_dataset: BTreeMap<(&str, ArchKind), Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results.iter().filter(|r| !r.is_random_dataset()) {
        by_dataset.entry((r.dataset.as_str(), r.arch)).or_default().push(r);
    }
    let mut out = Classified::default();
    for ((dataset, _), group) in by_dataset {
        let Some(rand) = group.iter().find(|r| r.space == random_space) else {
            if !out.unanalyzable.iter().any(|d| d == dataset) {
                out.unanalyzable.push(dataset.to_string());
            }
            continue;
        };
        let biased = detect_bias(rand, range);
        if biased {
            out.biased.insert(dataset.to_string());
        }
        let mut models: Vec<&&ExperimentResult> = group.iter().filter(|r| r.space != random_space).collect();
        models.sort_by(|a, b| a.space.cmp(&b.space));
        for r in models {
            let (classification, mu, delta) = if biased {
                (Classification::BiasedDataset, None, None)
            } else {
                let c = match significance_of(r.f1.mean, r.f1.std, rand.f1.mean, rand.f1.std) {
                    Significance::Better => Classification::PredictableBetter,
                    Significance::Worse => Classification::PredictableWorse,
                    Significance::NotSignificant => Classification::NotSignificant,
                };
                (c, Some(r.f1.mean), Some(r.f1.mean - rand.f1.mean))
            };
            out.verdicts.push(RelationVerdict {
                dataset: r.dataset.clone(),
                relation: r.relation.clone(),
                group: r.group.clone(),
                pair_type: r.pair_type.to_string(),
                space: r.space.clone(),
                arch: r.arch,
                classification,
                mu_f1: mu,
                delta_mu_f1: delta,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub group: String,
    pub pair_type: String,
    pub kg: String,
    pub n_datasets: usize,
    pub n_biased_datasets: usize,
    pub n_models: usize,
    pub n_biased: usize,
    pub n_not_signif: usize,
    pub n_better: usize,
    pub n_worse: usize,
    pub pct_biased: f64,
    pub pct_not_signif: f64,
    pub pct_better: f64,
    pub pct_worse: f64,
    /// Means over predictable_better verdicts; absent when there are none.
    pub mean_mu_f1: Option<f64>,
    pub mean_delta_mu_f1: Option<f64>,
}

const ALL: &str = "all";

/// Rolls verdicts up per (group, pair type), with overall and per-pair-type
/// rows first. Dataset counts come from the manifest's generated datasets.
pub fn aggregate(verdicts: &[RelationVerdict], manifest: &[ManifestRow], kg: &str) -> Vec<AggregateRow> {
    let datasets: Vec<&ManifestRow> = manifest
        .iter()
        .filter(|m| m.is_ok() && !crate::forge::is_random_name(&m.relation))
        .collect();
    let pair_types: BTreeSet<String> = datasets
        .iter()
        .map(|m| m.pair_type.to_string())
        .chain(verdicts.iter().map(|v| v.pair_type.clone()))
        .collect();
    let groups: BTreeSet<(String, String)> = datasets
        .iter()
        .map(|m| (m.group.clone(), m.pair_type.to_string()))
        .chain(verdicts.iter().map(|v| (v.group.clone(), v.pair_type.clone())))
        .collect();

    let mut keys: Vec<(String, String)> = vec![(ALL.into(), ALL.into())];
    keys.extend(pair_types.into_iter().map(|p| (ALL.to_string(), p)));
    keys.extend(groups);

    keys.into_iter()
        .map(|(group, pt)| {
            let matches = |g: &str, p: &str| (group == ALL || group == g) && (pt == ALL || pt == p);
            let ds: BTreeSet<&str> = datasets
                .iter()
                .filter(|m| matches(&m.group, m.pair_type.as_str()))
                .map(|m| m.dataset.as_str())
                .collect();
            let vs: Vec<&RelationVerdict> = verdicts.iter().filter(|v| matches(&v.group, &v.pair_type)).collect();
            let count = |c: Classification| vs.iter().filter(|v| v.classification == c).count();
            let biased_ds: BTreeSet<&str> = vs
                .iter()
                .filter(|v| v.classification == Classification::BiasedDataset)
                .map(|v| v.dataset.as_str())
                .collect();
            let better: Vec<&&RelationVerdict> = vs
                .iter()
                .filter(|v| v.classification == Classification::PredictableBetter)
                .collect();
            let n = vs.len();
            let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
            let mean_of = |f: fn(&RelationVerdict) -> Option<f64>| {
                let vals: Vec<f64> = better.iter().filter_map(|v| f(v)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            let (nb, nn, nbt, nw) = (
                count(Classification::BiasedDataset),
                count(Classification::NotSignificant),
                count(Classification::PredictableBetter),
                count(Classification::PredictableWorse),
            );
            AggregateRow {
                group,
                pair_type: pt,
                kg: kg.to_string(),
                n_datasets: ds.union(&biased_ds).count(),
                n_biased_datasets: biased_ds.len(),
                n_models: n,
                n_biased: nb,
                n_not_signif: nn,
                n_better: nbt,
                n_worse: nw,
                pct_biased: pct(nb),
                pct_not_signif: pct(nn),
                pct_better: pct(nbt),
                pct_worse: pct(nw),
                mean_mu_f1: mean_of(|v| v.mu_f1),
                mean_delta_mu_f1: mean_of(|v| v.delta_mu_f1),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_verdicts<W: Write>(verdicts: &[RelationVerdict], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset",
        "relation",
        "group",
        "pair_type",
        "space",
        "arch",
        "classification",
        "mu_f1",
        "delta_mu_f1",
    ])?;
    for v in verdicts {
        w.write_record([
            v.dataset.as_str(),
            &v.relation,
            &v.group,
            &v.pair_type,
            &v.space,
            &v.arch.to_string(),
            v.classification.as_str(),
            &opt(v.mu_f1),
            &opt(v.delta_mu_f1),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<verdicts>", e))?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group",
        "pair_type",
        "kg",
        "n_datasets",
        "n_biased_datasets",
        "n_models",
        "n_biased_models",
        "pct_biased",
        "pct_not_signif",
        "pct_better",
        "pct_worse",
        "mean_mu_f1",
        "mean_delta_mu_f1",
    ])?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.pair_type.clone(),
            r.kg.clone(),
            r.n_datasets.to_string(),
            r.n_biased_datasets.to_string(),
            r.n_models.to_string(),
            r.n_biased.to_string(),
            format!("{:.1}", r.pct_biased),
            format!("{:.1}", r.pct_not_signif),
            format!("{:.1}", r.pct_better),
            format!("{:.1}", r.pct_worse),
            opt(r.mean_mu_f1),
            opt(r.mean_delta_mu_f1),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<aggregate>", e))?;
    Ok(())
}

/// Plain-text table: dataset rel, KG, dataset counts, model count and
/// percentages, then absolute and relative f1 of the better-than-baseline
/// models.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let header = [
        "dataset rel", "KG", "#", "# biased", "#", "% biased", "% not signif.", "% better",
        "% worse", "mu_f1", "delta_mu_f1",
    ];
    fn short(s: &str) -> &str {
        match s {
            "concept_concept" => "c",
            "word_concept" => "w/c",
            "word_word" => "w",
            "unary" => "u",
            other => other,
        }
    }
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let name = match (r.group.as_str(), r.pair_type.as_str()) {
            (ALL, ALL) => ALL.to_string(),
            (ALL, p) => p.to_string(),
            (g, p) => format!("{g}_{}", short(p)),
        };
        let f3 = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        cells.push(vec![
            name,
            r.kg.clone(),
            r.n_datasets.to_string(),
            r.n_biased_datasets.to_string(),
            r.n_models.to_string(),
            format!("{:.1}", r.pct_biased),
            format!("{:.1}", r.pct_not_signif),
            format!("{:.1}", r.pct_better),
            format!("{:.1}", r.pct_worse),
            f3(r.mean_mu_f1),
            f3(r.mean_delta_mu_f1),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c < 2 {
                    format!("{v:<w$}", w = widths[c])
                } else {
                    format!("{v:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
