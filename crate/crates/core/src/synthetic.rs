//! Synthetic studies with known answers.
//!
//! The planted study has `n_pairs` subject words and as many object words.
//! Object `i` sits at `subject_i + offset + noise`, so the `planted` relation
//! is recoverable from the pair difference. `identity` pairs every subject
//! with itself (learnable from any embedding, hence a biased dataset) and
//! `scrambled` pairs subjects with a random permutation of the objects.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::{EmbeddingSpace, KindRules};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NodeId, Triple};
use crate::seed::derive_seed;

pub const PLANTED: &str = "planted";
pub const IDENTITY: &str = "identity";
pub const SCRAMBLED: &str = "scrambled";

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub dim: usize,
    pub n_pairs: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub identity: bool,
    pub scrambled: bool,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            dim: 32,
            n_pairs: 1000,
            noise_std: 0.01,
            seed: 7,
            identity: true,
            scrambled: true,
        }
    }
}

pub struct SyntheticStudy {
    pub kg: KnowledgeGraph,
    pub space: EmbeddingSpace,
    pub offset: Vec<f64>,
}

pub fn subject(i: usize) -> NodeId {
    NodeId::word(&format!("s{i:05}"))
}

pub fn object(i: usize) -> NodeId {
    NodeId::word(&format!("o{i:05}"))
}

/// Builds the planted study in memory. Subject vectors and the offset are
/// uniform on [-0.5, 0.5].
pub fn planted_study(cfg: &PlantedConfig) -> Result<SyntheticStudy> {
    if cfg.dim == 0 || cfg.n_pairs < 2 {
        return Err(Error::Config("planted study needs dim > 0 and at least 2 pairs".into()));
    }
    let normal = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::Config(format!("noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["synthetic", "space"]));
    let offset: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-0.5..=0.5)).collect();
    let mut rows = Vec::with_capacity(2 * cfg.n_pairs);
    let mut objects = Vec::with_capacity(cfg.n_pairs);
    for i in 0..cfg.n_pairs {
        let s: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let o: Vec<f64> = s
            .iter()
            .zip(&offset)
            .map(|(a, b)| a + b + normal.sample(&mut rng))
            .collect();
        rows.push((subject(i), s));
        objects.push((object(i), o));
    }
    rows.extend(objects);
    let space = EmbeddingSpace::from_rows(PLANTED, cfg.dim, rows)?;

    let triple = |r: &str, subject: NodeId, object: NodeId| Triple {
        relation: r.to_string(),
        subject,
        object,
    };
    let mut triples: Vec<Triple> = (0..cfg.n_pairs)
        .map(|i| triple(PLANTED, subject(i), object(i)))
        .collect();
    if cfg.identity {
        triples.extend((0..cfg.n_pairs).map(|i| triple(IDENTITY, subject(i), subject(i))));
    }
    if cfg.scrambled {
        let mut perm: Vec<usize> = (0..cfg.n_pairs).collect();
        let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["synthetic", "scrambled"]));
        perm.shuffle(&mut prng);
        triples.extend(
            perm.iter()
                .enumerate()
                .map(|(i, &j)| triple(SCRAMBLED, subject(i), object(j))),
        );
    }
    let kg = KnowledgeGraph::from_triples(triples, None);
    Ok(SyntheticStudy { kg, space, offset })
}

/// Relation groups used in the generated study config.
pub fn groups() -> BTreeMap<String, String> {
    [(PLANTED, "planted"), (IDENTITY, "identity"), (SCRAMBLED, "scrambled")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Writes `kg.tsv` and `planted.vec` into `dir` and returns their paths.
pub fn write_study(study: &SyntheticStudy, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let kg_path = dir.join("kg.tsv");
    fs::write(&kg_path, study.kg.to_tsv()).map_err(|e| Error::io(&kg_path, e))?;
    let vec_path = dir.join(format!("{PLANTED}.vec"));
    let mut buf = Vec::new();
    study
        .space
        .write_text(&KindRules::default(), &mut buf)
        .map_err(|e| Error::io(&vec_path, e))?;
    fs::write(&vec_path, buf).map_err(|e| Error::io(&vec_path, e))?;
    Ok((kg_path, vec_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_geometry() {
        let cfg = PlantedConfig {
            n_pairs: 50,
            ..PlantedConfig::default()
        };
        let st = planted_study(&cfg).unwrap();
        assert_eq!(st.space.len(), 100);
        assert_eq!(st.space.dim(), 32);
        for i in 0..50 {
            let s = st.space.lookup(&subject(i)).unwrap();
            let o = st.space.lookup(&object(i)).unwrap();
            for d in 0..32 {
                let noise = o[d] - s[d] - st.offset[d];
                assert!(noise.abs() < 0.06, "{noise}");
            }
        }
        assert_eq!(st.kg.pairs(PLANTED).unwrap().len(), 50);
        assert!(st.kg.pairs(IDENTITY).unwrap().iter().all(|(a, b)| a == b));
        assert_eq!(st.kg.pairs(SCRAMBLED).unwrap().len(), 50);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let cfg = PlantedConfig {
            n_pairs: 20,
            dim: 4,
            ..PlantedConfig::default()
        };
        let a = planted_study(&cfg).unwrap();
        let b = planted_study(&cfg).unwrap();
        assert_eq!(a.kg, b.kg);
        assert_eq!(a.space.matrix(), b.space.matrix());
        let dir = tempfile::tempdir().unwrap();
        let (kg_path, vec_path) = write_study(&a, dir.path()).unwrap();
        assert_eq!(crate::kg::load_kg(&kg_path).unwrap(), a.kg);
        let back = crate::embedding::load_embeddings(&vec_path, PLANTED, &KindRules::default()).unwrap();
        assert_eq!(back.len(), 40);
    }
}
