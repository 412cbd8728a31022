//! Embedding spaces: word2vec text loading, random baseline spaces and the
//! per-kind seed vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{NodeId, NodeKind};

/// Maps embedding tokens to node ids by prefix. Tokens matching no rule get
/// the default kind and keep their full text as the name.
#[derive(Clone, Debug)]
pub struct KindRules {
    rules: Vec<(String, NodeKind)>,
    default: NodeKind,
}

impl Default for KindRules {
    fn default() -> Self {
        KindRules {
            rules: vec![
                ("c:".into(), NodeKind::Concept),
                ("i:".into(), NodeKind::Instance),
                ("w:".into(), NodeKind::Word),
            ],
            default: NodeKind::Word,
        }
    }
}

impl KindRules {
    pub fn new(rules: Vec<(String, NodeKind)>, default: NodeKind) -> Self {
        KindRules { rules, default }
    }

    pub fn node_for(&self, token: &str) -> Result<NodeId> {
        for (prefix, kind) in &self.rules {
            if let Some(name) = token.strip_prefix(prefix.as_str()) {
                return NodeId::new(*kind, name);
            }
        }
        NodeId::new(self.default, token)
    }

    /// Inverse of [`node_for`](Self::node_for) for writing spaces back out.
    pub fn token_for(&self, node: &NodeId) -> String {
        if node.kind() == self.default && self.node_for(node.name()).ok().as_ref() == Some(node) {
            return node.name().to_string();
        }
        match self.rules.iter().find(|(_, k)| *k == node.kind()) {
            Some((prefix, _)) => format!("{prefix}{}", node.name()),
            None => node.name().to_string(),
        }
    }
}

/// An immutable vocabulary-to-vector map.
#[derive(Clone, Debug)]
pub struct EmbeddingSpace {
    name: String,
    dim: usize,
    index: HashMap<NodeId, usize>,
    nodes: Vec<NodeId>,
    data: Vec<f64>,
    component_std: f64,
}

impl EmbeddingSpace {
    /// Builds a space from `(node, vector)` rows. Fails on duplicates,
    /// non-finite components or ragged rows.
    pub fn from_rows(
        name: impl Into<String>,
        dim: usize,
        rows: impl IntoIterator<Item = (NodeId, Vec<f64>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmbeddingFormat("dimension must be positive".into()));
        }
        let mut index = HashMap::new();
        let mut nodes = Vec::new();
        let mut data = Vec::new();
        for (node, vec) in rows {
            if vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: vec.len(),
                });
            }
            if let Some(v) = vec.iter().find(|v| !v.is_finite()) {
                return Err(Error::EmbeddingFormat(format!(
                    "non-finite component {v} for {node}"
                )));
            }
            if index.insert(node.clone(), nodes.len()).is_some() {
                return Err(Error::EmbeddingFormat(format!("duplicate token {node}")));
            }
            nodes.push(node);
            data.extend(vec);
        }
        let component_std = sample_std(&data);
        Ok(EmbeddingSpace {
            name: name.into(),
            dim,
            index,
            nodes,
            data,
            component_std,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sample standard deviation over every component of every vector.
    pub fn component_std(&self) -> f64 {
        self.component_std
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.index.contains_key(node)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter()
    }

    pub fn kinds(&self) -> BTreeSet<NodeKind> {
        self.nodes.iter().map(NodeId::kind).collect()
    }

    pub fn lookup(&self, node: &NodeId) -> Result<&[f64]> {
        match self.index.get(node) {
            Some(&i) => Ok(&self.data[i * self.dim..(i + 1) * self.dim]),
            None => Err(Error::OutOfVocabulary {
                node: node.clone(),
                space: self.name.clone(),
            }),
        }
    }

    /// Row-major `len() x dim()` matrix of all components.
    pub fn matrix(&self) -> &[f64] {
        &self.data
    }

    /// Writes the space in word2vec text format.
    pub fn write_text<W: Write>(&self, rules: &KindRules, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, node) in self.nodes.iter().enumerate() {
            out.write_all(rules.token_for(node).as_bytes())?;
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    name: impl Into<String>,
    rules: &KindRules,
) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file, name, rules)
}

/// Reads word2vec text format: a `<count> <dim>` header followed by one
/// `token v1 .. v_dim` line per token.
pub fn read_embeddings<R: Read>(
    reader: R,
    name: impl Into<String>,
    rules: &KindRules,
) -> Result<EmbeddingSpace> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::EmbeddingFormat(e.to_string()))?,
        None => return Err(Error::EmbeddingFormat("missing header".into())),
    };
    let mut parts = header.split_whitespace();
    let parse_usize = |s: Option<&str>| -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::EmbeddingFormat(format!("bad header `{header}`")))
    };
    let count = parse_usize(parts.next())?;
    let dim = parse_usize(parts.next())?;
    if parts.next().is_some() || dim == 0 {
        return Err(Error::EmbeddingFormat(format!("bad header `{header}`")));
    }

    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::EmbeddingFormat(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line");
        let vec: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::EmbeddingFormat(format!("line {lineno}: bad component `{f}`"))
                })
            })
            .collect::<Result<_>>()?;
        if vec.len() != dim {
            return Err(Error::EmbeddingFormat(format!(
                "line {lineno}: expected {dim} components, found {}",
                vec.len()
            )));
        }
        let node = rules
            .node_for(token)
            .map_err(|e| Error::EmbeddingFormat(format!("line {lineno}: {e}")))?;
        rows.push((node, vec));
    }
    if rows.len() != count {
        return Err(Error::EmbeddingFormat(format!(
            "header declares {count} tokens but file contains {}",
            rows.len()
        )));
    }
    EmbeddingSpace::from_rows(name, dim, rows)
}

/// Random baseline space: i.i.d. uniform components on [-0.5, 0.5].
pub fn make_random_space(
    name: impl Into<String>,
    vocab: &BTreeSet<NodeId>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingSpace> {
    if vocab.is_empty() {
        return Err(Error::Config("random space needs a non-empty vocabulary".into()));
    }
    if dim == 0 {
        return Err(Error::Config("random space dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = vocab
        .iter()
        .map(|n| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..=0.5)).collect();
            (n.clone(), v)
        })
        .collect::<Vec<_>>();
    EmbeddingSpace::from_rows(name, dim, rows)
}

/// Per-kind intersection of vocabularies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedVocabulary {
    sets: BTreeMap<NodeKind, BTreeSet<NodeId>>,
}

impl SeedVocabulary {
    pub fn new(sets: BTreeMap<NodeKind, BTreeSet<NodeId>>) -> Self {
        SeedVocabulary { sets }
    }

    pub fn get(&self, kind: NodeKind) -> &BTreeSet<NodeId> {
        static EMPTY: BTreeSet<NodeId> = BTreeSet::new();
        self.sets.get(&kind).unwrap_or(&EMPTY)
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.get(node.kind()).contains(node)
    }

    /// Concepts and instances together.
    pub fn conceptual(&self) -> BTreeSet<NodeId> {
        self.get(NodeKind::Concept)
            .union(self.get(NodeKind::Instance))
            .cloned()
            .collect()
    }

    pub fn all(&self) -> BTreeSet<NodeId> {
        self.sets.values().flatten().cloned().collect()
    }

    /// Keeps only members accepted by `keep`.
    pub fn restrict(&self, keep: impl Fn(&NodeId) -> bool) -> SeedVocabulary {
        SeedVocabulary {
            sets: self
                .sets
                .iter()
                .map(|(k, s)| (*k, s.iter().filter(|n| keep(n)).cloned().collect()))
                .collect(),
        }
    }
}

/// Intersects vocabularies per node kind, taking for each kind only the
/// spaces that declare coverage of it.
pub fn seed_vocabulary(
    spaces: &[(&EmbeddingSpace, BTreeSet<NodeKind>)],
) -> Result<SeedVocabulary> {
    if spaces.is_empty() {
        return Err(Error::Config("seed vocabulary needs at least one space".into()));
    }
    let mut sets = BTreeMap::new();
    for kind in NodeKind::ALL {
        let covering: Vec<&EmbeddingSpace> = spaces
            .iter()
            .filter(|(_, cov)| cov.contains(&kind))
            .map(|(s, _)| *s)
            .collect();
        let Some((first, rest)) = covering.split_first() else {
            log::warn!("no space covers {kind} nodes; {kind} seed is empty");
            sets.insert(kind, BTreeSet::new());
            continue;
        };
        let set: BTreeSet<NodeId> = first
            .vocabulary()
            .filter(|n| n.kind() == kind && rest.iter().all(|s| s.contains(n)))
            .cloned()
            .collect();
        sets.insert(kind, set);
    }
    Ok(SeedVocabulary { sets })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<EmbeddingSpace> {
        read_embeddings(s.as_bytes(), "t", &KindRules::default())
    }

    #[test]
    fn small_file() {
        let s = read("2 3\ncat 0.1 -0.2 3e-1\nc:feline 1 2 3\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.lookup(&NodeId::word("cat")).unwrap(), &[0.1, -0.2, 0.3]);
        assert_eq!(s.lookup(&NodeId::concept("feline")).unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(
            s.lookup(&NodeId::word("cat")).unwrap(),
            s.lookup(&NodeId::word("cat")).unwrap()
        );
    }

    #[test]
    fn header_count_mismatch() {
        let err = read("5 2\na 1 2\nb 1 2\nc 1 2\nd 1 2\n").unwrap_err();
        assert!(err.to_string().contains("declares 5"), "{err}");
    }

    #[test]
    fn arity_and_values_checked() {
        assert!(read("1 3\na 1 2\n").is_err());
        assert!(read("1 2\na 1 NaN\n").is_err());
        assert!(read("1 2\na 1 inf\n").is_err());
        assert!(read("2 2\na 1 2\na 3 4\n").unwrap_err().to_string().contains("duplicate"));
        assert!(read("").is_err());
    }

    #[test]
    fn zero_vectors_have_zero_std() {
        let s = read("2 2\na 0 0\nb 0 0\n").unwrap();
        assert_eq!(s.component_std(), 0.0);
    }

    #[test]
    fn oov_names_token_and_space() {
        let s = read("1 1\na 1\n").unwrap();
        let msg = s.lookup(&NodeId::word("zzz")).unwrap_err().to_string();
        assert!(msg.contains("w:zzz") && msg.contains("`t`"), "{msg}");
    }

    #[test]
    fn write_then_read_is_exact() {
        let vocab: BTreeSet<NodeId> =
            [NodeId::word("a"), NodeId::concept("b"), NodeId::instance("c")].into();
        let s = make_random_space("r", &vocab, 7, 3).unwrap();
        let mut buf = Vec::new();
        s.write_text(&KindRules::default(), &mut buf).unwrap();
        let back = read_embeddings(buf.as_slice(), "r", &KindRules::default()).unwrap();
        for n in &vocab {
            assert_eq!(s.lookup(n).unwrap(), back.lookup(n).unwrap());
        }
    }

    #[test]
    fn random_space_is_deterministic_and_seed_sensitive() {
        let vocab: BTreeSet<NodeId> = (0..50).map(|i| NodeId::word(&format!("w{i}"))).collect();
        let a = make_random_space("r", &vocab, 8, 1).unwrap();
        let b = make_random_space("r", &vocab, 8, 1).unwrap();
        let c = make_random_space("r", &vocab, 8, 2).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_ne!(a.matrix(), c.matrix());
        assert!(a.matrix().iter().all(|v| (-0.5..=0.5).contains(v)));
        assert!(make_random_space("r", &BTreeSet::new(), 8, 1).is_err());
        assert!(make_random_space("r", &vocab, 0, 1).is_err());
    }

    #[test]
    fn random_space_std_matches_uniform() {
        let vocab: BTreeSet<NodeId> = (0..1000).map(|i| NodeId::word(&format!("w{i}"))).collect();
        let s = make_random_space("r", &vocab, 300, 11).unwrap();
        // recompute independently
        let m = s.matrix();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m.len() - 1) as f64;
        assert!((var.sqrt() - s.component_std()).abs() <= 1e-9 * s.component_std());
        assert!((0.283..=0.294).contains(&s.component_std()), "{}", s.component_std());
    }

    #[test]
    fn random_space_dimension_means_near_zero() {
        let vocab: BTreeSet<NodeId> = (0..20_000).map(|i| NodeId::word(&format!("w{i}"))).collect();
        let s = make_random_space("r", &vocab, 8, 5).unwrap();
        let m = s.matrix();
        for d in 0..8 {
            let col_mean = (0..20_000).map(|r| m[r * 8 + d]).sum::<f64>() / 20_000.0;
            assert!(col_mean.abs() <= 0.02, "dim {d}: {col_mean}");
        }
    }

    fn space(name: &str, tokens: &[&str]) -> EmbeddingSpace {
        let rules = KindRules::default();
        EmbeddingSpace::from_rows(
            name,
            1,
            tokens.iter().map(|t| (rules.node_for(t).unwrap(), vec![0.0])),
        )
        .unwrap()
    }

    #[test]
    fn seed_two_spaces() {
        let a = space("a", &["a", "b", "c"]);
        let b = space("b", &["b", "c", "e"]);
        let words: BTreeSet<NodeKind> = [NodeKind::Word].into();
        let seed = seed_vocabulary(&[(&a, words.clone()), (&b, words)]).unwrap();
        assert_eq!(seed.get(NodeKind::Word), &[NodeId::word("b"), NodeId::word("c")].into());
        assert!(seed.get(NodeKind::Concept).is_empty());
    }

    #[test]
    fn seed_single_space_is_identity() {
        let a = space("a", &["x", "c:y", "i:z"]);
        let seed = seed_vocabulary(&[(&a, NodeKind::ALL.into())]).unwrap();
        assert_eq!(seed.all().len(), 3);
        assert_eq!(seed.conceptual().len(), 2);
    }

    #[test]
    fn seed_per_kind_coverage() {
        let glove = space("glove", &["a", "b", "c", "d"]);
        let hole = space("hole", &["a", "b", "c", "c:x", "c:y", "c:z"]);
        let vecsi = space("vecsi", &["b", "c", "d", "c:y", "c:z", "c:w"]);
        let w: BTreeSet<NodeKind> = [NodeKind::Word].into();
        let wc: BTreeSet<NodeKind> = [NodeKind::Word, NodeKind::Concept].into();
        let seed =
            seed_vocabulary(&[(&glove, w), (&hole, wc.clone()), (&vecsi, wc)]).unwrap();
        // brute force
        let words: BTreeSet<NodeId> = ["a", "b", "c", "d"]
            .iter()
            .map(|t| NodeId::word(t))
            .filter(|n| glove.contains(n) && hole.contains(n) && vecsi.contains(n))
            .collect();
        assert_eq!(seed.get(NodeKind::Word), &words);
        assert_eq!(
            seed.get(NodeKind::Concept),
            &[NodeId::concept("y"), NodeId::concept("z")].into()
        );
        assert!(seed_vocabulary(&[]).is_err());
    }

    #[test]
    fn kind_rules_round_trip_tokens() {
        let rules = KindRules::default();
        for tok in ["cat", "c:cat", "i:paris"] {
            assert_eq!(rules.token_for(&rules.node_for(tok).unwrap()), tok);
        }
        // a plain word whose name looks prefixed keeps its w: prefix
        let odd = NodeId::word("c:x");
        assert_eq!(rules.node_for(&rules.token_for(&odd)).unwrap(), odd);
    }
}
