//! Knowledge graph store: nodes, relation types and triples loaded from a TSV
//! triple file.
//!
//! File layout, one tab-separated triple per line:
//!
//! ```text
//! #rw=lemma_of
//! hyp c:spice c:flavorer
//! lemma_of w:cinnamon c:spice
//! ```
//!
//! Node ids carry a kind prefix (`c:` concept, `i:` instance, `w:` word).
//! Lines starting with `#` are comments, except the `#rw=<relation>` directive
//! which names the word-to-concept relation used for word-level projection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Concept,
    Instance,
    Word,
}

impl NodeKind {
    pub fn prefix(self) -> &'static str {
        match self {
            NodeKind::Concept => "c:",
            NodeKind::Instance => "i:",
            NodeKind::Word => "w:",
        }
    }

    /// Concepts and instances are interchangeable when building datasets.
    pub fn is_conceptual(self) -> bool {
        !matches!(self, NodeKind::Word)
    }

    pub const ALL: [NodeKind; 3] = [NodeKind::Concept, NodeKind::Instance, NodeKind::Word];
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Concept => "concept",
            NodeKind::Instance => "instance",
            NodeKind::Word => "word",
        })
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concept" => Ok(NodeKind::Concept),
            "instance" => Ok(NodeKind::Instance),
            "word" => Ok(NodeKind::Word),
            other => Err(Error::Config(format!("unknown node kind `{other}`"))),
        }
    }
}

/// A node of the graph. Serialized as `<prefix><name>`, e.g. `c:spice`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    kind: NodeKind,
    name: Arc<str>,
}

impl NodeId {
    pub fn new(kind: NodeKind, name: &str) -> Result<Self> {
        validate_name(name)?;
        Ok(NodeId {
            kind,
            name: Arc::from(name),
        })
    }

    pub fn concept(name: &str) -> Self {
        Self::new(NodeKind::Concept, name).expect("valid concept name")
    }

    pub fn instance(name: &str) -> Self {
        Self::new(NodeKind::Instance, name).expect("valid instance name")
    }

    pub fn word(name: &str) -> Self {
        Self::new(NodeKind::Word, name).expect("valid word name")
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Parses a prefixed id such as `w:cinnamon`.
    pub fn parse(token: &str) -> Result<Self> {
        let kind = match token.get(..2) {
            Some("c:") => NodeKind::Concept,
            Some("i:") => NodeKind::Instance,
            Some("w:") => NodeKind::Word,
            _ => {
                return Err(Error::UnknownPrefix {
                    line: 0,
                    token: token.to_string(),
                })
            }
        };
        Self::new(kind, &token[2..])
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::Config("empty node name".into()));
    }
    if name.chars().any(char::is_control) {
        return Err(Error::Config(format!(
            "node name {name:?} contains control characters"
        )));
    }
    Ok(())
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.name)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationType {
    pub name: String,
    /// Free-form category label such as "Hypernymy". Defaults to the name.
    pub group: String,
    /// Unary relations link a subject to a class node (e.g. a part of speech).
    pub unary: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub relation: String,
    pub subject: NodeId,
    pub object: NodeId,
}

/// Immutable after loading; safe to share across threads.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeGraph {
    nodes: BTreeSet<NodeId>,
    relations: BTreeMap<String, RelationType>,
    triples: BTreeSet<Triple>,
    word_concept_relation: Option<String>,
    by_relation: BTreeMap<String, Vec<(NodeId, NodeId)>>,
    concept_words: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.relations.keys().eq(other.relations.keys())
            && self.triples == other.triples
            && self.word_concept_relation == other.word_concept_relation
    }
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    KnowledgeGraph::from_reader(file)
}

impl KnowledgeGraph {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut word_rel = None;
        let mut triples = BTreeSet::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::MalformedLine {
                line: lineno,
                msg: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(name) = rest.trim().strip_prefix("rw=") {
                    let name = name.trim();
                    if name.is_empty() {
                        return Err(Error::MalformedLine {
                            line: lineno,
                            msg: "empty #rw= directive".into(),
                        });
                    }
                    word_rel = Some(name.to_string());
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::MalformedLine {
                    line: lineno,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields[0].is_empty() {
                return Err(Error::MalformedLine {
                    line: lineno,
                    msg: "empty relation name".into(),
                });
            }
            let node = |tok: &str| -> Result<NodeId> {
                NodeId::parse(tok).map_err(|e| match e {
                    Error::UnknownPrefix { token, .. } => Error::UnknownPrefix {
                        line: lineno,
                        token,
                    },
                    other => Error::MalformedLine {
                        line: lineno,
                        msg: other.to_string(),
                    },
                })
            };
            let triple = Triple {
                relation: fields[0].to_string(),
                subject: node(fields[1])?,
                object: node(fields[2])?,
            };
            if word_rel.as_deref() == Some(fields[0]) {
                check_word_link(&triple).map_err(|msg| Error::MalformedLine { line: lineno, msg })?;
            }
            triples.insert(triple);
        }
        // the directive may appear after some r_w lines
        if let Some(rw) = &word_rel {
            for t in triples.iter().filter(|t| &t.relation == rw) {
                check_word_link(t).map_err(Error::Config)?;
            }
        }
        Ok(Self::from_triples(triples, word_rel))
    }

    pub fn from_triples(
        triples: impl IntoIterator<Item = Triple>,
        word_concept_relation: Option<String>,
    ) -> Self {
        let triples: BTreeSet<Triple> = triples.into_iter().collect();
        let mut nodes = BTreeSet::new();
        let mut relations = BTreeMap::new();
        let mut by_relation: BTreeMap<String, Vec<(NodeId, NodeId)>> = BTreeMap::new();
        let mut concept_words: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for t in &triples {
            nodes.insert(t.subject.clone());
            nodes.insert(t.object.clone());
            relations
                .entry(t.relation.clone())
                .or_insert_with(|| RelationType {
                    name: t.relation.clone(),
                    group: t.relation.clone(),
                    unary: false,
                });
            by_relation
                .entry(t.relation.clone())
                .or_default()
                .push((t.subject.clone(), t.object.clone()));
            if word_concept_relation.as_deref() == Some(t.relation.as_str()) {
                concept_words
                    .entry(t.object.clone())
                    .or_default()
                    .insert(t.subject.clone());
            }
        }
        KnowledgeGraph {
            nodes,
            relations,
            triples,
            word_concept_relation,
            by_relation,
            concept_words,
        }
    }

    /// Attaches group labels and unary flags from study configuration.
    /// Unknown names are ignored.
    pub fn annotate(&mut self, groups: &BTreeMap<String, String>, unary: &BTreeSet<String>) {
        for (name, rel) in self.relations.iter_mut() {
            if let Some(g) = groups.get(name) {
                rel.group = g.clone();
            }
            rel.unary = unary.contains(name);
        }
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationType> {
        self.relations.values()
    }

    pub fn relation(&self, name: &str) -> Result<&RelationType> {
        self.relations
            .get(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn word_concept_relation(&self) -> Option<&str> {
        self.word_concept_relation.as_deref()
    }

    /// Like [`word_concept_relation`](Self::word_concept_relation) but fails
    /// when the directive is missing.
    pub fn require_word_relation(&self) -> Result<&str> {
        self.word_concept_relation
            .as_deref()
            .ok_or(Error::MissingWordRelation)
    }

    /// `(subject, object)` pairs of one relation, sorted.
    pub fn pairs(&self, relation: &str) -> Result<&[(NodeId, NodeId)]> {
        self.relation(relation)?;
        Ok(self
            .by_relation
            .get(relation)
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    /// Words linked to a concept or instance through the word-to-concept relation.
    pub fn words_of(&self, node: &NodeId) -> Result<BTreeSet<NodeId>> {
        if !node.kind().is_conceptual() {
            return Err(Error::WordNode(node.clone()));
        }
        Ok(self.concept_words.get(node).cloned().unwrap_or_default())
    }

    pub(crate) fn words_of_ref(&self, node: &NodeId) -> Option<&BTreeSet<NodeId>> {
        self.concept_words.get(node)
    }

    /// Serializes back into the TSV triple format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if let Some(rw) = &self.word_concept_relation {
            out.push_str(&format!("#rw={rw}\n"));
        }
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.relation, t.subject, t.object));
        }
        out
    }
}

fn check_word_link(t: &Triple) -> std::result::Result<(), String> {
    if t.subject.kind() != NodeKind::Word || !t.object.kind().is_conceptual() {
        return Err(format!(
            "word-to-concept triple must link a word to a concept or instance, got {} -> {}",
            t.subject, t.object
        ));
    }
    Ok(())
}

/// Per-relation summary columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationStats {
    pub relation: String,
    pub group: String,
    pub concept_pairs: usize,
    pub word_concept_pairs: usize,
    pub word_pairs: usize,
    /// Distinct objects over distinct subjects; `None` for unary relations.
    pub object_subject_ratio: Option<f64>,
    pub vocab_total: usize,
}

pub fn relation_stats(kg: &KnowledgeGraph, relation: &str) -> Result<RelationStats> {
    let rel = kg.relation(relation)?;
    let pairs = kg.pairs(relation)?;
    let subjects: BTreeSet<&NodeId> = pairs.iter().map(|(s, _)| s).collect();
    let objects: BTreeSet<&NodeId> = pairs.iter().map(|(_, o)| o).collect();
    let vocab: BTreeSet<&NodeId> = subjects.union(&objects).copied().collect();

    let concept_pairs = pairs
        .iter()
        .filter(|(s, o)| s.kind().is_conceptual() && o.kind().is_conceptual())
        .count();
    let word_concept_pairs = crate::forge::project_pairs(kg, pairs, crate::forge::PairType::WordConcept).len();
    let word_pairs = crate::forge::project_pairs(kg, pairs, crate::forge::PairType::WordWord).len();

    let ratio = if rel.unary || subjects.is_empty() {
        None
    } else {
        Some(objects.len() as f64 / subjects.len() as f64)
    };
    Ok(RelationStats {
        relation: rel.name.clone(),
        group: rel.group.clone(),
        concept_pairs,
        word_concept_pairs,
        word_pairs,
        object_subject_ratio: ratio,
        vocab_total: vocab.len(),
    })
}

/// Writes the per-relation summary as CSV.
pub fn write_summary<W: std::io::Write>(kg: &KnowledgeGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "relation",
        "group",
        "concept_pairs",
        "word_concept_pairs",
        "word_pairs",
        "obj_subj_ratio",
        "vocab_total",
    ])?;
    for rel in kg.relations() {
        let s = relation_stats(kg, &rel.name)?;
        w.write_record([
            s.relation,
            s.group,
            s.concept_pairs.to_string(),
            s.word_concept_pairs.to_string(),
            s.word_pairs.to_string(),
            s.object_subject_ratio
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            s.vocab_total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}
