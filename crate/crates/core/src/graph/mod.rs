//! Multi-relational interaction graph: drug and type vocabularies, a
//! deduplicated list of undirected typed edges, and per-type counts.

mod io;

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub use io::{
    graph_paths, ingest_edge_list, ingest_into, load_graph, read_vocabulary, save_graph, write_edge_list,
    write_vocabulary, EdgeListFormat, Ingested,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DrugId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionType(pub usize);

impl DrugId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl InteractionType {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Undirected typed edge, stored with `first < second`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    first: DrugId,
    second: DrugId,
    kind: InteractionType,
}

impl Edge {
    /// Canonicalizes the pair order. Self-loops are rejected.
    pub fn new(a: DrugId, b: DrugId, kind: InteractionType) -> Result<Self> {
        if a == b {
            return Err(Error::Validation(format!(
                "self-loop on drug {} is not a valid interaction",
                a.0
            )));
        }
        let (first, second) = if a < b { (a, b) } else { (b, a) };
        Ok(Edge {
            first,
            second,
            kind,
        })
    }

    pub fn first(&self) -> DrugId {
        self.first
    }

    pub fn second(&self) -> DrugId {
        self.second
    }

    pub fn kind(&self) -> InteractionType {
        self.kind
    }

    pub fn pair(&self) -> (DrugId, DrugId) {
        (self.first, self.second)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, t{})", self.first.0, self.second.0, self.kind.0)
    }
}

/// Dense index <-> label table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    /// Labels must be unique.
    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::new();
        for l in labels {
            let l = l.into();
            if v.lookup.contains_key(&l) {
                return Err(Error::Validation(format!("duplicate vocabulary label {l:?}")));
            }
            v.get_or_insert(&l);
        }
        Ok(v)
    }

    /// Numbered labels `prefix0, prefix1, ...`.
    pub fn numbered(prefix: &str, n: usize) -> Self {
        Self::from_labels((0..n).map(|i| format!("{prefix}{i}")))
            .expect("numbered labels are unique")
    }

    pub fn get_or_insert(&mut self, label: &str) -> usize {
        if let Some(&i) = self.lookup.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.lookup.insert(label.to_string(), i);
        i
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.lookup.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Immutable after construction; safe to share across readers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    drugs: Vocabulary,
    types: Vocabulary,
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
    type_counts: Vec<usize>,
}

impl InteractionGraph {
    /// Builds a graph, dropping repeated edges. Returns the graph and the
    /// number of duplicates dropped. Edges keep their first-seen order.
    pub fn build(
        drugs: Vocabulary,
        types: Vocabulary,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<(Self, usize)> {
        let mut g = InteractionGraph {
            type_counts: vec![0; types.len()],
            drugs,
            types,
            edges: Vec::new(),
            edge_set: HashSet::new(),
        };
        let mut duplicates = 0;
        for e in edges {
            g.check_in_range(&e)?;
            if g.edge_set.insert(e) {
                g.type_counts[e.kind.0] += 1;
                g.edges.push(e);
            } else {
                duplicates += 1;
            }
        }
        Ok((g, duplicates))
    }

    /// Like [`build`](Self::build) but treats duplicates as an error.
    pub fn new(
        drugs: Vocabulary,
        types: Vocabulary,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        let (g, dups) = Self::build(drugs, types, edges)?;
        if dups > 0 {
            return Err(Error::Validation(format!("{dups} duplicate edges")));
        }
        Ok(g)
    }

    /// Graph over numbered vocabularies (`d0..`, `t0..`), convenient in tests.
    pub fn from_triples(
        num_drugs: usize,
        num_types: usize,
        triples: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let edges = triples
            .iter()
            .map(|&(a, b, t)| Edge::new(DrugId(a), DrugId(b), InteractionType(t)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            Vocabulary::numbered("d", num_drugs),
            Vocabulary::numbered("t", num_types),
            edges,
        )
    }

    fn check_in_range(&self, e: &Edge) -> Result<()> {
        if e.second.0 >= self.drugs.len() || e.kind.0 >= self.types.len() {
            return Err(Error::Validation(format!(
                "edge {e} references an index outside the vocabulary ({} drugs, {} types)",
                self.drugs.len(),
                self.types.len()
            )));
        }
        Ok(())
    }

    pub fn drugs(&self) -> &Vocabulary {
        &self.drugs
    }

    pub fn types(&self) -> &Vocabulary {
        &self.types
    }

    pub fn num_drugs(&self) -> usize {
        self.drugs.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edge_set.contains(e)
    }

    /// Edge count per type index.
    pub fn type_counts(&self) -> &[usize] {
        &self.type_counts
    }

    pub fn same_vocabulary(&self, other: &InteractionGraph) -> bool {
        self.drugs == other.drugs && self.types == other.types
    }

    /// New graph over the same vocabularies.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<(Self, usize)> {
        Self::build(self.drugs.clone(), self.types.clone(), edges)
    }

    /// Unordered pairs joined by at least one edge of any type.
    pub fn connected_pairs(&self) -> HashSet<(DrugId, DrugId)> {
        self.edges.iter().map(Edge::pair).collect()
    }
}

/// Exact edge count per type; types without edges map to 0.
pub fn type_frequencies(g: &InteractionGraph) -> Vec<usize> {
    g.type_counts().to_vec()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: InteractionGraph,
    pub valid: InteractionGraph,
    pub test: InteractionGraph,
}

/// Types with at least this many edges are stratified across all three
/// parts; smaller types go entirely to train.
pub const MIN_STRATIFIED_TYPE_SIZE: usize = 3;

/// Stratified random split by interaction type.
pub fn split_edges(
    g: &InteractionGraph,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
        return Err(Error::Validation(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fs
        )));
    }
    if g.num_edges() == 0 {
        return Err(Error::Validation("cannot split a graph with no edges".into()));
    }

    let mut by_type: Vec<Vec<usize>> = vec![Vec::new(); g.num_types()];
    for (i, e) in g.edges().iter().enumerate() {
        by_type[e.kind().0].push(i);
    }

    let mut rng = Rng::new(seed);
    // 0 = train, 1 = valid, 2 = test
    let mut part = vec![0u8; g.num_edges()];
    for members in &mut by_type {
        let n = members.len();
        if n < MIN_STRATIFIED_TYPE_SIZE {
            continue;
        }
        rng.shuffle(members);
        let mut n_valid = ((n as f64) * fv).round() as usize;
        let mut n_test = ((n as f64) * fs).round() as usize;
        n_valid = n_valid.max(1);
        n_test = n_test.max(1);
        while n_valid + n_test > n - 1 {
            if n_valid >= n_test {
                n_valid -= 1;
            } else {
                n_test -= 1;
            }
        }
        for &i in &members[n - n_valid - n_test..n - n_test] {
            part[i] = 1;
        }
        for &i in &members[n - n_test..] {
            part[i] = 2;
        }
    }

    let pick = |p: u8| {
        g.edges()
            .iter()
            .zip(&part)
            .filter(move |(_, &q)| q == p)
            .map(|(e, _)| *e)
    };
    Ok(DatasetSplit {
        train: g.with_edges(pick(0))?.0,
        valid: g.with_edges(pick(1))?.0,
        test: g.with_edges(pick(2))?.0,
    })
}
