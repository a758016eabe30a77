//! Planted-structure interaction graphs for desk-scale experiments.
//!
//! Drugs are dealt round-robin into clusters. Type `t` has a home cluster
//! `t mod C`; a pair inside the home cluster is `p_home / (1 - p_home)`
//! times more likely (in aggregate) to carry type `t` than a pair outside
//! it. Type sizes follow `ratio^t`, apportioned to the edge budget by
//! largest remainder, so type 0 is the most frequent and `ratio = 1` gives
//! equal sizes. Pairs for a type are drawn without replacement by weighted
//! reservoir keys `ln(u) / w`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{
    split_edges, write_edge_list, write_vocabulary, DatasetSplit, DrugId, Edge, InteractionGraph, InteractionType,
    Vocabulary,
};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureParams {
    pub num_drugs: usize,
    pub num_types: usize,
    pub num_edges: usize,
    /// Ratio between consecutive type sizes.
    pub ratio: f64,
    pub num_clusters: usize,
    pub p_home: f64,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            num_drugs: 50,
            num_types: 8,
            num_edges: 2000,
            ratio: 0.5,
            num_clusters: 5,
            p_home: 0.8,
            fractions: (0.6, 0.2, 0.2),
            seed: 0,
        }
    }
}

impl FixtureParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.num_types < 2 {
            return bad(format!("fixture needs at least 2 types, got {}", self.num_types));
        }
        if self.num_drugs < 4 {
            return bad(format!("fixture needs at least 4 drugs, got {}", self.num_drugs));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must lie in (0, 1], got {}", self.ratio));
        }
        if !(0.0..=1.0).contains(&self.p_home) {
            return bad(format!("p_home must lie in [0, 1], got {}", self.p_home));
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_drugs / 2 {
            return bad(format!(
                "num_clusters must lie in 1..={}, got {}",
                self.num_drugs / 2,
                self.num_clusters
            ));
        }
        let pairs = self.num_drugs * (self.num_drugs - 1) / 2;
        let targets = type_targets(self.num_edges, self.num_types, self.ratio);
        if targets[0] > pairs {
            return bad(format!(
                "type 0 needs {} edges but only {pairs} drug pairs exist",
                targets[0]
            ));
        }
        Ok(())
    }
}

/// Splits `num_edges` in proportion to `ratio^t` by largest remainder;
/// leftover units go to the largest fractional parts, lower type first.
pub fn type_targets(num_edges: usize, num_types: usize, ratio: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..num_types).map(|t| ratio.powi(t as i32)).collect();
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * num_edges as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..num_types).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let short = num_edges - counts.iter().sum::<usize>();
    for &t in order.iter().take(short) {
        counts[t] += 1;
    }
    counts
}

pub fn cluster_of(d: usize, num_clusters: usize) -> usize {
    d % num_clusters
}

fn labels(prefix: &str, n: usize) -> Vocabulary {
    let width = n.saturating_sub(1).to_string().len();
    Vocabulary::from_labels((0..n).map(|i| format!("{prefix}{i:0width$}"))).expect("numbered labels are unique")
}

/// The full planted graph before splitting.
pub fn generate_graph(params: &FixtureParams) -> Result<InteractionGraph> {
    params.validate()?;
    let mut rng = Rng::new(params.seed);
    let n = params.num_drugs;
    let c = params.num_clusters;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let targets = type_targets(params.num_edges, params.num_types, params.ratio);

    let mut edges = Vec::with_capacity(params.num_edges);
    for (t, &target) in targets.iter().enumerate() {
        let home = t % c;
        let is_home = |&(a, b): &(usize, usize)| cluster_of(a, c) == home && cluster_of(b, c) == home;
        let n_home = pairs.iter().filter(|p| is_home(p)).count();
        let n_away = pairs.len() - n_home;
        let w_home = params.p_home / n_home as f64;
        let w_away = (1.0 - params.p_home) / n_away as f64;
        let mut keyed: Vec<(f64, usize)> = pairs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let w = if is_home(p) { w_home } else { w_away };
                // 1 - u lies in (0, 1], so the log is finite or zero.
                ((1.0 - rng.uniform()).ln() / w, k)
            })
            .collect();
        keyed.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        for &(_, k) in keyed.iter().take(target) {
            let (a, b) = pairs[k];
            edges.push(Edge::new(DrugId(a), DrugId(b), InteractionType(t))?);
        }
    }
    InteractionGraph::new(labels("D", n), labels("type_", params.num_types), edges)
}

pub fn generate_fixture(params: &FixtureParams) -> Result<DatasetSplit> {
    let g = generate_graph(params)?;
    split_edges(&g, params.fractions, Rng::derive_seed(params.seed, "split"))
}

/// Config written next to a generated fixture, sized to run the whole
/// pipeline in about a minute on one core. The autoencoder loss is summed
/// over the batch, so its learning rate has to shrink as batches grow.
pub fn fixture_config(seed: u64, n_synthetic: usize) -> String {
    format!(
        r#"seed = {seed}

[paths]
train = "train.tsv"
valid = "valid.tsv"
test = "test.tsv"
drug_vocabulary = "drugs.tsv"
type_vocabulary = "types.tsv"
out = "run"

[vgae]
latent_dim = 16
hidden_dim = 32
encoder_layers = 2
learning_rate = 0.002
epochs = 150
batch_size = 64
kl_weight = 0.01

[gfn]
knn_k = 20
epochs = 2000
learning_rate = 0.01
batch_size = 64
hidden_dim = 64
type_embedding_dim = 16
exploration = 0.2

[reward]
alpha = 1.0

[augment]
n_synthetic = {n_synthetic}

[metrics]
coverage_threshold = 1
reference = "uniform"
"#
    )
}

pub const FIXTURE_FILES: [&str; 6] = ["train.tsv", "valid.tsv", "test.tsv", "drugs.tsv", "types.tsv", "config.toml"];

/// Writes the three splits, both vocabularies and a ready-to-run config
/// into `dir`. Returns the written paths.
pub fn write_fixture(params: &FixtureParams, dir: &Path) -> Result<Vec<PathBuf>> {
    let split = generate_fixture(params)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for (name, g) in [("train.tsv", &split.train), ("valid.tsv", &split.valid), ("test.tsv", &split.test)] {
        let mut buf = Vec::new();
        write_edge_list(g, &mut buf, None)?;
        put(name, buf)?;
    }
    let mut buf = Vec::new();
    write_vocabulary(split.train.drugs(), &mut buf)?;
    put("drugs.tsv", buf)?;
    let mut buf = Vec::new();
    write_vocabulary(split.train.types(), &mut buf)?;
    put("types.tsv", buf)?;
    let n_synthetic = split.train.num_edges() / 4;
    put("config.toml", fixture_config(params.seed, n_synthetic).into_bytes())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::type_frequencies;

    #[test]
    fn ratio_one_gives_equal_sizes() {
        let t = type_targets(2000, 8, 1.0);
        assert_eq!(t, vec![250; 8]);
        let t = type_targets(2001, 8, 1.0);
        let (max, min) = (*t.iter().max().unwrap(), *t.iter().min().unwrap());
        assert!(max as f64 / min as f64 <= 1.2);
        assert_eq!(t.iter().sum::<usize>(), 2001);
    }

    #[test]
    fn targets_are_geometric() {
        let t = type_targets(2000, 8, 0.5);
        assert_eq!(t.iter().sum::<usize>(), 2000);
        for w in t.windows(2) {
            let r = w[1] as f64 / w[0] as f64;
            assert!((r - 0.5).abs() < 0.07, "{t:?}");
        }
    }

    #[test]
    fn graph_has_the_planned_counts() {
        let p = FixtureParams::default();
        let g = generate_graph(&p).unwrap();
        assert_eq!(type_frequencies(&g), type_targets(p.num_edges, p.num_types, p.ratio));
        assert_eq!(g.num_drugs(), 50);
        assert_eq!(g.drugs().label(7), "D07");
        assert_eq!(g.types().label(3), "type_3");
    }

    #[test]
    fn rare_types_concentrate_in_their_home_cluster() {
        let p = FixtureParams::default();
        let g = generate_graph(&p).unwrap();
        let t = 6;
        let home = t % p.num_clusters;
        let (mut inside, mut total) = (0, 0);
        for e in g.edges().iter().filter(|e| e.kind().0 == t) {
            total += 1;
            if cluster_of(e.first().0, 5) == home && cluster_of(e.second().0, 5) == home {
                inside += 1;
            }
        }
        assert!(inside as f64 / total as f64 > 0.6, "{inside} of {total}");
    }

    #[test]
    fn same_seed_same_fixture() {
        let p = FixtureParams::default();
        assert_eq!(generate_fixture(&p).unwrap(), generate_fixture(&p).unwrap());
        let q = FixtureParams { seed: 1, ..p.clone() };
        assert_ne!(generate_graph(&p).unwrap(), generate_graph(&q).unwrap());
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let cases = [
            FixtureParams {
                num_types: 1,
                ..Default::default()
            },
            FixtureParams {
                num_drugs: 3,
                ..Default::default()
            },
            FixtureParams {
                ratio: 0.0,
                ..Default::default()
            },
            FixtureParams {
                num_drugs: 10,
                num_clusters: 2,
                ..Default::default()
            },
        ];
        for p in cases {
            assert!(matches!(generate_graph(&p), Err(Error::Contract(_))), "{p:?}");
        }
    }

    #[test]
    fn written_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = FixtureParams {
            num_drugs: 12,
            num_types: 3,
            num_edges: 40,
            num_clusters: 3,
            ..Default::default()
        };
        let files = write_fixture(&p, dir.path()).unwrap();
        assert_eq!(files.len(), FIXTURE_FILES.len());
        let cfg = crate::pipeline::PipelineConfig::parse(&fs::read_to_string(dir.path().join("config.toml")).unwrap())
            .unwrap();
        assert_eq!(cfg.seed, 0);
        let again = tempfile::tempdir().unwrap();
        write_fixture(&p, again.path()).unwrap();
        for name in FIXTURE_FILES {
            assert_eq!(
                fs::read(dir.path().join(name)).unwrap(),
                fs::read(again.path().join(name)).unwrap()
            );
        }
    }
}
