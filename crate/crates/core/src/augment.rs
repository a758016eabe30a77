//! Reward, synthetic sampling and merging.
//!
//! The reward of a terminal triple is
//!
//! ```text
//! R(t, d_i, d_j) = (1 / (n_t + 1))^alpha * max(p(t | z_i, z_j), epsilon_floor)
//! ```
//!
//! where `n_t` is the training frequency of type `t` and `p` comes from the
//! frozen stage-one autoencoder. Counts are not updated while sampling.

use std::collections::HashSet;
use std::io::Write;

use log::warn;

use crate::error::{Error, Result};
use crate::gflownet::{CandidateIndex, GfnPolicy};
use crate::graph::{write_edge_list, DrugId, Edge, InteractionGraph, InteractionType};
use crate::numerics::Rng;
use crate::vgae::{decode_type_distribution, LatentState, VgaeModel};

/// Samples drawn per requested triple before generation gives up.
pub const SAMPLE_BUDGET_FACTOR: usize = 50;

pub const PROVENANCE_TRAIN: &str = "train";
pub const PROVENANCE_SYNTHETIC: &str = "synthetic";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardConfig {
    pub alpha: f64,
    pub epsilon_floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 1.0,
            epsilon_floor: 1e-12,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("reward.alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor.is_finite()) {
            return Err(Error::Config(format!(
                "reward.epsilon_floor must be positive, got {}",
                self.epsilon_floor
            )));
        }
        Ok(())
    }
}

/// `(1 / (n_t + 1))^alpha`
pub fn rareness(n_t: usize, alpha: f64) -> f64 {
    (1.0 / (n_t as f64 + 1.0)).powf(alpha)
}

/// Rareness times floored plausibility. Panics if `d_i == d_j`.
pub fn reward(
    t: InteractionType,
    d_i: DrugId,
    d_j: DrugId,
    type_counts: &[usize],
    vgae: &VgaeModel,
    latent: &LatentState,
    cfg: &RewardConfig,
) -> f64 {
    assert_ne!(d_i, d_j, "reward is undefined for a self-pair");
    let p = decode_type_distribution(vgae, latent.embedding(d_i), latent.embedding(d_j));
    rareness(type_counts[t.0], cfg.alpha) * p[t.0].max(cfg.epsilon_floor)
}

/// [`reward`] with its model arguments bound, in the shape the trainer
/// expects.
pub fn reward_fn<'a>(
    type_counts: &'a [usize],
    vgae: &'a VgaeModel,
    latent: &'a LatentState,
    cfg: RewardConfig,
) -> impl Fn(InteractionType, DrugId, DrugId) -> f64 + 'a {
    move |t, i, j| reward(t, i, j, type_counts, vgae, latent, &cfg)
}

/// Synthetic triples over the training vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSet {
    /// Synthetic edges only, sharing the training vocabularies.
    pub graph: InteractionGraph,
    /// Identifier of the policy checkpoint that produced the samples.
    pub policy_id: String,
    pub requested: usize,
    pub kept: usize,
    pub samples_drawn: usize,
}

impl SyntheticSet {
    pub fn edges(&self) -> &[Edge] {
        self.graph.edges()
    }

    /// Edge list with a `provenance` column.
    pub fn write(&self, out: &mut impl Write) -> Result<()> {
        write_edge_list(&self.graph, out, Some(("provenance", &|_| PROVENANCE_SYNTHETIC.to_string())))
    }
}

/// Samples until `n` new triples are kept or `50 n` samples are drawn.
/// Triples already in `train`, and repeats of earlier samples, are
/// rejected after canonical pair ordering.
pub fn generate_synthetic(
    policy: &GfnPolicy,
    candidates: &CandidateIndex,
    latent: &LatentState,
    train: &InteractionGraph,
    n: usize,
    policy_id: &str,
    rng: &mut Rng,
) -> Result<SyntheticSet> {
    if policy.num_types() != train.num_types() || policy.num_drugs() != train.num_drugs() {
        return Err(Error::Contract(format!(
            "policy is sized for {} types / {} drugs, training graph has {} / {}",
            policy.num_types(),
            policy.num_drugs(),
            train.num_types(),
            train.num_drugs()
        )));
    }
    let budget = n.saturating_mul(SAMPLE_BUDGET_FACTOR);
    let chunk = n.clamp(1, 1024);
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(n);
    let mut drawn = 0;
    while kept.len() < n && drawn < budget {
        let want = chunk.min(budget - drawn);
        let batch = policy.sample_batch(candidates, latent, want, 0.0, &|_, _, _| 1.0, rng)?;
        for tr in batch {
            drawn += 1;
            let (t, i, j) = tr.terminal();
            let e = Edge::new(i, j, t)?;
            if !train.contains(&e) && seen.insert(e) {
                kept.push(e);
                if kept.len() == n {
                    break;
                }
            }
        }
    }
    if kept.len() < n {
        warn!(
            "kept {} of {n} requested synthetic triples after {drawn} samples",
            kept.len()
        );
    }
    let (graph, _) = train.with_edges(kept)?;
    Ok(SyntheticSet {
        kept: graph.num_edges(),
        graph,
        policy_id: policy_id.to_string(),
        requested: n,
        samples_drawn: drawn,
    })
}

/// Training edges followed by the synthetic ones, with recomputed counts.
pub fn merge(train: &InteractionGraph, synth: &SyntheticSet) -> Result<InteractionGraph> {
    if !train.same_vocabulary(&synth.graph) {
        return Err(Error::Contract("synthetic set uses a different vocabulary".into()));
    }
    let (g, dups) = train.with_edges(train.edges().iter().chain(synth.edges()).copied())?;
    if dups > 0 {
        return Err(Error::Contract(format!("{dups} synthetic triples repeat training edges")));
    }
    Ok(g)
}

/// Provenance label of edge `index` in a graph built by [`merge`].
pub fn provenance(train: &InteractionGraph, index: usize) -> &'static str {
    if index < train.num_edges() {
        PROVENANCE_TRAIN
    } else {
        PROVENANCE_SYNTHETIC
    }
}

/// Writes a merged graph with its provenance column.
pub fn write_merged(train: &InteractionGraph, merged: &InteractionGraph, out: &mut impl Write) -> Result<()> {
    write_edge_list(merged, out, Some(("provenance", &|i| provenance(train, i).to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gflownet::{build_candidate_index, GfnConfig};
    use crate::graph::{ingest_edge_list, type_frequencies, EdgeListFormat};
    use crate::numerics::Tensor;
    use crate::vgae::VgaeConfig;

    fn model_with_diagonals(nd: usize, diag: Tensor) -> VgaeModel {
        let cfg = VgaeConfig::with_latent_dim(diag.cols());
        let mut m = VgaeModel::new(nd, diag.rows(), &cfg, &mut Rng::new(0));
        *m.relation_diagonals_mut() = diag;
        m
    }

    fn latent(rows: &[Vec<f64>]) -> LatentState {
        let mu = Tensor::from_rows(rows);
        let zeros = Tensor::zeros(mu.rows(), mu.cols());
        LatentState {
            z: mu.clone(),
            log_var: zeros.clone(),
            eps: zeros,
            mu,
        }
    }

    #[test]
    fn reward_matches_the_formula() {
        // Two types, one latent dimension: scores (ln 3 * a * b, 0).
        let m = model_with_diagonals(3, Tensor::from_rows(&[vec![3f64.ln()], vec![0.0]]));
        let l = latent(&[vec![1.0], vec![1.0], vec![0.0]]);
        let cfg = RewardConfig {
            alpha: 1.0,
            ..Default::default()
        };
        let r = reward(InteractionType(0), DrugId(0), DrugId(1), &[0, 0], &m, &l, &cfg);
        assert!((r - 0.75).abs() < 1e-12);
        // Zero latent vector: plausibility 0.5 for both types.
        let r = reward(InteractionType(1), DrugId(0), DrugId(2), &[0, 9], &m, &l, &cfg);
        assert!((r - 0.05).abs() < 1e-12);
        let r = reward(InteractionType(1), DrugId(0), DrugId(2), &[0, 0], &m, &l, &cfg);
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rareness_examples() {
        assert!((rareness(0, 1.0) * 0.5 - 0.5).abs() < 1e-15);
        assert!((rareness(9, 1.0) * 0.8 - 0.08).abs() < 1e-15);
        assert_eq!(rareness(1000, 0.0), 1.0);
    }

    #[test]
    fn alpha_zero_ignores_counts() {
        let m = model_with_diagonals(3, Tensor::from_rows(&[vec![0.4], vec![-0.2]]));
        let l = latent(&[vec![1.0], vec![0.5], vec![-2.0]]);
        let cfg = RewardConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let a = reward(InteractionType(1), DrugId(0), DrugId(2), &[0, 0], &m, &l, &cfg);
        let b = reward(InteractionType(1), DrugId(0), DrugId(2), &[5, 500], &m, &l, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn plausibility_is_floored() {
        let m = model_with_diagonals(2, Tensor::from_rows(&[vec![2000.0], vec![0.0]]));
        let l = latent(&[vec![1.0], vec![1.0]]);
        let cfg = RewardConfig::default();
        let r = reward(InteractionType(1), DrugId(0), DrugId(1), &[0, 0], &m, &l, &cfg);
        assert_eq!(r, cfg.epsilon_floor);
    }

    #[test]
    fn reward_is_non_increasing_in_count() {
        let m = model_with_diagonals(3, Tensor::from_rows(&[vec![0.4], vec![-0.2]]));
        let l = latent(&[vec![1.0], vec![0.5], vec![-2.0]]);
        let cfg = RewardConfig::default();
        let mut prev = f64::INFINITY;
        for n in 0..50 {
            let r = reward(InteractionType(0), DrugId(1), DrugId(2), &[n, 0], &m, &l, &cfg);
            assert!(r > 0.0 && r <= prev);
            prev = r;
        }
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let bad = RewardConfig {
            alpha: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn setup(nd: usize, nt: usize) -> (GfnPolicy, CandidateIndex, LatentState) {
        let mut rng = Rng::new(3);
        let l = latent(&(0..nd).map(|_| vec![rng.normal(), rng.normal()]).collect::<Vec<_>>());
        let cfg = GfnConfig {
            hidden_dim: 4,
            type_embedding_dim: 2,
            ..GfnConfig::with_knn_k(nd)
        };
        let policy = GfnPolicy::new(nt, nd, 2, &cfg, &mut rng);
        let idx = build_candidate_index(&l, cfg.knn_k).unwrap();
        (policy, idx, l)
    }

    #[test]
    fn zero_requested_gives_an_empty_set() {
        let (policy, idx, l) = setup(4, 2);
        let train = InteractionGraph::from_triples(4, 2, &[(0, 1, 0)]).unwrap();
        let s = generate_synthetic(&policy, &idx, &l, &train, 0, "p", &mut Rng::new(0)).unwrap();
        assert_eq!(s.kept, 0);
        assert_eq!(s.samples_drawn, 0);
    }

    #[test]
    fn saturated_training_graph_keeps_nothing() {
        let (policy, idx, l) = setup(3, 1);
        let train = InteractionGraph::from_triples(3, 1, &[(0, 1, 0), (0, 2, 0), (1, 2, 0)]).unwrap();
        let s = generate_synthetic(&policy, &idx, &l, &train, 5, "p", &mut Rng::new(0)).unwrap();
        assert_eq!(s.kept, 0);
        assert_eq!(s.requested, 5);
        assert_eq!(s.samples_drawn, 250);
    }

    #[test]
    fn generated_triples_are_new_and_unique() {
        let (policy, idx, l) = setup(8, 3);
        let train = InteractionGraph::from_triples(8, 3, &[(0, 1, 0), (2, 3, 1), (4, 5, 2), (1, 7, 0)]).unwrap();
        let s = generate_synthetic(&policy, &idx, &l, &train, 30, "p", &mut Rng::new(1)).unwrap();
        assert_eq!(s.kept, 30);
        let unique: HashSet<_> = s.edges().iter().collect();
        assert_eq!(unique.len(), 30);
        assert!(s.edges().iter().all(|e| !train.contains(e)));
    }

    #[test]
    fn generation_is_deterministic() {
        let (policy, idx, l) = setup(8, 3);
        let train = InteractionGraph::from_triples(8, 3, &[(0, 1, 0)]).unwrap();
        let a = generate_synthetic(&policy, &idx, &l, &train, 20, "p", &mut Rng::new(2)).unwrap();
        let b = generate_synthetic(&policy, &idx, &l, &train, 20, "p", &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merge_adds_counts() {
        let (policy, idx, l) = setup(6, 2);
        let train = InteractionGraph::from_triples(6, 2, &[(0, 1, 0), (0, 2, 0), (1, 2, 1)]).unwrap();
        let s = generate_synthetic(&policy, &idx, &l, &train, 10, "p", &mut Rng::new(4)).unwrap();
        let merged = merge(&train, &s).unwrap();
        assert_eq!(merged.num_edges(), train.num_edges() + s.kept);
        let before = type_frequencies(&train);
        let added = type_frequencies(&s.graph);
        let after = type_frequencies(&merged);
        for t in 0..2 {
            assert_eq!(after[t], before[t] + added[t]);
        }
        assert_eq!(&merged.edges()[..3], train.edges());
    }

    #[test]
    fn merge_with_nothing_is_identity() {
        let (policy, idx, l) = setup(4, 2);
        let train = InteractionGraph::from_triples(4, 2, &[(0, 1, 0), (2, 3, 1)]).unwrap();
        let s = generate_synthetic(&policy, &idx, &l, &train, 0, "p", &mut Rng::new(0)).unwrap();
        assert_eq!(merge(&train, &s).unwrap(), train);
    }

    #[test]
    fn merge_rejects_another_vocabulary() {
        let train = InteractionGraph::from_triples(4, 2, &[(0, 1, 0)]).unwrap();
        let other = InteractionGraph::from_triples(5, 2, &[(0, 4, 1)]).unwrap();
        let s = SyntheticSet {
            graph: other,
            policy_id: "p".into(),
            requested: 1,
            kept: 1,
            samples_drawn: 1,
        };
        assert!(matches!(merge(&train, &s), Err(Error::Contract(_))));
    }

    #[test]
    fn synthetic_file_round_trips_with_provenance() {
        let (policy, idx, l) = setup(6, 2);
        let train = InteractionGraph::from_triples(6, 2, &[(0, 1, 0), (2, 3, 1)]).unwrap();
        let s = generate_synthetic(&policy, &idx, &l, &train, 5, "p", &mut Rng::new(5)).unwrap();
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("drug_a\tdrug_b\ttype\tprovenance\n"));
        assert_eq!(text.lines().skip(1).filter(|l| l.ends_with("\tsynthetic")).count(), 5);
        let back = ingest_edge_list(text.as_bytes(), EdgeListFormat::auto()).unwrap();
        assert_eq!(back.graph.num_edges(), 5);

        let merged = merge(&train, &s).unwrap();
        let mut buf = Vec::new();
        write_merged(&train, &merged, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.ends_with("\ttrain")).count(), 2);
    }
}
