//! Diversity and classification metrics.
//!
//! Entropy and Jensen-Shannon divergence use base-2 logarithms, so for
//! `|T|` types entropy lies in `[0, log2 |T|]` and JSD in `[0, 1]`.
//!
//! Binary ranking metrics read the multi-type decoder as an edge detector:
//! a pair's score is its largest type probability, positives are held-out
//! edges and negatives are an equal number of uniformly drawn unconnected
//! pairs. AUROC is the Mann-Whitney statistic with midranks (ties count
//! one half); AUPRC is the step-interpolated area, one step per distinct
//! score threshold.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DrugId, InteractionGraph};
use crate::numerics::Rng;
use crate::vgae::{argmax, decode_type_distribution, LatentState, VgaeModel};

/// Probabilities over interaction types.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Contract("distribution over zero types".into()));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Contract("distribution has a negative or non-finite entry".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("distribution sums to {s}, not 1")));
        }
        Ok(Distribution(p))
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Contract("cannot normalise all-zero counts".into()));
        }
        Ok(Distribution(
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        ))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract("distribution over zero types".into()));
        }
        Ok(Distribution(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `-sum p log2 p`, with `0 log 0 = 0`.
pub fn shannon_entropy(p: &Distribution) -> f64 {
    -p.0.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

/// `sum p log2(p / q)` over the support of `p`; `q` must cover it.
fn kl_base2(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).log2())
        .sum()
}

/// `KL(P||M)/2 + KL(Q||M)/2` with `M = (P + Q) / 2`, in bits.
pub fn jensen_shannon_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!(
            "JSD of distributions over {} and {} types",
            p.len(),
            q.len()
        )));
    }
    let m: Vec<f64> = p.0.iter().zip(&q.0).map(|(a, b)| 0.5 * (a + b)).collect();
    let jsd = 0.5 * kl_base2(&p.0, &m) + 0.5 * kl_base2(&q.0, &m);
    Ok(jsd.clamp(0.0, 1.0))
}

/// Fraction of the `counts.len()` types seen at least `m` times.
pub fn coverage_from_counts(counts: &[usize], m: usize) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Contract("coverage over an empty vocabulary".into()));
    }
    if m == 0 {
        return Err(Error::Contract("coverage threshold must be at least 1".into()));
    }
    Ok(counts.iter().filter(|&&c| c >= m).count() as f64 / counts.len() as f64)
}

/// Fraction of `num_types` types occurring at least `m` times in `types`.
pub fn coverage(types: &[usize], num_types: usize, m: usize) -> Result<f64> {
    let mut counts = vec![0; num_types];
    for &t in types {
        if t >= num_types {
            return Err(Error::Contract(format!("type {t} outside a vocabulary of {num_types}")));
        }
        counts[t] += 1;
    }
    coverage_from_counts(&counts, m)
}

/// Half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "total variation needs equal lengths");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn check_binary(metric: &str, positives: &[f64], negatives: &[f64]) -> Result<()> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Contract(format!(
            "{metric} needs at least one positive and one negative, got {} and {}",
            positives.len(),
            negatives.len()
        )));
    }
    if positives.iter().chain(negatives).any(|s| s.is_nan()) {
        return Err(Error::Contract(format!("{metric} received a NaN score")));
    }
    Ok(())
}

/// Area under the ROC curve from midranks.
pub fn auroc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    check_binary("AUROC", positives, negatives)?;
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j share their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Step-interpolated area under the precision-recall curve:
/// `sum_k (R_k - R_{k-1}) P_k` over thresholds at each distinct score.
pub fn auprc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    check_binary("AUPRC", positives, negatives)?;
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let np = positives.len() as f64;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let recall = tp / np;
        area += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeMetrics {
    pub support: usize,
    pub predicted: usize,
    pub true_positives: usize,
    /// `2 TP / (2 TP + FP + FN)`; absent when the type is neither present
    /// nor predicted.
    pub f1: Option<f64>,
}

/// Per-type confusion counts and F1.
pub fn per_type_metrics(labels: &[usize], predictions: &[usize], num_types: usize) -> Result<Vec<TypeMetrics>> {
    if labels.len() != predictions.len() {
        return Err(Error::Contract("labels and predictions differ in length".into()));
    }
    let mut out = vec![
        TypeMetrics {
            support: 0,
            predicted: 0,
            true_positives: 0,
            f1: None,
        };
        num_types
    ];
    for (&y, &p) in labels.iter().zip(predictions) {
        if y >= num_types || p >= num_types {
            return Err(Error::Contract(format!("label {y} or prediction {p} outside {num_types} types")));
        }
        out[y].support += 1;
        out[p].predicted += 1;
        if y == p {
            out[y].true_positives += 1;
        }
    }
    for m in &mut out {
        let denom = m.support + m.predicted;
        if denom > 0 {
            m.f1 = Some(2.0 * m.true_positives as f64 / denom as f64);
        }
    }
    Ok(out)
}

/// Mean F1 over `types` that have a defined F1; `None` if none do.
pub fn macro_f1_over(per_type: &[TypeMetrics], types: &[usize]) -> Option<f64> {
    let f: Vec<f64> = types.iter().filter_map(|&t| per_type[t].f1).collect();
    if f.is_empty() {
        None
    } else {
        Some(f.iter().sum::<f64>() / f.len() as f64)
    }
}

/// The `floor(|T| / 2)` least frequent types, ties to the lower index.
pub fn rare_types(counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&t| (counts[t], t));
    order.truncate(counts.len() / 2);
    order.sort_unstable();
    order
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub auroc: f64,
    pub auprc: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_type: Vec<TypeMetrics>,
}

/// `probs[k]` is the type distribution for test edge `k` with true type
/// `labels[k]`; `negative_probs` are distributions for sampled non-edges.
pub fn classification_metrics(
    probs: &[Vec<f64>],
    labels: &[usize],
    negative_probs: &[Vec<f64>],
) -> Result<ClassificationMetrics> {
    if probs.len() != labels.len() {
        return Err(Error::Contract("one label per scored edge required".into()));
    }
    let num_types = probs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Contract("classification metrics need at least one edge".into()))?;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let per_type = per_type_metrics(labels, &preds, num_types)?;
    let correct = per_type.iter().map(|m| m.true_positives).sum::<usize>();
    let accuracy = correct as f64 / labels.len() as f64;
    let all: Vec<usize> = (0..num_types).collect();
    let macro_f1 = macro_f1_over(&per_type, &all).unwrap_or(0.0);
    // Micro-averaged precision, recall and F1 all equal accuracy when every
    // example gets exactly one predicted type.
    let micro_f1 = accuracy;
    let max_score = |p: &Vec<f64>| p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pos: Vec<f64> = probs.iter().map(max_score).collect();
    let neg: Vec<f64> = negative_probs.iter().map(max_score).collect();
    Ok(ClassificationMetrics {
        auroc: auroc(&pos, &neg)?,
        auprc: auprc(&pos, &neg)?,
        accuracy,
        macro_f1,
        micro_f1,
        per_type,
    })
}

/// `n` uniformly drawn unordered pairs with no edge in any of `known`.
/// Draws are independent, so a pair can repeat.
pub fn sample_non_edges(known: &[&InteractionGraph], n: usize, rng: &mut Rng) -> Result<Vec<(DrugId, DrugId)>> {
    let nd = known
        .first()
        .map(|g| g.num_drugs())
        .ok_or_else(|| Error::Contract("need at least one graph".into()))?;
    let connected: HashSet<(DrugId, DrugId)> = known.iter().flat_map(|g| g.connected_pairs()).collect();
    let total_pairs = nd * nd.saturating_sub(1) / 2;
    if n > 0 && connected.len() >= total_pairs {
        return Err(Error::Contract("every drug pair is connected; no negatives to sample".into()));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = rng.below(nd);
        let b = rng.below(nd);
        if a == b {
            continue;
        }
        let pair = (DrugId(a.min(b)), DrugId(a.max(b)));
        if !connected.contains(&pair) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// Scores `test` edges and `negatives` with the decoder.
pub fn evaluate_model(
    model: &VgaeModel,
    latent: &LatentState,
    test: &InteractionGraph,
    negatives: &[(DrugId, DrugId)],
) -> Result<ClassificationMetrics> {
    let decode = |a: DrugId, b: DrugId| decode_type_distribution(model, latent.embedding(a), latent.embedding(b));
    let probs: Vec<Vec<f64>> = test.edges().iter().map(|e| decode(e.first(), e.second())).collect();
    let labels: Vec<usize> = test.edges().iter().map(|e| e.kind().0).collect();
    let neg: Vec<Vec<f64>> = negatives.iter().map(|&(a, b)| decode(a, b)).collect();
    classification_metrics(&probs, &labels, &neg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiversityReport {
    pub se_before: f64,
    pub se_after: f64,
    pub jsd_before: f64,
    pub jsd_after: f64,
    pub coverage_before: f64,
    pub coverage_after: f64,
    pub coverage_threshold: usize,
}

/// Compares the training and augmented type distributions against the
/// reference `true_dist`.
pub fn diversity_report(
    train_counts: &[usize],
    aug_counts: &[usize],
    true_dist: &Distribution,
    coverage_threshold: usize,
) -> Result<DiversityReport> {
    let before = Distribution::from_counts(train_counts)?;
    let after = Distribution::from_counts(aug_counts)?;
    Ok(DiversityReport {
        se_before: shannon_entropy(&before),
        se_after: shannon_entropy(&after),
        jsd_before: jensen_shannon_divergence(&before, true_dist)?,
        jsd_after: jensen_shannon_divergence(&after, true_dist)?,
        coverage_before: coverage_from_counts(train_counts, coverage_threshold)?,
        coverage_after: coverage_from_counts(aug_counts, coverage_threshold)?,
        coverage_threshold,
    })
}

/// Everything reported for one trained model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub model: String,
    pub auroc: f64,
    pub accuracy: f64,
    pub auprc: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub rare_macro_f1: Option<f64>,
    /// Type distribution of the graph the model was trained on.
    pub shannon_entropy: f64,
    pub jsd: f64,
    pub coverage: f64,
    pub per_type: Vec<TypeMetrics>,
}

impl MetricReport {
    pub fn new(
        model: &str,
        cls: ClassificationMetrics,
        training_counts: &[usize],
        rare: &[usize],
        true_dist: &Distribution,
        coverage_threshold: usize,
    ) -> Result<Self> {
        let dist = Distribution::from_counts(training_counts)?;
        Ok(MetricReport {
            model: model.to_string(),
            auroc: cls.auroc,
            accuracy: cls.accuracy,
            auprc: cls.auprc,
            macro_f1: cls.macro_f1,
            micro_f1: cls.micro_f1,
            rare_macro_f1: macro_f1_over(&cls.per_type, rare),
            shannon_entropy: shannon_entropy(&dist),
            jsd: jensen_shannon_divergence(&dist, true_dist)?,
            coverage: coverage_from_counts(training_counts, coverage_threshold)?,
            per_type: cls.per_type,
        })
    }

    pub const CSV_HEADER: &'static str =
        "model,auroc,accuracy,auprc,macro_f1,micro_f1,rare_macro_f1,shannon_entropy,jsd,coverage";

    pub fn csv_row(&self) -> String {
        let rare = self.rare_macro_f1.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.auroc,
            self.accuracy,
            self.auprc,
            self.macro_f1,
            self.micro_f1,
            rare,
            self.shannon_entropy,
            self.jsd,
            self.coverage
        )
    }
}
