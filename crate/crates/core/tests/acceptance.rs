//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.
//!
//! Criteria 3 and 4 share the same three fixture runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ddi_gfn::augment::{reward_fn, RewardConfig};
use ddi_gfn::gflownet::{
    build_candidate_index, enumerate_terminal_distribution, sample_trajectory, train_gflownet, GfnConfig, GfnPolicy,
};
use ddi_gfn::graph::{DrugId, InteractionGraph, InteractionType};
use ddi_gfn::metrics::{auprc, auroc, jensen_shannon_divergence, shannon_entropy, Distribution};
use ddi_gfn::numerics::{finite_difference_check, Rng, Tensor};
use ddi_gfn::pipeline::{write_fixture, Evaluation, FixtureParams, Pipeline, RunManifest, MANIFEST};
use ddi_gfn::vgae::{LatentState, RelationalAdjacency, VgaeConfig, VgaeModel};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean_latent(mu: Tensor) -> LatentState {
    let zeros = Tensor::zeros(mu.rows(), mu.cols());
    LatentState {
        z: mu.clone(),
        log_var: zeros.clone(),
        eps: zeros,
        mu,
    }
}

/// Brute-force target: every ordered pair of distinct drugs in the
/// candidate lists, for every type.
fn tv_to_reward(
    dist: &BTreeMap<(InteractionType, DrugId, DrugId), f64>,
    reward: &dyn Fn(InteractionType, DrugId, DrugId) -> f64,
    num_types: usize,
    num_drugs: usize,
) -> (f64, f64) {
    let mut states = Vec::new();
    for t in 0..num_types {
        for i in 0..num_drugs {
            for j in 0..num_drugs {
                if i != j {
                    states.push((InteractionType(t), DrugId(i), DrugId(j)));
                }
            }
        }
    }
    let total: f64 = states.iter().map(|&(t, i, j)| reward(t, i, j)).sum();
    let tv = 0.5
        * states
            .iter()
            .map(|&(t, i, j)| (dist.get(&(t, i, j)).copied().unwrap_or(0.0) - reward(t, i, j) / total).abs())
            .sum::<f64>();
    (tv, total)
}

fn small_vgae(nd: usize, nt: usize, seed: u64) -> VgaeModel {
    let cfg = VgaeConfig {
        hidden_dim: 6,
        ..VgaeConfig::with_latent_dim(3)
    };
    VgaeModel::new(nd, nt, &cfg, &mut Rng::new(seed))
}

fn c1_tb_proportionality() -> Outcome {
    let started = Instant::now();
    let (nd, nt) = (6, 3);
    let latent = mean_latent(Rng::new(42).normal_tensor(nd, 3));
    let mut vgae = small_vgae(nd, nt, 1);
    *vgae.relation_diagonals_mut() = Rng::new(2).uniform_tensor(nt, 3, -1.5, 1.5);
    let counts = [30, 10, 2];
    let reward = reward_fn(&counts, &vgae, &latent, RewardConfig::default());
    let cfg = GfnConfig {
        epochs: 2000,
        learning_rate: 0.01,
        batch_size: 64,
        ..GfnConfig::with_knn_k(5)
    };
    let trained = train_gflownet(nt, &latent, &cfg, &reward).map_err(|e| e.to_string())?;
    let dist = enumerate_terminal_distribution(&trained.policy, &trained.candidates, &latent).map_err(|e| e.to_string())?;
    let (tv, total) = tv_to_reward(&dist, &reward, nt, nd);
    let z_ratio = trained.policy.log_z().exp() / total;
    let secs = started.elapsed().as_secs_f64();
    check(
        tv < 0.05 && (z_ratio - 1.0).abs() < 0.1 && secs < 60.0,
        format!("TV {tv:.4} (< 0.05), Z / sum R {z_ratio:.4} (within 10%), {secs:.1}s (< 60s)"),
    )
}

fn five_drug_graph() -> InteractionGraph {
    InteractionGraph::from_triples(
        5,
        2,
        &[(0, 1, 0), (1, 2, 0), (2, 3, 1), (3, 4, 1), (0, 4, 0), (1, 3, 1)],
    )
    .expect("valid fixture")
}

fn perturb(params: &mut ddi_gfn::numerics::ParamStore, seed: u64) {
    let mut rng = Rng::new(seed);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data_mut() {
            *v += 0.3 * rng.normal();
        }
    }
}

fn c2_gradient_checks() -> Outcome {
    let g = five_drug_graph();
    let model = small_vgae(5, 2, 3);
    let adj = RelationalAdjacency::from_graph(&g);
    let eps = Rng::new(4).normal_tensor(5, 3);
    let vgae = finite_difference_check(model.params(), 1e-5, 1e-4, |tape, vars| {
        model
            .loss_on_tape(tape, vars, &adj, g.edges(), &eps, 1.0, 0.5)
            .expect("nonempty batch")
    })
    .map_err(|e| e.to_string())?;

    let latent = model.encode_mean(&g).map_err(|e| e.to_string())?;
    let cfg = GfnConfig {
        hidden_dim: 6,
        type_embedding_dim: 3,
        ..GfnConfig::with_knn_k(3)
    };
    let mut policy = GfnPolicy::new(2, 5, 3, &cfg, &mut Rng::new(5));
    perturb(policy.params_mut(), 6);
    let idx = build_candidate_index(&latent, 3).map_err(|e| e.to_string())?;
    let reward = reward_fn(g.type_counts(), &model, &latent, RewardConfig::default());
    let mut rng = Rng::new(7);
    let trajectories: Vec<_> = (0..4)
        .map(|_| sample_trajectory(&policy, &idx, &latent, &reward, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let tb = finite_difference_check(policy.params(), 1e-5, 1e-4, |tape, vars| {
        policy
            .tb_loss_on_tape(tape, vars, &idx, &latent, &trajectories)
            .expect("valid trajectories")
    })
    .map_err(|e| e.to_string())?;
    check(
        vgae.passed() && tb.passed(),
        format!(
            "VGAE max rel error {:.2e} over {} entries, TB {:.2e} over {} entries (tolerance 1e-4)",
            vgae.max_rel_error, vgae.checked, tb.max_rel_error, tb.checked
        ),
    )
}

struct FixtureRun {
    eval: Evaluation,
}

fn fixture_runs(root: &Path) -> Result<(Vec<FixtureRun>, Duration), String> {
    let started = Instant::now();
    let mut runs = Vec::new();
    for seed in 0..3 {
        let dir = root.join(format!("seed{seed}"));
        let params = FixtureParams {
            seed,
            ..Default::default()
        };
        write_fixture(&params, &dir).map_err(|e| e.to_string())?;
        let p = Pipeline::load(&dir.join("config.toml"), None, None).map_err(|e| e.to_string())?;
        let (_, eval) = p.run_all().map_err(|e| format!("seed {seed}: {e}"))?;
        runs.push(FixtureRun { eval });
    }
    Ok((runs, started.elapsed()))
}

fn c3_diversity(runs: &[FixtureRun], elapsed: Duration) -> Outcome {
    let mut ok = elapsed.as_secs_f64() < 300.0;
    let mut parts = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let d = &r.eval.diversity;
        ok &= d.se_after > d.se_before && d.jsd_after < d.jsd_before && d.coverage_after >= d.coverage_before;
        parts.push(format!(
            "seed {seed}: SE {:.3}->{:.3}, JSD {:.3}->{:.3}, coverage {:.2}->{:.2}",
            d.se_before, d.se_after, d.jsd_before, d.jsd_after, d.coverage_before, d.coverage_after
        ));
    }
    parts.push(format!("{:.0}s for 3 seeds (< 300s)", elapsed.as_secs_f64()));
    check(ok, parts.join("; "))
}

fn c4_rare_f1(runs: &[FixtureRun]) -> Outcome {
    let mut improved = 0;
    let mut parts = Vec::new();
    let (mut base_auroc, mut aug_auroc) = (0.0, 0.0);
    for (seed, r) in runs.iter().enumerate() {
        let (b, a) = (&r.eval.baseline, &r.eval.augmented);
        let (bf, af) = (b.rare_macro_f1.unwrap_or(0.0), a.rare_macro_f1.unwrap_or(0.0));
        if af >= bf {
            improved += 1;
        }
        base_auroc += b.auroc / runs.len() as f64;
        aug_auroc += a.auroc / runs.len() as f64;
        parts.push(format!(
            "seed {seed}: rare F1 {bf:.3}->{af:.3}, AUROC {:.4}->{:.4}",
            b.auroc, a.auroc
        ));
    }
    let drop = base_auroc - aug_auroc;
    parts.push(format!(
        "rare F1 held or improved in {improved}/3 (>= 2); mean AUROC drop {drop:.4} (<= 0.01)"
    ));
    check(improved >= 2 && drop <= 0.01, parts.join("; "))
}

fn brute_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.log2();
        }
    }
    h
}

fn brute_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            s += a * (a / b).log2();
        }
    }
    s
}

fn brute_jsd(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * brute_kl(p, &m) + 0.5 * brute_kl(q, &m)
}

/// Counts every positive/negative pair, ties as one half.
fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in pos {
        for &b in neg {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Precision at each distinct threshold, weighted by the recall it adds.
fn brute_auprc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for th in thresholds {
        let tp = pos.iter().filter(|&&s| s >= th).count() as f64;
        let fp = neg.iter().filter(|&&s| s >= th).count() as f64;
        let recall = tp / pos.len() as f64;
        if tp + fp > 0.0 {
            area += (recall - prev_recall) * tp / (tp + fp);
        }
        prev_recall = recall;
    }
    area
}

fn random_simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    // Some exact zeros to exercise the 0 log 0 convention.
    let w: Vec<f64> = (0..n)
        .map(|_| if rng.uniform() < 0.2 { 0.0 } else { rng.uniform() })
        .collect();
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        let mut u = vec![0.0; n];
        u[0] = 1.0;
        return u;
    }
    w.iter().map(|x| x / s).collect()
}

fn c5_metric_oracles() -> Outcome {
    let mut rng = Rng::new(2024);
    let (mut worst_h, mut worst_jsd, mut worst_pr) = (0.0f64, 0.0f64, 0.0f64);
    let mut auroc_mismatches = 0;
    for _ in 0..100 {
        let n = 2 + rng.below(9);
        let p = random_simplex(&mut rng, n);
        let q = random_simplex(&mut rng, n);
        let dp = Distribution::new(p.clone()).map_err(|e| e.to_string())?;
        let dq = Distribution::new(q.clone()).map_err(|e| e.to_string())?;
        worst_h = worst_h.max((shannon_entropy(&dp) - brute_entropy(&p)).abs());
        let jsd = jensen_shannon_divergence(&dp, &dq).map_err(|e| e.to_string())?;
        worst_jsd = worst_jsd.max((jsd - brute_jsd(&p, &q)).abs());

        // Coarse scores so ties are common.
        let levels = 1 + rng.below(12) as u32;
        let score = |rng: &mut Rng| f64::from(rng.below(levels as usize + 1) as u32) / f64::from(levels);
        let pos: Vec<f64> = (0..1 + rng.below(30)).map(|_| score(&mut rng)).collect();
        let neg: Vec<f64> = (0..1 + rng.below(30)).map(|_| score(&mut rng)).collect();
        if auroc(&pos, &neg).map_err(|e| e.to_string())? != brute_auroc(&pos, &neg) {
            auroc_mismatches += 1;
        }
        let pr = auprc(&pos, &neg).map_err(|e| e.to_string())?;
        worst_pr = worst_pr.max((pr - brute_auprc(&pos, &neg)).abs());
    }
    check(
        worst_h <= 1e-9 && worst_jsd <= 1e-9 && auroc_mismatches == 0 && worst_pr <= 1e-9,
        format!(
            "100 inputs: entropy err {worst_h:.1e}, JSD err {worst_jsd:.1e}, AUROC exact mismatches {auroc_mismatches}, AUPRC err {worst_pr:.1e}"
        ),
    )
}

fn artifacts(dir: &Path, manifest: &RunManifest) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for rel in manifest.artifacts().keys() {
        out.insert(rel.to_string(), fs::read(dir.join(rel)).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn c6_determinism(root: &Path) -> Outcome {
    let data = root.join("data");
    let params = FixtureParams {
        num_drugs: 40,
        num_edges: 400,
        num_clusters: 4,
        seed: 11,
        ..Default::default()
    };
    write_fixture(&params, &data).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = root.join(name);
        let p = Pipeline::load(&data.join("config.toml"), None, Some(out.clone())).map_err(|e| e.to_string())?;
        let (m, _) = p.run_all().map_err(|e| e.to_string())?;
        let on_disk = RunManifest::load(&out.join(MANIFEST)).map_err(|e| e.to_string())?;
        runs.push((artifacts(&out, &on_disk)?, m));
    }
    let (a, ma) = &runs[0];
    let (b, mb) = &runs[1];
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let digests_match = ma.artifacts() == mb.artifacts() && ma.config_sha256 == mb.config_sha256;
    check(
        differing.is_empty() && a.len() == b.len() && digests_match && a.len() >= 14,
        format!(
            "{} artifacts compared byte for byte, {} differ{}",
            a.len(),
            differing.len(),
            if digests_match { "" } else { "; manifest digests differ" }
        ),
    )
}

/// Per-type marginal of the policy's exact terminal distribution.
fn type_marginal(policy: &GfnPolicy, latent: &LatentState, knn_k: usize) -> Result<(Vec<f64>, f64), String> {
    let idx = build_candidate_index(latent, knn_k).map_err(|e| e.to_string())?;
    let dist = enumerate_terminal_distribution(policy, &idx, latent).map_err(|e| e.to_string())?;
    let mut marginal = vec![0.0; policy.num_types()];
    for ((t, _, _), p) in &dist {
        marginal[t.0] += p;
    }
    let n = dist.len() as f64;
    let tv = 0.5 * dist.values().map(|p| (p - 1.0 / n).abs()).sum::<f64>();
    Ok((marginal, tv))
}

fn c7_alpha_controls_rareness() -> Outcome {
    let (nd, nt, knn) = (8, 3, 4);
    let latent = mean_latent(Rng::new(8).normal_tensor(nd, 3));
    let counts = [60, 20, 3];
    let train = |vgae: &VgaeModel, alpha: f64| -> Result<GfnPolicy, String> {
        let reward = reward_fn(
            &counts,
            vgae,
            &latent,
            RewardConfig {
                alpha,
                ..Default::default()
            },
        );
        let cfg = GfnConfig {
            epochs: 1500,
            batch_size: 64,
            ..GfnConfig::with_knn_k(knn)
        };
        train_gflownet(nt, &latent, &cfg, &reward)
            .map(|t| t.policy)
            .map_err(|e| e.to_string())
    };

    let mut flat = small_vgae(nd, nt, 9);
    *flat.relation_diagonals_mut() = Tensor::zeros(nt, 3);
    let (_, tv_uniform) = type_marginal(&train(&flat, 0.0)?, &latent, knn)?;

    let mut informative = small_vgae(nd, nt, 10);
    *informative.relation_diagonals_mut() = Rng::new(11).uniform_tensor(nt, 3, -1.0, 1.0);
    let (m0, _) = type_marginal(&train(&informative, 0.0)?, &latent, knn)?;
    let (m2, _) = type_marginal(&train(&informative, 2.0)?, &latent, knn)?;
    let rarest = 2;
    check(
        tv_uniform < 0.05 && m2[rarest] > m0[rarest],
        format!(
            "alpha 0 with flat decoder: TV to uniform {tv_uniform:.4} (< 0.05); rarest-type mass {:.4} at alpha 0, {:.4} at alpha 2",
            m0[rarest], m2[rarest]
        ),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |n: u8, name: &'static str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} [{n}] {name}: {detail}");
        results.push((n, name, outcome));
    };

    report(1, "trajectory balance samples in proportion to reward", c1_tb_proportionality());
    report(2, "autoencoder and trajectory balance gradients match finite differences", c2_gradient_checks());
    match fixture_runs(&tmp.path().join("fixture")) {
        Ok((runs, elapsed)) => {
            report(3, "augmentation raises diversity on the fixture", c3_diversity(&runs, elapsed));
            report(4, "rare-type F1 and AUROC parity on the fixture", c4_rare_f1(&runs));
        }
        Err(e) => {
            report(3, "augmentation raises diversity on the fixture", Err(e.clone()));
            report(4, "rare-type F1 and AUROC parity on the fixture", Err(e));
        }
    }
    report(5, "metrics agree with brute-force oracles", c5_metric_oracles());
    report(6, "run-all is byte-for-byte reproducible", c6_determinism(&tmp.path().join("determinism")));
    report(7, "alpha controls the pull towards rare types", c7_alpha_controls_rareness());

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
