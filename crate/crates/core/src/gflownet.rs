//! Generative flow network over `(type, drug, drug)` triples.
//!
//! A trajectory has three actions: pick an interaction type, pick a first
//! drug, then pick a second drug among the first drug's nearest neighbours
//! in latent space. The state graph is a tree, so trajectory balance needs
//! no backward policy:
//!
//! ```text
//! loss = (log Z + log P(t) + log P(d_i | t) + log P(d_j | t, d_i) - log R)^2
//! ```
//!
//! Every head is a one-hidden-layer tanh perceptron. The output layers start
//! at zero, so a fresh policy is uniform at every step.

use std::collections::BTreeMap;
use std::fmt;

use log::debug;

use crate::error::{Error, Result};
use crate::graph::{DrugId, InteractionType};
use crate::numerics::{glorot, Adam, Checkpoint, Optimizer, ParamId, ParamStore, Rng, Tape, Tensor, Var};
use crate::vgae::LatentState;

/// Logit offset for drugs outside the candidate set. `exp` of it underflows
/// to exactly zero, so masked drugs get zero probability and zero gradient.
const MASKED: f64 = -1e9;

/// Largest state space [`enumerate_terminal_distribution`] will walk.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GfnConfig {
    /// Gradient steps, one sampled batch each.
    pub epochs: usize,
    pub learning_rate: f64,
    pub knn_k: usize,
    /// Trajectories per gradient step.
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub type_embedding_dim: usize,
    /// Weight of a uniform mixture in the sampling distribution during
    /// training. The loss always uses the policy's own log-probabilities.
    pub exploration: f64,
    pub seed: u64,
}

impl GfnConfig {
    pub fn with_knn_k(knn_k: usize) -> Self {
        GfnConfig {
            epochs: 500,
            learning_rate: 0.01,
            knn_k,
            batch_size: 64,
            hidden_dim: 64,
            type_embedding_dim: 16,
            exploration: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("knn_k", self.knn_k),
            ("batch_size", self.batch_size),
            ("hidden_dim", self.hidden_dim),
            ("type_embedding_dim", self.type_embedding_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("gfn.{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "gfn.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.exploration) {
            return Err(Error::Config(format!(
                "gfn.exploration must lie in [0, 1], got {}",
                self.exploration
            )));
        }
        Ok(())
    }
}

/// Per-drug nearest neighbours by Euclidean distance between posterior means.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateIndex {
    knn_k: usize,
    neighbours: Vec<Vec<DrugId>>,
}

impl CandidateIndex {
    pub fn num_drugs(&self) -> usize {
        self.neighbours.len()
    }

    pub fn knn_k(&self) -> usize {
        self.knn_k
    }

    pub fn get(&self, d: DrugId) -> &[DrugId] {
        &self.neighbours[d.0]
    }

    pub fn contains(&self, first: DrugId, second: DrugId) -> bool {
        self.neighbours[first.0].contains(&second)
    }

    /// Length of every candidate list.
    pub fn list_len(&self) -> usize {
        self.neighbours.first().map_or(0, Vec::len)
    }

    /// `|D| x |D|` additive logit mask: zero on candidates, [`MASKED`] elsewhere.
    fn mask(&self) -> Tensor {
        let n = self.num_drugs();
        let mut m = Tensor::filled(n, n, MASKED);
        for (i, list) in self.neighbours.iter().enumerate() {
            for d in list {
                m.set(i, d.0, 0.0);
            }
        }
        m
    }
}

/// Exact k-nearest neighbours on `latent.mu`. Equal distances go to the
/// lower drug index.
pub fn build_candidate_index(latent: &LatentState, knn_k: usize) -> Result<CandidateIndex> {
    let n = latent.mu.rows();
    if knn_k == 0 {
        return Err(Error::Contract("knn_k must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::Contract(format!("need at least 2 drugs for a candidate index, got {n}")));
    }
    let k = knn_k.min(n - 1);
    let neighbours = (0..n)
        .map(|i| {
            let zi = latent.mu.row_slice(i);
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2 = zi
                        .iter()
                        .zip(latent.mu.row_slice(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d2, j)
                })
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists.truncate(k);
            dists.into_iter().map(|(_, j)| DrugId(j)).collect()
        })
        .collect();
    Ok(CandidateIndex { knn_k, neighbours })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    S0,
    S1,
    S2,
    SF,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GfnState {
    pub stage: Stage,
    pub kind: Option<InteractionType>,
    pub first: Option<DrugId>,
    pub second: Option<DrugId>,
}

impl GfnState {
    pub fn initial() -> Self {
        GfnState {
            stage: Stage::S0,
            kind: None,
            first: None,
            second: None,
        }
    }

    fn path(t: InteractionType, i: DrugId, j: DrugId) -> [GfnState; 4] {
        let s0 = GfnState::initial();
        let s1 = GfnState {
            stage: Stage::S1,
            kind: Some(t),
            ..s0
        };
        let s2 = GfnState {
            stage: Stage::S2,
            first: Some(i),
            ..s1
        };
        let sf = GfnState {
            stage: Stage::SF,
            second: Some(j),
            ..s2
        };
        [s0, s1, s2, sf]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub states: [GfnState; 4],
    /// Policy log-probabilities of the three actions.
    pub step_log_probs: [f64; 3],
    pub reward: f64,
    pub log_reward: f64,
}

impl TrajectoryRecord {
    /// Builds a record for a given terminal triple, checking the reward.
    pub fn new(
        t: InteractionType,
        i: DrugId,
        j: DrugId,
        step_log_probs: [f64; 3],
        reward: f64,
    ) -> Result<Self> {
        if !(reward > 0.0 && reward.is_finite()) {
            return Err(Error::Contract(format!(
                "reward for ({}, {}, {}) must be positive and finite, got {reward}",
                t.0, i.0, j.0
            )));
        }
        Ok(TrajectoryRecord {
            states: GfnState::path(t, i, j),
            step_log_probs,
            reward,
            log_reward: reward.ln(),
        })
    }

    pub fn terminal(&self) -> (InteractionType, DrugId, DrugId) {
        let sf = &self.states[3];
        (
            sf.kind.expect("terminal state has a type"),
            sf.first.expect("terminal state has a first drug"),
            sf.second.expect("terminal state has a second drug"),
        )
    }

    pub fn log_prob(&self) -> f64 {
        self.step_log_probs.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct MlpIds {
    hidden_weight: ParamId,
    hidden_bias: ParamId,
    out_weight: ParamId,
    out_bias: ParamId,
}

/// Forward policy plus the learnable log-partition.
#[derive(Clone, PartialEq)]
pub struct GfnPolicy {
    params: ParamStore,
    num_types: usize,
    num_drugs: usize,
    latent_dim: usize,
    type_context: ParamId,
    type_embedding: ParamId,
    type_head: MlpIds,
    drug1_head: MlpIds,
    /// Hidden weight here acts on the type embedding.
    drug2_head: MlpIds,
    drug2_drug_weight: ParamId,
    log_z: ParamId,
}

impl fmt::Debug for GfnPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GfnPolicy")
            .field("num_types", &self.num_types)
            .field("num_drugs", &self.num_drugs)
            .field("latent_dim", &self.latent_dim)
            .field("log_z", &self.log_z())
            .finish()
    }
}

fn head_names(prefix: &str) -> [String; 4] {
    [
        format!("{prefix}.hidden.weight"),
        format!("{prefix}.hidden.bias"),
        format!("{prefix}.out.weight"),
        format!("{prefix}.out.bias"),
    ]
}

fn insert_head(params: &mut ParamStore, prefix: &str, input: usize, hidden: usize, out: usize, rng: &mut Rng) {
    let [hw, hb, ow, ob] = head_names(prefix);
    params.insert(hw, glorot(rng, input, hidden));
    params.insert(hb, Tensor::zeros(1, hidden));
    params.insert(ow, Tensor::zeros(hidden, out));
    params.insert(ob, Tensor::zeros(1, out));
}

impl GfnPolicy {
    pub fn new(num_types: usize, num_drugs: usize, latent_dim: usize, cfg: &GfnConfig, rng: &mut Rng) -> Self {
        let (h, e) = (cfg.hidden_dim, cfg.type_embedding_dim);
        let mut params = ParamStore::new();
        params.insert("type_head.context", glorot(rng, 1, e));
        insert_head(&mut params, "type_head", e, h, num_types, rng);
        params.insert("type_embedding", glorot(rng, num_types, e));
        insert_head(&mut params, "drug1_head", e, h, num_drugs, rng);
        insert_head(&mut params, "drug2_head", e, h, num_drugs, rng);
        params.insert("drug2_head.drug.weight", glorot(rng, latent_dim, h));
        params.insert("log_z", Tensor::zeros(1, 1));
        Self::from_params(params, num_types, num_drugs, latent_dim).expect("freshly built policy is consistent")
    }

    pub fn from_params(params: ParamStore, num_types: usize, num_drugs: usize, latent_dim: usize) -> Result<Self> {
        let id = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Validation(format!("policy parameters lack {name}")))
        };
        let head = |prefix: &str| -> Result<MlpIds> {
            let [hw, hb, ow, ob] = head_names(prefix);
            Ok(MlpIds {
                hidden_weight: id(&hw)?,
                hidden_bias: id(&hb)?,
                out_weight: id(&ow)?,
                out_bias: id(&ob)?,
            })
        };
        let policy = GfnPolicy {
            type_context: id("type_head.context")?,
            type_embedding: id("type_embedding")?,
            type_head: head("type_head")?,
            drug1_head: head("drug1_head")?,
            drug2_head: head("drug2_head")?,
            drug2_drug_weight: id("drug2_head.drug.weight")?,
            log_z: id("log_z")?,
            num_types,
            num_drugs,
            latent_dim,
            params,
        };
        policy.check_shapes()?;
        Ok(policy)
    }

    fn check_shapes(&self) -> Result<()> {
        let p = &self.params;
        let e = p.get(self.type_context).cols();
        let h = p.get(self.type_head.hidden_weight).cols();
        let expect = [
            (self.type_context, [1, e]),
            (self.type_head.hidden_weight, [e, h]),
            (self.type_head.hidden_bias, [1, h]),
            (self.type_head.out_weight, [h, self.num_types]),
            (self.type_head.out_bias, [1, self.num_types]),
            (self.type_embedding, [self.num_types, e]),
            (self.drug1_head.hidden_weight, [e, h]),
            (self.drug1_head.hidden_bias, [1, h]),
            (self.drug1_head.out_weight, [h, self.num_drugs]),
            (self.drug1_head.out_bias, [1, self.num_drugs]),
            (self.drug2_head.hidden_weight, [e, h]),
            (self.drug2_head.hidden_bias, [1, h]),
            (self.drug2_head.out_weight, [h, self.num_drugs]),
            (self.drug2_head.out_bias, [1, self.num_drugs]),
            (self.drug2_drug_weight, [self.latent_dim, h]),
            (self.log_z, [1, 1]),
        ];
        for (id, shape) in expect {
            if p.get(id).shape() != shape {
                return Err(Error::Validation(format!(
                    "policy parameter {} has shape {:?}, expected {:?}",
                    p.name(id),
                    p.get(id).shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn num_drugs(&self) -> usize {
        self.num_drugs
    }

    pub fn log_z(&self) -> f64 {
        self.params.get(self.log_z).item()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            meta: Default::default(),
            params: self.params.clone(),
        };
        ck.meta.insert("model".into(), "gfn".into());
        ck.meta.insert("num_types".into(), self.num_types.to_string());
        ck.meta.insert("num_drugs".into(), self.num_drugs.to_string());
        ck.meta.insert("latent_dim".into(), self.latent_dim.to_string());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("model").map(String::as_str) != Some("gfn") {
            return Err(Error::Validation("checkpoint does not hold a gfn policy".into()));
        }
        Self::from_params(
            ck.params.clone(),
            ck.meta_usize("num_types")?,
            ck.meta_usize("num_drugs")?,
            ck.meta_usize("latent_dim")?,
        )
    }

    fn check_inputs(&self, candidates: &CandidateIndex, latent: &LatentState) -> Result<()> {
        if candidates.num_drugs() != self.num_drugs || latent.mu.rows() != self.num_drugs {
            return Err(Error::Contract(format!(
                "policy expects {} drugs, candidate index has {} and latent state {}",
                self.num_drugs,
                candidates.num_drugs(),
                latent.mu.rows()
            )));
        }
        if latent.mu.cols() != self.latent_dim {
            return Err(Error::Contract(format!(
                "policy expects latent dimension {}, got {}",
                self.latent_dim,
                latent.mu.cols()
            )));
        }
        if candidates.list_len() == 0 {
            return Err(Error::Contract("candidate lists are empty".into()));
        }
        Ok(())
    }

    fn mlp_out(tape: &mut Tape, vars: &[Var], ids: &MlpIds, hidden_pre: Var) -> Var {
        let pre = tape.add_row(hidden_pre, vars[ids.hidden_bias.index()]);
        let h = tape.tanh(pre);
        let o = tape.matmul(h, vars[ids.out_weight.index()]);
        tape.add_row(o, vars[ids.out_bias.index()])
    }

    /// `1 x |T|` log-probabilities of the first action.
    fn type_log_probs_on_tape(&self, tape: &mut Tape, vars: &[Var]) -> Var {
        let ids = &self.type_head;
        let pre = tape.matmul(vars[self.type_context.index()], vars[ids.hidden_weight.index()]);
        let logits = Self::mlp_out(tape, vars, ids, pre);
        tape.log_softmax_rows(logits)
    }

    /// `B x |D|` log-probabilities of the first drug, one row per type.
    fn drug1_log_probs_on_tape(&self, tape: &mut Tape, vars: &[Var], types: &[usize]) -> Var {
        let ids = &self.drug1_head;
        let emb = tape.gather_rows(vars[self.type_embedding.index()], types);
        let pre = tape.matmul(emb, vars[ids.hidden_weight.index()]);
        let logits = Self::mlp_out(tape, vars, ids, pre);
        tape.log_softmax_rows(logits)
    }

    /// `B x |D|` log-probabilities of the second drug given `(type, first)`.
    /// Columns outside the first drug's candidate list are zero-probability.
    fn drug2_log_probs_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        mu: Var,
        mask: Var,
        types: &[usize],
        firsts: &[usize],
    ) -> Var {
        let ids = &self.drug2_head;
        let emb = tape.gather_rows(vars[self.type_embedding.index()], types);
        let a = tape.matmul(emb, vars[ids.hidden_weight.index()]);
        let zi = tape.gather_rows(mu, firsts);
        let b = tape.matmul(zi, vars[self.drug2_drug_weight.index()]);
        let pre = tape.add(a, b);
        let logits = Self::mlp_out(tape, vars, ids, pre);
        let m = tape.gather_rows(mask, firsts);
        let masked = tape.add(logits, m);
        tape.log_softmax_rows(masked)
    }

    /// `B x 1` column of `log P_F(tau)` for each `(t, d_i, d_j)`.
    fn trajectory_log_probs_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        candidates: &CandidateIndex,
        latent: &LatentState,
        triples: &[(usize, usize, usize)],
    ) -> Var {
        let types: Vec<usize> = triples.iter().map(|x| x.0).collect();
        let firsts: Vec<usize> = triples.iter().map(|x| x.1).collect();
        let seconds: Vec<usize> = triples.iter().map(|x| x.2).collect();
        let mu = tape.leaf(latent.mu.clone());
        let mask = tape.leaf(candidates.mask());

        let lt = self.type_log_probs_on_tape(tape, vars);
        let lt = tape.gather_rows(lt, &vec![0; triples.len()]);
        let s1 = tape.select_cols(lt, &types);
        let l1 = self.drug1_log_probs_on_tape(tape, vars, &types);
        let s2 = tape.select_cols(l1, &firsts);
        let l2 = self.drug2_log_probs_on_tape(tape, vars, mu, mask, &types, &firsts);
        let s3 = tape.select_cols(l2, &seconds);
        let s12 = tape.add(s1, s2);
        tape.add(s12, s3)
    }

    /// Mean trajectory-balance loss over `trajectories`, recorded on `tape`.
    pub fn tb_loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        candidates: &CandidateIndex,
        latent: &LatentState,
        trajectories: &[TrajectoryRecord],
    ) -> Result<Var> {
        if trajectories.is_empty() {
            return Err(Error::Contract("trajectory balance needs at least one trajectory".into()));
        }
        let mut triples = Vec::with_capacity(trajectories.len());
        let mut log_r = Vec::with_capacity(trajectories.len());
        for tr in trajectories {
            if tr.reward.is_nan() || tr.reward <= 0.0 {
                return Err(Error::Contract(format!("trajectory reward must be positive, got {}", tr.reward)));
            }
            let (t, i, j) = tr.terminal();
            if !candidates.contains(i, j) {
                return Err(Error::Contract(format!(
                    "drug {} is not a candidate partner of drug {}",
                    j.0, i.0
                )));
            }
            triples.push((t.0, i.0, j.0));
            log_r.push(tr.log_reward);
        }
        let lp = self.trajectory_log_probs_on_tape(tape, vars, candidates, latent, &triples);
        let log_z = tape.gather_rows(vars[self.log_z.index()], &vec![0; triples.len()]);
        let log_r = tape.leaf(Tensor::new(log_r.len(), 1, log_r));
        let a = tape.add(log_z, lp);
        let residual = tape.sub(a, log_r);
        let sq = tape.square(residual);
        Ok(tape.mean(sq))
    }

    /// Samples `n` trajectories and scores them with `reward`. With
    /// `exploration > 0` each action is drawn from a mixture with the uniform
    /// distribution over legal actions; recorded log-probabilities are
    /// always the policy's own.
    pub fn sample_batch(
        &self,
        candidates: &CandidateIndex,
        latent: &LatentState,
        n: usize,
        exploration: f64,
        reward: &dyn Fn(InteractionType, DrugId, DrugId) -> f64,
        rng: &mut Rng,
    ) -> Result<Vec<TrajectoryRecord>> {
        self.check_inputs(candidates, latent)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = self.params.attach(&mut tape);
        let draw = |rng: &mut Rng, log_p: &[f64], legal: &dyn Fn(usize) -> bool| -> usize {
            let legal_count = (0..log_p.len()).filter(|&c| legal(c)).count() as f64;
            let w: Vec<f64> = log_p
                .iter()
                .enumerate()
                .map(|(c, lp)| {
                    if legal(c) {
                        (1.0 - exploration) * lp.exp() + exploration / legal_count
                    } else {
                        0.0
                    }
                })
                .collect();
            rng.categorical(&w)
        };

        let lt = self.type_log_probs_on_tape(&mut tape, &vars);
        let lt = tape.value(lt).clone();
        let types: Vec<usize> = (0..n).map(|_| draw(rng, lt.row_slice(0), &|_| true)).collect();

        let l1 = self.drug1_log_probs_on_tape(&mut tape, &vars, &types);
        let l1 = tape.value(l1).clone();
        let firsts: Vec<usize> = (0..n).map(|b| draw(rng, l1.row_slice(b), &|_| true)).collect();

        let mu = tape.leaf(latent.mu.clone());
        let mask = tape.leaf(candidates.mask());
        let l2 = self.drug2_log_probs_on_tape(&mut tape, &vars, mu, mask, &types, &firsts);
        let l2 = tape.value(l2).clone();

        let mut out = Vec::with_capacity(n);
        for b in 0..n {
            let first = DrugId(firsts[b]);
            let row = l2.row_slice(b);
            let second = draw(rng, row, &|c| candidates.contains(first, DrugId(c)));
            let (t, j) = (InteractionType(types[b]), DrugId(second));
            let steps = [lt.get(0, types[b]), l1.get(b, firsts[b]), row[second]];
            out.push(TrajectoryRecord::new(t, first, j, steps, reward(t, first, j))?);
        }
        Ok(out)
    }
}

/// Draws one trajectory from the policy itself.
pub fn sample_trajectory(
    policy: &GfnPolicy,
    candidates: &CandidateIndex,
    latent: &LatentState,
    reward: &dyn Fn(InteractionType, DrugId, DrugId) -> f64,
    rng: &mut Rng,
) -> Result<TrajectoryRecord> {
    let mut batch = policy.sample_batch(candidates, latent, 1, 0.0, reward, rng)?;
    Ok(batch.pop().expect("one trajectory requested"))
}

/// `(log Z + sum log P_F - log R)^2` for a single trajectory under the
/// current policy parameters.
pub fn tb_loss(
    policy: &GfnPolicy,
    candidates: &CandidateIndex,
    latent: &LatentState,
    trajectory: &TrajectoryRecord,
) -> Result<f64> {
    policy.check_inputs(candidates, latent)?;
    let mut tape = Tape::new();
    let vars = policy.params.attach(&mut tape);
    let loss = policy.tb_loss_on_tape(&mut tape, &vars, candidates, latent, std::slice::from_ref(trajectory))?;
    Ok(tape.value(loss).item())
}

#[derive(Clone, Debug)]
pub struct TrainedGfn {
    pub policy: GfnPolicy,
    pub candidates: CandidateIndex,
    /// Mean trajectory-balance loss of each step's batch.
    pub curve: Vec<f64>,
    /// `log Z` after each step.
    pub log_z_curve: Vec<f64>,
}

/// On-policy trajectory-balance training with Adam.
///
/// `reward` must be positive for every reachable triple; it is evaluated
/// once per sampled trajectory.
pub fn train_gflownet(
    num_types: usize,
    latent: &LatentState,
    cfg: &GfnConfig,
    reward: &dyn Fn(InteractionType, DrugId, DrugId) -> f64,
) -> Result<TrainedGfn> {
    cfg.validate()?;
    if num_types == 0 {
        return Err(Error::Contract("need at least one interaction type".into()));
    }
    let candidates = build_candidate_index(latent, cfg.knn_k)?;
    let mut rng = Rng::new(cfg.seed);
    let mut policy = GfnPolicy::new(num_types, latent.mu.rows(), latent.mu.cols(), cfg, &mut rng);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut log_z_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batch = policy.sample_batch(&candidates, latent, cfg.batch_size, cfg.exploration, reward, &mut rng)?;
        let mut tape = Tape::new();
        let vars = policy.params.attach(&mut tape);
        let loss = policy.tb_loss_on_tape(&mut tape, &vars, &candidates, latent, &batch)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Diverged {
                stage: "gflownet",
                epoch: epoch + 1,
            });
        }
        let grads = tape.backward(loss)?;
        let grads = policy.params.collect_grads(&grads, &vars);
        opt.step(&mut policy.params, &grads);
        if !policy.params.is_finite() {
            return Err(Error::Diverged {
                stage: "gflownet",
                epoch: epoch + 1,
            });
        }
        curve.push(value);
        log_z_curve.push(policy.log_z());
        if (epoch + 1) % 100 == 0 {
            debug!("gfn step {} tb loss {:.5} log Z {:.4}", epoch + 1, value, policy.log_z());
        }
    }
    Ok(TrainedGfn {
        policy,
        candidates,
        curve,
        log_z_curve,
    })
}

/// Exact terminal distribution of the policy: the product of the three
/// step probabilities for every reachable triple. Unreachable triples are
/// absent (probability zero).
pub fn enumerate_terminal_distribution(
    policy: &GfnPolicy,
    candidates: &CandidateIndex,
    latent: &LatentState,
) -> Result<BTreeMap<(InteractionType, DrugId, DrugId), f64>> {
    policy.check_inputs(candidates, latent)?;
    let (nt, nd) = (policy.num_types, policy.num_drugs);
    let size = nt
        .checked_mul(nd)
        .and_then(|x| x.checked_mul(candidates.list_len()))
        .unwrap_or(usize::MAX);
    if size > ENUMERATION_LIMIT {
        return Err(Error::Contract(format!(
            "{size} terminal states exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    let mut tape = Tape::new();
    let vars = policy.params.attach(&mut tape);
    let lt = policy.type_log_probs_on_tape(&mut tape, &vars);
    let all_types: Vec<usize> = (0..nt).collect();
    let l1 = policy.drug1_log_probs_on_tape(&mut tape, &vars, &all_types);
    let ctx_types: Vec<usize> = (0..nt * nd).map(|r| r / nd).collect();
    let ctx_firsts: Vec<usize> = (0..nt * nd).map(|r| r % nd).collect();
    let mu = tape.leaf(latent.mu.clone());
    let mask = tape.leaf(candidates.mask());
    let l2 = policy.drug2_log_probs_on_tape(&mut tape, &vars, mu, mask, &ctx_types, &ctx_firsts);
    let (lt, l1, l2) = (tape.value(lt), tape.value(l1), tape.value(l2));

    let mut out = BTreeMap::new();
    for t in 0..nt {
        for i in 0..nd {
            for &j in candidates.get(DrugId(i)) {
                let lp = lt.get(0, t) + l1.get(t, i) + l2.get(t * nd + i, j.0);
                out.insert((InteractionType(t), DrugId(i), j), lp.exp());
            }
        }
    }
    Ok(out)
}
