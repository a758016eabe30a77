//! Variational graph autoencoder over the interaction graph.
//!
//! Encoder: a learnable embedding per drug fed through relational graph
//! convolutions. Each layer computes
//! `H' = H W_self + sum_t A_t H W_t + b`, where `A_t` averages over the
//! type-`t` neighbours of each node. Hidden layers apply `tanh`; the last
//! layer has two heads producing the posterior mean and log-variance.
//!
//! Decoder: DistMult. The score of type `t` for a pair is
//! `sum_k z_i[k] * r_t[k] * z_j[k]`, normalised with a softmax over types.
//!
//! The training objective is the negative ELBO: summed type log-loss over a
//! batch of edges plus `kl_weight` times the Gaussian KL to `N(0, I)`. For a
//! minibatch the KL is scaled by `|batch| / |E|` so one epoch sees it once.

use std::sync::Arc;

use log::debug;

use crate::error::{Error, Result};
use crate::graph::{DrugId, Edge, InteractionGraph, InteractionType};
use crate::numerics::{
    glorot, Checkpoint, Optimizer, ParamId, ParamStore, Rng, Sgd, SparseMatrix, Tape, Tensor, Var,
};

#[derive(Clone, Debug, PartialEq)]
pub struct VgaeConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Number of relational convolutions, counting the output heads.
    pub encoder_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Edges per gradient step.
    pub batch_size: usize,
    pub kl_weight: f64,
    pub seed: u64,
}

impl VgaeConfig {
    pub fn with_latent_dim(latent_dim: usize) -> Self {
        VgaeConfig {
            latent_dim,
            hidden_dim: 32,
            encoder_layers: 2,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 128,
            kl_weight: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("hidden_dim", self.hidden_dim),
            ("encoder_layers", self.encoder_layers),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("vgae {name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("vgae learning_rate must be positive".into()));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Config("vgae kl_weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-type mean-aggregation operators for one graph.
#[derive(Clone, Debug)]
pub struct RelationalAdjacency {
    per_type: Vec<Arc<SparseMatrix>>,
}

impl RelationalAdjacency {
    pub fn from_graph(g: &InteractionGraph) -> Self {
        let n = g.num_drugs();
        let mut neighbours: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; g.num_types()];
        for e in g.edges() {
            let (a, b) = (e.first().0, e.second().0);
            let t = e.kind().0;
            neighbours[t][a].push(b);
            neighbours[t][b].push(a);
        }
        let per_type = neighbours
            .into_iter()
            .map(|lists| {
                let mut entries = Vec::new();
                for (i, nb) in lists.iter().enumerate() {
                    let w = 1.0 / nb.len() as f64;
                    entries.extend(nb.iter().map(|&j| (i, j, w)));
                }
                Arc::new(SparseMatrix::new(n, n, entries))
            })
            .collect();
        RelationalAdjacency { per_type }
    }

    pub fn num_types(&self) -> usize {
        self.per_type.len()
    }

    pub fn get(&self, t: usize) -> &Arc<SparseMatrix> {
        &self.per_type[t]
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ConvIds {
    self_weight: ParamId,
    relation_weights: Vec<ParamId>,
    bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VgaeModel {
    params: ParamStore,
    num_drugs: usize,
    num_types: usize,
    hidden_dim: usize,
    latent_dim: usize,
    embedding: ParamId,
    hidden: Vec<ConvIds>,
    mu_head: ConvIds,
    log_var_head: ConvIds,
    relation_diagonals: ParamId,
}

/// Posterior parameters and a sample `z = mu + exp(log_var / 2) * eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub mu: Tensor,
    pub log_var: Tensor,
    pub z: Tensor,
    pub eps: Tensor,
}

impl LatentState {
    pub fn num_drugs(&self) -> usize {
        self.z.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.z.cols()
    }

    pub fn embedding(&self, d: DrugId) -> &[f64] {
        self.z.row_slice(d.0)
    }
}

fn layer_names(prefix: &str, num_types: usize) -> (String, Vec<String>, String) {
    (
        format!("{prefix}.self"),
        (0..num_types).map(|t| format!("{prefix}.rel{t}")).collect(),
        format!("{prefix}.bias"),
    )
}

impl VgaeModel {
    pub fn new(num_drugs: usize, num_types: usize, cfg: &VgaeConfig, rng: &mut Rng) -> Self {
        let (h, k) = (cfg.hidden_dim, cfg.latent_dim);
        let mut params = ParamStore::new();
        params.insert("encoder.embedding", rng.normal_tensor(num_drugs, h));
        // A layer sums 1 + T transformed inputs; shrink each block so the
        // sum starts with the variance of a single Glorot layer.
        let shrink = 1.0 / ((1 + num_types) as f64).sqrt();
        let add_conv = |params: &mut ParamStore, prefix: &str, out: usize, rng: &mut Rng| {
            let (s, rels, b) = layer_names(prefix, num_types);
            params.insert(s, glorot(rng, h, out).map(|x| x * shrink));
            for name in rels {
                params.insert(name, glorot(rng, h, out).map(|x| x * shrink));
            }
            params.insert(b, Tensor::zeros(1, out));
        };
        for l in 0..cfg.encoder_layers - 1 {
            add_conv(&mut params, &format!("encoder.layer{l}"), h, rng);
        }
        add_conv(&mut params, "encoder.mu", k, rng);
        add_conv(&mut params, "encoder.log_var", k, rng);
        params.insert("decoder.relation_diagonals", glorot(rng, num_types, k));
        Self::from_params(params, num_drugs, num_types).expect("freshly built layout is valid")
    }

    /// Rebuilds the parameter layout from names and shapes.
    pub fn from_params(params: ParamStore, num_drugs: usize, num_types: usize) -> Result<Self> {
        let need = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Validation(format!("vgae parameter {name} missing")))
        };
        let conv = |prefix: &str| -> Result<ConvIds> {
            let (s, rels, b) = layer_names(prefix, num_types);
            Ok(ConvIds {
                self_weight: need(&s)?,
                relation_weights: rels.iter().map(|r| need(r)).collect::<Result<_>>()?,
                bias: need(&b)?,
            })
        };
        let embedding = need("encoder.embedding")?;
        let [rows, hidden_dim] = params.get(embedding).shape();
        if rows != num_drugs {
            return Err(Error::Validation(format!(
                "embedding table has {rows} rows for {num_drugs} drugs"
            )));
        }
        let mut hidden = Vec::new();
        while params.id(&format!("encoder.layer{}.self", hidden.len())).is_some() {
            hidden.push(conv(&format!("encoder.layer{}", hidden.len()))?);
        }
        let mu_head = conv("encoder.mu")?;
        let log_var_head = conv("encoder.log_var")?;
        let relation_diagonals = need("decoder.relation_diagonals")?;
        let [t_rows, latent_dim] = params.get(relation_diagonals).shape();
        if t_rows != num_types {
            return Err(Error::Validation(format!(
                "decoder has {t_rows} relation rows for {num_types} types"
            )));
        }
        Ok(VgaeModel {
            params,
            num_drugs,
            num_types,
            hidden_dim,
            latent_dim,
            embedding,
            hidden,
            mu_head,
            log_var_head,
            relation_diagonals,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_drugs(&self) -> usize {
        self.num_drugs
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn encoder_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// The `|T| x K` DistMult diagonals.
    pub fn relation_diagonals(&self) -> &Tensor {
        self.params.get(self.relation_diagonals)
    }

    pub fn relation_diagonals_mut(&mut self) -> &mut Tensor {
        self.params.get_mut(self.relation_diagonals)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            meta: Default::default(),
            params: self.params.clone(),
        };
        ck.meta.insert("model".into(), "vgae".into());
        ck.meta.insert("num_drugs".into(), self.num_drugs.to_string());
        ck.meta.insert("num_types".into(), self.num_types.to_string());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("model").map(String::as_str) != Some("vgae") {
            return Err(Error::Validation("checkpoint does not hold a vgae model".into()));
        }
        Self::from_params(
            ck.params.clone(),
            ck.meta_usize("num_drugs")?,
            ck.meta_usize("num_types")?,
        )
    }

    fn check_graph(&self, g: &InteractionGraph) -> Result<()> {
        if g.num_drugs() != self.num_drugs || g.num_types() != self.num_types {
            return Err(Error::Contract(format!(
                "model is sized for {} drugs / {} types, graph has {} / {}",
                self.num_drugs,
                self.num_types,
                g.num_drugs(),
                g.num_types()
            )));
        }
        Ok(())
    }

    fn conv_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: &RelationalAdjacency,
        h: Var,
        ids: &ConvIds,
    ) -> Var {
        let mut out = tape.matmul(h, vars[ids.self_weight.index()]);
        for (t, w) in ids.relation_weights.iter().enumerate() {
            let a = adj.get(t);
            if a.nnz() == 0 {
                continue;
            }
            let agg = tape.spmm(a, h);
            let msg = tape.matmul(agg, vars[w.index()]);
            out = tape.add(out, msg);
        }
        tape.add_row(out, vars[ids.bias.index()])
    }

    /// Records the encoder; returns `(mu, log_var)`.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: &RelationalAdjacency,
    ) -> (Var, Var) {
        let mut h = vars[self.embedding.index()];
        for ids in &self.hidden {
            let pre = self.conv_on_tape(tape, vars, adj, h, ids);
            h = tape.tanh(pre);
        }
        let mu = self.conv_on_tape(tape, vars, adj, h, &self.mu_head);
        let log_var = self.conv_on_tape(tape, vars, adj, h, &self.log_var_head);
        (mu, log_var)
    }

    /// Records the full negative ELBO for `batch` with fixed noise `eps`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: &RelationalAdjacency,
        batch: &[Edge],
        eps: &Tensor,
        kl_weight: f64,
        batch_fraction: f64,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Contract("elbo loss needs a nonempty batch".into()));
        }
        let (mu, log_var) = self.encode_on_tape(tape, vars, adj);
        let half = tape.scale(log_var, 0.5);
        let std = tape.exp(half);
        let eps = tape.leaf(eps.clone());
        let noise = tape.mul(std, eps);
        let z = tape.add(mu, noise);
        let recon = reconstruction_on_tape(tape, z, vars[self.relation_diagonals.index()], batch);
        let kl = kl_on_tape(tape, mu, log_var);
        let kl = tape.scale(kl, kl_weight * batch_fraction);
        Ok(tape.add(recon, kl))
    }

    /// Runs the encoder and draws `z` with fresh noise from `rng`.
    pub fn encode(&self, g: &InteractionGraph, rng: &mut Rng) -> Result<LatentState> {
        let eps = rng.normal_tensor(self.num_drugs, self.latent_dim);
        self.encode_with_noise(g, eps)
    }

    /// Runs the encoder with `z = mu`.
    pub fn encode_mean(&self, g: &InteractionGraph) -> Result<LatentState> {
        self.encode_with_noise(g, Tensor::zeros(self.num_drugs, self.latent_dim))
    }

    pub fn encode_with_noise(&self, g: &InteractionGraph, eps: Tensor) -> Result<LatentState> {
        self.check_graph(g)?;
        let adj = RelationalAdjacency::from_graph(g);
        let mut tape = Tape::new();
        let vars = self.params.attach(&mut tape);
        let (mu, log_var) = self.encode_on_tape(&mut tape, &vars, &adj);
        let mu = tape.value(mu).clone();
        let log_var = tape.value(log_var).clone();
        let z = mu.zip_map(&log_var.zip_map(&eps, |lv, e| (0.5 * lv).exp() * e), |m, n| m + n);
        Ok(LatentState {
            mu,
            log_var,
            z,
            eps,
        })
    }

    /// DistMult scores `z_i^T diag(r_t) z_j` for every type.
    pub fn type_scores(&self, z_i: &[f64], z_j: &[f64]) -> Vec<f64> {
        let r = self.relation_diagonals();
        (0..self.num_types)
            .map(|t| {
                r.row_slice(t)
                    .iter()
                    .zip(z_i)
                    .zip(z_j)
                    .map(|((r, a), b)| (a * b) * r)
                    .sum()
            })
            .collect()
    }
}

/// `p(t | z_i, z_j)` over all types.
pub fn decode_type_distribution(model: &VgaeModel, z_i: &[f64], z_j: &[f64]) -> Vec<f64> {
    assert_eq!(z_i.len(), model.latent_dim(), "z_i has the wrong length");
    assert_eq!(z_j.len(), model.latent_dim(), "z_j has the wrong length");
    Tensor::row(model.type_scores(z_i, z_j))
        .softmax_rows()
        .into_data()
}

/// `-sum log p(t | z_i, z_j)` over `batch`.
fn reconstruction_on_tape(tape: &mut Tape, z: Var, relation_diagonals: Var, batch: &[Edge]) -> Var {
    let firsts: Vec<usize> = batch.iter().map(|e| e.first().0).collect();
    let seconds: Vec<usize> = batch.iter().map(|e| e.second().0).collect();
    let kinds: Vec<usize> = batch.iter().map(|e| e.kind().0).collect();
    let zi = tape.gather_rows(z, &firsts);
    let zj = tape.gather_rows(z, &seconds);
    let prod = tape.mul(zi, zj);
    let rt = tape.transpose(relation_diagonals);
    let scores = tape.matmul(prod, rt);
    let log_p = tape.log_softmax_rows(scores);
    let picked = tape.select_cols(log_p, &kinds);
    let total = tape.sum(picked);
    tape.scale(total, -1.0)
}

/// `0.5 * sum(exp(log_var) + mu^2 - 1 - log_var)`
fn kl_on_tape(tape: &mut Tape, mu: Var, log_var: Var) -> Var {
    let n = tape.value(mu).len() as f64;
    let var = tape.exp(log_var);
    let mu2 = tape.square(mu);
    let a = tape.add(var, mu2);
    let b = tape.sub(a, log_var);
    let s = tape.sum(b);
    let half = tape.scale(s, 0.5);
    tape.offset(half, -0.5 * n)
}

/// Closed-form KL of the factorised posterior to `N(0, I)`.
pub fn kl_divergence(latent: &LatentState) -> f64 {
    latent
        .mu
        .data()
        .iter()
        .zip(latent.log_var.data())
        .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

/// Negative ELBO of `batch` under `latent`, with the KL scaled by
/// `batch.len() / num_train_edges`.
pub fn elbo_loss(
    model: &VgaeModel,
    batch: &[Edge],
    latent: &LatentState,
    kl_weight: f64,
    num_train_edges: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("elbo loss needs a nonempty batch".into()));
    }
    let mut recon = 0.0;
    for e in batch {
        let p = decode_type_distribution(model, latent.embedding(e.first()), latent.embedding(e.second()));
        recon -= p[e.kind().0].max(crate::numerics::LOG_FLOOR).ln();
    }
    let fraction = batch.len() as f64 / num_train_edges.max(batch.len()) as f64;
    Ok(recon + kl_weight * fraction * kl_divergence(latent))
}

#[derive(Clone, Debug)]
pub struct TrainedVgae {
    pub model: VgaeModel,
    /// Posterior means with noise disabled (`z = mu`).
    pub latent: LatentState,
    /// Per-epoch training loss (sampled negative ELBO) divided by the edge
    /// count.
    pub curve: Vec<f64>,
    /// Per-epoch full-graph negative ELBO at `z = mu`, divided by the edge
    /// count. Free of sampling noise, so it tracks optimisation progress.
    pub mean_curve: Vec<f64>,
}

/// Minibatch gradient descent on the negative ELBO.
pub fn train_vgae(g: &InteractionGraph, cfg: &VgaeConfig) -> Result<TrainedVgae> {
    cfg.validate()?;
    if g.num_edges() == 0 {
        return Err(Error::Validation("cannot train on a graph with no edges".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut model = VgaeModel::new(g.num_drugs(), g.num_types(), cfg, &mut rng);
    let adj = RelationalAdjacency::from_graph(g);
    let mut opt = Sgd {
        learning_rate: cfg.learning_rate,
    };
    let n_edges = g.num_edges();
    let mut order: Vec<usize> = (0..n_edges).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut mean_curve = Vec::with_capacity(cfg.epochs);
    let zero_noise = Tensor::zeros(model.num_drugs, model.latent_dim);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Edge> = chunk.iter().map(|&i| g.edges()[i]).collect();
            let eps = rng.normal_tensor(model.num_drugs, model.latent_dim);
            let mut tape = Tape::new();
            let vars = model.params.attach(&mut tape);
            let loss = model.loss_on_tape(
                &mut tape,
                &vars,
                &adj,
                &batch,
                &eps,
                cfg.kl_weight,
                batch.len() as f64 / n_edges as f64,
            )?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    stage: "vgae",
                    epoch: epoch + 1,
                });
            }
            epoch_loss += value;
            let grads = tape.backward(loss)?;
            let grads = model.params.collect_grads(&grads, &vars);
            opt.step(&mut model.params, &grads);
        }
        if !model.params.is_finite() {
            return Err(Error::Diverged {
                stage: "vgae",
                epoch: epoch + 1,
            });
        }
        curve.push(epoch_loss / n_edges as f64);
        let mut tape = Tape::new();
        let vars = model.params.attach(&mut tape);
        let full = model.loss_on_tape(&mut tape, &vars, &adj, g.edges(), &zero_noise, cfg.kl_weight, 1.0)?;
        mean_curve.push(tape.value(full).item() / n_edges as f64);
        if (epoch + 1) % 50 == 0 {
            debug!("vgae epoch {} loss/edge {:.5}", epoch + 1, epoch_loss / n_edges as f64);
        }
    }

    let latent = model.encode_mean(g)?;
    Ok(TrainedVgae {
        model,
        latent,
        curve,
        mean_curve,
    })
}

/// Most probable type for the pair, with ties going to the lowest index.
pub fn predict_edge(
    model: &VgaeModel,
    latent: &LatentState,
    i: DrugId,
    j: DrugId,
) -> Result<(InteractionType, Vec<f64>)> {
    if i == j {
        return Err(Error::Contract(format!("cannot predict a self-pair for drug {}", i.0)));
    }
    let p = decode_type_distribution(model, latent.embedding(i), latent.embedding(j));
    Ok((InteractionType(argmax(&p)), p))
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
