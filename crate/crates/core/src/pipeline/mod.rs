//! End-to-end orchestration on disk.
//!
//! Layout under the output directory:
//!
//! ```text
//! stage1/vgae.ckpt          pre-trained autoencoder
//! stage1/embeddings.tsv     posterior means per drug
//! stage1/train_curve.csv    epoch, sampled loss, noise-free loss (per edge)
//! stage2/policy.ckpt        trained flow network policy
//! stage2/tb_curve.csv       step, trajectory-balance loss, log Z
//! stage3/synthetic.tsv      kept synthetic triples (provenance column)
//! stage3/synthetic.json     requested / kept / drawn counts
//! stage3/augmented.tsv      training edges then synthetic ones
//! stage3/vgae_final.ckpt    autoencoder retrained on the augmented graph
//! stage3/final_curve.csv
//! reports/metrics.json      both models, diversity, protocol notes
//! reports/metrics.csv       one flat row per model
//! reports/per_type.csv
//! reports/diversity.json
//! manifest.json             config hash, timings, artifact digests
//! ```
//!
//! Every stage reads its inputs from disk, so stages can be rerun alone.

pub mod config;
pub mod fixture;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{generate_synthetic, merge, reward_fn, write_merged, SyntheticSet};
use crate::error::{Error, Result};
use crate::gflownet::{build_candidate_index, train_gflownet, GfnPolicy};
use crate::graph::{ingest_into, read_vocabulary, EdgeListFormat, InteractionGraph, Vocabulary};
use crate::metrics::{
    diversity_report, evaluate_model, rare_types, sample_non_edges, DiversityReport, Distribution, MetricReport,
};
use crate::numerics::{Checkpoint, Rng};
use crate::vgae::{train_vgae, TrainedVgae, VgaeModel};

pub use config::{PipelineConfig, Reference};
pub use fixture::{write_fixture, FixtureParams};

pub const VGAE_CKPT: &str = "stage1/vgae.ckpt";
pub const EMBEDDINGS: &str = "stage1/embeddings.tsv";
pub const TRAIN_CURVE: &str = "stage1/train_curve.csv";
pub const POLICY_CKPT: &str = "stage2/policy.ckpt";
pub const TB_CURVE: &str = "stage2/tb_curve.csv";
pub const SYNTHETIC: &str = "stage3/synthetic.tsv";
pub const SYNTHETIC_META: &str = "stage3/synthetic.json";
pub const AUGMENTED: &str = "stage3/augmented.tsv";
pub const FINAL_CKPT: &str = "stage3/vgae_final.ckpt";
pub const FINAL_CURVE: &str = "stage3/final_curve.csv";
pub const METRICS_JSON: &str = "reports/metrics.json";
pub const METRICS_CSV: &str = "reports/metrics.csv";
pub const PER_TYPE_CSV: &str = "reports/per_type.csv";
pub const DIVERSITY_JSON: &str = "reports/diversity.json";
pub const MANIFEST: &str = "manifest.json";

pub const PROTOCOL: &str = "Accuracy and F1 use the argmax type of each test edge. Macro F1 averages \
types that occur in the test labels or predictions; rare_macro_f1 restricts it to the least frequent \
half of types by training count. AUROC and AUPRC score each pair by its largest type probability; \
positives are test edges, negatives are as many uniformly drawn drug pairs with no edge in train, \
valid or test. Diversity metrics compare training type distributions with the reference distribution.";

/// The three splits over one shared vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: InteractionGraph,
    pub valid: InteractionGraph,
    pub test: InteractionGraph,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads the split files named in `paths`. With vocabulary sidecars the
/// index order comes from them and unseen labels are an error; otherwise
/// labels are numbered in first-seen order across train, valid, test.
pub fn load_dataset(paths: &config::PathsSection) -> Result<Dataset> {
    let load_vocab = |p: &Option<PathBuf>| -> Result<Option<Vocabulary>> {
        p.as_deref().map(|p| read_vocabulary(open(p)?)).transpose()
    };
    let fixed_drugs = load_vocab(&paths.drug_vocabulary)?;
    let fixed_types = load_vocab(&paths.type_vocabulary)?;
    let mut drugs = fixed_drugs.clone().unwrap_or_default();
    let mut types = fixed_types.clone().unwrap_or_default();
    let mut parts = Vec::new();
    for path in [&paths.train, &paths.valid, &paths.test] {
        let (edges, _) = ingest_into(open(path)?, EdgeListFormat::auto(), &mut drugs, &mut types)?;
        if fixed_drugs.as_ref().is_some_and(|v| v.len() != drugs.len()) {
            return Err(Error::Validation(format!(
                "{} names a drug missing from the drug vocabulary",
                path.display()
            )));
        }
        if fixed_types.as_ref().is_some_and(|v| v.len() != types.len()) {
            return Err(Error::Validation(format!(
                "{} names a type missing from the type vocabulary",
                path.display()
            )));
        }
        parts.push((path, edges));
    }
    let mut graphs = Vec::new();
    for (path, edges) in parts {
        let (g, dups) = InteractionGraph::build(drugs.clone(), types.clone(), edges)?;
        if dups > 0 {
            warn!("{}: dropped {dups} duplicate rows", path.display());
        }
        graphs.push(g);
    }
    let test = graphs.pop().expect("three parts");
    let valid = graphs.pop().expect("three parts");
    let train = graphs.pop().expect("three parts");
    for (name, other) in [("valid", &valid), ("test", &test)] {
        if let Some(e) = other.edges().iter().find(|e| train.contains(e)) {
            return Err(Error::Validation(format!("{name} edge {e} also appears in train")));
        }
    }
    if let Some(e) = test.edges().iter().find(|e| valid.contains(e)) {
        return Err(Error::Validation(format!("test edge {e} also appears in valid")));
    }
    Ok(Dataset { train, valid, test })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    /// Output path relative to the run directory, mapped to its SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// Index of a run. Timings are the only wall-clock dependent field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    /// Every listed artifact across stages.
    pub fn artifacts(&self) -> BTreeMap<&str, &str> {
        self.stages
            .values()
            .flat_map(|s| s.artifacts.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .collect()
    }
}

/// Reports produced by [`Pipeline::evaluate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub protocol: &'static str,
    pub reference: Reference,
    pub rare_types: Vec<String>,
    pub baseline: MetricReport,
    pub augmented: MetricReport,
    pub diversity: DiversityReport,
}

impl Evaluation {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let d = &self.diversity;
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8}", "model", "AUROC", "AUPRC", "acc", "macroF1", "rareF1");
        for r in [&self.baseline, &self.augmented] {
            let rare = r.rare_macro_f1.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8}",
                r.model, r.auroc, r.auprc, r.accuracy, r.macro_f1, rare
            );
        }
        let _ = writeln!(s, "entropy   {:.4} -> {:.4} bits", d.se_before, d.se_after);
        let _ = writeln!(s, "JSD       {:.4} -> {:.4}", d.jsd_before, d.jsd_after);
        let _ = writeln!(
            s,
            "coverage  {:.4} -> {:.4} (threshold {})",
            d.coverage_before, d.coverage_after, d.coverage_threshold
        );
        s
    }
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    config_hash: String,
}

impl Pipeline {
    /// Reads a config file. `seed` replaces the file's seed; `out` replaces
    /// `paths.out` and is taken as given (relative to the working
    /// directory), while other relative paths resolve against the config
    /// file's directory.
    pub fn load(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
        let mut cfg = PipelineConfig::parse(&text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let base = config_path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        if let Some(o) = out {
            cfg.paths.out = o;
        }
        Ok(Self::new(cfg))
    }

    /// Uses `cfg` as is; its paths should already be resolved.
    pub fn new(cfg: PipelineConfig) -> Self {
        // Hash everything except where files live, so moving a run does
        // not change its identity.
        let mut hashed = cfg.clone();
        hashed.paths.train = PathBuf::new();
        hashed.paths.valid = PathBuf::new();
        hashed.paths.test = PathBuf::new();
        hashed.paths.out = PathBuf::new();
        hashed.paths.drug_vocabulary = None;
        hashed.paths.type_vocabulary = None;
        let config_hash = sha256_hex(hashed.to_toml().as_bytes());
        Pipeline { cfg, config_hash }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.paths.out
    }

    pub fn artifact(&self, rel: &str) -> PathBuf {
        self.out_dir().join(rel)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.artifact(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    fn require(&self, rel: &str, producer: &str) -> Result<PathBuf> {
        let p = self.artifact(rel);
        if !p.is_file() {
            return Err(Error::MissingPrerequisite(format!(
                "{} not found; run `{producer}` first",
                p.display()
            )));
        }
        Ok(p)
    }

    fn load_checkpoint(&self, rel: &str, producer: &str) -> Result<Checkpoint> {
        let p = self.require(rel, producer)?;
        Checkpoint::load(&p)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        load_dataset(&self.cfg.paths)
    }

    fn record_stage(&self, stage: &str, started: Instant, artifacts: &[&str]) -> Result<RunManifest> {
        let path = self.artifact(MANIFEST);
        let mut manifest = match RunManifest::load(&path) {
            Ok(m) if m.config_sha256 == self.config_hash && m.seed == self.cfg.seed => m,
            _ => RunManifest {
                config_sha256: self.config_hash.clone(),
                seed: self.cfg.seed,
                stages: BTreeMap::new(),
            },
        };
        let mut record = StageRecord {
            seconds: started.elapsed().as_secs_f64(),
            artifacts: BTreeMap::new(),
        };
        for rel in artifacts {
            let p = self.artifact(rel);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            record.artifacts.insert(rel.to_string(), sha256_hex(&bytes));
        }
        manifest.stages.insert(stage.to_string(), record);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        self.write(MANIFEST, text.as_bytes())?;
        Ok(manifest)
    }

    fn write_curve(&self, rel: &str, trained: &TrainedVgae) -> Result<()> {
        let mut s = String::from("epoch,loss,mean_loss\n");
        for (i, (a, b)) in trained.curve.iter().zip(&trained.mean_curve).enumerate() {
            let _ = writeln!(s, "{},{a},{b}", i + 1);
        }
        self.write(rel, s.as_bytes())
    }

    /// Stage 1: fit the autoencoder on the training split.
    pub fn pretrain(&self) -> Result<RunManifest> {
        let started = Instant::now();
        let data = self.load_dataset()?;
        info!(
            "pretrain: {} drugs, {} types, {} training edges",
            data.train.num_drugs(),
            data.train.num_types(),
            data.train.num_edges()
        );
        let trained = train_vgae(&data.train, &self.cfg.vgae_config())?;
        self.write(VGAE_CKPT, trained.model.to_checkpoint().to_text().as_bytes())?;
        let mut s = String::from("drug");
        for k in 0..trained.latent.latent_dim() {
            let _ = write!(s, "\tmu_{k}");
        }
        s.push('\n');
        for d in 0..trained.latent.num_drugs() {
            s.push_str(data.train.drugs().label(d));
            for v in trained.latent.mu.row_slice(d) {
                let _ = write!(s, "\t{v}");
            }
            s.push('\n');
        }
        self.write(EMBEDDINGS, s.as_bytes())?;
        self.write_curve(TRAIN_CURVE, &trained)?;
        self.record_stage("pretrain", started, &[VGAE_CKPT, EMBEDDINGS, TRAIN_CURVE])
    }

    fn load_vgae(&self, rel: &str, producer: &str, g: &InteractionGraph) -> Result<VgaeModel> {
        let model = VgaeModel::from_checkpoint(&self.load_checkpoint(rel, producer)?)?;
        if model.num_drugs() != g.num_drugs() || model.num_types() != g.num_types() {
            return Err(Error::Validation(format!(
                "{rel} was trained on {} drugs / {} types but the data has {} / {}",
                model.num_drugs(),
                model.num_types(),
                g.num_drugs(),
                g.num_types()
            )));
        }
        Ok(model)
    }

    /// Stage 2: train the flow network against the frozen stage-1 model.
    pub fn train_gfn(&self) -> Result<RunManifest> {
        let started = Instant::now();
        let data = self.load_dataset()?;
        let vgae = self.load_vgae(VGAE_CKPT, "pretrain", &data.train)?;
        let latent = vgae.encode_mean(&data.train)?;
        let counts = data.train.type_counts();
        let reward = reward_fn(counts, &vgae, &latent, self.cfg.reward_config());
        let trained = train_gflownet(data.train.num_types(), &latent, &self.cfg.gfn_config(), &reward)?;
        info!("train-gfn: final log Z {:.4}", trained.policy.log_z());
        self.write(POLICY_CKPT, trained.policy.to_checkpoint().to_text().as_bytes())?;
        let mut s = String::from("step,tb_loss,log_z\n");
        for (i, (l, z)) in trained.curve.iter().zip(&trained.log_z_curve).enumerate() {
            let _ = writeln!(s, "{},{l},{z}", i + 1);
        }
        self.write(TB_CURVE, s.as_bytes())?;
        self.record_stage("train-gfn", started, &[POLICY_CKPT, TB_CURVE])
    }

    /// Stage 3: sample synthetic triples, merge, retrain, then evaluate.
    pub fn augment_retrain(&self) -> Result<(RunManifest, Evaluation)> {
        let started = Instant::now();
        let data = self.load_dataset()?;
        let vgae = self.load_vgae(VGAE_CKPT, "pretrain", &data.train)?;
        let policy_path = self.require(POLICY_CKPT, "train-gfn")?;
        let policy_text = fs::read_to_string(&policy_path).map_err(|e| Error::io(&policy_path, e))?;
        let policy = GfnPolicy::from_checkpoint(&Checkpoint::from_text(&policy_text)?)?;
        let latent = vgae.encode_mean(&data.train)?;
        let candidates = build_candidate_index(&latent, self.cfg.gfn.knn_k)?;
        let policy_id = sha256_hex(policy_text.as_bytes())[..16].to_string();
        let mut rng = Rng::new(self.cfg.stage_seed(config::streams::AUGMENT));
        let synth = generate_synthetic(
            &policy,
            &candidates,
            &latent,
            &data.train,
            self.cfg.augment.n_synthetic,
            &policy_id,
            &mut rng,
        )?;
        info!(
            "augment: kept {} of {} requested after {} samples",
            synth.kept, synth.requested, synth.samples_drawn
        );
        let merged = merge(&data.train, &synth)?;
        let mut buf = Vec::new();
        synth.write(&mut buf)?;
        self.write(SYNTHETIC, &buf)?;
        self.write(SYNTHETIC_META, synthetic_meta(&synth).as_bytes())?;
        let mut buf = Vec::new();
        write_merged(&data.train, &merged, &mut buf)?;
        self.write(AUGMENTED, &buf)?;

        let trained = train_vgae(&merged, &self.cfg.final_vgae_config())?;
        self.write(FINAL_CKPT, trained.model.to_checkpoint().to_text().as_bytes())?;
        self.write_curve(FINAL_CURVE, &trained)?;
        self.record_stage(
            "augment-retrain",
            started,
            &[SYNTHETIC, SYNTHETIC_META, AUGMENTED, FINAL_CKPT, FINAL_CURVE],
        )?;
        self.evaluate()
    }

    /// Scores the stage-1 and stage-3 models on the test split and writes
    /// the reports.
    pub fn evaluate(&self) -> Result<(RunManifest, Evaluation)> {
        let started = Instant::now();
        let data = self.load_dataset()?;
        let base = self.load_vgae(VGAE_CKPT, "pretrain", &data.train)?;
        let fin = self.load_vgae(FINAL_CKPT, "augment-retrain", &data.train)?;
        let aug_path = self.require(AUGMENTED, "augment-retrain")?;
        let (mut drugs, mut types) = (data.train.drugs().clone(), data.train.types().clone());
        let (edges, _) = ingest_into(open(&aug_path)?, EdgeListFormat::auto(), &mut drugs, &mut types)?;
        if drugs.len() != data.train.num_drugs() || types.len() != data.train.num_types() {
            return Err(Error::Validation(format!(
                "{} uses labels outside the training vocabulary",
                aug_path.display()
            )));
        }
        let augmented = InteractionGraph::new(drugs, types, edges)?;

        let nt = data.train.num_types();
        let reference = match self.cfg.metrics.reference {
            Reference::Uniform => Distribution::uniform(nt)?,
            Reference::Empirical => {
                let counts: Vec<usize> = (0..nt)
                    .map(|t| data.train.type_counts()[t] + data.valid.type_counts()[t] + data.test.type_counts()[t])
                    .collect();
                Distribution::from_counts(&counts)?
            }
        };
        let m = self.cfg.metrics.coverage_threshold;
        let rare = rare_types(data.train.type_counts());
        let mut rng = Rng::new(self.cfg.stage_seed(config::streams::NEGATIVES));
        let negatives = sample_non_edges(&[&data.train, &data.valid, &data.test], data.test.num_edges(), &mut rng)?;

        let base_latent = base.encode_mean(&data.train)?;
        let base_cls = evaluate_model(&base, &base_latent, &data.test, &negatives)?;
        let fin_latent = fin.encode_mean(&augmented)?;
        let fin_cls = evaluate_model(&fin, &fin_latent, &data.test, &negatives)?;
        let baseline = MetricReport::new("baseline", base_cls, data.train.type_counts(), &rare, &reference, m)?;
        let aug_report = MetricReport::new("augmented", fin_cls, augmented.type_counts(), &rare, &reference, m)?;
        let diversity = diversity_report(data.train.type_counts(), augmented.type_counts(), &reference, m)?;
        let eval = Evaluation {
            protocol: PROTOCOL,
            reference: self.cfg.metrics.reference,
            rare_types: rare.iter().map(|&t| data.train.types().label(t).to_string()).collect(),
            baseline,
            augmented: aug_report,
            diversity,
        };

        let json = serde_json::to_string_pretty(&eval).expect("report serialises");
        self.write(METRICS_JSON, json.as_bytes())?;
        let mut csv = format!("{}\n", MetricReport::CSV_HEADER);
        for r in [&eval.baseline, &eval.augmented] {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        self.write(METRICS_CSV, csv.as_bytes())?;
        let mut per = String::from("type,label,train_count,augmented_count,test_support,baseline_f1,augmented_f1,rare\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for t in 0..nt {
            let _ = writeln!(
                per,
                "{t},{},{},{},{},{},{},{}",
                data.train.types().label(t),
                data.train.type_counts()[t],
                augmented.type_counts()[t],
                eval.baseline.per_type[t].support,
                opt(eval.baseline.per_type[t].f1),
                opt(eval.augmented.per_type[t].f1),
                rare.contains(&t)
            );
        }
        self.write(PER_TYPE_CSV, per.as_bytes())?;
        let div = serde_json::to_string_pretty(&eval.diversity).expect("report serialises");
        self.write(DIVERSITY_JSON, div.as_bytes())?;
        let manifest = self.record_stage(
            "evaluate",
            started,
            &[METRICS_JSON, METRICS_CSV, PER_TYPE_CSV, DIVERSITY_JSON],
        )?;
        Ok((manifest, eval))
    }

    /// All three stages in order, stopping at the first failure.
    pub fn run_all(&self) -> Result<(RunManifest, Evaluation)> {
        self.pretrain()?;
        self.train_gfn()?;
        self.augment_retrain()
    }
}

fn synthetic_meta(s: &SyntheticSet) -> String {
    let v = serde_json::json!({
        "policy_id": s.policy_id,
        "requested": s.requested,
        "kept": s.kept,
        "samples_drawn": s.samples_drawn,
    });
    serde_json::to_string_pretty(&v).expect("metadata serialises")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::fixture::FixtureParams;

    fn tiny_run(dir: &Path, n_synthetic: usize) -> Pipeline {
        let p = FixtureParams {
            num_drugs: 12,
            num_types: 3,
            num_edges: 60,
            num_clusters: 3,
            ..Default::default()
        };
        write_fixture(&p, dir).unwrap();
        let mut cfg = PipelineConfig::parse(&fs::read_to_string(dir.join("config.toml")).unwrap()).unwrap();
        cfg.vgae.epochs = 20;
        cfg.vgae.learning_rate = 0.002;
        cfg.vgae.latent_dim = 4;
        cfg.vgae.hidden_dim = 8;
        cfg.gfn.epochs = 30;
        cfg.gfn.knn_k = 4;
        cfg.gfn.hidden_dim = 8;
        cfg.augment.n_synthetic = n_synthetic;
        cfg.resolve_paths(dir);
        Pipeline::new(cfg)
    }

    #[test]
    fn stages_need_their_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 5);
        assert!(matches!(p.train_gfn(), Err(Error::MissingPrerequisite(_))));
        p.pretrain().unwrap();
        assert!(matches!(p.augment_retrain(), Err(Error::MissingPrerequisite(m)) if m.contains("policy.ckpt")));
        assert!(matches!(p.evaluate(), Err(Error::MissingPrerequisite(_))));
    }

    #[test]
    fn run_all_lists_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 5);
        let (manifest, _) = p.run_all().unwrap();
        let listed = manifest.artifacts();
        for rel in [
            VGAE_CKPT,
            EMBEDDINGS,
            TRAIN_CURVE,
            POLICY_CKPT,
            TB_CURVE,
            SYNTHETIC,
            SYNTHETIC_META,
            AUGMENTED,
            FINAL_CKPT,
            FINAL_CURVE,
            METRICS_JSON,
            METRICS_CSV,
            PER_TYPE_CSV,
            DIVERSITY_JSON,
        ] {
            let bytes = fs::read(p.artifact(rel)).unwrap();
            assert_eq!(listed.get(rel).copied(), Some(sha256_hex(&bytes).as_str()), "{rel}");
        }
        assert_eq!(manifest.config_sha256, p.config_hash());
    }

    #[test]
    fn empty_augmentation_reproduces_the_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 0);
        let (_, eval) = p.run_all().unwrap();
        assert_eq!(
            fs::read(p.artifact(VGAE_CKPT)).unwrap(),
            fs::read(p.artifact(FINAL_CKPT)).unwrap()
        );
        let (b, a) = (&eval.baseline, &eval.augmented);
        assert_eq!((b.auroc, b.auprc, b.accuracy, b.macro_f1), (a.auroc, a.auprc, a.accuracy, a.macro_f1));
        assert_eq!(eval.diversity.se_before, eval.diversity.se_after);
    }

    #[test]
    fn rerunning_stage_three_alone_reproduces_it() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 5);
        p.run_all().unwrap();
        let rels = [SYNTHETIC, AUGMENTED, FINAL_CKPT, METRICS_JSON, PER_TYPE_CSV];
        let before: Vec<Vec<u8>> = rels.iter().map(|r| fs::read(p.artifact(r)).unwrap()).collect();
        fs::remove_dir_all(p.artifact("stage3")).unwrap();
        fs::remove_dir_all(p.artifact("reports")).unwrap();
        p.augment_retrain().unwrap();
        for (r, b) in rels.iter().zip(before) {
            assert_eq!(fs::read(p.artifact(r)).unwrap(), b, "{r}");
        }
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 5);
        fs::copy(dir.path().join("train.tsv"), dir.path().join("test.tsv")).unwrap();
        assert!(matches!(p.pretrain(), Err(Error::Validation(m)) if m.contains("also appears")));
    }

    #[test]
    fn labels_outside_the_sidecar_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 5);
        let mut text = fs::read_to_string(dir.path().join("valid.tsv")).unwrap();
        text.push_str("D00\tD01\tunknown_type\n");
        fs::write(dir.path().join("valid.tsv"), text).unwrap();
        assert!(matches!(p.pretrain(), Err(Error::Validation(m)) if m.contains("type vocabulary")));
    }

    #[test]
    fn config_hash_ignores_locations_but_not_settings() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny_run(dir.path(), 5);
        let mut moved = p.config().clone();
        moved.paths.out = PathBuf::from("/elsewhere");
        assert_eq!(Pipeline::new(moved).config_hash(), p.config_hash());
        let mut changed = p.config().clone();
        changed.reward.alpha = 2.0;
        assert_ne!(Pipeline::new(changed).config_hash(), p.config_hash());
    }
}
