//! Subcommands. Each one reads its inputs from the artifact directory, checks
//! the input digests those artifacts recorded, and writes its outputs next to
//! them with the digests of what it consumed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use unlearn_core::certify::{check_kkt, forget_gain_report, ForgetBudget};
use unlearn_core::container::{
    read_dataset, read_fisher, read_model_with, read_pvec_with, write_dataset, write_fisher, write_json,
    write_model_with, write_pvec_with,
};
use unlearn_core::curvature::hessian_estimators;
use unlearn_core::evalx::{csv_rows, evaluate, gold_standard, EvalSets, CSV_HEADER};
use unlearn_core::masking::MaskArtifact;
use unlearn_core::obs::{apply_unlearn, compensation_solvers, group_obs_solve, mask_only, CompensationMeta, CompensationResult};
use unlearn_core::toymodel::{personalize, train_sgd, Dataset, MlpModel, SynthTask};
use unlearn_core::zkp::{
    constraint_report, default_t_int, encode_fixed_witness, mock_prove, proof_backends, residual_extremes,
    witness_digests, Blindings, CertificateCircuit, CommitRandomness, Proof, PublicInputs,
};
use unlearn_core::zkp::witness::upper_len;
use unlearn_core::{Error, Result};

use crate::pipeline::{client_fisher, provider_mask, PipelineConfig};

pub const CONFIG: &str = "config.json";
pub const TRAIN: &str = "train.dset";
pub const FORGET: &str = "forget.dset";
pub const RETAIN: &str = "retain.dset";
pub const PERSONAL: &str = "personal.dset";
pub const PERSONAL_TEST: &str = "personal_test.dset";
pub const FORGET_HOLDOUT: &str = "forget_holdout.dset";
pub const INIT: &str = "init.pvec";
pub const THETA_0: &str = "theta_0.pvec";
pub const THETA_P: &str = "theta_p.pvec";
pub const FISHER: &str = "fisher.pvec";
pub const MASK: &str = "mask.json";
pub const DELTA: &str = "delta_w.pvec";
pub const THETA_U: &str = "theta_u.pvec";
pub const CERTIFICATE: &str = "certificate.json";
pub const BOUNDS: &str = "bounds.json";
pub const CONSTRAINTS: &str = "constraints.json";
pub const PUBLIC: &str = "public.json";
pub const PROOF: &str = "proof.prf";
pub const GOLD: &str = "gold.pvec";
pub const EVALUATION: &str = "evaluation.json";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const DIGESTS: &str = "digests.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Personalize,
    Fisher,
    Mask,
    Unlearn,
    Certify,
    ReportBounds,
    Prove,
    Verify,
    Gold,
    Evaluate,
    Demo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Personalize => "personalize",
            Command::Fisher => "fisher",
            Command::Mask => "mask",
            Command::Unlearn => "unlearn",
            Command::Certify => "certify",
            Command::ReportBounds => "report-bounds",
            Command::Prove => "prove",
            Command::Verify => "verify",
            Command::Gold => "gold",
            Command::Evaluate => "evaluate",
            Command::Demo => "demo",
        }
    }
}

/// Result of a subcommand: a machine-readable summary and the verdict.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub pass: bool,
    pub summary: Value,
}

impl Outcome {
    fn ok(command: Command, summary: Value) -> Self {
        Outcome { command: command.name(), pass: true, summary }
    }
}

pub fn run(cmd: Command, cfg: &PipelineConfig) -> Result<Outcome> {
    let ctx = Ctx::new(cfg)?;
    match cmd {
        Command::Train => ctx.train(),
        Command::Personalize => ctx.personalize(),
        Command::Fisher => ctx.fisher(),
        Command::Mask => ctx.mask(),
        Command::Unlearn => ctx.unlearn(),
        Command::Certify => ctx.certify(),
        Command::ReportBounds => ctx.report_bounds(),
        Command::Prove => ctx.prove(),
        Command::Verify => ctx.verify(),
        Command::Gold => ctx.gold(),
        Command::Evaluate => ctx.evaluate(),
        Command::Demo => ctx.demo(),
    }
}

fn producer(name: &str) -> &'static str {
    match name {
        THETA_P => "personalize",
        FISHER => "fisher",
        MASK => "mask",
        DELTA | THETA_U => "unlearn",
        PUBLIC | PROOF => "prove",
        GOLD => "gold",
        _ => "train",
    }
}

/// SHA-256 over an artifact's manifest and, for models, its architecture sidecar.
pub fn artifact_digest(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    let mut h = Sha256::new();
    h.update(fs::read(&path)?);
    let arch = dir.join(format!("{name}.arch.json"));
    if arch.exists() {
        h.update(fs::read(arch)?);
    }
    Ok(hex::encode(h.finalize()))
}

type Inputs = BTreeMap<String, String>;

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    dir: PathBuf,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a PipelineConfig) -> Result<Self> {
        Ok(Ctx { cfg, dir: cfg.out_dir.clone() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Every input must exist before any work starts.
    fn require(&self, names: &[&str]) -> Result<Inputs> {
        for name in names {
            if !self.path(name).exists() {
                return Err(Error::Invalid(format!(
                    "missing input artifact {}; run `{}` first",
                    self.path(name).display(),
                    producer(name)
                )));
            }
        }
        names.iter().map(|n| Ok((n.to_string(), artifact_digest(&self.dir, n)?))).collect()
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        Ok(())
    }

    /// Compares the digests an artifact recorded for its inputs with the files on disk.
    fn check_recorded(&self, artifact: &str, extra: &Map<String, Value>, skip_missing: bool) -> Result<()> {
        let Some(recorded) = extra.get("inputs") else {
            return Ok(());
        };
        let recorded: Inputs = serde_json::from_value(recorded.clone())?;
        for (name, expected) in recorded {
            if skip_missing && !self.path(&name).exists() {
                continue;
            }
            let found = artifact_digest(&self.dir, &name)?;
            if found != expected {
                return Err(Error::DigestMismatch { what: format!("{name} as recorded by {artifact}"), expected, found });
            }
        }
        Ok(())
    }

    fn model(&self, name: &str) -> Result<MlpModel> {
        let (m, extra) = read_model_with(&self.path(name))?;
        self.check_recorded(name, &extra, false)?;
        Ok(m)
    }

    fn dataset(&self, name: &str) -> Result<Dataset> {
        read_dataset(&self.path(name))
    }

    fn mask_artifact(&self, skip_missing: bool) -> Result<MaskArtifact> {
        let text = fs::read_to_string(self.path(MASK))?;
        let mask = MaskArtifact::from_json(&text)?;
        let value: Map<String, Value> = serde_json::from_str(&text)?;
        self.check_recorded(MASK, &value, skip_missing)?;
        Ok(mask)
    }

    fn compensation(&self) -> Result<CompensationResult> {
        let (delta_w, extra) = read_pvec_with(&self.path(DELTA))?;
        self.check_recorded(DELTA, &extra, false)?;
        let meta = extra
            .get("compensation")
            .ok_or_else(|| Error::Format { path: self.path(DELTA), reason: "missing `compensation` metadata".into() })?;
        let CompensationMeta { lambda_m, method, kkt_residual_inf } = serde_json::from_value(meta.clone())?;
        Ok(CompensationResult { delta_w, lambda_m, method, kkt_residual_inf })
    }

    fn with_inputs(inputs: &Inputs) -> Map<String, Value> {
        let mut extra = Map::new();
        extra.insert("inputs".into(), serde_json::to_value(inputs).unwrap());
        extra
    }

    fn train(&self) -> Result<Outcome> {
        self.ensure_dir()?;
        let cfg = self.cfg;
        let task = SynthTask::generate(&cfg.synth, cfg.seed)?;
        for (name, data) in [
            (TRAIN, &task.train),
            (FORGET, &task.forget),
            (RETAIN, &task.retain),
            (PERSONAL, &task.personal),
            (PERSONAL_TEST, &task.personal_test),
            (FORGET_HOLDOUT, &task.forget_holdout),
        ] {
            write_dataset(&self.path(name), data)?;
        }
        write_json(&self.path(CONFIG), cfg)?;
        let init = MlpModel::init(&cfg.layer_dims(), cfg.init_seed())?;
        let mut extra = Map::new();
        extra.insert("seed".into(), json!(cfg.init_seed()));
        write_model_with(&self.path(INIT), &init, extra)?;
        let inputs = self.require(&[TRAIN, INIT])?;
        let trained = train_sgd(&init, &task.train, &cfg.stage("pretrain"))?;
        write_model_with(&self.path(THETA_0), &trained.model, Self::with_inputs(&inputs))?;
        Ok(Outcome::ok(
            Command::Train,
            json!({
                "params": init.params().len(),
                "train_examples": task.train.len(),
                "final_loss": trained.loss_trace.last(),
                "test_accuracy": trained.model.accuracy(&task.test)?,
            }),
        ))
    }

    fn personalize(&self) -> Result<Outcome> {
        let inputs = self.require(&[THETA_0, PERSONAL, PERSONAL_TEST])?;
        let theta_0 = self.model(THETA_0)?;
        let personal = self.dataset(PERSONAL)?;
        let test = self.dataset(PERSONAL_TEST)?;
        let out = personalize(&theta_0, &personal, &self.cfg.stage("personalize"))?;
        let mut inputs = inputs;
        inputs.remove(PERSONAL_TEST);
        write_model_with(&self.path(THETA_P), &out.model, Self::with_inputs(&inputs))?;
        Ok(Outcome::ok(
            Command::Personalize,
            json!({
                "accuracy_before": theta_0.accuracy(&test)?,
                "accuracy_after": out.model.accuracy(&test)?,
                "drift": out.drift,
            }),
        ))
    }

    fn fisher(&self) -> Result<Outcome> {
        let inputs = self.require(&[THETA_P, PERSONAL])?;
        let theta_p = self.model(THETA_P)?;
        let c = client_fisher(self.cfg, &theta_p, &self.dataset(PERSONAL)?)?;
        write_fisher(&self.path(FISHER), &c, Self::with_inputs(&inputs))?;
        let min_eig = c.fisher.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        Ok(Outcome::ok(
            Command::Fisher,
            json!({
                "blocks": c.layout().blocks().iter().map(|b| b.size).collect::<Vec<_>>(),
                "samples": c.n,
                "lambda": c.lambda,
                "min_eigenvalue": min_eig,
            }),
        ))
    }

    fn mask(&self) -> Result<Outcome> {
        let inputs = self.require(&[THETA_0, FORGET])?;
        let theta_0 = self.model(THETA_0)?;
        let mask = provider_mask(self.cfg, &theta_0, &self.dataset(FORGET)?)?;
        let mut file: Map<String, Value> = serde_json::from_str(&mask.to_json()?)?;
        file.insert("curvature_proxy".into(), json!(self.cfg.curvature_proxy));
        file.insert("inputs".into(), serde_json::to_value(&inputs)?);
        write_json(&self.path(MASK), &file)?;
        Ok(Outcome::ok(
            Command::Mask,
            json!({ "d": mask.d(), "k": mask.k(), "eligible": mask.eligible().len(), "digest": mask.digest_hex() }),
        ))
    }

    fn unlearn(&self) -> Result<Outcome> {
        let inputs = self.require(&[THETA_P, FISHER, MASK])?;
        let theta_p = self.model(THETA_P)?;
        let (c, extra) = read_fisher(&self.path(FISHER))?;
        self.check_recorded(FISHER, &extra, false)?;
        let mask = self.mask_artifact(false)?;
        let solver = compensation_solvers().get(&self.cfg.solver)?;
        let comp = group_obs_solve(&c, theta_p.params(), &mask, solver.as_ref())?;
        let out = apply_unlearn(theta_p.params(), &comp, &mask)?;

        let mut extra = Self::with_inputs(&inputs);
        extra.insert("compensation".into(), serde_json::to_value(comp.meta())?);
        write_pvec_with(&self.path(DELTA), &comp.delta_w, extra)?;
        let mut inputs = inputs;
        inputs.insert(DELTA.into(), artifact_digest(&self.dir, DELTA)?);
        let theta_u = theta_p.with_params(out.theta_u)?;
        write_model_with(&self.path(THETA_U), &theta_u, Self::with_inputs(&inputs))?;
        let zeroed = mask.support().as_slice().iter().filter(|&&i| theta_u.params().values()[i].to_bits() == 0).count();
        Ok(Outcome::ok(
            Command::Unlearn,
            json!({
                "k": mask.k(),
                "method": comp.method,
                "kkt_residual_inf": comp.kkt_residual_inf,
                "masked_exact_zero": zeroed,
                "update_norm": comp.delta_w.norm2(),
            }),
        ))
    }

    /// Loads the unlearning artifacts, refusing any whose recorded inputs changed.
    fn unlearned_bundle(&self) -> Result<(Inputs, MlpModel, MlpModel, CompensationResult, MaskArtifact)> {
        let inputs = self.require(&[THETA_P, THETA_U, DELTA, FISHER, MASK])?;
        let theta_p = self.model(THETA_P)?;
        let theta_u = self.model(THETA_U)?;
        let comp = self.compensation()?;
        let mask = self.mask_artifact(false)?;
        Ok((inputs, theta_p, theta_u, comp, mask))
    }

    fn certify(&self) -> Result<Outcome> {
        let (inputs, theta_p, theta_u, comp, mask) = self.unlearned_bundle()?;
        let (c, extra) = read_fisher(&self.path(FISHER))?;
        self.check_recorded(FISHER, &extra, false)?;
        let cert = check_kkt(theta_p.params(), theta_u.params(), &comp, &c, &mask, self.cfg.kkt_tol)?;
        let masked_nonzero = mask.support().as_slice().iter().filter(|&&i| theta_u.params().values()[i] != 0.0).count();
        let pass = cert.pass && masked_nonzero == 0;
        let record = json!({
            "certificate": cert,
            "masked_nonzero": masked_nonzero,
            "mask_digest": mask.digest_hex(),
            "pass": pass,
            "inputs": inputs,
        });
        write_json(&self.path(CERTIFICATE), &record)?;
        Ok(Outcome { command: Command::Certify.name(), pass, summary: record })
    }

    fn forget_budget(&self, hessian: &str) -> Result<(Inputs, ForgetBudget)> {
        let (mut inputs, theta_p, theta_u, comp, mask) = self.unlearned_bundle()?;
        inputs.extend(self.require(&[FORGET])?);
        let hessian = hessian_estimators().get(hessian)?;
        let budget = forget_gain_report(
            &theta_p,
            &theta_u,
            &mask,
            &comp,
            &self.dataset(FORGET)?,
            self.cfg.q_damping,
            hessian.as_ref(),
        )?;
        Ok((inputs, budget))
    }

    fn report_bounds(&self) -> Result<Outcome> {
        let (inputs, budget) = self.forget_budget(&self.cfg.hessian)?;
        write_json(&self.path(BOUNDS), &json!({ "budget": budget, "inputs": inputs }))?;
        Ok(Outcome::ok(Command::ReportBounds, json!(budget)))
    }

    /// Demo variant: an indefinite exact Hessian is recorded rather than fatal,
    /// and the Gauss-Newton surrogate (PSD by construction) is reported beside it.
    fn report_bounds_or_surrogate(&self) -> Result<Outcome> {
        match self.report_bounds() {
            Err(e) if e.is_numeric() => {
                let (inputs, surrogate) = self.forget_budget("gauss-newton")?;
                let record = json!({
                    "error": e.to_string(),
                    "hessian": self.cfg.hessian,
                    "surrogate": surrogate,
                    "inputs": inputs,
                });
                write_json(&self.path(BOUNDS), &record)?;
                Ok(Outcome::ok(Command::ReportBounds, json!({ "error": e.to_string(), "surrogate": surrogate })))
            }
            other => other,
        }
    }

    fn prove(&self) -> Result<Outcome> {
        let (inputs, theta_p, theta_u, comp, mask) = self.unlearned_bundle()?;
        let (c, extra) = read_fisher(&self.path(FISHER))?;
        self.check_recorded(FISHER, &extra, false)?;
        let params = self.cfg.fixed_params();
        let w = encode_fixed_witness(
            theta_p.params(),
            theta_u.params(),
            &comp.delta_w,
            &comp.lambda_m,
            &c,
            &mask,
            &params,
        )?;
        let t_int = self.cfg.t_int.unwrap_or_else(|| default_t_int(c.layout().max_block_size(), &params));
        let blind = Blindings::expand(&CommitRandomness::from_seed(self.cfg.commit_seed()), w.theta_p.len(), upper_len(&w.layout));
        let digests = witness_digests(&w, &blind);
        let circuit = CertificateCircuit::synthesize(&w, &blind, &mask, t_int, digests)?;
        let report = constraint_report(&circuit);
        let (outside_max, masked_max) = residual_extremes(&w);
        write_json(&self.path(CONSTRAINTS), &json!({ "constraints": report, "inputs": inputs }))?;

        let verdict = mock_prove(&circuit);
        if let Some(v) = verdict.violation() {
            return Err(Error::Unsatisfied(format!("{} gate {} (row {}, {}): {}", v.family.name(), v.gate, v.row, v.what, v.detail)));
        }
        let public = PublicInputs::for_circuit(&circuit);
        let backend = proof_backends().get(&self.cfg.backend)?;
        let proof = backend.prove(&circuit, &public)?;
        fs::write(self.path(PROOF), proof.to_bytes())?;
        write_json(&self.path(PUBLIC), &PublicRecord { statement: public, inputs })?;
        Ok(Outcome::ok(
            Command::Prove,
            json!({
                "backend": proof.backend,
                "constraints": report.total,
                "t_int": t_int.to_string(),
                "residual_outside_max": outside_max.to_string(),
                "residual_masked_max": masked_max.to_string(),
                "lambda_shift": w.lambda_shift,
            }),
        ))
    }

    fn verify(&self) -> Result<Outcome> {
        self.require(&[PROOF, PUBLIC, MASK])?;
        let record: PublicRecord = unlearn_core::container::read_json(&self.path(PUBLIC))?;
        // the verifier may lack the client's private artifacts; check whatever is present
        self.check_recorded(PUBLIC, &record.inputs_map(), true)?;
        let mask = self.mask_artifact(true)?;
        if mask.digest() != record.statement.mask_digest {
            return Err(Error::DigestMismatch {
                what: "mask in the public statement".into(),
                expected: mask.digest_hex(),
                found: unlearn_core::zkp::field::fe_hex(&record.statement.mask_digest),
            });
        }
        let backend = proof_backends().get(&self.cfg.backend)?;
        let raw = fs::read(self.path(PROOF))?;
        let (pass, reason) = match Proof::from_bytes(&raw) {
            Ok(proof) if proof.backend != backend.name() => (false, format!("proof was made by backend `{}`", proof.backend)),
            Ok(proof) => {
                let ok = backend.verify(&proof, &record.statement);
                (ok, if ok { "accepted".to_string() } else { "rejected by backend".to_string() })
            }
            Err(e) => (false, e.to_string()),
        };
        Ok(Outcome { command: Command::Verify.name(), pass, summary: json!({ "backend": backend.name(), "result": reason }) })
    }

    fn gold(&self) -> Result<Outcome> {
        let inputs = self.require(&[INIT, RETAIN, PERSONAL])?;
        let init = self.model(INIT)?;
        let gold = gold_standard(
            &init,
            &self.dataset(RETAIN)?,
            &self.dataset(PERSONAL)?,
            &self.cfg.stage("retrain"),
            &self.cfg.stage("personalize"),
        )?;
        write_model_with(&self.path(GOLD), &gold, Self::with_inputs(&inputs))?;
        Ok(Outcome::ok(Command::Gold, json!({ "forget_accuracy": gold.accuracy(&self.dataset(FORGET)?)? })))
    }

    fn evaluate(&self) -> Result<Outcome> {
        let inputs = self.require(&[THETA_P, THETA_U, MASK, GOLD, FORGET, PERSONAL, PERSONAL_TEST, FORGET_HOLDOUT])?;
        let theta_p = self.model(THETA_P)?;
        let theta_u = self.model(THETA_U)?;
        let mask = self.mask_artifact(false)?;
        let gold = self.model(GOLD)?;
        let masked = theta_p.with_params(mask_only(theta_p.params(), &mask)?)?;
        let (forget, personal, personal_test, forget_holdout) = (
            self.dataset(FORGET)?,
            self.dataset(PERSONAL)?,
            self.dataset(PERSONAL_TEST)?,
            self.dataset(FORGET_HOLDOUT)?,
        );
        let sets = EvalSets { forget: &forget, personal: &personal, personal_test: &personal_test, forget_holdout: &forget_holdout };
        let seed = self.cfg.eval_seed();
        let reports = [("personalized", &theta_p), ("unlearned", &theta_u), ("mask-only", &masked), ("reference", &gold)]
            .into_iter()
            .map(|(label, m)| evaluate(label, m, &gold, sets, seed))
            .collect::<Result<Vec<_>>>()?;
        write_json(&self.path(EVALUATION), &json!({ "reports": reports, "inputs": inputs }))?;
        fs::write(self.path(EVALUATION_CSV), format!("{CSV_HEADER}\n{}", csv_rows(&reports)))?;
        Ok(Outcome::ok(Command::Evaluate, json!(reports)))
    }

    fn demo(&self) -> Result<Outcome> {
        let mut steps = Map::new();
        let mut pass = true;
        for cmd in [
            Command::Train,
            Command::Personalize,
            Command::Fisher,
            Command::Mask,
            Command::Unlearn,
            Command::Certify,
            Command::ReportBounds,
            Command::Prove,
            Command::Verify,
            Command::Gold,
            Command::Evaluate,
        ] {
            let out = if cmd == Command::ReportBounds { self.report_bounds_or_surrogate()? } else { run(cmd, self.cfg)? };
            pass &= out.pass;
            steps.insert(cmd.name().into(), json!({ "pass": out.pass, "summary": out.summary }));
        }
        let digests = directory_digests(&self.dir)?;
        write_json(&self.path(DIGESTS), &digests)?;
        steps.insert("artifacts".into(), json!(digests.len()));
        Ok(Outcome { command: Command::Demo.name(), pass, summary: Value::Object(steps) })
    }
}

#[derive(Serialize, Deserialize)]
struct PublicRecord {
    statement: PublicInputs,
    inputs: Inputs,
}

impl PublicRecord {
    fn inputs_map(&self) -> Map<String, Value> {
        Ctx::with_inputs(&self.inputs)
    }
}

/// SHA-256 of every regular file in `dir` except the digest list itself, by file name.
pub fn directory_digests(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name != DIGESTS {
            out.insert(name, hex::encode(Sha256::digest(fs::read(entry.path())?)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_digest_covers_the_architecture() {
        let dir = tempfile::tempdir().unwrap();
        let m = MlpModel::init(&[2, 3, 2], 1).unwrap();
        write_model_with(&dir.path().join("m.pvec"), &m, Map::new()).unwrap();
        let before = artifact_digest(dir.path(), "m.pvec").unwrap();
        fs::write(dir.path().join("m.pvec.arch.json"), "{}").unwrap();
        assert_ne!(artifact_digest(dir.path(), "m.pvec").unwrap(), before);
    }

    #[test]
    fn missing_inputs_name_their_producer() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { out_dir: dir.path().into(), ..Default::default() };
        let err = run(Command::Unlearn, &cfg).unwrap_err();
        assert!(err.to_string().contains("run `personalize` first"), "{err}");
        assert_eq!(producer(PROOF), "prove");
        assert_eq!(producer(FORGET), "train");
    }
}
