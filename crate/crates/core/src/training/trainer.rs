use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::examples::{
    epoch_examples, prepare, stream_rng, Example, Prepared, WindowSpec, TAG_FUTURE, TAG_PAST,
    TAG_PREPARE,
};
use super::grad::{frozen_future, future_grad, joint_grad, past_grad, LossSums, Objective};
use super::optim::GroupAdam;
use crate::config::{Config, TrainMode};
use crate::encoder::{save_checkpoint, Arch, ModelParams, ParamGroup};
use crate::error::{Error, Result};
use crate::eval::{evaluate, inference_side, EvalTarget, MetricsReport};
use crate::numerics::{c, Real};
use crate::seqdata::{Dataset, SplitDataset};

/// Examples per gradient work unit. Chunks are summed in a fixed order, so
/// results do not depend on the number of workers.
pub const CHUNK: usize = 16;

const PHASE_FUTURE: u64 = 1;
const PHASE_PAST: u64 = 2;
const PHASE_JOINT: u64 = 3;

/// Mean per-example losses of one epoch. A loss the epoch did not compute
/// is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lp: Option<f64>,
    pub lf: Option<f64>,
    pub lg: Option<f64>,
    pub val_mrr: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from("epoch,L_p,L_f,L_g,val_MRR,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                e.epoch,
                f(e.lp),
                f(e.lf),
                f(e.lg),
                f(e.val_mrr),
                e.seconds
            );
        }
        out
    }

    /// Mean `L_p` over the last `n` epochs that logged it.
    pub fn tail_mean_lp(&self, n: usize) -> Option<f64> {
        let v: Vec<f64> = self.epochs.iter().filter_map(|e| e.lp).collect();
        if v.is_empty() {
            return None;
        }
        let tail = &v[v.len().saturating_sub(n)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Parameters, optimiser states and data of one training run.
pub struct Trainer<'a, T: Real> {
    pub cfg: Config,
    pub arch: Arch<T>,
    pub params: ModelParams<T>,
    train: &'a Dataset,
    exclude: Vec<HashSet<usize>>,
    adam_future: GroupAdam<T>,
    adam_past: GroupAdam<T>,
    adam_joint: GroupAdam<T>,
    /// Completed epochs.
    pub epoch: usize,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(cfg: &Config, train: &'a Dataset) -> Result<Self> {
        for w in cfg.validate()? {
            log::warn!("{w}");
        }
        let arch = Arch::new(&cfg.model)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let params = ModelParams::init(&cfg.model, train.num_items, &mut rng);
        Ok(Self::with_params(cfg, train, arch, params))
    }

    pub fn with_params(
        cfg: &Config,
        train: &'a Dataset,
        arch: Arch<T>,
        params: ModelParams<T>,
    ) -> Self {
        use ParamGroup::*;
        let t = &cfg.train;
        Trainer {
            adam_future: GroupAdam::new(&params, &[Shared, Future], t.lr1),
            adam_past: GroupAdam::new(&params, &[Shared, Past], t.lr2),
            adam_joint: GroupAdam::new(&params, &[Shared, Past, Future], t.lr2),
            exclude: train
                .sequences
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            cfg: cfg.clone(),
            arch,
            params,
            train,
            epoch: 0,
        }
    }

    fn spec(&self) -> WindowSpec {
        WindowSpec {
            len: self.cfg.model.max_len,
            horizon: self.cfg.model.horizon,
            r2l: self.cfg.train.r2l,
        }
    }

    pub fn objective(&self) -> Objective {
        Objective {
            future_weight: self.cfg.train.future_weight,
            beta: self.cfg.effective_beta(),
            guiding: self.cfg.guiding.clone(),
            horizon: self.cfg.model.horizon,
        }
    }

    /// Examples of one chunk with their windows and negatives. The same
    /// chunk gets the same negatives in every phase of an epoch.
    pub fn prepare_chunk(
        &self,
        epoch: usize,
        batch: usize,
        chunk: usize,
        ex: &[Example],
    ) -> Result<Vec<Prepared>> {
        let mut rng = stream_rng(
            self.cfg.train.seed,
            &[TAG_PREPARE, epoch as u64, batch as u64, chunk as u64],
        );
        let n = self.train.num_items;
        ex.iter()
            .map(|e| {
                prepare(
                    &self.train.sequences[e.user],
                    *e,
                    self.spec(),
                    &self.exclude[e.user],
                    n,
                    &mut rng,
                )
            })
            .collect()
    }

    fn chunk_rng(
        &self,
        tag: u64,
        phase: u64,
        epoch: usize,
        batch: usize,
        chunk: usize,
    ) -> ChaCha8Rng {
        stream_rng(
            self.cfg.train.seed,
            &[tag, phase, epoch as u64, batch as u64, chunk as u64],
        )
    }

    /// Mean gradient of a batch, built from fixed-size chunks.
    fn batch_grad<F>(
        &self,
        epoch: usize,
        batch: usize,
        ex: &[Example],
        f: F,
    ) -> Result<(LossSums, ModelParams<T>)>
    where
        F: Fn(usize, &[Prepared]) -> Result<(LossSums, ModelParams<T>)> + Sync,
    {
        let parts: Vec<Result<(LossSums, ModelParams<T>)>> = ex
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(k, c)| f(k, &self.prepare_chunk(epoch, batch, k, c)?))
            .collect();
        let mut sums = LossSums::default();
        let mut grads: Option<ModelParams<T>> = None;
        for p in parts {
            let (s, g) = p?;
            sums.add(&s);
            match grads.as_mut() {
                Some(acc) => acc.add_assign(&g),
                None => grads = Some(g),
            }
        }
        let mut grads = grads.unwrap_or_else(|| self.params.zeros_like());
        grads.scale(c::<T>(1.0 / ex.len().max(1) as f64));
        Ok((sums, grads))
    }

    /// Non-finite losses, and numeric failures inside a batch, become a
    /// divergence error naming the batch.
    fn check(
        res: Result<(LossSums, ModelParams<T>)>,
        epoch: usize,
        what: &str,
        batch: usize,
    ) -> Result<(LossSums, ModelParams<T>)> {
        let (sums, grads) = match res {
            Err(Error::Numeric(msg)) => {
                return Err(Error::Diverged(format!(
                    "epoch {}, {what} batch {batch}: {msg}",
                    epoch + 1
                )))
            }
            r => r?,
        };
        if sums.is_finite() {
            Ok((sums, grads))
        } else {
            Err(Error::Diverged(format!(
                "epoch {}, {what} batch {batch}: non-finite loss (L_p {}, L_f {}, L_g {})",
                epoch + 1,
                sums.lp,
                sums.lf,
                sums.lg
            )))
        }
    }

    /// One full pass of `L_f` updating the future encoder and the shared
    /// embeddings with the first learning rate.
    pub fn future_phase(&mut self, epoch: usize, examples: &[Example]) -> Result<LossSums> {
        let mut total = LossSums::default();
        let dropout_on = self.cfg.model.dropout > 0.0;
        for (b, ex) in examples.chunks(self.cfg.train.batch).enumerate() {
            let res = self.batch_grad(epoch, b, ex, |k, prep| {
                let mut rng = self.chunk_rng(TAG_FUTURE, PHASE_FUTURE, epoch, b, k);
                future_grad(&self.arch, &self.params, prep, &mut rng, dropout_on)
            });
            let (sums, grads) = Self::check(res, epoch, "future-phase", b)?;
            self.adam_future.step(&mut self.params, &grads)?;
            total.add(&sums);
        }
        Ok(total)
    }

    /// One full pass of `L_p + beta L_g` updating the past encoder and the
    /// shared embeddings. The guiding targets come from a snapshot of the
    /// parameters taken when the phase starts, run without dropout.
    pub fn past_phase(&mut self, epoch: usize, examples: &[Example]) -> Result<LossSums> {
        let obj = self.objective();
        let frozen = (obj.beta > 0.0).then(|| self.params.clone());
        let mut total = LossSums::default();
        let dropout_on = self.cfg.model.dropout > 0.0;
        for (b, ex) in examples.chunks(self.cfg.train.batch).enumerate() {
            let res = self.batch_grad(epoch, b, ex, |k, prep| {
                let r = match &frozen {
                    Some(f) => Some(frozen_future(&self.arch, f, prep)?),
                    None => None,
                };
                let mut rng = self.chunk_rng(TAG_PAST, PHASE_PAST, epoch, b, k);
                past_grad(
                    &self.arch,
                    &self.params,
                    r.as_ref(),
                    prep,
                    &obj,
                    &mut rng,
                    dropout_on,
                )
            });
            let (sums, grads) = Self::check(res, epoch, "past-phase", b)?;
            self.adam_past.step(&mut self.params, &grads)?;
            total.add(&sums);
        }
        Ok(total)
    }

    pub fn joint_pass(&mut self, epoch: usize, examples: &[Example]) -> Result<LossSums> {
        let obj = self.objective();
        let mut total = LossSums::default();
        let dropout_on = self.cfg.model.dropout > 0.0;
        for (b, ex) in examples.chunks(self.cfg.train.batch).enumerate() {
            let res = self.batch_grad(epoch, b, ex, |k, prep| {
                let mut rp = self.chunk_rng(TAG_PAST, PHASE_PAST, epoch, b, k);
                let mut rf = self.chunk_rng(TAG_FUTURE, PHASE_JOINT, epoch, b, k);
                joint_grad(
                    &self.arch,
                    &self.params,
                    prep,
                    &obj,
                    &mut rp,
                    &mut rf,
                    dropout_on,
                )
            });
            let (sums, grads) = Self::check(res, epoch, "joint", b)?;
            self.adam_joint.step(&mut self.params, &grads)?;
            total.add(&sums);
        }
        Ok(total)
    }

    /// Phase 1 then phase 2 over the same examples. With `no_future` only
    /// phase 2 runs (and `beta` is 0); with `future_only` only phase 1.
    pub fn two_phase_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let epoch = self.epoch;
        let examples = epoch_examples(self.train, &self.cfg.train, epoch);
        let t = self.cfg.train.clone();
        let mean = |s: &LossSums, v: f64| v / s.examples.max(1) as f64;
        let mut log = EpochLog {
            epoch: epoch + 1,
            lp: None,
            lf: None,
            lg: None,
            val_mrr: None,
            seconds: 0.0,
        };
        if !t.no_future {
            let s = self.future_phase(epoch, &examples)?;
            log.lf = Some(mean(&s, s.lf));
        }
        if !t.future_only {
            let s = self.past_phase(epoch, &examples)?;
            log.lp = Some(mean(&s, s.lp));
            if !t.no_future {
                log.lg = Some(mean(&s, s.lg));
            }
        }
        self.epoch += 1;
        log.seconds = start.elapsed().as_secs_f64();
        Ok(log)
    }

    pub fn joint_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let epoch = self.epoch;
        let examples = epoch_examples(self.train, &self.cfg.train, epoch);
        let s = self.joint_pass(epoch, &examples)?;
        let n = s.examples.max(1) as f64;
        self.epoch += 1;
        Ok(EpochLog {
            epoch: epoch + 1,
            lp: Some(s.lp / n),
            lf: Some(s.lf / n),
            lg: Some(s.lg / n),
            val_mrr: None,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let t = &self.cfg.train;
        if t.mode == TrainMode::Joint && !t.no_future && !t.future_only {
            self.joint_epoch()
        } else {
            self.two_phase_epoch()
        }
    }

    pub fn validate(&self, split: &SplitDataset) -> Result<MetricsReport> {
        evaluate(
            &self.arch,
            &self.params,
            inference_side(&self.cfg.train),
            split,
            EvalTarget::Valid,
            self.cfg.eval.protocol,
            self.cfg.eval.seed,
        )
    }
}

/// Result of [`train`]: the parameters of the best validated epoch.
pub struct TrainOutcome<T: Real> {
    pub params: ModelParams<T>,
    pub arch: Arch<T>,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub valid: MetricsReport,
    pub stopped_early: bool,
}

/// Runs up to `train.epochs` epochs with validation every `eval_every`
/// epochs and early stopping on validation MRR.
pub fn train<T: Real>(split: &SplitDataset, cfg: &Config) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::<T>::new(cfg, &split.train)?;
    let t = &cfg.train;
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ModelParams<T>, MetricsReport)> = None;
    let mut stopped_early = false;
    for e in 0..t.epochs {
        let mut rec = trainer.run_epoch()?;
        let last = e + 1 == t.epochs;
        if (e + 1) % t.eval_every == 0 || last {
            let m = trainer.validate(split)?;
            rec.val_mrr = Some(m.mrr);
            if best.as_ref().is_none_or(|b| m.mrr > b.0) {
                best = Some((m.mrr, e + 1, trainer.params.clone(), m));
            }
        }
        log::info!(
            "epoch {:>3}  L_p {}  L_f {}  L_g {}  val MRR {}  ({:.1}s)",
            rec.epoch,
            fmt_opt(rec.lp),
            fmt_opt(rec.lf),
            fmt_opt(rec.lg),
            fmt_opt(rec.val_mrr),
            rec.seconds
        );
        log.epochs.push(rec);
        if let Some(b) = &best {
            if t.patience > 0 && e + 1 - b.1 >= t.patience {
                log::info!(
                    "no validation improvement for {} epochs, stopping",
                    t.patience
                );
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, params, valid) = best.expect("the last epoch is always validated");
    Ok(TrainOutcome {
        params,
        arch: trainer.arch,
        log,
        best_epoch,
        valid,
        stopped_early,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// `metrics.json` written next to a checkpoint.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics<'a> {
    pub split: &'a str,
    pub best_epoch: Option<usize>,
    #[serde(flatten)]
    pub metrics: &'a MetricsReport,
    pub config: &'a Config,
}

/// Writes `checkpoint.bin`, `manifest.json`, `trainlog.csv` and
/// `metrics.json` (validation metrics of the kept epoch) into `dir`.
pub fn save_run<T: Real>(dir: &Path, outcome: &TrainOutcome<T>, cfg: &Config) -> Result<PathBuf> {
    let ckpt = save_checkpoint(dir, &outcome.params, cfg)?;
    let p = dir.join("trainlog.csv");
    fs::write(&p, outcome.log.to_csv()).map_err(|e| Error::io(&p, e))?;
    let m = RunMetrics {
        split: "valid",
        best_epoch: Some(outcome.best_epoch),
        metrics: &outcome.valid,
        config: cfg,
    };
    let p = dir.join("metrics.json");
    fs::write(&p, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&p, e))?;
    Ok(ckpt)
}
