//! Alternating critic/generator optimization of the reconstruction network
//! on unpaired data, plus the supervised trainer used for comparison.
//!
//! One outer step runs `critic_steps` Adam updates of the critic followed
//! by a single Adam update of the generator. Every random draw (batch
//! selection and gradient-penalty mixing) comes from a stream derived from
//! the master seed and the step index, so a run resumed from a checkpoint
//! reproduces the trajectory of an uninterrupted run exactly — no RNG
//! state needs to be saved.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use crate::adam::{Adam, AdamConfig};
use crate::critic::{self, CriticParams};
use crate::data::{Dataset, Mode};
use crate::error::{Error, Result};
use crate::lpd::{self, LpdConfig, LpdVars, ReconNetParams};
use crate::metrics;
use crate::nn;
use crate::seeds;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use crate::tomo::RadonTransform;

/// Hyperparameters of the alternating optimization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the image-domain consistency penalty.
    pub lambda_x: f64,
    /// Weight of the measurement-domain consistency penalty.
    pub lambda_y: f64,
    /// Weight of the critic gradient penalty.
    pub lambda_gp: f64,
    /// Adam hyperparameters, shared by both networks.
    pub adam: AdamConfig,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    /// Mini-batch size.
    pub batch_size: usize,
    /// Generator steps to run in total.
    pub total_steps: u64,
    /// Validation/checkpoint cadence, in generator steps.
    pub eval_every: u64,
    /// Master seed for batch selection and mixing coefficients.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_x: 10.0,
            lambda_y: 10.0,
            lambda_gp: 10.0,
            adam: AdamConfig::default(),
            critic_steps: 1,
            batch_size: 1,
            total_steps: 8000,
            eval_every: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda_x", self.lambda_x),
            ("lambda_y", self.lambda_y),
            ("lambda_gp", self.lambda_gp),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!(
                    "training: {name} must be finite and non-negative, got {w}"
                )));
            }
        }
        if self.critic_steps < 1 {
            return Err(Error::Config(
                "training: need at least one critic update per generator update".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("training: batch size must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("training: eval cadence must be at least 1".into()));
        }
        if !(self.adam.learning_rate.is_finite() && self.adam.learning_rate > 0.0) {
            return Err(Error::Config("training: learning rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.adam.beta1), ("beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!(
                    "training: {name} must lie in [0, 1), got {b}"
                )));
            }
        }
        Ok(())
    }
}

// ---- loss terms ---------------------------------------------------------

/// Critic objective on explicit batches:
///
/// (1/n)·Σ_j [ D(fake_j) − D(real_j) + λ_gp·(‖∇D(mix_j)‖₂ − 1)₊² ]
///
/// with mix_j = ε_j·real_j + (1 − ε_j)·fake_j. `score` records a
/// differentiable scalar for an image variable; the same closure scores
/// real, fake, and mixed samples. The penalty gradient ∇D is emitted onto
/// the tape, so differentiating the returned loss reaches the score's
/// second derivatives. Returns `(loss, penalty)` where `penalty` is the
/// λ_gp-weighted mean hinge term alone.
pub fn critic_objective<T: Scalar>(
    tape: &Tape<T>,
    mut score: impl FnMut(&Tape<T>, Var) -> Result<Var>,
    real: &[Tensor<T>],
    fake: &[Tensor<T>],
    mix: &[f64],
    lambda_gp: f64,
) -> Result<(Var, Var)> {
    assert_eq!(real.len(), fake.len(), "real/fake batch sizes differ");
    assert_eq!(real.len(), mix.len(), "one mixing coefficient per sample");
    assert!(!real.is_empty(), "critic objective needs a non-empty batch");
    let one = tape.leaf(Tensor::scalar(T::one()));
    let mut gap_sum: Option<Var> = None;
    let mut pen_sum: Option<Var> = None;
    let add = |acc: &mut Option<Var>, v: Var| {
        *acc = Some(match *acc {
            Some(prev) => tape.add(prev, v),
            None => v,
        });
    };
    for ((x, g), &e) in real.iter().zip(fake).zip(mix) {
        let d_real = score(tape, tape.leaf(x.clone()))?;
        let d_fake = score(tape, tape.leaf(g.clone()))?;
        add(&mut gap_sum, tape.sub(d_fake, d_real));

        let ec = T::of_f64(e);
        let oc = T::of_f64(1.0 - e);
        let mixed = tape.param(x.zip(g, |a, b| ec * a + oc * b));
        let d_mix = score(tape, mixed)?;
        let grad = tape.grad(d_mix, &[mixed])[0];
        let gnorm = tape.sqrt(nn::sum_sq(tape, grad));
        let hinge = tape.max0(tape.sub(gnorm, one));
        add(&mut pen_sum, tape.mul(hinge, hinge));
    }
    let inv_n = T::of_f64(1.0 / real.len() as f64);
    let gap = tape.scale(gap_sum.expect("non-empty batch"), inv_n);
    let penalty = tape.scale(pen_sum.expect("non-empty batch"), T::of_f64(lambda_gp) * inv_n);
    Ok((tape.add(gap, penalty), penalty))
}

/// The generator objective split into its logged parts; `x_term` and
/// `y_term` carry their λ weights already.
pub struct GeneratorTerms {
    pub total: Var,
    pub x_term: Var,
    pub y_term: Var,
}

/// Generator objective on explicit batches:
///
/// (1/n)·Σ_j [ −D(G(y_j)) + λ_X·‖G(A(x_j)) − x_j‖₂² + λ_Y·‖A(G(y_j)) − y_j‖₂² ]
///
/// The image-consistency term measures `x_j` through the noise-free
/// forward operator. `score` is the critic, typically registered frozen so
/// gradients reach only the network parameters in `net`.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective<T: Scalar>(
    tape: &Tape<T>,
    radon: &Arc<RadonTransform<T>>,
    config: &LpdConfig,
    net: &LpdVars,
    mut score: impl FnMut(&Tape<T>, Var) -> Result<Var>,
    x_batch: &[Tensor<T>],
    y_batch: &[Tensor<T>],
    lambda_x: f64,
    lambda_y: f64,
) -> Result<GeneratorTerms> {
    assert_eq!(x_batch.len(), y_batch.len(), "x/y batch sizes differ");
    assert!(!x_batch.is_empty(), "generator objective needs a non-empty batch");
    let lin: Arc<dyn crate::tape::LinOp<T>> = radon.clone();
    let mut adv_sum: Option<Var> = None;
    let mut x_sum: Option<Var> = None;
    let mut y_sum: Option<Var> = None;
    let add = |acc: &mut Option<Var>, v: Var| {
        *acc = Some(match *acc {
            Some(prev) => tape.add(prev, v),
            None => v,
        });
    };
    for (x, y) in x_batch.iter().zip(y_batch) {
        let recon_y = lpd::lpd_forward(tape, radon, config, net, y)?;
        add(&mut adv_sum, tape.neg(score(tape, recon_y)?));
        let measured = tape.lin_map(lin.clone(), recon_y, false);
        add(&mut y_sum, nn::dist_sq(tape, measured, tape.leaf(y.clone())));

        let ax = radon.forward(x);
        let recon_x = lpd::lpd_forward(tape, radon, config, net, &ax)?;
        add(&mut x_sum, nn::dist_sq(tape, recon_x, tape.leaf(x.clone())));
    }
    let inv_n = T::of_f64(1.0 / x_batch.len() as f64);
    let adv = tape.scale(adv_sum.expect("non-empty batch"), inv_n);
    let x_term = tape.scale(x_sum.expect("non-empty batch"), T::of_f64(lambda_x) * inv_n);
    let y_term = tape.scale(y_sum.expect("non-empty batch"), T::of_f64(lambda_y) * inv_n);
    Ok(GeneratorTerms {
        total: tape.add(tape.add(adv, x_term), y_term),
        x_term,
        y_term,
    })
}

/// Supervised objective: (1/n)·Σ_j ‖G(y_j) − x_j‖₂².
pub fn supervised_objective<T: Scalar>(
    tape: &Tape<T>,
    radon: &Arc<RadonTransform<T>>,
    config: &LpdConfig,
    net: &LpdVars,
    x_batch: &[Tensor<T>],
    y_batch: &[Tensor<T>],
) -> Result<Var> {
    assert_eq!(x_batch.len(), y_batch.len(), "x/y batch sizes differ");
    assert!(!x_batch.is_empty(), "supervised objective needs a non-empty batch");
    let mut sum: Option<Var> = None;
    for (x, y) in x_batch.iter().zip(y_batch) {
        let recon = lpd::lpd_forward(tape, radon, config, net, y)?;
        let d = nn::dist_sq(tape, recon, tape.leaf(x.clone()));
        sum = Some(match sum {
            Some(prev) => tape.add(prev, d),
            None => d,
        });
    }
    Ok(tape.scale(sum.expect("non-empty batch"), T::of_f64(1.0 / x_batch.len() as f64)))
}

/// Critic loss with the generator treated as a constant: fakes are
/// reconstructed outside the tape, mixing coefficients drawn uniformly
/// from [0,1) per sample. Returns `(loss, penalty part)` as plain values.
pub fn critic_loss<T: Scalar>(
    radon: &Arc<RadonTransform<T>>,
    x_batch: &[Tensor<T>],
    y_batch: &[Tensor<T>],
    generator: &ReconNetParams<T>,
    critic: &CriticParams<T>,
    lambda_gp: f64,
    rng: &mut impl Rng,
) -> Result<(T, T)> {
    let fake: Vec<Tensor<T>> = y_batch
        .iter()
        .map(|y| lpd::reconstruct(radon, generator, y))
        .collect::<Result<_>>()?;
    let mix: Vec<f64> = (0..x_batch.len()).map(|_| rng.gen::<f64>()).collect();
    let tape: Tape<T> = Tape::new();
    let vars = critic::register_critic(&tape, critic, false);
    let (loss, pen) = critic_objective(
        &tape,
        |t, v| critic::critic_forward(t, &critic.config, &vars, v),
        x_batch,
        &fake,
        &mix,
        lambda_gp,
    )?;
    Ok((tape.item(loss), tape.item(pen)))
}

/// Generator loss with the critic treated as a constant. Returns
/// `(loss, x_term, y_term)` as plain values.
pub fn generator_loss<T: Scalar>(
    radon: &Arc<RadonTransform<T>>,
    x_batch: &[Tensor<T>],
    y_batch: &[Tensor<T>],
    generator: &ReconNetParams<T>,
    critic: &CriticParams<T>,
    lambda_x: f64,
    lambda_y: f64,
) -> Result<(T, T, T)> {
    let tape: Tape<T> = Tape::new();
    let net = lpd::register_params(&tape, generator, false);
    let cv = critic::register_critic(&tape, critic, false);
    let terms = generator_objective(
        &tape,
        radon,
        &generator.config,
        &net,
        |t, v| critic::critic_forward(t, &critic.config, &cv, v),
        x_batch,
        y_batch,
        lambda_x,
        lambda_y,
    )?;
    Ok((tape.item(terms.total), tape.item(terms.x_term), tape.item(terms.y_term)))
}

/// Empirical Wasserstein estimate: mean critic score on `real` minus mean
/// score on `fake`. Zero whenever the two sample lists coincide.
pub fn wasserstein_gap<T: Scalar>(
    critic: &CriticParams<T>,
    real: &[Tensor<T>],
    fake: &[Tensor<T>],
) -> Result<f64> {
    assert!(!real.is_empty() && !fake.is_empty(), "empty sample list");
    let mean = |xs: &[Tensor<T>]| -> Result<f64> {
        let mut acc = 0.0;
        for x in xs {
            acc += critic::score(critic, x)?.as_f64();
        }
        Ok(acc / xs.len() as f64)
    };
    Ok(mean(real)? - mean(fake)?)
}

// ---- training log -------------------------------------------------------

/// One row of the training log. For the adversarial trainer `critic_loss`
/// and `gp_term` report the last of the `critic_steps` inner updates; the
/// supervised trainer leaves every column except `generator_loss` at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub step: u64,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub gp_term: f64,
    pub lambda_x_term: f64,
    pub lambda_y_term: f64,
    pub wall_ms: f64,
}

pub const LOG_HEADER: &str = "step,L_D,L_G,gp_term,lambda_X_term,lambda_Y_term,wall_ms";

impl TrainLogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.critic_loss,
            self.generator_loss,
            self.gp_term,
            self.lambda_x_term,
            self.lambda_y_term,
            self.wall_ms
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!(
                "training log: expected 7 fields, got {} in {line:?}",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("training log: bad number {s:?}")))
        };
        Ok(Self {
            step: fields[0]
                .parse::<u64>()
                .map_err(|_| Error::Format(format!("training log: bad step {:?}", fields[0])))?,
            critic_loss: num(fields[1])?,
            generator_loss: num(fields[2])?,
            gp_term: num(fields[3])?,
            lambda_x_term: num(fields[4])?,
            lambda_y_term: num(fields[5])?,
            wall_ms: num(fields[6])?,
        })
    }

    /// Equality of everything except the wall-clock column.
    pub fn same_losses(&self, other: &Self) -> bool {
        self.step == other.step
            && self.critic_loss == other.critic_loss
            && self.generator_loss == other.generator_loss
            && self.gp_term == other.gp_term
            && self.lambda_x_term == other.lambda_x_term
            && self.lambda_y_term == other.lambda_y_term
    }
}

/// Render rows as a CSV document (header + one line per row). Floats use
/// the shortest round-trip representation, so parsing restores them
/// bit-exactly.
pub fn write_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn parse_log_csv(text: &str) -> Result<Vec<TrainLogRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("training log: empty document".into()))?;
    if header.trim() != LOG_HEADER {
        return Err(Error::Format(format!("training log: unexpected header {header:?}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(TrainLogRow::parse)
        .collect()
}

// ---- trainers -----------------------------------------------------------

/// Validation summary passed to the eval callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    /// Mean (PSNR dB, SSIM) over the validation pairs; `None` when no
    /// validation data was supplied.
    pub quality: Option<(f64, f64)>,
}

/// Optimizer moments captured for checkpointing.
#[derive(Debug, Clone)]
pub struct OptSnapshot<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

fn at_step(step: u64, e: Error) -> Error {
    match e {
        Error::Diverged(msg) => Error::Diverged(format!("step {step}: {msg}")),
        other => other,
    }
}

fn adam_for<T: Scalar>(cfg: AdamConfig, params: &[&Tensor<T>]) -> Adam<T> {
    let shapes: Vec<&[usize]> = params.iter().map(|t| t.shape()).collect();
    Adam::new(cfg, &shapes)
}

/// Alternating trainer with checkpointable state. Use [`train_alpd`] for a
/// straight run; drive [`AlpdTrainer::step`] directly to interleave
/// checkpointing or to resume.
pub struct AlpdTrainer<T: Scalar> {
    radon: Arc<RadonTransform<T>>,
    config: TrainConfig,
    pub generator: ReconNetParams<T>,
    pub critic: CriticParams<T>,
    generator_opt: Adam<T>,
    critic_opt: Adam<T>,
    steps_done: u64,
}

impl<T: Scalar> AlpdTrainer<T> {
    pub fn new(
        radon: Arc<RadonTransform<T>>,
        generator: ReconNetParams<T>,
        critic: CriticParams<T>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let g = radon.geometry();
        if critic.config.input_size != [g.image_size.0, g.image_size.1] {
            return Err(Error::Config(format!(
                "training: critic input size {:?} does not match image size {:?}",
                critic.config.input_size, g.image_size
            )));
        }
        let generator_opt = adam_for(config.adam, &generator.params());
        let critic_opt = adam_for(config.adam, &critic.params());
        Ok(Self {
            radon,
            config,
            generator,
            critic,
            generator_opt,
            critic_opt,
            steps_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed generator steps.
    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    /// Optimizer state (generator, critic) for checkpointing.
    pub fn opt_snapshots(&self) -> (OptSnapshot<T>, OptSnapshot<T>) {
        let snap = |o: &Adam<T>| {
            let (m, v, t) = o.state();
            OptSnapshot { m: m.to_vec(), v: v.to_vec(), t }
        };
        (snap(&self.generator_opt), snap(&self.critic_opt))
    }

    /// Restore a checkpointed position: optimizer moments plus the number
    /// of completed generator steps. Network parameters are restored by
    /// constructing the trainer with the checkpointed values.
    pub fn restore(
        &mut self,
        steps_done: u64,
        generator_opt: OptSnapshot<T>,
        critic_opt: OptSnapshot<T>,
    ) -> Result<()> {
        self.generator_opt
            .restore(generator_opt.m, generator_opt.v, generator_opt.t)?;
        self.critic_opt.restore(critic_opt.m, critic_opt.v, critic_opt.t)?;
        self.steps_done = steps_done;
        Ok(())
    }

    fn draw_indices(rng: &mut impl Rng, n: usize, count: usize) -> Vec<usize> {
        (0..count).map(|_| rng.gen_range(0..n)).collect()
    }

    /// One critic update; `inner` is the global critic-update index
    /// (step·critic_steps + k), which keys the derived RNG streams.
    fn critic_update(&mut self, data: &Dataset<T>, inner: u64) -> Result<(f64, f64)> {
        let n = data.images.len();
        let nb = self.config.batch_size;
        let mut rb = seeds::rng(self.config.seed, "critic-batch", inner);
        let xi = Self::draw_indices(&mut rb, n, nb);
        let yi = Self::draw_indices(&mut rb, n, nb);
        let mut rm = seeds::rng(self.config.seed, "critic-mix", inner);
        let mix: Vec<f64> = (0..nb).map(|_| rm.gen::<f64>()).collect();

        let real: Vec<Tensor<T>> = xi.iter().map(|&i| data.images[i].clone()).collect();
        let fake: Vec<Tensor<T>> = yi
            .iter()
            .map(|&i| lpd::reconstruct(&self.radon, &self.generator, &data.sinograms[i]))
            .collect::<Result<_>>()?;

        let tape: Tape<T> = Tape::new();
        let vars = critic::register_critic(&tape, &self.critic, true);
        let ccfg = self.critic.config.clone();
        let (loss, pen) = critic_objective(
            &tape,
            |t, v| critic::critic_forward(t, &ccfg, &vars, v),
            &real,
            &fake,
            &mix,
            self.config.lambda_gp,
        )?;
        let loss_v = tape.item(loss).as_f64();
        let pen_v = tape.item(pen).as_f64();
        if !loss_v.is_finite() {
            return Err(Error::Diverged("critic loss is not finite".into()));
        }
        let grads: Vec<Tensor<T>> = tape
            .grad(loss, &vars.flat())
            .into_iter()
            .map(|g| tape.value(g))
            .collect();
        self.critic_opt.step(&mut self.critic.params_mut(), &grads)?;
        Ok((loss_v, pen_v))
    }

    /// One generator update at step index `s` (keys the RNG streams).
    fn generator_update(&mut self, data: &Dataset<T>, s: u64) -> Result<(f64, f64, f64)> {
        let n = data.images.len();
        let nb = self.config.batch_size;
        let mut rb = seeds::rng(self.config.seed, "generator-batch", s);
        let xi = Self::draw_indices(&mut rb, n, nb);
        let yi = Self::draw_indices(&mut rb, n, nb);
        let x_batch: Vec<Tensor<T>> = xi.iter().map(|&i| data.images[i].clone()).collect();
        let y_batch: Vec<Tensor<T>> = yi.iter().map(|&i| data.sinograms[i].clone()).collect();

        let tape: Tape<T> = Tape::new();
        let net = lpd::register_params(&tape, &self.generator, true);
        let cv = critic::register_critic(&tape, &self.critic, false);
        let ccfg = self.critic.config.clone();
        let terms = generator_objective(
            &tape,
            &self.radon,
            &self.generator.config,
            &net,
            |t, v| critic::critic_forward(t, &ccfg, &cv, v),
            &x_batch,
            &y_batch,
            self.config.lambda_x,
            self.config.lambda_y,
        )?;
        let total = tape.item(terms.total).as_f64();
        let x_term = tape.item(terms.x_term).as_f64();
        let y_term = tape.item(terms.y_term).as_f64();
        if !total.is_finite() {
            return Err(Error::Diverged("generator loss is not finite".into()));
        }
        let grads: Vec<Tensor<T>> = tape
            .grad(terms.total, &net.flat())
            .into_iter()
            .map(|g| tape.value(g))
            .collect();
        self.generator_opt.step(&mut self.generator.params_mut(), &grads)?;
        Ok((total, x_term, y_term))
    }

    /// One full outer step: `critic_steps` critic updates, then one
    /// generator update. Fails with a step-indexed divergence error when a
    /// loss or gradient stops being finite; parameters keep their values
    /// from before the failing inner update.
    pub fn step(&mut self, data: &Dataset<T>) -> Result<TrainLogRow> {
        if data.mode != Mode::Unpaired {
            return Err(Error::Config(
                "adversarial training requires an unpaired dataset".into(),
            ));
        }
        let started = Instant::now();
        let s = self.steps_done;
        let k = self.config.critic_steps as u64;
        let mut critic_stats = (0.0, 0.0);
        for inner in 0..k {
            critic_stats = self
                .critic_update(data, s * k + inner)
                .map_err(|e| at_step(s + 1, e))?;
        }
        let (gen_loss, x_term, y_term) =
            self.generator_update(data, s).map_err(|e| at_step(s + 1, e))?;
        self.steps_done += 1;
        Ok(TrainLogRow {
            step: self.steps_done,
            critic_loss: critic_stats.0,
            generator_loss: gen_loss,
            gp_term: critic_stats.1,
            lambda_x_term: x_term,
            lambda_y_term: y_term,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Mean (PSNR dB, SSIM) of current reconstructions over
    /// (ground truth, sinogram) pairs.
    pub fn validation_metrics(&self, pairs: &[(Tensor<T>, Tensor<T>)]) -> Result<(f64, f64)> {
        validation_metrics(&self.radon, &self.generator, pairs)
    }
}

/// Mean (PSNR dB, SSIM) of reconstructions against ground truth.
pub fn validation_metrics<T: Scalar>(
    radon: &Arc<RadonTransform<T>>,
    generator: &ReconNetParams<T>,
    pairs: &[(Tensor<T>, Tensor<T>)],
) -> Result<(f64, f64)> {
    assert!(!pairs.is_empty(), "validation needs at least one pair");
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (truth, y) in pairs {
        let recon = lpd::reconstruct(radon, generator, y)?;
        psnr_sum += metrics::psnr(&recon, truth, None).db;
        ssim_sum += metrics::ssim(&recon, truth, None);
    }
    let n = pairs.len() as f64;
    Ok((psnr_sum / n, ssim_sum / n))
}

/// Outcome of an adversarial training run.
pub struct TrainedAlpd<T: Scalar> {
    pub generator: ReconNetParams<T>,
    pub critic: CriticParams<T>,
    pub log: Vec<TrainLogRow>,
}

/// Drive `trainer` from its current position to `total_steps`, appending
/// log rows and firing `on_eval` every `eval_every` steps and at the final
/// step. The callback receives the trainer so it can checkpoint.
pub fn run_alpd<T: Scalar>(
    trainer: &mut AlpdTrainer<T>,
    data: &Dataset<T>,
    validation: &[(Tensor<T>, Tensor<T>)],
    log: &mut Vec<TrainLogRow>,
    on_eval: &mut dyn FnMut(&AlpdTrainer<T>, &EvalPoint) -> Result<()>,
) -> Result<()> {
    while trainer.steps_done() < trainer.config().total_steps {
        let row = trainer.step(data)?;
        let s = row.step;
        log.push(row);
        if s % trainer.config().eval_every == 0 || s == trainer.config().total_steps {
            let quality = if validation.is_empty() {
                None
            } else {
                Some(trainer.validation_metrics(validation)?)
            };
            on_eval(trainer, &EvalPoint { step: s, quality })?;
        }
    }
    Ok(())
}

/// Run the full alternating loop from freshly initialized state. With
/// `total_steps` = 0 the inputs pass through unchanged.
pub fn train_alpd<T: Scalar>(
    radon: &Arc<RadonTransform<T>>,
    data: &Dataset<T>,
    generator: ReconNetParams<T>,
    critic: CriticParams<T>,
    config: &TrainConfig,
    validation: &[(Tensor<T>, Tensor<T>)],
    mut on_eval: impl FnMut(&AlpdTrainer<T>, &EvalPoint) -> Result<()>,
) -> Result<TrainedAlpd<T>> {
    let mut trainer = AlpdTrainer::new(radon.clone(), generator, critic, config.clone())?;
    let mut log = Vec::new();
    run_alpd(&mut trainer, data, validation, &mut log, &mut on_eval)?;
    Ok(TrainedAlpd {
        generator: trainer.generator,
        critic: trainer.critic,
        log,
    })
}

/// Supervised trainer: Adam on the mean squared reconstruction error of
/// paired samples. Shares the log schema with the adversarial trainer.
pub struct LpdTrainer<T: Scalar> {
    radon: Arc<RadonTransform<T>>,
    config: TrainConfig,
    pub generator: ReconNetParams<T>,
    opt: Adam<T>,
    steps_done: u64,
}

impl<T: Scalar> LpdTrainer<T> {
    pub fn new(
        radon: Arc<RadonTransform<T>>,
        generator: ReconNetParams<T>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let opt = adam_for(config.adam, &generator.params());
        Ok(Self { radon, config, generator, opt, steps_done: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn opt_snapshot(&self) -> OptSnapshot<T> {
        let (m, v, t) = self.opt.state();
        OptSnapshot { m: m.to_vec(), v: v.to_vec(), t }
    }

    pub fn restore(&mut self, steps_done: u64, opt: OptSnapshot<T>) -> Result<()> {
        self.opt.restore(opt.m, opt.v, opt.t)?;
        self.steps_done = steps_done;
        Ok(())
    }

    pub fn step(&mut self, data: &Dataset<T>) -> Result<TrainLogRow> {
        if data.mode != Mode::Paired {
            return Err(Error::Config(
                "supervised training requires a paired dataset".into(),
            ));
        }
        let started = Instant::now();
        let s = self.steps_done;
        let n = data.images.len();
        let mut rb = seeds::rng(self.config.seed, "supervised-batch", s);
        let idx = AlpdTrainer::<T>::draw_indices(&mut rb, n, self.config.batch_size);
        let x_batch: Vec<Tensor<T>> = idx.iter().map(|&i| data.images[i].clone()).collect();
        let y_batch: Vec<Tensor<T>> = idx.iter().map(|&i| data.sinograms[i].clone()).collect();

        let result = (|| -> Result<f64> {
            let tape: Tape<T> = Tape::new();
            let net = lpd::register_params(&tape, &self.generator, true);
            let loss = supervised_objective(
                &tape,
                &self.radon,
                &self.generator.config,
                &net,
                &x_batch,
                &y_batch,
            )?;
            let loss_v = tape.item(loss).as_f64();
            if !loss_v.is_finite() {
                return Err(Error::Diverged("supervised loss is not finite".into()));
            }
            let grads: Vec<Tensor<T>> = tape
                .grad(loss, &net.flat())
                .into_iter()
                .map(|g| tape.value(g))
                .collect();
            self.opt.step(&mut self.generator.params_mut(), &grads)?;
            Ok(loss_v)
        })()
        .map_err(|e| at_step(s + 1, e))?;

        self.steps_done += 1;
        Ok(TrainLogRow {
            step: self.steps_done,
            critic_loss: 0.0,
            generator_loss: result,
            gp_term: 0.0,
            lambda_x_term: 0.0,
            lambda_y_term: 0.0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn validation_metrics(&self, pairs: &[(Tensor<T>, Tensor<T>)]) -> Result<(f64, f64)> {
        validation_metrics(&self.radon, &self.generator, pairs)
    }
}

/// Outcome of a supervised training run.
pub struct TrainedLpd<T: Scalar> {
    pub generator: ReconNetParams<T>,
    pub log: Vec<TrainLogRow>,
}

/// Drive the supervised trainer to `total_steps`; see [`run_alpd`].
pub fn run_supervised<T: Scalar>(
    trainer: &mut LpdTrainer<T>,
    data: &Dataset<T>,
    validation: &[(Tensor<T>, Tensor<T>)],
    log: &mut Vec<TrainLogRow>,
    on_eval: &mut dyn FnMut(&LpdTrainer<T>, &EvalPoint) -> Result<()>,
) -> Result<()> {
    while trainer.steps_done() < trainer.config().total_steps {
        let row = trainer.step(data)?;
        let s = row.step;
        log.push(row);
        if s % trainer.config().eval_every == 0 || s == trainer.config().total_steps {
            let quality = if validation.is_empty() {
                None
            } else {
                Some(trainer.validation_metrics(validation)?)
            };
            on_eval(trainer, &EvalPoint { step: s, quality })?;
        }
    }
    Ok(())
}

/// Supervised training from freshly initialized state.
pub fn train_supervised_lpd<T: Scalar>(
    radon: &Arc<RadonTransform<T>>,
    data: &Dataset<T>,
    generator: ReconNetParams<T>,
    config: &TrainConfig,
    validation: &[(Tensor<T>, Tensor<T>)],
    mut on_eval: impl FnMut(&LpdTrainer<T>, &EvalPoint) -> Result<()>,
) -> Result<TrainedLpd<T>> {
    let mut trainer = LpdTrainer::new(radon.clone(), generator, config.clone())?;
    let mut log = Vec::new();
    run_supervised(&mut trainer, data, validation, &mut log, &mut on_eval)?;
    Ok(TrainedLpd { generator: trainer.generator, log })
}
