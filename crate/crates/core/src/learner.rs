//! Dual-critic Safety-SAC learner: shared encoder, twin reward critics with
//! min-backup, a sigmoid-bounded safety critic, Lagrange multiplier dynamics,
//! and a margin-penalized actor over the enumerated discrete action set.
//!
//! All expectations over the policy are computed exactly by enumerating the
//! action set; there is no sampling noise in targets or losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::nn::{softmax, Activation, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// entropy temperature
    pub alpha: f64,
    /// safety weight in the actor loss
    pub beta: f64,
    /// tolerated safety-critic level
    pub eps_c: f64,
    pub eta_pi: f64,
    pub eta_q: f64,
    pub eta_lambda: f64,
    pub eta_e: f64,
    pub soft_update_rate: f64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub n_hist: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            alpha: 0.2,
            beta: 1.0,
            eps_c: 1.0,
            eta_pi: 5e-5,
            eta_q: 1e-4,
            eta_lambda: 1e-3,
            eta_e: 5e-5,
            soft_update_rate: 0.005,
            latent_dim: 128,
            hidden_dim: 128,
            n_hist: 6,
            dropout: 0.1,
            seed: 0,
        }
    }
}

/// One replay item in featurized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub s: Vec<f64>,
    pub action: usize,
    pub r: f64,
    pub c: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub l_r: f64,
    pub l_c: f64,
    pub l_enc: f64,
    pub l_pi: f64,
    pub lambda_c: f64,
    pub critic_grad_norm: f64,
    pub actor_grad_norm: f64,
}

/// The full learner state. Serializes bit-exactly for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub config: LearnerConfig,
    pub n_actions: usize,
    pub input_dim: usize,
    pub encoder: Mlp,
    pub policy: Mlp,
    pub q_r1: Mlp,
    pub q_r2: Mlp,
    pub q_c: Mlp,
    pub target_q_r1: Mlp,
    pub target_q_r2: Mlp,
    pub target_q_c: Mlp,
    pub lambda_c: f64,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(input_dim: usize, n_actions: usize, config: LearnerConfig) -> Learner {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.latent_dim;
        let h = config.hidden_dim;
        let encoder = Mlp::new(&[input_dim, h, d], Activation::Tanh, &mut rng);
        let policy = Mlp::new(&[d, h, n_actions], Activation::Identity, &mut rng);
        let q_r1 = Mlp::new(&[d, h, n_actions], Activation::Identity, &mut rng);
        let q_r2 = Mlp::new(&[d, h, n_actions], Activation::Identity, &mut rng);
        let q_c = Mlp::new(&[d, h, n_actions], Activation::Sigmoid, &mut rng);
        Learner {
            target_q_r1: q_r1.clone(),
            target_q_r2: q_r2.clone(),
            target_q_c: q_c.clone(),
            config,
            n_actions,
            input_dim,
            encoder,
            policy,
            q_r1,
            q_r2,
            q_c,
            lambda_c: 0.0,
            step: 0,
            rng,
        }
    }

    /// Latent encoding without dropout.
    pub fn encode(&self, s: &[f64]) -> Vec<f64> {
        self.encoder.infer(s)
    }

    /// Policy distribution over the action set for a featurized state.
    pub fn policy_probs(&self, s: &[f64]) -> Vec<f64> {
        softmax(&self.policy.infer(&self.encode(s)))
    }

    /// TD targets (y_r, y_c) for a batch, using the target critics and the
    /// live policy. Terminal next-states drop the bootstrap term.
    pub fn compute_targets(&self, batch: &[BatchItem]) -> (Vec<f64>, Vec<f64>) {
        let gamma = self.config.gamma;
        let alpha = self.config.alpha;
        let mut y_r = Vec::with_capacity(batch.len());
        let mut y_c = Vec::with_capacity(batch.len());
        for item in batch {
            if item.terminal {
                y_r.push(item.r);
                y_c.push(item.c);
                continue;
            }
            let latent = self.encode(&item.s_next);
            let probs = softmax(&self.policy.infer(&latent));
            let q1 = self.target_q_r1.infer(&latent);
            let q2 = self.target_q_r2.infer(&latent);
            let qc = self.target_q_c.infer(&latent);
            let mut vr = 0.0;
            let mut vc = 0.0;
            for a in 0..self.n_actions {
                let qmin = q1[a].min(q2[a]);
                vr += probs[a] * (qmin - alpha * probs[a].ln());
                vc += probs[a] * qc[a];
            }
            y_r.push(item.r + gamma * vr);
            y_c.push(item.c + gamma * vc);
        }
        (y_r, y_c)
    }

    /// Draws a dropout mask for the latent vector, or `None` when dropout is
    /// disabled (no RNG consumption in that case).
    fn dropout_mask(&mut self) -> Option<Vec<f64>> {
        let p = self.config.dropout;
        if p <= 0.0 {
            return None;
        }
        let keep = 1.0 - p;
        Some(
            (0..self.config.latent_dim)
                .map(|_| if self.rng.gen::<f64>() < p { 0.0 } else { 1.0 / keep })
                .collect(),
        )
    }

    /// Joint critic-and-encoder update minimizing L_enc = L_r + lambda_c L_c.
    pub fn critic_update(
        &mut self,
        batch: &[BatchItem],
        y_r: &[f64],
        y_c: &[f64],
    ) -> Result<(f64, f64, f64, f64), CoreError> {
        let b = batch.len() as f64;
        let lambda = self.lambda_c;
        let mut enc_grads = self.encoder.zero_grads();
        let mut q1_grads = self.q_r1.zero_grads();
        let mut q2_grads = self.q_r2.zero_grads();
        let mut qc_grads = self.q_c.zero_grads();
        let mut l_r = 0.0;
        let mut l_c = 0.0;

        for (i, item) in batch.iter().enumerate() {
            let (latent_raw, enc_cache) = self.encoder.forward(&item.s);
            let mask = self.dropout_mask();
            let latent: Vec<f64> = match &mask {
                Some(m) => latent_raw.iter().zip(m).map(|(z, mm)| z * mm).collect(),
                None => latent_raw.clone(),
            };
            let (q1, c1) = self.q_r1.forward(&latent);
            let (q2, c2) = self.q_r2.forward(&latent);
            let (qc, cc) = self.q_c.forward(&latent);
            let a = item.action;
            let e1 = q1[a] - y_r[i];
            let e2 = q2[a] - y_r[i];
            let ec = qc[a] - y_c[i];
            l_r += (e1 * e1 + e2 * e2) / 2.0 / b;
            l_c += ec * ec / b;

            let mut d1 = vec![0.0; self.n_actions];
            let mut d2 = vec![0.0; self.n_actions];
            let mut dc = vec![0.0; self.n_actions];
            d1[a] = e1 / b;
            d2[a] = e2 / b;
            dc[a] = 2.0 * lambda * ec / b;
            let dl1 = self.q_r1.backward(&c1, &d1, &mut q1_grads);
            let dl2 = self.q_r2.backward(&c2, &d2, &mut q2_grads);
            let dlc = self.q_c.backward(&cc, &dc, &mut qc_grads);
            let mut dlatent: Vec<f64> = dl1
                .iter()
                .zip(&dl2)
                .zip(&dlc)
                .map(|((a, b), c)| a + b + c)
                .collect();
            if let Some(m) = &mask {
                for (d, mm) in dlatent.iter_mut().zip(m) {
                    *d *= mm;
                }
            }
            self.encoder.backward(&enc_cache, &dlatent, &mut enc_grads);
        }

        let l_enc = l_r + lambda * l_c;
        if !(l_r.is_finite() && l_c.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "critic loss".into(),
            });
        }
        let grad_norm = (enc_grads.l2_norm().powi(2)
            + q1_grads.l2_norm().powi(2)
            + q2_grads.l2_norm().powi(2)
            + qc_grads.l2_norm().powi(2))
        .sqrt();
        if !grad_norm.is_finite() {
            return Err(CoreError::NonFinite {
                context: "critic gradients".into(),
            });
        }
        self.q_r1.apply_sgd(&q1_grads, self.config.eta_q);
        self.q_r2.apply_sgd(&q2_grads, self.config.eta_q);
        self.q_c.apply_sgd(&qc_grads, self.config.eta_q);
        self.encoder.apply_sgd(&enc_grads, self.config.eta_e);
        Ok((l_r, l_c, l_enc, grad_norm))
    }

    /// Dual ascent on the Lagrange multiplier with projection to [0, inf).
    pub fn update_lagrange(&mut self, batch: &[BatchItem]) -> f64 {
        let mut mean_qc = 0.0;
        for item in batch {
            let latent = self.encode(&item.s);
            let qc = self.q_c.infer(&latent);
            mean_qc += qc[item.action];
        }
        mean_qc /= batch.len() as f64;
        let surrogate = (mean_qc - self.config.eps_c).max(0.0);
        self.lambda_c = (self.lambda_c + self.config.eta_lambda * surrogate).max(0.0);
        self.lambda_c
    }

    /// Actor update on policy parameters only; gradients stop at the latent.
    pub fn actor_update(&mut self, batch: &[BatchItem]) -> Result<(f64, f64), CoreError> {
        let b = batch.len() as f64;
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let eps_c = self.config.eps_c;
        let mut grads = self.policy.zero_grads();
        let mut l_pi = 0.0;

        for item in batch {
            let latent = self.encode(&item.s);
            let (logits, cache) = self.policy.forward(&latent);
            let probs = softmax(&logits);
            let q1 = self.q_r1.infer(&latent);
            let q2 = self.q_r2.infer(&latent);
            let qc = self.q_c.infer(&latent);

            // h_a = alpha ln pi_a - Qr_min(a) + beta max(0, Qc(a) - eps_c)
            let mut h = vec![0.0; self.n_actions];
            let mut expected_h = 0.0;
            for a in 0..self.n_actions {
                h[a] = alpha * probs[a].ln() - q1[a].min(q2[a]) + beta * (qc[a] - eps_c).max(0.0);
                expected_h += probs[a] * h[a];
            }
            l_pi += expected_h / b;

            // dL/dlogit_k = p_k (h_k - E[h]) / B
            let mut dlogits = vec![0.0; self.n_actions];
            for k in 0..self.n_actions {
                dlogits[k] = probs[k] * (h[k] - expected_h) / b;
            }
            self.policy.backward(&cache, &dlogits, &mut grads);
        }

        if !l_pi.is_finite() {
            return Err(CoreError::NonFinite {
                context: "actor loss".into(),
            });
        }
        let grad_norm = grads.l2_norm();
        if !grad_norm.is_finite() {
            return Err(CoreError::NonFinite {
                context: "actor gradients".into(),
            });
        }
        self.policy.apply_sgd(&grads, self.config.eta_pi);
        Ok((l_pi, grad_norm))
    }

    /// One full gradient block: critic/encoder update, Lagrange update,
    /// actor update, soft target update.
    pub fn train_step(&mut self, batch: &[BatchItem]) -> Result<StepReport, CoreError> {
        if batch.is_empty() {
            return Err(CoreError::Usage("empty training batch".into()));
        }
        let (y_r, y_c) = self.compute_targets(batch);
        let (l_r, l_c, l_enc, critic_grad_norm) = self.critic_update(batch, &y_r, &y_c)?;
        let lambda_c = self.update_lagrange(batch);
        let (l_pi, actor_grad_norm) = self.actor_update(batch)?;
        let rate = self.config.soft_update_rate;
        self.target_q_r1.soft_update_from(&self.q_r1, rate);
        self.target_q_r2.soft_update_from(&self.q_r2, rate);
        self.target_q_c.soft_update_from(&self.q_c, rate);
        self.step += 1;
        Ok(StepReport {
            l_r,
            l_c,
            l_enc,
            l_pi,
            lambda_c,
            critic_grad_norm,
            actor_grad_norm,
        })
    }

    /// Argmax-probability action, lowest index winning ties. Needs no RNG.
    pub fn greedy_action(&self, s: &[f64]) -> usize {
        let probs = self.policy_probs(s);
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        best
    }

    /// Action selection: `greedy` takes the argmax probability (lowest index
    /// wins ties), otherwise samples from the categorical policy.
    pub fn select_action(&mut self, s: &[f64], greedy: bool) -> usize {
        if greedy {
            self.greedy_action(s)
        } else {
            let probs = self.policy_probs(s);
            let u: f64 = self.rng.gen();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }

    /// Serializes the full learner state; round-trips bit-exactly.
    pub fn to_checkpoint_json(&self) -> Result<String, CoreError> {
        Ok(serde_json::to_string(&CheckpointFile {
            version: CHECKPOINT_VERSION,
            learner: self.clone(),
        })?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Learner, CoreError> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(CoreError::Usage(format!(
                "unsupported checkpoint version {} (expected {})",
                file.version, CHECKPOINT_VERSION
            )));
        }
        Ok(file.learner)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    learner: Learner,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_learner(n_actions: usize, dropout: f64) -> Learner {
        Learner::new(
            4,
            n_actions,
            LearnerConfig {
                latent_dim: 3,
                hidden_dim: 5,
                dropout,
                eta_q: 1e-2,
                eta_e: 1e-2,
                eta_pi: 1e-2,
                seed: 42,
                ..LearnerConfig::default()
            },
        )
    }

    fn random_batch(learner: &Learner, n: usize, seed: u64, terminal: bool) -> Vec<BatchItem> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| BatchItem {
                s: (0..learner.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: rng.gen_range(0..learner.n_actions),
                r: rng.gen_range(-1.0..1.0),
                c: rng.gen_range(0.0..1.0),
                s_next: (0..learner.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                terminal,
            })
            .collect()
    }

    #[test]
    fn terminal_targets_drop_bootstrap() {
        let learner = tiny_learner(3, 0.0);
        let mut batch = random_batch(&learner, 2, 0, true);
        batch[0].r = -0.54;
        batch[0].c = 0.46;
        let (y_r, y_c) = learner.compute_targets(&batch);
        assert_eq!(y_r[0], -0.54);
        assert_eq!(y_c[0], 0.46);
    }

    #[test]
    fn uniform_policy_target_enumeration() {
        // hand-checkable target: uniform policy over 2 actions, equal twin
        // critics {1, 3}, alpha -> 0, gamma 0.9, r = 0  =>  y_r = 0.9 * 2
        let mut learner = tiny_learner(2, 0.0);
        learner.config.alpha = 0.0;
        learner.config.gamma = 0.9;
        // force uniform policy and constant target critics
        for l in &mut learner.policy.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        for (net, vals) in [
            (&mut learner.target_q_r1, [1.0, 3.0]),
            (&mut learner.target_q_r2, [1.0, 3.0]),
        ] {
            for l in net.layers.iter_mut() {
                l.w.iter_mut().for_each(|w| *w = 0.0);
                l.b.iter_mut().for_each(|b| *b = 0.0);
            }
            let last = net.layers.last_mut().unwrap();
            last.b.copy_from_slice(&vals);
        }
        let mut batch = random_batch(&learner, 1, 1, false);
        batch[0].r = 0.0;
        let (y_r, _) = learner.compute_targets(&batch);
        assert!((y_r[0] - 1.8).abs() < 1e-12, "y_r = {}", y_r[0]);
    }

    #[test]
    fn critic_loss_squared_error_example() {
        // single item, both reward critics forced to output 1, y_r = 3 => L_r = 4
        let mut learner = tiny_learner(2, 0.0);
        for net in [&mut learner.q_r1, &mut learner.q_r2] {
            for l in net.layers.iter_mut() {
                l.w.iter_mut().for_each(|w| *w = 0.0);
                l.b.iter_mut().for_each(|b| *b = 0.0);
            }
            net.layers.last_mut().unwrap().b.iter_mut().for_each(|b| *b = 1.0);
        }
        let batch = random_batch(&learner, 1, 2, true);
        let y_r = vec![3.0];
        let y_c = vec![0.5];
        let (l_r, _, _, _) = learner.critic_update(&batch, &y_r, &y_c).unwrap();
        assert!((l_r - 4.0).abs() < 1e-12, "l_r = {l_r}");
    }

    #[test]
    fn lagrange_projection_and_growth() {
        let mut learner = tiny_learner(2, 0.0);
        learner.config.eps_c = 1.0;
        let batch = random_batch(&learner, 4, 3, false);
        // sigmoid output keeps Q_c < 1, so with eps_c = 1 lambda stays put
        let l = learner.update_lagrange(&batch);
        assert_eq!(l, 0.0);

        // with a lower tolerance the multiplier strictly grows
        learner.config.eps_c = 0.1;
        learner.q_c.layers.last_mut().unwrap().b.iter_mut().for_each(|b| *b = 3.0);
        let l1 = learner.update_lagrange(&batch);
        assert!(l1 > 0.0);
        let l2 = learner.update_lagrange(&batch);
        assert!(l2 > l1);
    }

    #[test]
    fn lagrange_update_arithmetic() {
        // lambda = 0.2, mean Qc = 1.3, eps_c = 1, eta = 0.1 => 0.23.
        // Reachable only with an unbounded critic; emulate by checking the
        // arithmetic with eps_c below the sigmoid range instead.
        let mut learner = tiny_learner(2, 0.0);
        learner.lambda_c = 0.2;
        learner.config.eps_c = 0.3;
        learner.config.eta_lambda = 0.1;
        // force Q_c to sigmoid(0.0) = 0.5 everywhere => surrogate = 0.2
        for l in learner.q_c.layers.iter_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let batch = random_batch(&learner, 3, 4, false);
        let l = learner.update_lagrange(&batch);
        assert!((l - 0.22).abs() < 1e-12, "lambda = {l}");
    }

    #[test]
    fn beta_zero_removes_safety_term() {
        let mut a = tiny_learner(3, 0.0);
        a.config.beta = 0.0;
        let batch = random_batch(&a, 4, 5, false);
        // margin inactive anyway when all Q_c < eps_c = 1
        let mut b = a.clone();
        b.config.beta = 1.0;
        let (l_a, _) = a.actor_update(&batch).unwrap();
        let (l_b, _) = b.actor_update(&batch).unwrap();
        assert_eq!(l_a, l_b);
    }

    #[test]
    fn train_step_soft_update_endpoints() {
        let mut learner = tiny_learner(3, 0.0);
        learner.config.soft_update_rate = 1.0;
        let batch = random_batch(&learner, 4, 6, false);
        learner.train_step(&batch).unwrap();
        assert_eq!(learner.target_q_r1, learner.q_r1);
        assert_eq!(learner.target_q_c, learner.q_c);

        let mut learner = tiny_learner(3, 0.0);
        learner.config.soft_update_rate = 0.0;
        let frozen = learner.target_q_r1.clone();
        learner.train_step(&batch).unwrap();
        assert_eq!(learner.target_q_r1, frozen);
    }

    #[test]
    fn identical_seeds_identical_parameters() {
        let mut a = tiny_learner(3, 0.1);
        let mut b = tiny_learner(3, 0.1);
        let batch = random_batch(&a, 8, 7, false);
        for _ in 0..100 {
            a.train_step(&batch).unwrap();
            b.train_step(&batch).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_tie_break_and_sampling_frequency() {
        let mut learner = tiny_learner(4, 0.0);
        // uniform policy: zero out policy net
        for l in &mut learner.policy.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let s = vec![0.1; learner.input_dim];
        assert_eq!(learner.select_action(&s, true), 0);

        // near-one-hot policy: biased logits
        learner.policy.layers.last_mut().unwrap().b = vec![0.0, 6.0, 0.0, 0.0];
        let probs = learner.policy_probs(&s);
        let mode_p = probs[1];
        let n = 10_000;
        let hits = (0..n).filter(|_| learner.select_action(&s, false) == 1).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - mode_p).abs() < 0.02, "freq {freq} vs p {mode_p}");
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut learner = tiny_learner(3, 0.1);
        let batch = random_batch(&learner, 4, 8, false);
        learner.train_step(&batch).unwrap();
        let json = learner.to_checkpoint_json().unwrap();
        let back = Learner::from_checkpoint_json(&json).unwrap();
        assert_eq!(learner, back);
    }

    #[test]
    fn safety_critic_output_in_unit_interval() {
        let learner = tiny_learner(3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let s: Vec<f64> = (0..learner.input_dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let qc = learner.q_c.infer(&learner.encode(&s));
            for v in qc {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }
}
