//! Policy optimization: returns and baselines, gradient normalization, Adam,
//! VRPG and alternating updates with TRPO, and the training loop.

use std::time::Instant;

use nalgebra::DVector;

use crate::agent::{Agent, AgentKind, PsrInit, UpdateRule};
use crate::envs::{collect_samples, make_env_with_horizon, BlindPolicy, Environment, RolloutBatch};
use crate::error::{Result, RpspError};
use crate::features::FeaturePipeline;
use crate::gradcore::{backward, backward_many, ParameterGradients, StepWeights};
use crate::init2sr::{initialize_with_pipeline, random_psr, InitConfig};
use crate::linalg::{with_bias, RidgeAccumulator};
use crate::policy::{ActionDistribution, ReactivePolicyParams, DEFAULT_HIDDEN};
use crate::scalar::Scalar;
use crate::seeding::derive_seed;

/// `R_t = Σ_{j≥t} γ^{j−t} r_j`.
pub fn reward_to_go<T: Scalar>(rewards: &[T], gamma: T) -> Vec<T> {
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Linear value baseline over the policy input plus a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel<T: Scalar> {
    /// `[bias, w...]`
    pub weights: DVector<T>,
}

pub const BASELINE_RIDGE: f64 = 1e-6;

impl<T: Scalar> BaselineModel<T> {
    /// Ridge least squares of `returns` on `[1; state]`; the bias is not penalized.
    pub fn fit(states: &[&DVector<T>], returns: &[T], ridge: T) -> Result<Self> {
        if states.len() != returns.len() || states.is_empty() {
            return Err(RpspError::InvalidArgument("baseline needs matching, non-empty states and returns".into()));
        }
        let d = states[0].len() + 1;
        let mut acc = RidgeAccumulator::new(d, 1);
        for (s, &r) in states.iter().zip(returns) {
            acc.add(&with_bias(s), &DVector::from_element(1, r), T::one());
        }
        let mut gram = acc.gram().clone();
        for i in 1..d {
            gram[(i, i)] += ridge;
        }
        let rhs = acc.cross().row(0).transpose();
        let weights = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| RpspError::Singular("baseline normal equations".into()))?;
        Ok(Self { weights })
    }

    pub fn predict(&self, state: &DVector<T>) -> T {
        self.weights[0] + self.weights.rows(1, self.weights.len() - 1).dot(state)
    }
}

/// Discounted returns and advantages `R_t − b(x_t)` per trajectory, with
/// the baseline refit on the given policy inputs.
pub fn advantages<T: Scalar>(
    batch: &RolloutBatch<T>,
    states: &[Vec<DVector<T>>],
    gamma: T,
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let returns: Vec<Vec<T>> = batch.trajectories.iter().map(|t| reward_to_go(&t.rewards, gamma)).collect();
    let flat_states: Vec<&DVector<T>> = states.iter().flatten().collect();
    let flat_returns: Vec<T> = returns.iter().flatten().copied().collect();
    let baseline = BaselineModel::fit(&flat_states, &flat_returns, T::of(BASELINE_RIDGE))?;
    let adv = returns
        .iter()
        .zip(states)
        .map(|(r, s)| r.iter().zip(s).map(|(&r, s)| r - baseline.predict(s)).collect())
        .collect();
    Ok((returns, adv))
}

/// Hyperparameters of the update rules.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    /// Step size for the filter parameters; `None` uses `learning_rate`.
    pub psr_learning_rate: Option<f64>,
    pub gamma: f64,
    /// Averaging constant of the gradient-norm normalization.
    pub beta: f64,
    /// Weight of the prediction loss.
    pub a2: f64,
    pub trpo_epsilon: f64,
    pub cg_damping: f64,
    pub cg_iters: usize,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Global-norm clip applied before Adam steps.
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            psr_learning_rate: None,
            gamma: 0.99,
            beta: 0.1,
            a2: 0.1,
            trpo_epsilon: 0.01,
            cg_damping: 0.1,
            cg_iters: 10,
            backtrack_factor: 0.5,
            max_backtracks: 10,
            clip_norm: 10.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RpspError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0) || self.psr_learning_rate.is_some_and(|r| !(r >= 0.0)) {
            return bad("learning rates must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(self.a2 >= 0.0) {
            return bad("a2 must be non-negative");
        }
        if !(self.trpo_epsilon > 0.0) {
            return bad("trpo epsilon must be positive");
        }
        if !(self.cg_damping >= 0.0) || self.cg_iters == 0 {
            return bad("CG damping must be non-negative and iterations positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack factor must lie in (0, 1)");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam constants out of range");
        }
        Ok(())
    }
}

/// Exponential averages of squared gradient norms, one per loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientNormalizer {
    pub v: [f64; 2],
    pub beta: f64,
    pub a2: f64,
}

impl GradientNormalizer {
    pub fn new(beta: f64, a2: f64) -> Self {
        Self { v: [0.0; 2], beta, a2 }
    }

    /// Updates the averages and returns `(α₁ g₁, a₂ α₂ g₂)`, `α_i = v_i^{−1/2}`.
    /// A loss whose average is zero is left unscaled.
    pub fn normalize<T: Scalar>(&mut self, g1: &DVector<T>, g2: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let scaled1 = self.scale(0, g1);
        let scaled2 = self.scale(1, g2) * T::of(self.a2);
        (scaled1, scaled2)
    }

    fn scale<T: Scalar>(&mut self, i: usize, g: &DVector<T>) -> DVector<T> {
        let sq = g.iter().map(|x| x.as_f64().powi(2)).sum::<f64>();
        self.v[i] = (1.0 - self.beta) * self.v[i] + self.beta * sq;
        if self.v[i] > 0.0 {
            g * T::of(1.0 / self.v[i].sqrt())
        } else {
            g.clone()
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Scalar> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub m: DVector<T>,
    pub v: DVector<T>,
    pub t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self::with_constants(n, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(n: usize, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate: T::of(learning_rate),
            beta1: T::of(beta1),
            beta2: T::of(beta2),
            eps: T::of(eps),
            m: DVector::zeros(n),
            v: DVector::zeros(n),
            t: 0,
        }
    }

    /// Descends `grad`.
    pub fn step(&mut self, params: &mut DVector<T>, grad: &DVector<T>) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(RpspError::InvalidArgument(format!(
                "Adam state has {} entries, parameters {} and gradient {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales `g` to global norm at most `max_norm`; returns the original norm.
pub fn clip_global_norm<T: Scalar>(g: &mut DVector<T>, max_norm: T) -> T {
    let norm = g.norm();
    if norm > max_norm {
        *g *= max_norm / norm;
    }
    norm
}

/// Gradient of `−(1/M) Σ_i Σ_t log π(â_it | x_it) A_it` over every parameter.
pub fn vrpg_gradient<T: Scalar>(
    agent: &Agent<T>,
    batch: &RolloutBatch<T>,
    advantages: &[Vec<T>],
) -> Result<ParameterGradients<T>> {
    Ok(backward(agent, &batch.trajectories, &batch.raw_actions, &vrpg_weights(batch, advantages))?.1)
}

/// Mean one-step prediction loss and its gradient; `None` without a filter.
pub fn prediction_gradient<T: Scalar>(
    agent: &Agent<T>,
    batch: &RolloutBatch<T>,
) -> Result<Option<(T, ParameterGradients<T>)>> {
    if agent.psr.is_none() {
        return Ok(None);
    }
    let weights = StepWeights::mean_prediction(&batch.trajectories);
    Ok(Some(backward(agent, &batch.trajectories, &[], &weights)?))
}

/// Per-iteration optimizer state.
///
/// Adam is coordinate-wise, so separate states for the filter and policy
/// blocks are equivalent to one joint state with per-block step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Scalar> {
    pub config: OptimConfig,
    pub normalizer: GradientNormalizer,
    pub adam_psr: Option<Adam<T>>,
    pub adam_policy: Option<Adam<T>>,
    pub iteration: usize,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimConfig) -> Self {
        Self {
            normalizer: GradientNormalizer::new(config.beta, config.a2),
            config,
            adam_psr: None,
            adam_policy: None,
            iteration: 0,
        }
    }

    fn make_adam(&self, n: usize, lr: f64) -> Adam<T> {
        let c = &self.config;
        Adam::with_constants(n, lr, c.adam_beta1, c.adam_beta2, c.adam_eps)
    }

    fn step_psr(&mut self, params: &mut DVector<T>, grad: &DVector<T>) -> Result<()> {
        if self.adam_psr.is_none() {
            let lr = self.config.psr_learning_rate.unwrap_or(self.config.learning_rate);
            self.adam_psr = Some(self.make_adam(params.len(), lr));
        }
        self.adam_psr.as_mut().unwrap().step(params, grad)
    }

    fn step_policy(&mut self, params: &mut DVector<T>, grad: &DVector<T>) -> Result<()> {
        if self.adam_policy.is_none() {
            self.adam_policy = Some(self.make_adam(params.len(), self.config.learning_rate));
        }
        self.adam_policy.as_mut().unwrap().step(params, grad)
    }
}

/// Diagnostics of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub pred_loss: f64,
    pub mean_kl: f64,
    /// Norms of the combined gradient before clipping.
    pub grad_norm_l1: f64,
    pub grad_norm_l2: f64,
    pub trpo_accepted: Option<bool>,
    /// Norm-cap events while filtering the batch.
    pub cap_events: usize,
}

/// Weights turning [`crate::gradcore::objective`] into the VRPG loss
/// `−(1/M) Σ_i Σ_t log π(â_it | x_it) A_it`.
pub fn vrpg_weights<T: Scalar>(batch: &RolloutBatch<T>, advantages: &[Vec<T>]) -> StepWeights<T> {
    let scale = -T::one() / T::of_usize(batch.len().max(1));
    StepWeights {
        log_prob: advantages.iter().map(|a| a.iter().map(|&x| x * scale).collect()).collect(),
        prediction: Vec::new(),
    }
}

/// Normalized joint gradient `α₁ ∇ℓ₁ + a₂ α₂ ∇ℓ₂` over all parameters, the
/// mean prediction loss and the number of norm-cap events.
fn joint_gradient<T: Scalar>(
    agent: &Agent<T>,
    batch: &RolloutBatch<T>,
    state: &mut OptimizerState<T>,
) -> Result<(DVector<T>, f64, usize)> {
    let (_, adv) = advantages(batch, &batch.states, T::of(state.config.gamma))?;
    let mut weights = vec![vrpg_weights(batch, &adv)];
    if agent.psr.is_some() {
        weights.push(StepWeights::mean_prediction(&batch.trajectories));
    }
    let out = backward_many(agent, &batch.trajectories, &batch.raw_actions, &weights)?;
    let g1 = out.results[0].1.to_flat();
    let (pred_loss, g2) = match out.results.get(1) {
        Some((loss, g)) => (loss.as_f64(), g.to_flat()),
        None => (0.0, DVector::zeros(g1.len())),
    };
    let (s1, s2) = state.normalizer.normalize(&g1, &g2);
    Ok((s1 + s2, pred_loss, out.cap_events))
}

/// Mean KL between the batch's recorded policy and the current agent,
/// re-filtering states under the current filter.
pub fn batch_mean_kl<T: Scalar>(old: &Agent<T>, new: &Agent<T>, batch: &RolloutBatch<T>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (traj, old_states) in batch.trajectories.iter().zip(&batch.states) {
        let new_states = new.policy_inputs(traj)?;
        for (s_old, s_new) in old_states.iter().zip(&new_states) {
            let p = old.policy.forward(s_old)?;
            let q = new.policy.forward(s_new)?;
            total += p.kl_divergence(&q).as_f64();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// One Adam step on every parameter along the normalized joint gradient.
pub fn vrpg_update<T: Scalar>(
    agent: &mut Agent<T>,
    batch: &RolloutBatch<T>,
    state: &mut OptimizerState<T>,
) -> Result<UpdateStats> {
    let old = agent.clone();
    let (mut g, pred_loss, cap_events) = joint_gradient(agent, batch, state)?;
    let l1 = g.iter().map(|x| x.abs().as_f64()).sum();
    let l2 = clip_global_norm(&mut g, T::of(state.config.clip_norm)).as_f64();
    let n_psr = agent.psr.as_ref().map_or(0, |p| p.num_params());
    if let Some(psr) = agent.psr.as_mut() {
        let mut theta = psr.to_flat();
        state.step_psr(&mut theta, &g.rows(0, n_psr).into_owned())?;
        psr.set_flat(&theta)?;
    }
    let mut theta = agent.policy.to_flat();
    state.step_policy(&mut theta, &g.rows(n_psr, g.len() - n_psr).into_owned())?;
    agent.policy.set_flat(&theta)?;
    state.iteration += 1;
    Ok(UpdateStats {
        pred_loss,
        mean_kl: batch_mean_kl(&old, agent, batch)?,
        grad_norm_l1: l1,
        grad_norm_l2: l2,
        trpo_accepted: None,
        cap_events,
    })
}

/// Approximately solves `H v = g` given Hessian-vector products.
pub fn conjugate_gradient<T: Scalar, F>(mut hvp: F, g: &DVector<T>, iters: usize, tol: T) -> DVector<T>
where
    F: FnMut(&DVector<T>) -> DVector<T>,
{
    let mut x = DVector::zeros(g.len());
    let mut r = g.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..iters {
        if rr <= tol {
            break;
        }
        let hp = hvp(&p);
        let php = p.dot(&hp);
        if !(php > T::zero()) {
            break;
        }
        let alpha = rr / php;
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &hp, T::one());
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    x
}

/// Fixed inputs of a TRPO step.
#[derive(Debug, Clone)]
pub struct TrpoData<'a, T: Scalar> {
    pub states: Vec<&'a DVector<T>>,
    pub actions: Vec<&'a DVector<T>>,
    pub advantages: Vec<T>,
}

impl<'a, T: Scalar> TrpoData<'a, T> {
    pub fn from_nested(states: &'a [Vec<DVector<T>>], actions: &'a [Vec<DVector<T>>], advantages: &[Vec<T>]) -> Self {
        Self {
            states: states.iter().flatten().collect(),
            actions: actions.iter().flatten().collect(),
            advantages: advantages.iter().flatten().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Result of a TRPO step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrpoOutcome {
    pub accepted: bool,
    pub mean_kl: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub backtracks: usize,
}

/// `mean_t exp(log π_θ − log π_old) A_t` and the mean KL from the old policy.
pub fn trpo_surrogate<T: Scalar>(
    policy: &ReactivePolicyParams<T>,
    old: &[ActionDistribution<T>],
    data: &TrpoData<'_, T>,
) -> Result<(f64, f64)> {
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    for t in 0..data.len() {
        let dist = policy.forward(data.states[t])?;
        let ratio = (dist.log_prob(data.actions[t]) - old[t].log_prob(data.actions[t])).exp();
        surrogate += (ratio * data.advantages[t]).as_f64();
        kl += old[t].kl_divergence(&dist).as_f64();
    }
    let n = data.len().max(1) as f64;
    Ok((surrogate / n, kl / n))
}

/// Natural-gradient step on the reactive policy with a KL trust region and
/// backtracking line search; leaves the policy unchanged on failure.
pub fn trpo_step<T: Scalar>(
    policy: &mut ReactivePolicyParams<T>,
    data: &TrpoData<'_, T>,
    config: &OptimConfig,
) -> Result<TrpoOutcome> {
    let n = data.len();
    if n == 0 || data.actions.len() != n || data.advantages.len() != n {
        return Err(RpspError::InvalidArgument("TRPO data must be non-empty with matching lengths".into()));
    }
    let inv_n = T::one() / T::of_usize(n);
    let mut caches = Vec::with_capacity(n);
    let mut old = Vec::with_capacity(n);
    let mut g = policy.zeros_like();
    for t in 0..n {
        let (dist, cache) = policy.forward_cached(data.states[t])?;
        let (g_mean, g_r) = dist.log_prob_grad(data.actions[t]);
        let (mut gp, _) = policy.backward_mean(&cache, &g_mean);
        gp.r = g_r;
        g.axpy(data.advantages[t] * inv_n, &gp);
        caches.push(cache);
        old.push(dist);
    }
    let (surrogate_before, _) = trpo_surrogate(policy, &old, data)?;
    let unchanged = TrpoOutcome {
        accepted: false,
        mean_kl: 0.0,
        surrogate_before,
        surrogate_after: surrogate_before,
        backtracks: 0,
    };
    let g_flat = g.to_flat();
    if g_flat.iter().all(|x| *x == T::zero()) {
        log::debug!("TRPO skipped: zero policy gradient");
        return Ok(unchanged);
    }
    let inv_var = old[0].std.map(|s| T::one() / (s * s));
    let damping = T::of(config.cg_damping);
    let two = T::of(2.0);
    let fvp = |v_flat: &DVector<T>| -> DVector<T> {
        let v = policy.from_flat_like(v_flat).expect("flat length");
        let mut out = policy.zeros_like();
        for cache in &caches {
            let jv = policy.jvp_mean(cache, &v);
            let (back, _) = policy.backward_mean(cache, &jv.component_mul(&inv_var));
            out.axpy(inv_n, &back);
        }
        out.r = &v.r * two;
        let mut flat = out.to_flat();
        flat.axpy(damping, v_flat, T::one());
        flat
    };
    let step_dir = conjugate_gradient(fvp, &g_flat, config.cg_iters, T::of(1e-10));
    let shs = step_dir.dot(&fvp(&step_dir));
    if !(shs > T::zero()) || !shs.is_finite() {
        log::warn!("TRPO skipped: non-positive curvature along the search direction");
        return Ok(unchanged);
    }
    let full = step_dir * (T::of(2.0 * config.trpo_epsilon) / shs).sqrt();
    let theta = policy.to_flat();
    let mut frac = T::one();
    for k in 0..=config.max_backtracks {
        let candidate = policy.from_flat_like(&(&theta + &full * frac))?;
        let (surrogate, kl) = trpo_surrogate(&candidate, &old, data)?;
        if surrogate > surrogate_before && kl <= config.trpo_epsilon && surrogate.is_finite() {
            *policy = candidate;
            return Ok(TrpoOutcome {
                accepted: true,
                mean_kl: kl,
                surrogate_before,
                surrogate_after: surrogate,
                backtracks: k,
            });
        }
        frac *= T::of(config.backtrack_factor);
    }
    log::debug!("TRPO line search failed after {} backtracks", config.max_backtracks);
    Ok(TrpoOutcome {
        backtracks: config.max_backtracks,
        ..unchanged
    })
}

/// Adam step on the filter parameters along the joint normalized gradient,
/// then TRPO on the reactive policy over re-filtered states.
pub fn alternating_update<T: Scalar>(
    agent: &mut Agent<T>,
    batch: &RolloutBatch<T>,
    state: &mut OptimizerState<T>,
) -> Result<UpdateStats> {
    let (g, pred_loss, cap_events) = joint_gradient(agent, batch, state)?;
    let l1 = g.iter().map(|x| x.abs().as_f64()).sum();
    let l2 = g.norm().as_f64();
    let states = if let Some(psr) = agent.psr.as_mut() {
        let n_psr = psr.num_params();
        let mut g_psr = g.rows(0, n_psr).into_owned();
        clip_global_norm(&mut g_psr, T::of(state.config.clip_norm));
        let mut theta = psr.to_flat();
        state.step_psr(&mut theta, &g_psr)?;
        psr.set_flat(&theta)?;
        batch
            .trajectories
            .iter()
            .map(|t| agent.policy_inputs(t))
            .collect::<Result<Vec<_>>>()?
    } else {
        batch.states.clone()
    };
    let (_, adv) = advantages(batch, &states, T::of(state.config.gamma))?;
    let data = TrpoData::from_nested(&states, &batch.raw_actions, &adv);
    let outcome = trpo_step(&mut agent.policy, &data, &state.config)?;
    state.iteration += 1;
    Ok(UpdateStats {
        pred_loss,
        mean_kl: outcome.mean_kl,
        grad_norm_l1: l1,
        grad_norm_l2: l2,
        trpo_accepted: Some(outcome.accepted),
        cap_events,
    })
}

/// Everything needed to run one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: String,
    pub noise_sigma: f64,
    /// Overrides the environment's episode horizon.
    pub horizon: Option<usize>,
    pub agent: String,
    pub psr_init: PsrInit,
    pub init: InitConfig,
    pub hidden: usize,
    pub iterations: usize,
    /// Minimum environment steps per training batch.
    pub batch_samples: usize,
    /// Minimum environment steps of blind exploration for initialization.
    pub exploration_samples: usize,
    pub optim: OptimConfig,
    pub seed: u64,
    /// Record elapsed milliseconds per iteration; otherwise `wall_ms` is 0
    /// and metrics are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "po-cartpole".into(),
            noise_sigma: 0.0,
            horizon: None,
            agent: "rpsp-alt".into(),
            psr_init: PsrInit::TwoStage,
            init: InitConfig::default(),
            hidden: DEFAULT_HIDDEN,
            iterations: 50,
            batch_samples: 10_000,
            exploration_samples: 10_000,
            optim: OptimConfig::default(),
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        AgentKind::parse(&self.agent)?;
        make_env_with_horizon(&self.env, self.noise_sigma, self.horizon)?;
        self.init.validate()?;
        self.optim.validate()?;
        if self.hidden == 0 || self.batch_samples == 0 {
            return Err(RpspError::InvalidConfig("hidden width and batch size must be positive".into()));
        }
        if AgentKind::parse(&self.agent)?.representation.uses_filter() && self.exploration_samples == 0 {
            return Err(RpspError::InvalidConfig("predictive agents need exploration samples".into()));
        }
        Ok(())
    }
}

/// One row of training metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Cumulative training-batch environment steps, including this batch.
    pub env_steps: usize,
    pub avg_return: f64,
    pub avg_length: f64,
    /// Zero for agents without a filter.
    pub pred_loss: f64,
    pub mean_kl: f64,
    pub grad_norm_l1: f64,
    pub grad_norm_l2: f64,
    pub cap_events: usize,
    pub wall_ms: u64,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str =
        "iteration,env_steps,avg_return,avg_length,pred_loss,mean_kl,grad_norm_l1,grad_norm_l2,cap_events,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.env_steps,
            self.avg_return,
            self.avg_length,
            self.pred_loss,
            self.mean_kl,
            self.grad_norm_l1,
            self.grad_norm_l2,
            self.cap_events,
            self.wall_ms
        )
    }
}

/// Incremental training loop: construction initializes the agent, each
/// [`Trainer::step`] collects a batch and applies one update.
pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub kind: AgentKind,
    pub agent: Agent<T>,
    pub state: OptimizerState<T>,
    env: Box<dyn Environment>,
    env_steps: usize,
    iteration: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let kind = AgentKind::parse(&config.agent)?;
        let mut env = make_env_with_horizon(&config.env, config.noise_sigma, config.horizon)?;
        let spec = env.spec().clone();
        let psr = if kind.representation.uses_filter() {
            let blind = BlindPolicy::for_spec(&spec);
            let explore = collect_samples::<T, _>(env.as_mut(), &blind, config.exploration_samples, derive_seed(config.seed, 1))?;
            let mut features = config.init.features.clone();
            features.seed = derive_seed(config.seed, 2);
            let pipeline = FeaturePipeline::fit(&explore.trajectories, &features).map_err(|e| e.in_stage("features"))?;
            Some(match config.psr_init {
                PsrInit::TwoStage => initialize_with_pipeline(pipeline, &explore.trajectories, &config.init)?,
                PsrInit::Random => random_psr(pipeline, &config.init, derive_seed(config.seed, 3)),
            })
        } else {
            None
        };
        let d_q = psr.as_ref().map_or(0, |p| p.dims().d_q());
        let d_in = kind.representation.input_dim(d_q, spec.obs_dim);
        let policy = ReactivePolicyParams::random(d_in, config.hidden, spec.act_dim, derive_seed(config.seed, 4));
        let agent = Agent::new(psr, policy, kind.representation, spec.obs_dim)?;
        Ok(Self {
            state: OptimizerState::new(config.optim.clone()),
            config,
            kind,
            agent,
            env,
            env_steps: 0,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Collects a batch under the current agent and updates it.
    pub fn step(&mut self) -> Result<IterationMetrics> {
        let start = Instant::now();
        let seed = derive_seed(self.config.seed, 1000 + self.iteration as u64);
        let batch = collect_samples(self.env.as_mut(), &self.agent, self.config.batch_samples, seed)?;
        self.env_steps += batch.total_steps();
        let stats = match self.kind.update {
            UpdateRule::Vrpg => vrpg_update(&mut self.agent, &batch, &mut self.state)?,
            UpdateRule::Alternating => alternating_update(&mut self.agent, &batch, &mut self.state)?,
        };
        let metrics = IterationMetrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            avg_return: batch.average_return(),
            avg_length: batch.mean_length(),
            pred_loss: stats.pred_loss,
            mean_kl: stats.mean_kl,
            grad_norm_l1: stats.grad_norm_l1,
            grad_norm_l2: stats.grad_norm_l2,
            cap_events: stats.cap_events,
            wall_ms: if self.config.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        self.iteration += 1;
        Ok(metrics)
    }
}

/// Runs the full loop and returns the final agent with per-iteration metrics.
pub fn rpspo_train<T: Scalar>(config: TrainConfig) -> Result<(Agent<T>, Vec<IterationMetrics>)> {
    let mut trainer = Trainer::<T>::new(config)?;
    let mut metrics = Vec::with_capacity(trainer.config.iterations);
    for _ in 0..trainer.config.iterations {
        metrics.push(trainer.step().map_err(|e| e.at_iteration(trainer.iteration()))?);
    }
    Ok((trainer.agent, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::baselines::StateRepresentation;
    use crate::seeding::rng_from_seed;
    use crate::trajectory::Trajectory;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn reward_to_go_examples() {
        assert_eq!(reward_to_go(&[1.0, 1.0, 1.0], 1.0), vec![3.0, 2.0, 1.0]);
        assert_eq!(reward_to_go(&[1.0, -2.0, 5.0], 0.0), vec![1.0, -2.0, 5.0]);
        assert_eq!(reward_to_go(&[1.0, 2.0, 4.0], 0.5), vec![3.0, 4.0, 4.0]);
    }

    proptest! {
        #[test]
        fn reward_to_go_recursion(rewards in prop::collection::vec(-10.0f64..10.0, 1..40), gamma in 0.0f64..=1.0) {
            let r = reward_to_go(&rewards, gamma);
            let n = rewards.len();
            prop_assert_eq!(r[n - 1], rewards[n - 1]);
            for t in 0..n - 1 {
                prop_assert_eq!(r[t], rewards[t] + gamma * r[t + 1]);
            }
        }
    }

    #[test]
    fn baseline_reproduces_constant_returns() {
        let states: Vec<_> = (0..20).map(|i| v(&[i as f64, (i * i) as f64 * 0.1])).collect();
        let refs: Vec<_> = states.iter().collect();
        let b = BaselineModel::fit(&refs, &vec![4.5; 20], BASELINE_RIDGE).unwrap();
        for s in &states {
            assert!((b.predict(s) - 4.5).abs() < 1e-6);
        }
    }

    #[test]
    fn baseline_residual_is_orthogonal_to_regressors() {
        let mut rng = rng_from_seed(3);
        let states: Vec<_> = (0..200).map(|_| v(&[rng.random::<f64>(), rng.random::<f64>()])).collect();
        let returns: Vec<f64> = states.iter().map(|s| 2.0 * s[0] - s[1] + rng.random::<f64>()).collect();
        let refs: Vec<_> = states.iter().collect();
        let b = BaselineModel::fit(&refs, &returns, 0.0).unwrap();
        let mut moment = DVector::<f64>::zeros(3);
        for (s, r) in states.iter().zip(&returns) {
            moment += with_bias(s) * (r - b.predict(s));
        }
        assert!(moment.amax() <= 1e-8, "{moment}");
    }

    /// Two-step MDP: the first reward depends on a coin-flip state, the
    /// second is linear in a standard normal action. The score is the
    /// log-prob gradient of the action mean.
    #[test]
    fn baseline_reduces_score_variance() {
        let mut violations = 0;
        for batch_seed in 0..100u64 {
            let mut rng = rng_from_seed(batch_seed);
            let mut states = Vec::new();
            let mut returns = Vec::new();
            let mut scores = Vec::new();
            for _ in 0..50 {
                let s: f64 = if rng.random::<bool>() { 1.0 } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                let reward1 = 5.0 + 3.0 * s;
                let reward2 = 0.5 * z;
                states.push(v(&[s]));
                returns.push(reward1 + reward2);
                scores.push(z);
            }
            let refs: Vec<_> = states.iter().collect();
            let b = BaselineModel::fit(&refs, &returns, BASELINE_RIDGE).unwrap();
            let var = |xs: &[f64]| {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
            };
            let raw: Vec<f64> = scores.iter().zip(&returns).map(|(g, r)| g * r).collect();
            let adv: Vec<f64> = scores
                .iter()
                .zip(&returns)
                .zip(&states)
                .map(|((g, r), s)| g * (r - b.predict(s)))
                .collect();
            if var(&adv) > var(&raw) {
                violations += 1;
            }
        }
        assert!(violations <= 5, "{violations} violations");
    }

    #[test]
    fn constant_gradient_normalizes_to_unit_norm() {
        let g1 = v(&[3.0, -4.0]);
        let g2 = v(&[0.5, 0.5, 0.5, 0.5]);
        let mut n = GradientNormalizer::new(0.1, 1.0);
        let mut last = (0.0, 0.0);
        for _ in 0..200 {
            let (a, b) = n.normalize(&g1, &g2);
            last = (a.norm(), b.norm());
        }
        assert!((last.0 - 1.0).abs() <= 1e-3 && (last.1 - 1.0).abs() <= 1e-3, "{last:?}");
    }

    #[test]
    fn beta_one_uses_the_current_norm_only() {
        let mut n = GradientNormalizer::new(1.0, 1.0);
        n.normalize(&v(&[100.0]), &v(&[100.0]));
        let (a, b) = n.normalize(&v(&[2.0]), &v(&[-3.0]));
        assert_eq!((a[0], b[0]), (1.0, -1.0));
    }

    #[test]
    fn doubling_a2_doubles_the_prediction_term() {
        let g = v(&[1.0, 2.0]);
        let (_, b1) = GradientNormalizer::new(0.1, 0.1).normalize(&g, &g);
        let (_, b2) = GradientNormalizer::new(0.1, 0.2).normalize(&g, &g);
        assert_eq!(b2, b1 * 2.0);
    }

    #[test]
    fn zero_average_skips_scaling() {
        let mut n = GradientNormalizer::new(0.1, 0.1);
        let (a, _) = n.normalize(&v(&[0.0, 0.0]), &v(&[1.0]));
        assert_eq!(a, v(&[0.0, 0.0]));
        assert_eq!(n.v[0], 0.0);
    }

    #[test]
    fn adam_leaves_parameters_on_zero_gradient() {
        let mut p = v(&[1.0, -2.0]);
        let mut adam = Adam::new(2, 1e-2);
        adam.step(&mut p, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(p, v(&[1.0, -2.0]));
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        let mut p = v(&[0.0, 0.0, 0.0]);
        let mut adam = Adam::new(3, 1e-2);
        adam.step(&mut p, &v(&[0.3, -7.0, 1e3])).unwrap();
        for (x, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - s * 1e-2).abs() <= 1e-6, "{p}");
        }
    }

    #[test]
    fn adam_minimizes_a_convex_quadratic() {
        // f(x) = ½ xᵀ A x − bᵀ x
        let a = DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 1.0]);
        let b = v(&[1.0, -2.0, 0.5]);
        let x_star = a.clone().lu().solve(&b).unwrap();
        let f = |x: &DVector<f64>| 0.5 * x.dot(&(&a * x)) - b.dot(x);
        let mut x = DVector::zeros(3);
        let mut adam = Adam::new(3, 1e-2);
        for _ in 0..2000 {
            let g = &a * &x - &b;
            adam.step(&mut x, &g).unwrap();
        }
        assert!(f(&x) - f(&x_star) <= 1e-4, "{}", f(&x) - f(&x_star));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = v(&[30.0, 40.0]);
        assert_eq!(clip_global_norm(&mut g, 10.0), 50.0);
        assert!((g.norm() - 10.0).abs() < 1e-12);
        let mut small = v(&[1.0]);
        clip_global_norm(&mut small, 10.0);
        assert_eq!(small, v(&[1.0]));
    }

    #[test]
    fn cg_with_identity_converges_in_one_iteration() {
        let g = v(&[1.0, -3.0, 2.0]);
        assert_eq!(conjugate_gradient(|x| x.clone(), &g, 1, 1e-10), g);
        assert_eq!(conjugate_gradient(|x| x.clone(), &DVector::zeros(3), 10, 1e-10), DVector::<f64>::zeros(3));
    }

    #[test]
    fn cg_matches_a_dense_solve() {
        let mut rng = rng_from_seed(5);
        let b = DMatrix::<f64>::from_fn(20, 20, |_, _| StandardNormal.sample(&mut rng));
        let h = &b * b.transpose() / 20.0 + DMatrix::identity(20, 20);
        let g = DVector::<f64>::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
        let x = conjugate_gradient(|p| &h * p, &g, 20, 1e-30);
        assert!((&h * &x - &g).norm() / g.norm() <= 1e-6);
        let exact = h.clone().lu().solve(&g).unwrap();
        assert!((&x - &exact).norm() / exact.norm() <= 1e-5);
    }

    /// Actions drawn from the policy on the constant input `[1]`, reward
    /// `−(a − target)²`, advantages centered.
    fn bandit_batch(policy: &ReactivePolicyParams<f64>, n: usize, target: f64, seed: u64) -> (Vec<Vec<DVector<f64>>>, Vec<Vec<DVector<f64>>>, Vec<Vec<f64>>) {
        let mut rng = rng_from_seed(seed);
        let state = v(&[1.0]);
        let dist = policy.forward(&state).unwrap();
        let actions: Vec<_> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let rewards: Vec<f64> = actions.iter().map(|a| -(a[0] - target).powi(2)).collect();
        let mean = rewards.iter().sum::<f64>() / n as f64;
        (
            vec![vec![state; n]],
            vec![actions],
            vec![rewards.iter().map(|r| r - mean).collect()],
        )
    }

    #[test]
    fn trpo_on_a_bandit_respects_the_trust_region() {
        let config = OptimConfig::default();
        let mut improved = 0;
        let mut total = 0;
        for seed in 0..5u64 {
            let mut policy = ReactivePolicyParams::random(1, 16, 1, seed);
            for it in 0..50u64 {
                let (s, a, adv) = bandit_batch(&policy, 500, 1.5, derive_seed(seed, it));
                let data = TrpoData::from_nested(&s, &a, &adv);
                let before = policy.clone();
                let out = trpo_step(&mut policy, &data, &config).unwrap();
                if out.accepted {
                    assert!(out.mean_kl <= config.trpo_epsilon, "{out:?}");
                    assert!(out.surrogate_after > out.surrogate_before);
                    improved += 1;
                } else {
                    assert_eq!(policy, before);
                }
                total += 1;
            }
            let start = ReactivePolicyParams::<f64>::random(1, 16, 1, seed).forward(&v(&[1.0])).unwrap().mean[0];
            let mean = policy.forward(&v(&[1.0])).unwrap().mean[0];
            assert!((mean - 1.5).abs() < (start - 1.5).abs(), "seed {seed}: {start} -> {mean}");
        }
        assert!(improved as f64 >= 0.9 * total as f64, "{improved}/{total}");
    }

    #[test]
    fn trpo_with_zero_advantages_is_a_no_op() {
        let mut policy = ReactivePolicyParams::random(1, 16, 1, 0);
        let before = policy.clone();
        let (s, a, adv) = bandit_batch(&policy, 50, 0.0, 1);
        let zeros: Vec<Vec<f64>> = adv.iter().map(|x| vec![0.0; x.len()]).collect();
        let out = trpo_step(&mut policy, &TrpoData::from_nested(&s, &a, &zeros), &OptimConfig::default()).unwrap();
        assert!(!out.accepted);
        assert_eq!(policy, before);
    }

    fn fm_agent(window: usize, seed: u64) -> Agent<f64> {
        let repr = StateRepresentation::FiniteMemory { window };
        Agent::new(None, ReactivePolicyParams::random(window.max(1), 16, 1, seed), repr, 1).unwrap()
    }

    /// One-step episodes with a constant observation, reward `−(a − target)²`.
    fn bandit_rollouts(agent: &Agent<f64>, n: usize, target: f64, seed: u64) -> RolloutBatch<f64> {
        use crate::envs::RecurrentPolicy;
        let mut rng = rng_from_seed(seed);
        let mut batch = RolloutBatch::empty();
        for _ in 0..n {
            let memory = agent.initial_memory();
            let raw = agent.sample_action(&memory, &mut rng);
            let r = -(raw[0] - target).powi(2);
            batch
                .trajectories
                .push(Trajectory::new(vec![raw.clone()], vec![v(&[1.0])], vec![r], true).unwrap());
            batch.raw_actions.push(vec![raw]);
            batch.states.push(vec![agent.state_vector(&memory)]);
        }
        batch
    }

    #[test]
    fn vrpg_gradient_points_toward_the_bandit_target() {
        for seed in 0..20u64 {
            let agent = fm_agent(1, seed);
            let target = 2.0;
            let batch = bandit_rollouts(&agent, 400, target, derive_seed(seed, 9));
            let (_, adv) = advantages(&batch, &batch.states, 0.99).unwrap();
            let g = vrpg_gradient(&agent, &batch, &adv).unwrap();
            // the input window is zero, so the mean is b2 plus a ReLU(b1) term; descent on
            // −J moves b2 toward the target
            let mean = agent.policy.forward(&batch.states[0][0]).unwrap().mean[0];
            assert!((-g.policy.b2[0]) * (target - mean) > 0.0, "seed {seed}");
        }
    }

    #[test]
    fn equal_returns_and_baseline_give_zero_gradient() {
        let agent = fm_agent(1, 0);
        let batch = bandit_rollouts(&agent, 20, 0.0, 1);
        let zeros: Vec<Vec<f64>> = batch.trajectories.iter().map(|t| vec![0.0; t.len()]).collect();
        let g = vrpg_gradient(&agent, &batch, &zeros).unwrap();
        assert!(g.to_flat().iter().all(|x| *x == 0.0));
    }

    fn small_config(agent: &str, seed: u64) -> TrainConfig {
        let mut c = TrainConfig {
            env: "lds".into(),
            agent: agent.into(),
            iterations: 3,
            batch_samples: 300,
            exploration_samples: 2000,
            seed,
            ..TrainConfig::default()
        };
        c.init.features = crate::features::FeatureConfig::with_dims(6, 3, 2, 0);
        c.init.features.d_immediate = 3;
        c.init.features.rff_features = 100;
        c.init.features.immediate_rff_features = 50;
        c
    }

    #[test]
    fn zero_step_size_leaves_parameters_unchanged() {
        let mut trainer = Trainer::<f64>::new(small_config("rpsp-vrpg", 1)).unwrap();
        trainer.state.config.learning_rate = 0.0;
        let before = trainer.agent.clone();
        trainer.step().unwrap();
        assert_eq!(trainer.agent, before);
    }

    #[test]
    fn alternating_phases_touch_disjoint_parameters() {
        let mut trainer = Trainer::<f64>::new(small_config("rpsp-alt", 2)).unwrap();
        let batch = collect_samples(trainer.env.as_mut(), &trainer.agent, 300, 5).unwrap();
        // zero rewards make every advantage zero, so TRPO is a no-op
        let mut flat = batch.clone();
        for t in &mut flat.trajectories {
            for r in &mut t.rewards {
                *r = 0.0;
            }
        }
        let before = trainer.agent.clone();
        alternating_update(&mut trainer.agent, &flat, &mut trainer.state).unwrap();
        assert_eq!(trainer.agent.policy, before.policy);
        assert_ne!(trainer.agent.psr, before.psr);

        // η = 0: the filter is untouched while TRPO still moves the policy
        let mut trainer = Trainer::<f64>::new(small_config("rpsp-alt", 2)).unwrap();
        trainer.state.config.learning_rate = 0.0;
        let before = trainer.agent.clone();
        let stats = alternating_update(&mut trainer.agent, &batch, &mut trainer.state).unwrap();
        assert_eq!(trainer.agent.psr, before.psr);
        if stats.trpo_accepted == Some(true) {
            assert_ne!(trainer.agent.policy, before.policy);
        }
    }

    #[test]
    fn zero_iterations_return_the_initialized_agent() {
        let mut c = small_config("rpsp-alt", 3);
        c.iterations = 0;
        let (agent, metrics) = rpspo_train::<f64>(c.clone()).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(agent, Trainer::<f64>::new(c).unwrap().agent);
    }

    #[test]
    fn training_is_deterministic() {
        for agent in ["rpsp-vrpg", "rpsp-alt+obs", "fm2"] {
            let (a1, m1) = rpspo_train::<f64>(small_config(agent, 7)).unwrap();
            let (a2, m2) = rpspo_train::<f64>(small_config(agent, 7)).unwrap();
            assert_eq!(a1, a2);
            let rows = |m: &[IterationMetrics]| m.iter().map(|r| r.csv_row()).collect::<Vec<_>>();
            assert_eq!(rows(&m1), rows(&m2));
            assert_eq!(m1.len(), 3);
        }
    }

    #[test]
    fn prediction_loss_decreases_after_a_small_step() {
        for seed in 0..5u64 {
            let config = TrainConfig {
                init: InitConfig::default(),
                exploration_samples: 5000,
                ..small_config("rpsp-vrpg", seed)
            };
            let trainer = Trainer::<f64>::new(config).unwrap();
            let mut agent = trainer.agent.clone();
            let mut env = make_env("lds", 0.0).unwrap();
            let batch = collect_samples(env.as_mut(), &agent, 500, seed).unwrap();
            let (loss, g) = prediction_gradient(&agent, &batch).unwrap().unwrap();
            let psr = agent.psr.as_mut().unwrap();
            let mut theta = psr.to_flat();
            Adam::new(theta.len(), 1e-3).step(&mut theta, &g.psr_flat().unwrap()).unwrap();
            psr.set_flat(&theta).unwrap();
            let after = crate::gradcore::prediction_loss(psr, &batch.trajectories).unwrap();
            assert!(after < loss, "seed {seed}: {loss} -> {after}");
        }
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let mut c = small_config("rpsp-alt", 0);
        c.optim.gamma = 1.5;
        assert!(Trainer::<f64>::new(c).err().unwrap().is_config_error());
        let mut c = small_config("gru", 0);
        c.iterations = 1;
        assert!(Trainer::<f64>::new(c).err().unwrap().is_config_error());
        let c = TrainConfig {
            env: "mujoco".into(),
            ..small_config("fm1", 0)
        };
        assert!(Trainer::<f64>::new(c).err().unwrap().is_config_error());
    }
}
