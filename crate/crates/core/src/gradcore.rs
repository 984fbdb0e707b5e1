//! Reverse-mode gradients through the unrolled filter, prediction head and
//! reactive policy, plus a central finite-difference checker.

use nalgebra::{DMatrix, DVector};

use crate::agent::Agent;
use crate::baselines::{augment_state, empty_window, fm_state_update};
use crate::error::{Result, RpspError};
use crate::linalg::kron;
use crate::policy::ReactivePolicyParams;
use crate::psr::{FilterStep, PredictiveState, PsrParams};
use crate::scalar::Scalar;
use crate::seeding::rng_from_seed;
use crate::trajectory::Trajectory;

/// Gradients of the filter parameters, shaped like [`PsrParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsrGradients<T: Scalar> {
    pub q0: DVector<T>,
    pub w_ext_xi: DMatrix<T>,
    pub w_ext_o: DMatrix<T>,
    pub w_pred: DMatrix<T>,
}

impl<T: Scalar> PsrGradients<T> {
    pub fn zeros_like(p: &PsrParams<T>) -> Self {
        Self {
            q0: DVector::zeros(p.q0.len()),
            w_ext_xi: DMatrix::zeros(p.w_ext_xi.nrows(), p.w_ext_xi.ncols()),
            w_ext_o: DMatrix::zeros(p.w_ext_o.nrows(), p.w_ext_o.ncols()),
            w_pred: DMatrix::zeros(p.w_pred.nrows(), p.w_pred.ncols()),
        }
    }

    /// Same layout as [`PsrParams::to_flat`].
    pub fn to_flat(&self) -> DVector<T> {
        let mut out = Vec::with_capacity(self.q0.len() + self.w_ext_xi.len() + self.w_ext_o.len() + self.w_pred.len());
        out.extend(self.q0.iter().copied());
        for m in [&self.w_ext_xi, &self.w_ext_o, &self.w_pred] {
            for r in 0..m.nrows() {
                out.extend(m.row(r).iter().copied());
            }
        }
        DVector::from_vec(out)
    }

    fn add_scaled(&mut self, alpha: T, other: &Self) {
        self.q0.axpy(alpha, &other.q0, T::one());
        self.w_ext_xi += &other.w_ext_xi * alpha;
        self.w_ext_o += &other.w_ext_o * alpha;
        self.w_pred += &other.w_pred * alpha;
    }
}

/// Gradients of every trainable parameter of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradients<T: Scalar> {
    pub psr: Option<PsrGradients<T>>,
    pub policy: ReactivePolicyParams<T>,
}

impl<T: Scalar> ParameterGradients<T> {
    pub fn zeros_like(agent: &Agent<T>) -> Self {
        Self {
            psr: agent.psr.as_ref().map(PsrGradients::zeros_like),
            policy: agent.policy.zeros_like(),
        }
    }

    /// `[psr..., policy...]`, matching [`agent_to_flat`].
    pub fn to_flat(&self) -> DVector<T> {
        let policy = self.policy.to_flat();
        match &self.psr {
            Some(p) => {
                let psr = p.to_flat();
                let mut out = psr.as_slice().to_vec();
                out.extend(policy.iter().copied());
                DVector::from_vec(out)
            }
            None => policy,
        }
    }

    pub fn psr_flat(&self) -> Option<DVector<T>> {
        self.psr.as_ref().map(|p| p.to_flat())
    }

    pub fn policy_flat(&self) -> DVector<T> {
        self.policy.to_flat()
    }

    pub fn scale(&mut self, alpha: T) {
        if let Some(p) = &mut self.psr {
            p.q0 *= alpha;
            p.w_ext_xi *= alpha;
            p.w_ext_o *= alpha;
            p.w_pred *= alpha;
        }
        let current = self.policy.clone();
        self.policy.axpy(alpha - T::one(), &current);
    }

    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        if let (Some(a), Some(b)) = (&mut self.psr, &other.psr) {
            a.add_scaled(alpha, b);
        }
        self.policy.axpy(alpha, &other.policy);
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }
}

/// All trainable parameters of an agent as one vector.
pub fn agent_to_flat<T: Scalar>(agent: &Agent<T>) -> DVector<T> {
    let policy = agent.policy.to_flat();
    match &agent.psr {
        Some(p) => {
            let mut out = p.to_flat().as_slice().to_vec();
            out.extend(policy.iter().copied());
            DVector::from_vec(out)
        }
        None => policy,
    }
}

/// Inverse of [`agent_to_flat`].
pub fn agent_set_flat<T: Scalar>(agent: &mut Agent<T>, flat: &DVector<T>) -> Result<()> {
    let n_psr = agent.psr.as_ref().map_or(0, |p| p.num_params());
    let n_pol = agent.policy.num_params();
    if flat.len() != n_psr + n_pol {
        return Err(RpspError::InvalidArgument(format!(
            "flat agent vector has {} entries, expected {}",
            flat.len(),
            n_psr + n_pol
        )));
    }
    if let Some(p) = &mut agent.psr {
        p.set_flat(&flat.rows(0, n_psr).into_owned())?;
    }
    agent.policy.set_flat(&flat.rows(n_psr, n_pol).into_owned())
}

/// Per-step weights of the two objective terms, indexed `[trajectory][t]`.
///
/// An empty outer vector disables the term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepWeights<T: Scalar> {
    /// Multiplies `log π(raw action | input)`.
    pub log_prob: Vec<Vec<T>>,
    /// Multiplies `‖W_pred (q ⊗ φᵃ(a)) − o‖²`.
    pub prediction: Vec<Vec<T>>,
}

impl<T: Scalar> StepWeights<T> {
    /// Weight 1/N on the prediction term for every step, N the total step count.
    pub fn mean_prediction(trajectories: &[Trajectory<T>]) -> Self {
        let n: usize = trajectories.iter().map(|t| t.len()).sum();
        let w = T::one() / T::of_usize(n.max(1));
        Self {
            log_prob: Vec::new(),
            prediction: trajectories.iter().map(|t| vec![w; t.len()]).collect(),
        }
    }

    fn check(&self, trajectories: &[Trajectory<T>]) -> Result<()> {
        for (name, w) in [("log-prob", &self.log_prob), ("prediction", &self.prediction)] {
            if w.is_empty() {
                continue;
            }
            if w.len() != trajectories.len() || w.iter().zip(trajectories).any(|(w, t)| w.len() != t.len()) {
                return Err(RpspError::InvalidArgument(format!("{name} weights do not match the batch shape")));
            }
        }
        Ok(())
    }
}

/// Mean over steps of the squared one-step prediction error.
pub fn prediction_loss<T: Scalar>(params: &PsrParams<T>, trajectories: &[Trajectory<T>]) -> Result<T> {
    let mut total = T::zero();
    let mut n = 0usize;
    for traj in trajectories {
        let states = params.filter_trajectory(traj)?;
        for t in 0..traj.len() {
            let pred = params.predict_observation(&states[t], &traj.actions[t])?;
            total += (pred - &traj.observations[t]).norm_squared();
            n += 1;
        }
    }
    if n == 0 {
        return Err(RpspError::InvalidArgument("no steps to evaluate".into()));
    }
    Ok(total / T::of_usize(n))
}

/// Value of the weighted objective
/// `Σ_i Σ_t w¹_it log π(â_it | x_it) + w²_it ‖W_pred (q_it ⊗ φᵃ(a_it)) − o_it‖²`,
/// where `â` are the raw (unclipped) sampled actions.
pub fn objective<T: Scalar>(
    agent: &Agent<T>,
    trajectories: &[Trajectory<T>],
    raw_actions: &[Vec<DVector<T>>],
    weights: &StepWeights<T>,
) -> Result<T> {
    weights.check(trajectories)?;
    let mut total = T::zero();
    for (i, traj) in trajectories.iter().enumerate() {
        let states = match &agent.psr {
            Some(p) => Some(p.filter_trajectory(traj)?),
            None => None,
        };
        let mut window = empty_window(agent.representation.window(), agent.obs_dim);
        for t in 0..traj.len() {
            if !weights.log_prob.is_empty() {
                let input = match &states {
                    Some(s) => augment_state(&s[t].q, &window),
                    None => window.clone(),
                };
                let dist = agent.policy.forward(&input)?;
                total += weights.log_prob[i][t] * dist.log_prob(&raw_actions[i][t]);
            }
            if let (Some(p), Some(s), false) = (&agent.psr, &states, weights.prediction.is_empty()) {
                let pred = p.predict_observation(&s[t], &traj.actions[t])?;
                total += weights.prediction[i][t] * (pred - &traj.observations[t]).norm_squared();
            }
            if agent.representation.window() > 0 {
                window = fm_state_update(&window, &traj.observations[t])?;
            }
        }
    }
    Ok(total)
}

/// Exact gradient of [`objective`] by backpropagation through time.
///
/// The norm-cap rescaling is treated as a constant.
pub fn backward<T: Scalar>(
    agent: &Agent<T>,
    trajectories: &[Trajectory<T>],
    raw_actions: &[Vec<DVector<T>>],
    weights: &StepWeights<T>,
) -> Result<(T, ParameterGradients<T>)> {
    let out = backward_many(agent, trajectories, raw_actions, std::slice::from_ref(weights))?;
    let (value, grads) = out.results.into_iter().next().expect("one weight set");
    Ok((value, grads))
}

/// Results of [`backward_many`].
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOutput<T: Scalar> {
    /// Objective value and gradient per weight set, in input order.
    pub results: Vec<(T, ParameterGradients<T>)>,
    /// Norm-cap events in the shared forward pass.
    pub cap_events: usize,
}

/// Gradients of several weightings of the objective sharing one forward
/// pass per trajectory.
pub fn backward_many<T: Scalar>(
    agent: &Agent<T>,
    trajectories: &[Trajectory<T>],
    raw_actions: &[Vec<DVector<T>>],
    weights: &[StepWeights<T>],
) -> Result<BackwardOutput<T>> {
    for w in weights {
        w.check(trajectories)?;
        if !w.log_prob.is_empty()
            && (raw_actions.len() != trajectories.len()
                || raw_actions.iter().zip(trajectories).any(|(r, t)| r.len() != t.len()))
        {
            return Err(RpspError::InvalidArgument("raw actions do not match the batch shape".into()));
        }
    }
    let mut results: Vec<(T, ParameterGradients<T>)> =
        weights.iter().map(|_| (T::zero(), ParameterGradients::zeros_like(agent))).collect();
    let mut cap_events = 0;
    for (i, traj) in trajectories.iter().enumerate() {
        let fwd = Forward::run(agent, traj)?;
        cap_events += fwd.steps.iter().filter(|s| s.capped).count();
        for (w, (value, grads)) in weights.iter().zip(results.iter_mut()) {
            *value += reverse_sweep(agent, traj, &fwd, raw_actions.get(i), w, i, grads)?;
        }
    }
    Ok(BackwardOutput { results, cap_events })
}

/// Cached forward pass over one trajectory.
struct Forward<T: Scalar> {
    /// `q_0 .. q_T`; empty without a filter.
    states: Vec<PredictiveState<T>>,
    steps: Vec<FilterStep<T>>,
    windows: Vec<DVector<T>>,
}

impl<T: Scalar> Forward<T> {
    fn run(agent: &Agent<T>, traj: &Trajectory<T>) -> Result<Self> {
        let len = traj.len();
        let mut states = Vec::new();
        let mut steps = Vec::new();
        if let Some(p) = &agent.psr {
            states.reserve(len + 1);
            steps.reserve(len);
            states.push(p.initial_state());
            let maps = p.action_major_maps();
            for t in 0..len {
                let step = p
                    .filter_step_with(&maps, &states[t], &traj.actions[t], &traj.observations[t])
                    .map_err(|e| e.at_step(t))?;
                states.push(step.state.clone());
                steps.push(step);
            }
        }
        let mut windows = Vec::with_capacity(len);
        let mut window = empty_window(agent.representation.window(), agent.obs_dim);
        for t in 0..len {
            windows.push(window.clone());
            if agent.representation.window() > 0 {
                window = fm_state_update(&window, &traj.observations[t])?;
            }
        }
        Ok(Self { states, steps, windows })
    }

    fn input(&self, t: usize) -> DVector<T> {
        match self.states.get(t) {
            Some(s) => augment_state(&s.q, &self.windows[t]),
            None => self.windows[t].clone(),
        }
    }
}

fn reverse_sweep<T: Scalar>(
    agent: &Agent<T>,
    traj: &Trajectory<T>,
    fwd: &Forward<T>,
    raw: Option<&Vec<DVector<T>>>,
    weights: &StepWeights<T>,
    index: usize,
    grads: &mut ParameterGradients<T>,
) -> Result<T> {
    let len = traj.len();
    let use_lp = !weights.log_prob.is_empty();
    let use_pred = !weights.prediction.is_empty() && agent.psr.is_some();
    let d_q = fwd.states.first().map_or(0, |s| s.q.len());
    // columns ∂J/∂P_t of the extension-map gradients, and the states they multiply
    let (n_xi, n_o) = agent
        .psr
        .as_ref()
        .map_or((0, 0), |p| (p.w_ext_xi.nrows(), p.w_ext_o.nrows()));
    let n_steps = len.saturating_sub(1);
    let mut g_pxi_cols = DMatrix::<T>::zeros(n_xi, n_steps);
    let mut g_po_cols = DMatrix::<T>::zeros(n_o, n_steps);
    let mut q_rows = DMatrix::<T>::zeros(n_steps, d_q);

    let mut value = T::zero();
    // gradient w.r.t. q_{t+1}, carried backwards
    let mut g_next = DVector::<T>::zeros(d_q);
    for t in (0..len).rev() {
        let mut g_q = DVector::<T>::zeros(d_q);
        if let Some(p) = &agent.psr {
            if t + 1 < len {
                let step = &fwd.steps[t];
                let (g_contracted, g_c) = filter_step_backward(p, step, &g_next);
                g_q += step.w_xi_a.tr_mul(&g_contracted) + step.w_o_a.tr_mul(&g_c);
                kron_into(&g_contracted, &step.cache.phi_a, g_pxi_cols.column_mut(t).as_mut_slice());
                kron_into(&g_c, &step.cache.phi_a, g_po_cols.column_mut(t).as_mut_slice());
                q_rows.row_mut(t).tr_copy_from(&fwd.states[t].q);
            }
        }
        if use_lp {
            let w = weights.log_prob[index][t];
            let input = fwd.input(t);
            let raw = &raw.expect("raw actions checked")[t];
            let (dist, cache) = agent.policy.forward_cached(&input)?;
            value += w * dist.log_prob(raw);
            if w != T::zero() {
                let (g_mean, g_r) = dist.log_prob_grad(raw);
                let (mut g_pol, g_in) = agent.policy.backward_mean(&cache, &g_mean);
                g_pol.r = g_r;
                grads.policy.axpy(w, &g_pol);
                if d_q > 0 {
                    g_q.axpy(w, &g_in.rows(0, d_q).into_owned(), T::one());
                }
            }
        }
        if use_pred {
            let (p, pg) = (agent.psr.as_ref().unwrap(), grads.psr.as_mut().unwrap());
            let w = weights.prediction[index][t];
            let phi_a = &fwd.steps[t].cache.phi_a;
            let x = kron(&fwd.states[t].q, phi_a);
            let err = &p.w_pred * &x - &traj.observations[t];
            value += w * err.norm_squared();
            if w != T::zero() {
                let g_pred = err * (w + w);
                pg.w_pred.ger(T::one(), &g_pred, &x, T::one());
                let g_x = p.w_pred.tr_mul(&g_pred);
                let d_a = phi_a.len();
                for i in 0..d_q {
                    let mut acc = T::zero();
                    for l in 0..d_a {
                        acc += g_x[i * d_a + l] * phi_a[l];
                    }
                    g_q[i] += acc;
                }
            }
        }
        if !g_q.iter().all(|x| x.is_finite()) {
            return Err(RpspError::GradientOverflow {
                step: t,
                what: "predictive state gradient",
            });
        }
        g_next = g_q;
    }
    if let Some(pg) = &mut grads.psr {
        pg.q0 += &g_next;
        // Σ_t ∂J/∂P_t q_tᵀ
        pg.w_ext_xi.gemm(T::one(), &g_pxi_cols, &q_rows, T::one());
        pg.w_ext_o.gemm(T::one(), &g_po_cols, &q_rows, T::one());
        if !pg.w_ext_xi.iter().chain(pg.w_ext_o.iter()).all(|x| x.is_finite()) {
            return Err(RpspError::GradientOverflow {
                step: 0,
                what: "extension map gradient",
            });
        }
    }
    if !grads.policy.is_finite() {
        return Err(RpspError::GradientOverflow {
            step: 0,
            what: "policy gradient",
        });
    }
    Ok(value)
}

/// Backpropagates `g_out = ∂J/∂q_{t+1}` through the conditioning,
/// normalization and cap of one filter step; returns the gradients with
/// respect to `P_xi ×_a φᵃ` and `C = P_o ×_a φᵃ`.
fn filter_step_backward<T: Scalar>(p: &PsrParams<T>, step: &FilterStep<T>, g_out: &DVector<T>) -> (DVector<T>, DVector<T>) {
    let d = p.dims();
    let cache = &step.cache;
    // cap: constant rescaling
    let mut g = g_out * step.scale;
    // unit normalization: v = u / ‖u‖
    if let Some(n) = step.pre_norm {
        let v = &step.state.q / step.scale;
        let proj = v.dot(&g);
        g = (g - v * proj) / n;
    }
    // Q'[i,k] = Σ_j T[i,j,k] m_j
    let mut g_contracted = DVector::<T>::zeros(cache.contracted.len());
    let mut g_m = DVector::<T>::zeros(d.d_o);
    for i in 0..d.d_fo {
        for j in 0..d.d_o {
            let base = (i * d.d_o + j) * d.d_fa;
            let mj = cache.m[j];
            let mut acc = T::zero();
            for k in 0..d.d_fa {
                let gq = g[i * d.d_fa + k];
                g_contracted[base + k] = gq * mj;
                acc += gq * cache.contracted[base + k];
            }
            g_m[j] += acc;
        }
    }
    // m = M⁻¹ φᵒ  ⇒  ∂M = −M⁻ᵀ g_m mᵀ
    let u = cache.inverse.tr_mul(&g_m);
    let mut g_c = DVector::<T>::zeros(d.d_o * d.d_o);
    for i in 0..d.d_o {
        for j in 0..d.d_o {
            g_c[i * d.d_o + j] = -(u[i] * cache.m[j]);
        }
    }
    (g_contracted, g_c)
}

fn kron_into<T: Scalar>(a: &DVector<T>, b: &DVector<T>, out: &mut [T]) {
    for (chunk, &x) in out.chunks_exact_mut(b.len()).zip(a.iter()) {
        for (o, &y) in chunk.iter_mut().zip(b.iter()) {
            *o = x * y;
        }
    }
}

/// Worst coordinate of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifferenceReport {
    pub max_relative_error: f64,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Denominator floor in the relative error, so that coordinates whose true
/// derivative is zero are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares `gradient` against central differences of `objective` at
/// `params` with step `eps`. Every coordinate is checked when
/// `max_coords` is `None` or at least the dimension; otherwise a seeded
/// random subset of `max_coords` coordinates.
pub fn finite_difference_check<F>(
    objective: F,
    params: &DVector<f64>,
    gradient: &DVector<f64>,
    eps: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<FiniteDifferenceReport>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    finite_difference_check_with_floor(objective, params, gradient, eps, max_coords, seed, RELATIVE_ERROR_FLOOR)
}

/// [`finite_difference_check`] with an explicit denominator floor.
pub fn finite_difference_check_with_floor<F>(
    mut objective: F,
    params: &DVector<f64>,
    gradient: &DVector<f64>,
    eps: f64,
    max_coords: Option<usize>,
    seed: u64,
    floor: f64,
) -> Result<FiniteDifferenceReport>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(RpspError::InvalidArgument("finite-difference step must be positive".into()));
    }
    if params.len() != gradient.len() {
        return Err(RpspError::InvalidArgument("gradient and parameter lengths differ".into()));
    }
    let n = params.len();
    let coords: Vec<usize> = match max_coords {
        Some(m) if m < n => rand::seq::index::sample(&mut rng_from_seed(seed), n, m).into_vec(),
        _ => (0..n).collect(),
    };
    let mut report = FiniteDifferenceReport {
        max_relative_error: 0.0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    let mut theta = params.clone();
    for &c in &coords {
        let orig = theta[c];
        theta[c] = orig + eps;
        let plus = objective(&theta)?;
        theta[c] = orig - eps;
        let minus = objective(&theta)?;
        theta[c] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(gradient[c], numeric, floor);
        if err > report.max_relative_error || !err.is_finite() {
            report = FiniteDifferenceReport {
                max_relative_error: err,
                index: c,
                analytic: gradient[c],
                numeric,
                checked: coords.len(),
            };
        }
    }
    Ok(report)
}

/// A small instance for gradient checks: `d_fo = d_fa = 3`, `d_o = d_a = 2`,
/// trajectories of length 5 on the synthetic LDS.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub agent: Agent<f64>,
    pub trajectories: Vec<Trajectory<f64>>,
    pub raw_actions: Vec<Vec<DVector<f64>>>,
    pub advantages: Vec<Vec<f64>>,
}

impl TinyInstance {
    pub fn build(seed: u64) -> Result<Self> {
        use crate::baselines::StateRepresentation;
        use crate::envs::{collect_trajectories, BlindPolicy, Environment, SyntheticLds};
        use crate::features::FeatureConfig;
        use crate::init2sr::{initialize_psr, InitConfig};
        use crate::seeding::derive_seed;
        use rand_distr::{Distribution, StandardNormal};

        let mut env = SyntheticLds::default_system();
        let blind = BlindPolicy::for_spec(env.spec());
        let explore = collect_trajectories::<f64, _>(&mut env, &blind, 40, derive_seed(seed, 1))?;
        let mut features = FeatureConfig::with_dims(4, 3, 1, derive_seed(seed, 2));
        features.d_immediate = 2;
        features.rff_features = 100;
        features.immediate_rff_features = 50;
        let config = InitConfig {
            features,
            ..InitConfig::default()
        };
        let psr = initialize_psr(&explore.trajectories, &config)?;
        let repr = StateRepresentation::Predictive { obs_window: 0 };
        let d_in = repr.input_dim(psr.dims().d_q(), 1);
        let policy = ReactivePolicyParams::random(d_in, crate::policy::DEFAULT_HIDDEN, 1, derive_seed(seed, 3));
        let agent = Agent::new(Some(psr), policy, repr, 1)?;
        let batch = collect_trajectories(&mut env, &agent, 3, derive_seed(seed, 4))?;
        let len = 5;
        let trajectories: Vec<_> = batch
            .trajectories
            .iter()
            .map(|t| {
                Trajectory::new(
                    t.actions[..len].to_vec(),
                    t.observations[..len].to_vec(),
                    t.rewards[..len].to_vec(),
                    false,
                )
            })
            .collect::<Result<_>>()?;
        let raw_actions = batch.raw_actions.iter().map(|r| r[..len].to_vec()).collect();
        let mut rng = rng_from_seed(derive_seed(seed, 5));
        let advantages = (0..trajectories.len())
            .map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Ok(Self {
            agent,
            trajectories,
            raw_actions,
            advantages,
        })
    }

    /// Objective weights for the mean prediction loss alone.
    pub fn prediction_weights(&self) -> StepWeights<f64> {
        StepWeights::mean_prediction(&self.trajectories)
    }

    /// Objective weights for the surrogate `Σ_t log π(a_t | q_t) A_t`.
    pub fn surrogate_weights(&self) -> StepWeights<f64> {
        StepWeights {
            log_prob: self.advantages.clone(),
            prediction: Vec::new(),
        }
    }

    /// Backward versus central differences (step `eps`) over every parameter.
    pub fn check(&self, weights: &StepWeights<f64>, eps: f64) -> Result<FiniteDifferenceReport> {
        let (_, grads) = backward(&self.agent, &self.trajectories, &self.raw_actions, weights)?;
        let theta = agent_to_flat(&self.agent);
        let mut probe = self.agent.clone();
        finite_difference_check(
            |x| {
                agent_set_flat(&mut probe, x)?;
                objective(&probe, &self.trajectories, &self.raw_actions, weights)
            },
            &theta,
            &grads.to_flat(),
            eps,
            None,
            0,
        )
    }
}

/// Finite-difference results for the prediction loss and the policy-gradient surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckSummary {
    pub prediction: FiniteDifferenceReport,
    pub surrogate: FiniteDifferenceReport,
}

/// Runs both gradient checks on the tiny instance with `ε = 1e-5`.
pub fn gradient_check_suite(seed: u64) -> Result<GradientCheckSummary> {
    let inst = TinyInstance::build(seed)?;
    Ok(GradientCheckSummary {
        prediction: inst.check(&inst.prediction_weights(), 1e-5)?,
        surrogate: inst.check(&inst.surrogate_weights(), 1e-5)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_objective_gradient_is_recovered() {
        let theta = DVector::from_vec(vec![0.3, -1.2, 2.5, 0.0, 7.0]);
        let r = finite_difference_check(|x| Ok(x.norm_squared()), &theta, &(&theta * 2.0), 1e-5, None, 0).unwrap();
        assert!(r.max_relative_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn linear_objective_has_constant_gradient() {
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let theta = DVector::from_vec(vec![4.0, 5.0, -6.0]);
        let r = finite_difference_check(|x| Ok(c.dot(x)), &theta, &c, 1e-5, None, 0).unwrap();
        assert!(r.max_relative_error <= 1e-9, "{r:?}");
        let wrong = DVector::from_vec(vec![1.0, -2.0, 0.6]);
        let r = finite_difference_check(|x| Ok(c.dot(x)), &theta, &wrong, 1e-5, None, 0).unwrap();
        assert_eq!(r.index, 2);
    }

    #[test]
    fn subsampled_check_visits_the_requested_count() {
        let theta = DVector::from_element(500, 1.0);
        let r = finite_difference_check(|x| Ok(x.norm_squared()), &theta, &(&theta * 2.0), 1e-5, Some(200), 3).unwrap();
        assert_eq!(r.checked, 200);
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let theta = DVector::from_element(2, 1.0);
        assert!(finite_difference_check(|x| Ok(x.sum()), &theta, &theta, 0.0, None, 0).is_err());
    }

    #[test]
    fn tiny_instance_has_the_requested_shape() {
        let inst = TinyInstance::build(0).unwrap();
        let d = inst.agent.psr.as_ref().unwrap().dims();
        assert_eq!((d.d_fo, d.d_fa, d.d_o, d.d_a), (3, 3, 2, 2));
        assert!(inst.trajectories.iter().all(|t| t.len() == 5));
    }

    #[test]
    fn prediction_loss_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let inst = TinyInstance::build(seed).unwrap();
            let r = inst.check(&inst.prediction_weights(), 1e-5).unwrap();
            assert!(r.max_relative_error <= 1e-4, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let inst = TinyInstance::build(seed).unwrap();
            let r = inst.check(&inst.surrogate_weights(), 1e-5).unwrap();
            assert!(r.max_relative_error <= 1e-4, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn objective_value_matches_backward_value() {
        let inst = TinyInstance::build(1).unwrap();
        let mut w = inst.surrogate_weights();
        w.prediction = inst.prediction_weights().prediction;
        let (v, _) = backward(&inst.agent, &inst.trajectories, &inst.raw_actions, &w).unwrap();
        let o = objective(&inst.agent, &inst.trajectories, &inst.raw_actions, &w).unwrap();
        assert!((v - o).abs() <= 1e-12 * o.abs().max(1.0));
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let inst = TinyInstance::build(0).unwrap();
        let w = StepWeights {
            log_prob: inst.advantages.iter().map(|a| vec![0.0; a.len()]).collect(),
            prediction: Vec::new(),
        };
        let (_, g) = backward(&inst.agent, &inst.trajectories, &inst.raw_actions, &w).unwrap();
        assert!(g.to_flat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn prediction_loss_matches_mean_weighted_objective() {
        let inst = TinyInstance::build(2).unwrap();
        let psr = inst.agent.psr.as_ref().unwrap();
        let l = prediction_loss(psr, &inst.trajectories).unwrap();
        let o = objective(&inst.agent, &inst.trajectories, &inst.raw_actions, &inst.prediction_weights()).unwrap();
        assert!((l - o).abs() <= 1e-12);
    }

    #[test]
    fn zero_prediction_map_gives_mean_squared_observation() {
        let inst = TinyInstance::build(0).unwrap();
        let mut psr = inst.agent.psr.clone().unwrap();
        psr.w_pred.fill(0.0);
        let n: usize = inst.trajectories.iter().map(|t| t.len()).sum();
        let expected: f64 = inst
            .trajectories
            .iter()
            .flat_map(|t| t.observations.iter().map(|o| o.norm_squared()))
            .sum::<f64>()
            / n as f64;
        assert!((prediction_loss(&psr, &inst.trajectories).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn gradient_reaches_the_initial_state() {
        // T = 3 and only the last prediction counts, so q0 matters only
        // through two filter steps
        let inst = TinyInstance::build(0).unwrap();
        let trajs: Vec<_> = inst
            .trajectories
            .iter()
            .map(|t| Trajectory::new(t.actions[..3].to_vec(), t.observations[..3].to_vec(), t.rewards[..3].to_vec(), false).unwrap())
            .collect();
        let w = StepWeights {
            log_prob: Vec::new(),
            prediction: trajs.iter().map(|_| vec![0.0, 0.0, 1.0]).collect(),
        };
        let (_, g) = backward(&inst.agent, &trajs, &[], &w).unwrap();
        assert!(g.psr.unwrap().q0.norm() > 1e-8);
    }

    #[test]
    fn gradients_are_deterministic() {
        let inst = TinyInstance::build(4).unwrap();
        let w = inst.surrogate_weights();
        let a = backward(&inst.agent, &inst.trajectories, &inst.raw_actions, &w).unwrap();
        let b = backward(&inst.agent, &inst.trajectories, &inst.raw_actions, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_memory_agent_gets_policy_gradient_only() {
        use crate::baselines::StateRepresentation;
        let inst = TinyInstance::build(0).unwrap();
        let repr = StateRepresentation::FiniteMemory { window: 2 };
        let mut policy = ReactivePolicyParams::random(2, 16, 1, 7);
        // the initial window is zero, so zero biases would put every ReLU on its kink
        policy.b1 = DVector::from_fn(16, |i, _| 0.05 * (i as f64 - 7.5));
        let agent = Agent::new(None, policy, repr, 1).unwrap();
        let w = inst.surrogate_weights();
        let (_, g) = backward(&agent, &inst.trajectories, &inst.raw_actions, &w).unwrap();
        assert!(g.psr.is_none());
        let theta = agent_to_flat(&agent);
        let mut probe = agent.clone();
        let r = finite_difference_check(
            |x| {
                agent_set_flat(&mut probe, x)?;
                objective(&probe, &inst.trajectories, &inst.raw_actions, &w)
            },
            &theta,
            &g.to_flat(),
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn single_filter_step_gradient_is_tight() {
        // one extension, conditioning and normalization feeding one prediction
        for seed in 0..3 {
            let inst = TinyInstance::build(seed).unwrap();
            let trajs: Vec<_> = inst
                .trajectories
                .iter()
                .map(|t| Trajectory::new(t.actions[..2].to_vec(), t.observations[..2].to_vec(), t.rewards[..2].to_vec(), false).unwrap())
                .collect();
            let w = StepWeights {
                log_prob: Vec::new(),
                prediction: trajs.iter().map(|_| vec![0.0, 1.0]).collect(),
            };
            let (_, g) = backward(&inst.agent, &trajs, &[], &w).unwrap();
            let mut probe = inst.agent.clone();
            let g = g.to_flat();
            // coordinates three orders below the largest are limited by
            // round-off in the differences and compared absolutely
            let floor = 1e-3 * g.amax();
            let r = finite_difference_check_with_floor(
                |x| {
                    agent_set_flat(&mut probe, x)?;
                    objective(&probe, &trajs, &[], &w)
                },
                &agent_to_flat(&inst.agent),
                &g,
                1e-5,
                None,
                0,
                floor,
            )
            .unwrap();
            assert!(r.max_relative_error <= 1e-5, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn suite_reports_both_objectives() {
        let s = gradient_check_suite(11).unwrap();
        assert!(s.prediction.max_relative_error <= 1e-4);
        assert!(s.surrogate.max_relative_error <= 1e-4);
    }
}
