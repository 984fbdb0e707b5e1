//! Partially observable environments, blind exploration, observation noise
//! and batch collection.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, RpspError};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed, Rng};
use crate::trajectory::Trajectory;

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Maximum episode length.
    pub horizon: usize,
    /// Observation noise standard deviation.
    pub noise_sigma: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(RpspError::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(RpspError::InvalidConfig("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn clip_action(&self, a: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(a.len(), |i, _| a[i].clamp(self.action_low[i], self.action_high[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: DVector<f64>,
    pub reward: f64,
    /// Terminal condition reached (not counting the horizon).
    pub terminated: bool,
}

/// An episodic environment whose stochasticity is fully determined by the reset seed.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    /// Starts a new episode; returns the initial observation.
    fn reset(&mut self, seed: u64) -> DVector<f64>;
    /// Executes an action already clipped to the bounds.
    fn step(&mut self, action: &DVector<f64>) -> StepResult;
}

/// Continuous-force cart-pole observing only cart position and pole angle.
#[derive(Debug, Clone)]
pub struct PoCartPole {
    spec: EnvSpec,
    /// `[x, x_dot, theta, theta_dot]`
    pub state: [f64; 4],
    rng: Rng,
}

impl PoCartPole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const HALF_LENGTH: f64 = 0.5;
    pub const FORCE_MAG: f64 = 10.0;
    pub const TAU: f64 = 0.02;
    pub const ANGLE_LIMIT: f64 = 12.0 * 2.0 * PI / 360.0;
    pub const POSITION_LIMIT: f64 = 2.4;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "po-cartpole".into(),
                obs_dim: 2,
                act_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                horizon: 200,
                noise_sigma: 0.0,
            },
            state: [0.0; 4],
            rng: rng_from_seed(0),
        }
    }

    fn observe(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.state[0], self.state[2]])
    }
}

impl Default for PoCartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PoCartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.rng = rng_from_seed(seed);
        for s in self.state.iter_mut() {
            *s = self.rng.random_range(-0.05..0.05);
        }
        self.observe()
    }

    fn step(&mut self, action: &DVector<f64>) -> StepResult {
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = Self::FORCE_MAG * action[0];
        let total_mass = Self::MASS_CART + Self::MASS_POLE;
        let polemass_length = Self::MASS_POLE * Self::HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (Self::GRAVITY * sin - cos * temp)
            / (Self::HALF_LENGTH * (4.0 / 3.0 - Self::MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
        self.state = [
            x + Self::TAU * x_dot,
            x_dot + Self::TAU * x_acc,
            theta + Self::TAU * theta_dot,
            theta_dot + Self::TAU * theta_acc,
        ];
        let terminated = self.state[0].abs() > Self::POSITION_LIMIT
            || self.state[2].abs() > Self::ANGLE_LIMIT;
        StepResult {
            observation: self.observe(),
            reward: 1.0,
            terminated,
        }
    }
}

/// Torque-controlled pendulum observing `[cos θ, sin θ]`; θ = 0 is upright.
#[derive(Debug, Clone)]
pub struct PoPendulum {
    spec: EnvSpec,
    /// `[theta, theta_dot]`
    pub state: [f64; 2],
    rng: Rng,
}

impl PoPendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "po-pendulum".into(),
                obs_dim: 2,
                act_dim: 1,
                action_low: vec![-Self::MAX_TORQUE],
                action_high: vec![Self::MAX_TORQUE],
                horizon: 500,
                noise_sigma: 0.0,
            },
            state: [0.0; 2],
            rng: rng_from_seed(0),
        }
    }

    fn observe(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.state[0].cos(), self.state[0].sin()])
    }

    /// Mechanical energy of a uniform rod pivoting at one end.
    pub fn energy(&self) -> f64 {
        let inertia = Self::MASS * Self::LENGTH * Self::LENGTH / 3.0;
        0.5 * inertia * self.state[1] * self.state[1]
            + Self::MASS * Self::GRAVITY * Self::LENGTH / 2.0 * self.state[0].cos()
    }
}

impl Default for PoPendulum {
    fn default() -> Self {
        Self::new()
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Environment for PoPendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.rng = rng_from_seed(seed);
        self.state = [self.rng.random_range(-PI..PI), self.rng.random_range(-1.0..1.0)];
        self.observe()
    }

    fn step(&mut self, action: &DVector<f64>) -> StepResult {
        let [theta, theta_dot] = self.state;
        let u = action[0];
        let th = angle_normalize(theta);
        let reward = -(th * th + 0.1 * u * u);
        let new_dot = (theta_dot
            + (3.0 * Self::GRAVITY / (2.0 * Self::LENGTH) * theta.sin()
                + 3.0 / (Self::MASS * Self::LENGTH * Self::LENGTH) * u)
                * Self::DT)
            .clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.state = [theta + new_dot * Self::DT, new_dot];
        StepResult {
            observation: self.observe(),
            reward,
            terminated: false,
        }
    }
}

/// Linear-Gaussian system `x' = A x + B a + w`, `o = C x + v`.
///
/// A step with action `a_t` emits `o_t = C x_t + v_t` and then advances the state.
#[derive(Debug, Clone)]
pub struct SyntheticLds {
    spec: EnvSpec,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Process noise covariance.
    pub q: DMatrix<f64>,
    /// Observation noise covariance.
    pub r: DMatrix<f64>,
    /// Initial state covariance (mean zero).
    pub p0: DMatrix<f64>,
    pub state: DVector<f64>,
    rng: Rng,
    q_chol: DMatrix<f64>,
    r_chol: DMatrix<f64>,
    p0_chol: DMatrix<f64>,
}

fn chol_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.iter().all(|&x| x == 0.0) {
        return Ok(m.clone());
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| RpspError::InvalidConfig(format!("{what} covariance must be positive definite")))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl SyntheticLds {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p0: DMatrix<f64>,
        action_bound: f64,
        horizon: usize,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || q.shape() != (n, n) || p0.shape() != (n, n) {
            return Err(RpspError::InvalidConfig("LDS matrix dimensions disagree".into()));
        }
        if r.shape() != (c.nrows(), c.nrows()) {
            return Err(RpspError::InvalidConfig("observation noise has wrong shape".into()));
        }
        let rho = spectral_radius(&a);
        if rho > 0.9 + 1e-12 {
            return Err(RpspError::InvalidConfig(format!(
                "LDS transition spectral radius {rho:.4} exceeds 0.9"
            )));
        }
        let spec = EnvSpec {
            name: "lds".into(),
            obs_dim: c.nrows(),
            act_dim: b.ncols(),
            action_low: vec![-action_bound; b.ncols()],
            action_high: vec![action_bound; b.ncols()],
            horizon,
            noise_sigma: 0.0,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            q_chol: chol_factor(&q, "process noise")?,
            r_chol: chol_factor(&r, "observation noise")?,
            p0_chol: chol_factor(&p0, "initial state")?,
            state: DVector::zeros(n),
            a,
            b,
            c,
            q,
            r,
            p0,
            rng: rng_from_seed(0),
        })
    }

    /// Two-dimensional damped oscillator observed through its first coordinate.
    pub fn default_system() -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.3, -0.3, 0.6]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let q = DMatrix::from_diagonal_element(2, 2, 0.01);
        let r = DMatrix::from_element(1, 1, 0.05);
        let p0 = DMatrix::from_diagonal_element(2, 2, 0.5);
        Self::new(a, b, c, q, r, p0, 1.0, 50).expect("default LDS is valid")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn gaussian(&mut self, chol: &DMatrix<f64>) -> DVector<f64> {
        let z = DVector::from_fn(chol.ncols(), |_, _| StandardNormal.sample(&mut self.rng));
        chol * z
    }

    /// Steady-state one-step predictor covariance from the Riccati fixed point.
    pub fn riccati_prediction_covariance(&self) -> DMatrix<f64> {
        let mut p = self.p0.clone();
        for _ in 0..10_000 {
            let next = self.riccati_step(&p);
            let delta = (&next - &p).norm();
            p = next;
            if delta < 1e-15 {
                break;
            }
        }
        p
    }

    fn riccati_step(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let s = &self.c * p * self.c.transpose() + &self.r;
        let s_inv = s.try_inverse().expect("innovation covariance invertible");
        let apc = &self.a * p * self.c.transpose();
        &self.a * p * self.a.transpose() + &self.q - &apc * s_inv * apc.transpose()
    }

    /// Steady-state one-step observation prediction MSE: `tr(C P Cᵀ + R)`.
    pub fn oracle_mse(&self) -> f64 {
        let p = self.riccati_prediction_covariance();
        (&self.c * p * self.c.transpose() + &self.r).trace()
    }
}

impl Environment for SyntheticLds {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.rng = rng_from_seed(seed);
        let chol = self.p0_chol.clone();
        self.state = self.gaussian(&chol);
        DVector::zeros(self.spec.obs_dim)
    }

    fn step(&mut self, action: &DVector<f64>) -> StepResult {
        let r_chol = self.r_chol.clone();
        let q_chol = self.q_chol.clone();
        let clean = &self.c * &self.state;
        let observation = &clean + self.gaussian(&r_chol);
        let reward = -(clean.norm_squared() + 0.1 * action.norm_squared());
        let w = self.gaussian(&q_chol);
        self.state = &self.a * &self.state + &self.b * action + w;
        StepResult {
            observation,
            reward,
            terminated: false,
        }
    }
}

/// Kalman one-step observation predictor for a [`SyntheticLds`].
#[derive(Debug, Clone)]
pub struct KalmanPredictor<'a> {
    lds: &'a SyntheticLds,
    x_pred: DVector<f64>,
    p_pred: DMatrix<f64>,
    steady_gain: Option<DMatrix<f64>>,
}

impl<'a> KalmanPredictor<'a> {
    /// Exact time-varying filter started from the initial state prior.
    pub fn new(lds: &'a SyntheticLds) -> Self {
        Self {
            lds,
            x_pred: DVector::zeros(lds.state_dim()),
            p_pred: lds.p0.clone(),
            steady_gain: None,
        }
    }

    /// Fixed-gain filter using the Riccati fixed point.
    pub fn steady_state(lds: &'a SyntheticLds) -> Self {
        let p = lds.riccati_prediction_covariance();
        let s = &lds.c * &p * lds.c.transpose() + &lds.r;
        let gain = &p * lds.c.transpose() * s.try_inverse().expect("invertible");
        Self {
            lds,
            x_pred: DVector::zeros(lds.state_dim()),
            p_pred: p,
            steady_gain: Some(gain),
        }
    }

    /// Predicted observation for the current step.
    pub fn predict(&self) -> DVector<f64> {
        &self.lds.c * &self.x_pred
    }

    /// Incorporates the observation emitted with action `a` and advances.
    pub fn update(&mut self, a: &DVector<f64>, o: &DVector<f64>) {
        let lds = self.lds;
        let gain = match &self.steady_gain {
            Some(g) => g.clone(),
            None => {
                let s = &lds.c * &self.p_pred * lds.c.transpose() + &lds.r;
                &self.p_pred * lds.c.transpose() * s.try_inverse().expect("invertible")
            }
        };
        let innovation = o - &lds.c * &self.x_pred;
        let x_filt = &self.x_pred + &gain * innovation;
        self.x_pred = &lds.a * x_filt + &lds.b * a;
        if self.steady_gain.is_none() {
            let n = lds.state_dim();
            let p_filt = (DMatrix::identity(n, n) - &gain * &lds.c) * &self.p_pred;
            self.p_pred = &lds.a * p_filt * lds.a.transpose() + &lds.q;
        }
    }
}

/// Adds i.i.d. Gaussian noise to every observation coordinate.
pub struct ObservationNoise<E: Environment> {
    inner: E,
    spec: EnvSpec,
    rng: Rng,
}

impl<E: Environment> ObservationNoise<E> {
    pub fn new(inner: E, sigma: f64) -> Result<Self> {
        let mut spec = inner.spec().clone();
        spec.noise_sigma = sigma;
        spec.validate()?;
        Ok(Self {
            inner,
            spec,
            rng: rng_from_seed(0),
        })
    }

    fn corrupt(&mut self, mut o: DVector<f64>) -> DVector<f64> {
        if self.spec.noise_sigma > 0.0 {
            for v in o.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *v += self.spec.noise_sigma * z;
            }
        }
        o
    }
}

impl<E: Environment> Environment for ObservationNoise<E> {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.rng = rng_from_seed(derive_seed(seed, 0x6e6f6973));
        let o = self.inner.reset(seed);
        self.corrupt(o)
    }

    fn step(&mut self, action: &DVector<f64>) -> StepResult {
        let mut out = self.inner.step(action);
        out.observation = self.corrupt(out.observation);
        out
    }
}

/// Replaces the episode horizon of another environment.
pub struct HorizonLimit {
    inner: Box<dyn Environment>,
    spec: EnvSpec,
}

impl HorizonLimit {
    pub fn new(inner: Box<dyn Environment>, horizon: usize) -> Result<Self> {
        let mut spec = inner.spec().clone();
        spec.horizon = horizon;
        spec.validate()?;
        Ok(Self { inner, spec })
    }
}

impl Environment for HorizonLimit {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &DVector<f64>) -> StepResult {
        self.inner.step(action)
    }
}

/// [`make_env`] with an optional horizon override.
pub fn make_env_with_horizon(name: &str, noise_sigma: f64, horizon: Option<usize>) -> Result<Box<dyn Environment>> {
    let env = make_env(name, noise_sigma)?;
    match horizon {
        Some(h) => Ok(Box::new(HorizonLimit::new(env, h)?)),
        None => Ok(env),
    }
}

/// Builds an environment by name, wrapping it with observation noise when `sigma > 0`.
pub fn make_env(name: &str, noise_sigma: f64) -> Result<Box<dyn Environment>> {
    fn wrap<E: Environment + 'static>(env: E, sigma: f64) -> Result<Box<dyn Environment>> {
        if sigma > 0.0 {
            Ok(Box::new(ObservationNoise::new(env, sigma)?))
        } else if sigma == 0.0 {
            Ok(Box::new(env))
        } else {
            Err(RpspError::InvalidConfig("noise sigma must be non-negative".into()))
        }
    }
    match name {
        "po-cartpole" | "cartpole" => wrap(PoCartPole::new(), noise_sigma),
        "po-pendulum" | "pendulum" => wrap(PoPendulum::new(), noise_sigma),
        "lds" | "po-lds" => wrap(SyntheticLds::default_system(), noise_sigma),
        other => Err(RpspError::InvalidConfig(format!("unknown environment '{other}'"))),
    }
}

/// A policy with internal memory driven by executed actions and observations.
pub trait RecurrentPolicy<T: Scalar> {
    type Memory: Clone;

    fn initial_memory(&self) -> Self::Memory;

    /// Vector recorded per step alongside the trajectory (the policy's state input).
    fn state_vector(&self, memory: &Self::Memory) -> DVector<T>;

    /// Samples an unclipped action.
    fn sample_action(&self, memory: &Self::Memory, rng: &mut Rng) -> DVector<T>;

    /// Advances the memory with the executed action and the resulting observation.
    fn observe(&self, memory: &mut Self::Memory, action: &DVector<T>, obs: &DVector<T>, t: usize)
        -> Result<()>;
}

/// I.i.d. Gaussian actions with standard deviation equal to half the action bound.
#[derive(Debug, Clone)]
pub struct BlindPolicy {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BlindPolicy {
    pub fn for_spec(spec: &EnvSpec) -> Self {
        let mean = spec
            .action_low
            .iter()
            .zip(&spec.action_high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        let std = spec
            .action_low
            .iter()
            .zip(&spec.action_high)
            .map(|(l, h)| 0.25 * (h - l))
            .collect();
        Self { mean, std }
    }
}

impl<T: Scalar> RecurrentPolicy<T> for BlindPolicy {
    type Memory = ();

    fn initial_memory(&self) {}

    fn state_vector(&self, _: &()) -> DVector<T> {
        DVector::zeros(0)
    }

    fn sample_action(&self, _: &(), rng: &mut Rng) -> DVector<T> {
        DVector::from_fn(self.mean.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(self.mean[i] + self.std[i] * z)
        })
    }

    fn observe(&self, _: &mut (), _: &DVector<T>, _: &DVector<T>, _: usize) -> Result<()> {
        Ok(())
    }
}

/// Trajectories together with sampled actions and per-step policy states.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch<T: Scalar> {
    pub trajectories: Vec<Trajectory<T>>,
    /// Unclipped sampled actions, used for log-probabilities.
    pub raw_actions: Vec<Vec<DVector<T>>>,
    /// `states[i][t]` is the policy state used to choose `actions[t]`.
    pub states: Vec<Vec<DVector<T>>>,
}

impl<T: Scalar> RolloutBatch<T> {
    pub fn empty() -> Self {
        Self {
            trajectories: Vec::new(),
            raw_actions: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Average undiscounted episode return.
    pub fn average_return(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(|t| t.total_reward().as_f64()).sum::<f64>() / self.len() as f64
    }

    pub fn mean_length(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.total_steps() as f64 / self.len() as f64
    }
}

/// Rolls out one episode with its own environment and policy random streams.
pub fn run_episode<T: Scalar, P: RecurrentPolicy<T>>(
    env: &mut dyn Environment,
    policy: &P,
    seed: u64,
) -> Result<(Trajectory<T>, Vec<DVector<T>>, Vec<DVector<T>>)> {
    let spec = env.spec().clone();
    env.reset(derive_seed(seed, 1));
    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let mut memory = policy.initial_memory();
    let mut traj = Trajectory::empty();
    let mut raw = Vec::new();
    let mut states = Vec::new();
    for t in 0..spec.horizon {
        states.push(policy.state_vector(&memory));
        let sampled = policy.sample_action(&memory, &mut rng);
        let executed = spec.clip_action(&sampled.map(|x| x.as_f64()));
        let out = env.step(&executed);
        let executed_t = executed.map(T::of);
        let obs_t = out.observation.map(T::of);
        policy.observe(&mut memory, &executed_t, &obs_t, t)?;
        traj.push(executed_t, obs_t, T::of(out.reward));
        raw.push(sampled);
        if out.terminated {
            traj.terminated = true;
            break;
        }
    }
    Ok((traj, raw, states))
}

/// Collects exactly `m` episodes.
pub fn collect_trajectories<T: Scalar, P: RecurrentPolicy<T>>(
    env: &mut dyn Environment,
    policy: &P,
    m: usize,
    seed: u64,
) -> Result<RolloutBatch<T>> {
    let mut batch = RolloutBatch::empty();
    for i in 0..m {
        let (traj, raw, states) = run_episode(env, policy, derive_seed(seed, i as u64))?;
        batch.trajectories.push(traj);
        batch.raw_actions.push(raw);
        batch.states.push(states);
    }
    Ok(batch)
}

/// Collects whole episodes until at least `min_samples` steps are gathered.
pub fn collect_samples<T: Scalar, P: RecurrentPolicy<T>>(
    env: &mut dyn Environment,
    policy: &P,
    min_samples: usize,
    seed: u64,
) -> Result<RolloutBatch<T>> {
    let mut batch = RolloutBatch::empty();
    let mut i = 0u64;
    while batch.total_steps() < min_samples {
        let (traj, raw, states) = run_episode(env, policy, derive_seed(seed, i))?;
        batch.trajectories.push(traj);
        batch.raw_actions.push(raw);
        batch.states.push(states);
        i += 1;
    }
    Ok(batch)
}
