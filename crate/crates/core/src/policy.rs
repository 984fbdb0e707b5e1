//! Gaussian reactive policy with a one-hidden-layer ReLU mean network and a
//! state-independent diagonal covariance.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, RpspError};
use crate::psr::{push_row_major, read_row_major};
use crate::scalar::Scalar;
use crate::seeding::{rng_from_seed, Rng};

pub const DEFAULT_HIDDEN: usize = 16;

/// Initial log standard deviation.
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;

/// Mean network weights and log standard deviations. Also used as the
/// container for gradients with respect to these parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactivePolicyParams<T: Scalar> {
    /// `hidden x d_in`
    pub w1: DMatrix<T>,
    pub b1: DVector<T>,
    /// `dim(A) x hidden`
    pub w2: DMatrix<T>,
    pub b2: DVector<T>,
    /// Log standard deviation per action coordinate.
    pub r: DVector<T>,
}

/// Diagonal Gaussian over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution<T: Scalar> {
    pub mean: DVector<T>,
    pub std: DVector<T>,
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar> {
    pub input: DVector<T>,
    pub pre_activation: DVector<T>,
    pub hidden: DVector<T>,
}

impl<T: Scalar> ReactivePolicyParams<T> {
    pub fn zeros(d_in: usize, hidden: usize, d_act: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, d_in),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(d_act, hidden),
            b2: DVector::zeros(d_act),
            r: DVector::zeros(d_act),
        }
    }

    /// Fan-in uniform weights `U(-1/√fan_in, 1/√fan_in)`, zero biases,
    /// log standard deviation `log 0.5`.
    pub fn random(d_in: usize, hidden: usize, d_act: usize, seed: u64) -> Self {
        let mut p = Self::zeros(d_in, hidden, d_act);
        let mut rng = rng_from_seed(seed);
        let fill = |m: &mut DMatrix<T>, fan_in: usize, rng: &mut Rng| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in m.iter_mut() {
                *v = T::of(rng.random_range(-bound..=bound));
            }
        };
        fill(&mut p.w1, d_in, &mut rng);
        fill(&mut p.w2, hidden, &mut rng);
        p.r.fill(T::of(INITIAL_LOG_STD));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.w2.nrows()
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.action_dim())
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.r.len()
    }

    /// `[w1 (row-major), b1, w2 (row-major), b2, r]`
    pub fn to_flat(&self) -> DVector<T> {
        let mut out = Vec::with_capacity(self.num_params());
        push_row_major(&mut out, &self.w1);
        out.extend(self.b1.iter().copied());
        push_row_major(&mut out, &self.w2);
        out.extend(self.b2.iter().copied());
        out.extend(self.r.iter().copied());
        DVector::from_vec(out)
    }

    pub fn set_flat(&mut self, flat: &DVector<T>) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(RpspError::InvalidArgument(format!(
                "flat policy vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = read_row_major(&mut self.w1, flat, 0);
        for v in self.b1.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        offset = read_row_major(&mut self.w2, flat, offset);
        for v in self.b2.iter_mut().chain(self.r.iter_mut()) {
            *v = flat[offset];
            offset += 1;
        }
        Ok(())
    }

    pub fn from_flat_like(&self, flat: &DVector<T>) -> Result<Self> {
        let mut out = self.zeros_like();
        out.set_flat(flat)?;
        Ok(out)
    }

    fn check_input(&self, state: &DVector<T>) -> Result<()> {
        if state.len() != self.input_dim() {
            return Err(RpspError::InvalidArgument(format!(
                "policy input has {} entries, network expects {}",
                state.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, state: &DVector<T>) -> Result<(ActionDistribution<T>, ForwardCache<T>)> {
        self.check_input(state)?;
        let pre = &self.w1 * state + &self.b1;
        let hidden = pre.map(|x| x.max(T::zero()));
        let mean = &self.w2 * &hidden + &self.b2;
        Ok((
            ActionDistribution {
                mean,
                std: self.r.map(|x| x.exp()),
            },
            ForwardCache {
                input: state.clone(),
                pre_activation: pre,
                hidden,
            },
        ))
    }

    pub fn forward(&self, state: &DVector<T>) -> Result<ActionDistribution<T>> {
        Ok(self.forward_cached(state)?.0)
    }

    /// Backpropagates `∂L/∂μ` through the mean network.
    ///
    /// Returns parameter gradients (with `r` left zero) and `∂L/∂state`.
    pub fn backward_mean(&self, cache: &ForwardCache<T>, g_mean: &DVector<T>) -> (Self, DVector<T>) {
        let mut grad = self.zeros_like();
        grad.w2 = g_mean * cache.hidden.transpose();
        grad.b2 = g_mean.clone();
        let g_hidden = self.w2.transpose() * g_mean;
        let g_pre = g_hidden.zip_map(&cache.pre_activation, |g, p| if p > T::zero() { g } else { T::zero() });
        grad.w1 = &g_pre * cache.input.transpose();
        let g_input = self.w1.transpose() * &g_pre;
        grad.b1 = g_pre;
        (grad, g_input)
    }

    /// Directional derivative of the mean along parameter direction `v`.
    pub fn jvp_mean(&self, cache: &ForwardCache<T>, v: &Self) -> DVector<T> {
        let d_pre = &v.w1 * &cache.input + &v.b1;
        let d_hidden = d_pre.zip_map(&cache.pre_activation, |d, p| if p > T::zero() { d } else { T::zero() });
        &v.w2 * &cache.hidden + &self.w2 * d_hidden + &v.b2
    }

    /// Gradient of `log π(a | state)` with respect to the parameters and the state.
    pub fn log_prob_grad(&self, state: &DVector<T>, action: &DVector<T>) -> Result<(Self, DVector<T>)> {
        let (dist, cache) = self.forward_cached(state)?;
        let (g_mean, g_r) = dist.log_prob_grad(action);
        let (mut grad, g_state) = self.backward_mean(&cache, &g_mean);
        grad.r = g_r;
        Ok((grad, g_state))
    }

    pub fn axpy(&mut self, alpha: T, other: &Self) {
        self.w1 += &other.w1 * alpha;
        self.b1.axpy(alpha, &other.b1, T::one());
        self.w2 += &other.w2 * alpha;
        self.b2.axpy(alpha, &other.b2, T::one());
        self.r.axpy(alpha, &other.r, T::one());
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }
}

impl<T: Scalar> ActionDistribution<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `μ + σ ⊙ z` with `z ~ N(0, I)`.
    pub fn sample(&self, rng: &mut Rng) -> DVector<T> {
        DVector::from_fn(self.dim(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            self.mean[i] + self.std[i] * T::of(z)
        })
    }

    pub fn log_prob(&self, a: &DVector<T>) -> T {
        let half_log_2pi = T::of(0.5 * (2.0 * PI).ln());
        let mut total = T::zero();
        for i in 0..self.dim() {
            let z = (a[i] - self.mean[i]) / self.std[i];
            total -= T::of(0.5) * z * z + self.std[i].ln() + half_log_2pi;
        }
        total
    }

    /// `(∂ log p / ∂μ, ∂ log p / ∂r)` where `σ = exp(r)`.
    pub fn log_prob_grad(&self, a: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let z = DVector::from_fn(self.dim(), |i, _| (a[i] - self.mean[i]) / self.std[i]);
        let g_mean = z.zip_map(&self.std, |z, s| z / s);
        let g_r = z.map(|z| z * z - T::one());
        (g_mean, g_r)
    }

    /// `KL(self ‖ other)` in closed form.
    pub fn kl_divergence(&self, other: &Self) -> T {
        let mut total = T::zero();
        for i in 0..self.dim() {
            let (s1, s2) = (self.std[i], other.std[i]);
            let dm = self.mean[i] - other.mean[i];
            total += (s2 / s1).ln() + (s1 * s1 + dm * dm) / (T::of(2.0) * s2 * s2) - T::of(0.5);
        }
        total
    }

    pub fn entropy(&self) -> T {
        let c = T::of(0.5 * (1.0 + (2.0 * PI).ln()));
        self.std.iter().fold(T::zero(), |acc, &s| acc + s.ln() + c)
    }
}
