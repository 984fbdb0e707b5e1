//! Feature maps: random Fourier features of the RBF kernel, randomized PCA,
//! and the per-class pipeline (immediate, future, extended and history
//! features) used by the predictive state filter.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, RpspError};
use crate::linalg::kron;
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed};
use crate::trajectory::Trajectory;

/// Random Fourier feature map `x ↦ √(2/D)·cos(W x + b)` approximating an RBF kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap<T: Scalar> {
    /// `D x input_dim`, entries drawn from `N(0, σ⁻²)`.
    pub frequencies: DMatrix<T>,
    /// Phases in `[0, 2π)`.
    pub offsets: DVector<T>,
    pub bandwidth: T,
}

impl<T: Scalar> RffMap<T> {
    /// Samples a map with `num_features` features for inputs of `input_dim`.
    pub fn build(bandwidth: T, num_features: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(RpspError::InvalidConfig(format!(
                "RFF bandwidth must be positive, got {bandwidth:e}"
            )));
        }
        if num_features == 0 {
            return Err(RpspError::InvalidConfig("RFF feature count must be at least 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let inv_bw = T::one() / bandwidth;
        let frequencies = DMatrix::from_fn(num_features, input_dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(z) * inv_bw
        });
        let offsets = DVector::from_fn(num_features, |_, _| {
            T::of(rng.random::<f64>() * std::f64::consts::TAU)
        });
        Ok(Self {
            frequencies,
            offsets,
            bandwidth,
        })
    }

    pub fn num_features(&self) -> usize {
        self.offsets.len()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    fn scale(&self) -> T {
        (T::of(2.0) / T::of_usize(self.num_features())).sqrt()
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        debug_assert_eq!(x.len(), self.input_dim());
        let scale = self.scale();
        let mut z = &self.frequencies * x;
        z += &self.offsets;
        z.apply(|v| *v = scale * v.cos());
        z
    }

    /// Applies the map to every row of `inputs` (`N x input_dim`), giving `N x D`.
    pub fn apply_rows(&self, inputs: &DMatrix<T>) -> DMatrix<T> {
        let scale = self.scale();
        let mut z = inputs * self.frequencies.transpose();
        for mut row in z.row_iter_mut() {
            for (v, &b) in row.iter_mut().zip(self.offsets.iter()) {
                *v = scale * (*v + b).cos();
            }
        }
        z
    }
}

/// Orthonormal projection onto the leading principal subspace of centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection<T: Scalar> {
    /// `d x D` with orthonormal rows.
    pub basis: DMatrix<T>,
    /// Centering offset of length `D`.
    pub mean: DVector<T>,
}

impl<T: Scalar> PcaProjection<T> {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        &self.basis * (x - &self.mean)
    }

    pub fn reconstruct(&self, y: &DVector<T>) -> DVector<T> {
        self.basis.tr_mul(y) + &self.mean
    }

    /// Projects each row of `samples` (`N x D`), giving `N x d`.
    pub fn project_rows(&self, samples: &DMatrix<T>) -> DMatrix<T> {
        let mut centered = samples.clone();
        for mut row in centered.row_iter_mut() {
            for (v, &m) in row.iter_mut().zip(self.mean.iter()) {
                *v -= m;
            }
        }
        centered * self.basis.transpose()
    }
}

/// Randomized PCA with two power iterations.
pub fn fit_randomized_pca<T: Scalar>(
    samples: &DMatrix<T>,
    d: usize,
    oversampling: usize,
    seed: u64,
) -> Result<PcaProjection<T>> {
    fit_randomized_pca_iters(samples, d, oversampling, 2, seed)
}

/// Randomized range finder followed by an exact SVD of the small projected matrix.
pub fn fit_randomized_pca_iters<T: Scalar>(
    samples: &DMatrix<T>,
    d: usize,
    oversampling: usize,
    power_iters: usize,
    seed: u64,
) -> Result<PcaProjection<T>> {
    let (n, dim) = samples.shape();
    if d == 0 || d > n.min(dim) {
        return Err(RpspError::InvalidConfig(format!(
            "PCA target dimension {d} must be in 1..={} for {n} samples of dimension {dim}",
            n.min(dim)
        )));
    }
    let mean = samples.row_mean().transpose();
    let mut x = samples.clone();
    for mut row in x.row_iter_mut() {
        for (v, &m) in row.iter_mut().zip(mean.iter()) {
            *v -= m;
        }
    }

    let width = (d + oversampling).min(n).min(dim);
    let mut rng = rng_from_seed(seed);
    let omega = DMatrix::from_fn(dim, width, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::of(z)
    });
    let mut q = (&x * omega).qr().q();
    for _ in 0..power_iters {
        let z = x.tr_mul(&q).qr().q();
        q = (&x * z).qr().q();
    }
    let b = q.tr_mul(&x);
    let svd = b.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| RpspError::InvalidArgument("SVD did not converge".into()))?;
    // nalgebra does not guarantee ordering; sort by singular value.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let basis = DMatrix::from_fn(d, dim, |r, c| v_t[(order[r], c)]);
    Ok(PcaProjection { basis, mean })
}

/// A single feature class.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap<T: Scalar> {
    /// RFF followed by PCA, optionally preceded by a constant coordinate.
    Projected {
        rff: RffMap<T>,
        pca: Option<PcaProjection<T>>,
        bias: bool,
    },
    /// One-hot encoding of a window of categorical scalars.
    Indicator { categories: usize, window: usize },
    /// Raw input, optionally preceded by a constant coordinate.
    Linear { input_dim: usize, bias: bool },
}

impl<T: Scalar> FeatureMap<T> {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Projected { pca, bias, .. } => {
                pca.as_ref().map_or(0, |p| p.dim()) + usize::from(*bias)
            }
            FeatureMap::Indicator { categories, window } => categories.pow(*window as u32),
            FeatureMap::Linear { input_dim, bias } => input_dim + usize::from(*bias),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Projected { rff, .. } => rff.input_dim(),
            FeatureMap::Indicator { window, .. } => *window,
            FeatureMap::Linear { input_dim, .. } => *input_dim,
        }
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        match self {
            FeatureMap::Projected { rff, pca, bias } => {
                let offset = usize::from(*bias);
                let mut out = DVector::zeros(self.dim());
                if *bias {
                    out[0] = T::one();
                }
                if let Some(pca) = pca {
                    let y = pca.project(&rff.apply(x));
                    out.rows_mut(offset, y.len()).copy_from(&y);
                }
                out
            }
            FeatureMap::Indicator { categories, .. } => {
                let mut index = 0usize;
                for &v in x.iter() {
                    let c = v.as_f64().round();
                    debug_assert!(c >= 0.0 && (c as usize) < *categories);
                    index = index * categories + c as usize;
                }
                let mut out = DVector::zeros(self.dim());
                out[index] = T::one();
                out
            }
            FeatureMap::Linear { bias, .. } => {
                if *bias {
                    crate::linalg::with_bias(x)
                } else {
                    x.clone()
                }
            }
        }
    }
}

/// Settings for fitting a [`FeaturePipeline`] from data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// RFF count for sequence (future and history) features.
    pub rff_features: usize,
    /// RFF count for immediate observation and action features.
    pub immediate_rff_features: usize,
    /// Projection dimension for history features.
    pub d: usize,
    /// Output dimension of immediate features (`d_o = d_a`), including the bias coordinate.
    pub d_immediate: usize,
    /// Output dimension of future features (`d_fo = d_fa`), including the bias coordinate.
    pub d_future: usize,
    /// Future window length.
    pub k: usize,
    /// History window length in (action, observation) pairs.
    pub history_window: usize,
    pub bias: bool,
    pub pca_oversampling: usize,
    pub pca_power_iters: usize,
    /// Sample count used by the median bandwidth heuristic.
    pub bandwidth_subset: usize,
    /// Maximum number of samples used to fit each PCA.
    pub pca_samples: usize,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::with_dims(10, 5, 2, 0)
    }
}

impl FeatureConfig {
    /// `d_o = d_a = min(d, 10)`, history window equal to `k`.
    pub fn with_dims(d: usize, d_future: usize, k: usize, seed: u64) -> Self {
        Self {
            rff_features: 1000,
            immediate_rff_features: 200,
            d,
            d_immediate: d.min(10),
            d_future,
            k,
            history_window: k,
            bias: true,
            pca_oversampling: 10,
            pca_power_iters: 2,
            bandwidth_subset: 1000,
            pca_samples: 2000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RpspError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("future window k must be at least 1");
        }
        if self.rff_features == 0 || self.immediate_rff_features == 0 {
            return bad("RFF feature counts must be at least 1");
        }
        let min_dim = 1 + usize::from(self.bias);
        if self.d_immediate < min_dim || self.d_future < min_dim {
            return bad("immediate and future feature dimensions are too small");
        }
        if self.history_window > 0 && self.d == 0 {
            return bad("history dimension d must be positive");
        }
        if self.d_future - usize::from(self.bias) > self.rff_features
            || self.d_immediate - usize::from(self.bias) > self.immediate_rff_features
            || self.d > self.rff_features
        {
            return bad("projection dimension exceeds the RFF feature count");
        }
        Ok(())
    }
}

/// The five feature classes with their window lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline<T: Scalar> {
    pub immediate_obs: FeatureMap<T>,
    pub immediate_act: FeatureMap<T>,
    pub future_obs: FeatureMap<T>,
    pub future_act: FeatureMap<T>,
    pub history: FeatureMap<T>,
    pub k: usize,
    pub history_window: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
}

/// Dimensions derived from a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub d_o: usize,
    pub d_a: usize,
    pub d_fo: usize,
    pub d_fa: usize,
    pub d_h: usize,
}

impl FeatureDims {
    pub fn d_q(&self) -> usize {
        self.d_fo * self.d_fa
    }

    pub fn xi_obs(&self) -> usize {
        self.d_fo * self.d_o + self.d_o * self.d_o
    }

    pub fn xi_act(&self) -> usize {
        self.d_fa * self.d_a
    }

    /// Length of the skipped-future block `P_xi`.
    pub fn p_xi(&self) -> usize {
        self.d_fo * self.d_o * self.d_fa * self.d_a
    }

    /// Length of the immediate-observation block `P_o`.
    pub fn p_o(&self) -> usize {
        self.d_o * self.d_o * self.d_a
    }

    pub fn d_p(&self) -> usize {
        self.p_xi() + self.p_o()
    }
}

/// Concatenates `values[start..start + len]`, zero-filling out-of-range slots.
fn window_concat<T: Scalar>(
    values: &[DVector<T>],
    start: isize,
    len: usize,
    dim: usize,
) -> DVector<T> {
    let mut out = DVector::zeros(len * dim);
    for i in 0..len {
        let idx = start + i as isize;
        if idx >= 0 && (idx as usize) < values.len() {
            out.rows_mut(i * dim, dim).copy_from(&values[idx as usize]);
        }
    }
    out
}

impl<T: Scalar> FeaturePipeline<T> {
    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            d_o: self.immediate_obs.dim(),
            d_a: self.immediate_act.dim(),
            d_fo: self.future_obs.dim(),
            d_fa: self.future_act.dim(),
            d_h: self.history.dim(),
        }
    }

    /// Indicator features for discrete systems whose observations and
    /// actions are category indices stored as one-element vectors.
    pub fn indicator(n_obs: usize, n_act: usize, k: usize, history_window: usize) -> Self {
        Self {
            immediate_obs: FeatureMap::Indicator {
                categories: n_obs,
                window: 1,
            },
            immediate_act: FeatureMap::Indicator {
                categories: n_act,
                window: 1,
            },
            future_obs: FeatureMap::Indicator {
                categories: n_obs,
                window: k,
            },
            future_act: FeatureMap::Indicator {
                categories: n_act,
                window: k,
            },
            history: if history_window == 0 {
                FeatureMap::Linear {
                    input_dim: 0,
                    bias: false,
                }
            } else {
                FeatureMap::Indicator {
                    categories: n_obs * n_act,
                    window: history_window,
                }
            },
            k,
            history_window,
            obs_dim: 1,
            act_dim: 1,
        }
    }

    pub fn phi_obs(&self, o: &DVector<T>) -> DVector<T> {
        self.immediate_obs.apply(o)
    }

    pub fn phi_act(&self, a: &DVector<T>) -> DVector<T> {
        self.immediate_act.apply(a)
    }

    fn future_obs_input(&self, traj: &Trajectory<T>, t: usize) -> DVector<T> {
        window_concat(&traj.observations, t as isize, self.k, self.obs_dim)
    }

    fn future_act_input(&self, traj: &Trajectory<T>, t: usize) -> DVector<T> {
        window_concat(&traj.actions, t as isize, self.k, self.act_dim)
    }

    fn history_input(&self, traj: &Trajectory<T>, t: usize) -> DVector<T> {
        if matches!(self.history, FeatureMap::Indicator { .. }) {
            // pair (a, o) encoded as a single category a * n_obs + o
            let n_obs = match self.immediate_obs {
                FeatureMap::Indicator { categories, .. } => categories,
                _ => 1,
            };
            return DVector::from_fn(self.history_window, |i, _| {
                let idx = t as isize - self.history_window as isize + i as isize;
                if idx < 0 {
                    T::zero()
                } else {
                    let a = traj.actions[idx as usize][0].as_f64().round();
                    let o = traj.observations[idx as usize][0].as_f64().round();
                    T::of(a * n_obs as f64 + o)
                }
            });
        }
        let pair = self.act_dim + self.obs_dim;
        let mut out = DVector::zeros(self.history_window * pair);
        let start = t as isize - self.history_window as isize;
        for i in 0..self.history_window {
            let idx = start + i as isize;
            if idx >= 0 {
                let idx = idx as usize;
                out.rows_mut(i * pair, self.act_dim).copy_from(&traj.actions[idx]);
                out.rows_mut(i * pair + self.act_dim, self.obs_dim)
                    .copy_from(&traj.observations[idx]);
            }
        }
        out
    }

    /// History features at time `t`: the last `w_h` pairs before `t`, zero-padded.
    pub fn history_features(&self, traj: &Trajectory<T>, t: usize) -> DVector<T> {
        self.history.apply(&self.history_input(traj, t))
    }

    /// Number of emitted steps for a trajectory of length `len`.
    pub fn valid_steps(&self, len: usize) -> usize {
        len.saturating_sub(self.k + self.history_window)
    }

    /// Fits every feature class on exploration trajectories.
    pub fn fit(trajs: &[Trajectory<T>], config: &FeatureConfig) -> Result<Self> {
        config.validate()?;
        let first = trajs
            .iter()
            .find(|t| !t.is_empty())
            .ok_or_else(|| RpspError::InitializationData("no non-empty trajectories".into()))?;
        let obs_dim = first.observations[0].len();
        let act_dim = first.actions[0].len();
        let k = config.k;
        let w_h = config.history_window;
        let mut skeleton = Self {
            immediate_obs: FeatureMap::Linear {
                input_dim: obs_dim,
                bias: false,
            },
            immediate_act: FeatureMap::Linear {
                input_dim: act_dim,
                bias: false,
            },
            future_obs: FeatureMap::Linear {
                input_dim: k * obs_dim,
                bias: false,
            },
            future_act: FeatureMap::Linear {
                input_dim: k * act_dim,
                bias: false,
            },
            history: FeatureMap::Linear {
                input_dim: w_h * (obs_dim + act_dim),
                bias: false,
            },
            k,
            history_window: w_h,
            obs_dim,
            act_dim,
        };

        let mut imm_o = Vec::new();
        let mut imm_a = Vec::new();
        let mut fut_o = Vec::new();
        let mut fut_a = Vec::new();
        let mut hist = Vec::new();
        for traj in trajs {
            for t in 0..traj.len() {
                imm_o.push(traj.observations[t].clone());
                imm_a.push(traj.actions[t].clone());
                if t + k <= traj.len() {
                    fut_o.push(skeleton.future_obs_input(traj, t));
                    fut_a.push(skeleton.future_act_input(traj, t));
                }
                if t >= w_h && t + k < traj.len() && w_h > 0 {
                    hist.push(skeleton.history_input(traj, t));
                }
            }
        }

        let bias = config.bias;
        let b = usize::from(bias);
        let seed = config.seed;
        skeleton.immediate_obs = fit_projected(
            &imm_o,
            config.immediate_rff_features,
            config.d_immediate - b,
            bias,
            config,
            derive_seed(seed, 1),
        )?;
        skeleton.immediate_act = fit_projected(
            &imm_a,
            config.immediate_rff_features,
            config.d_immediate - b,
            bias,
            config,
            derive_seed(seed, 2),
        )?;
        skeleton.future_obs = fit_projected(
            &fut_o,
            config.rff_features,
            config.d_future - b,
            bias,
            config,
            derive_seed(seed, 3),
        )?;
        skeleton.future_act = fit_projected(
            &fut_a,
            config.rff_features,
            config.d_future - b,
            bias,
            config,
            derive_seed(seed, 4),
        )?;
        if w_h > 0 {
            skeleton.history = fit_projected(
                &hist,
                config.rff_features,
                config.d,
                false,
                config,
                derive_seed(seed, 5),
            )?;
        }
        Ok(skeleton)
    }

    /// Per-step features of one trajectory; too-short trajectories yield none.
    pub fn featurize_trajectory(&self, traj: &Trajectory<T>) -> PerStepFeatures<T> {
        let mut out = PerStepFeatures::empty(self.dims());
        self.featurize_into(traj, 0, &mut out);
        out
    }

    fn featurize_into(&self, traj: &Trajectory<T>, traj_index: usize, out: &mut PerStepFeatures<T>) {
        let len = traj.len();
        if len < self.k + 1 + self.history_window {
            log::warn!(
                "trajectory {traj_index} of length {len} is shorter than k + 1 + w_h = {}; skipped",
                self.k + 1 + self.history_window
            );
            out.skipped += 1;
            return;
        }
        let psi_o: Vec<DVector<T>> = (self.history_window..len - self.k + 1)
            .map(|t| self.future_obs.apply(&self.future_obs_input(traj, t)))
            .collect();
        let psi_a: Vec<DVector<T>> = (self.history_window..len - self.k + 1)
            .map(|t| self.future_act.apply(&self.future_act_input(traj, t)))
            .collect();
        for t in self.history_window..len - self.k {
            let i = t - self.history_window;
            out.steps.push(StepFeatures {
                traj: traj_index,
                t,
                phi_o: self.phi_obs(&traj.observations[t]),
                phi_a: self.phi_act(&traj.actions[t]),
                psi_o: psi_o[i].clone(),
                psi_a: psi_a[i].clone(),
                psi_o_next: psi_o[i + 1].clone(),
                psi_a_next: psi_a[i + 1].clone(),
                history: self.history_features(traj, t),
                weight: T::one(),
            });
        }
    }

    /// Features of a batch, with trajectory indices recorded per step.
    pub fn featurize_batch(&self, trajs: &[Trajectory<T>]) -> PerStepFeatures<T> {
        let mut out = PerStepFeatures::empty(self.dims());
        for (i, traj) in trajs.iter().enumerate() {
            self.featurize_into(traj, i, &mut out);
        }
        out
    }
}

fn median_pairwise_distance<T: Scalar>(samples: &[&DVector<T>]) -> f64 {
    let mut dists = Vec::with_capacity(samples.len() * samples.len().saturating_sub(1) / 2);
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            dists.push((samples[i] - samples[j]).norm().as_f64());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

fn subsample<'a, T: Scalar>(inputs: &'a [DVector<T>], n: usize, seed: u64) -> Vec<&'a DVector<T>> {
    if inputs.len() <= n {
        return inputs.iter().collect();
    }
    let mut rng = rng_from_seed(seed);
    let mut idx = sample_indices(&mut rng, inputs.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &inputs[i]).collect()
}

fn fit_projected<T: Scalar>(
    inputs: &[DVector<T>],
    num_features: usize,
    target_dim: usize,
    bias: bool,
    config: &FeatureConfig,
    seed: u64,
) -> Result<FeatureMap<T>> {
    if inputs.is_empty() {
        return Err(RpspError::InitializationData(
            "no samples available to fit a feature map".into(),
        ));
    }
    let input_dim = inputs[0].len();
    let subset = subsample(inputs, config.bandwidth_subset, derive_seed(seed, 11));
    let mut bandwidth = median_pairwise_distance(&subset);
    if !(bandwidth > 1e-12) {
        bandwidth = 1.0;
    }
    let rff = RffMap::build(T::of(bandwidth), num_features, input_dim, derive_seed(seed, 12))?;
    let pca = if target_dim == 0 {
        None
    } else {
        let rows = subsample(inputs, config.pca_samples, derive_seed(seed, 13));
        let mut raw = DMatrix::zeros(rows.len(), input_dim);
        for (r, x) in rows.iter().enumerate() {
            raw.row_mut(r).copy_from(&x.transpose());
        }
        let lifted = rff.apply_rows(&raw);
        Some(fit_randomized_pca_iters(
            &lifted,
            target_dim,
            config.pca_oversampling,
            config.pca_power_iters,
            derive_seed(seed, 14),
        )?)
    };
    Ok(FeatureMap::Projected { rff, pca, bias })
}

/// Features of one valid time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFeatures<T: Scalar> {
    pub traj: usize,
    pub t: usize,
    pub phi_o: DVector<T>,
    pub phi_a: DVector<T>,
    pub psi_o: DVector<T>,
    pub psi_a: DVector<T>,
    pub psi_o_next: DVector<T>,
    pub psi_a_next: DVector<T>,
    pub history: DVector<T>,
    /// Sample weight in the stage-1 regressions.
    pub weight: T,
}

impl<T: Scalar> StepFeatures<T> {
    /// `[ψᵒ_{t+1} ⊗ φᵒ_t ; φᵒ_t ⊗ φᵒ_t]`
    pub fn xi_obs(&self) -> DVector<T> {
        let a = kron(&self.psi_o_next, &self.phi_o);
        let b = kron(&self.phi_o, &self.phi_o);
        let mut out = DVector::zeros(a.len() + b.len());
        out.rows_mut(0, a.len()).copy_from(&a);
        out.rows_mut(a.len(), b.len()).copy_from(&b);
        out
    }

    /// `ψᵃ_{t+1} ⊗ φᵃ_t`
    pub fn xi_act(&self) -> DVector<T> {
        kron(&self.psi_a_next, &self.phi_a)
    }
}

/// Features for every valid step of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PerStepFeatures<T: Scalar> {
    pub dims: FeatureDims,
    pub steps: Vec<StepFeatures<T>>,
    /// Trajectories skipped for being too short.
    pub skipped: usize,
}

impl<T: Scalar> PerStepFeatures<T> {
    pub fn empty(dims: FeatureDims) -> Self {
        Self {
            dims,
            steps: Vec::new(),
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}
