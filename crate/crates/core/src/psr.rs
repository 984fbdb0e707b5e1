//! Predictive states and the recursive filter: linear extension, kernel
//! Bayes rule conditioning and one-step observation prediction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RpspError};
use crate::features::{FeatureDims, FeaturePipeline};
use crate::linalg::{inverse_with_condition, kron};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

/// Conditioning fails when `C + λI` has a 1-norm condition number above this.
pub const MAX_CONDITION: f64 = 1e12;

/// Default bound on `‖q‖` after each filter step.
pub const DEFAULT_STATE_CAP: f64 = 1e6;

/// Default KBR regularizer.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Operator `Q` (`d_fo x d_fa`) stored row-major as `q[i * d_fa + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveState<T: Scalar> {
    pub q: DVector<T>,
    pub d_fo: usize,
    pub d_fa: usize,
}

impl<T: Scalar> PredictiveState<T> {
    pub fn new(q: DVector<T>, d_fo: usize, d_fa: usize) -> Result<Self> {
        if q.len() != d_fo * d_fa {
            return Err(RpspError::InvalidArgument(format!(
                "predictive state has {} entries, expected {d_fo} x {d_fa}",
                q.len()
            )));
        }
        Ok(Self { q, d_fo, d_fa })
    }

    pub fn zeros(d_fo: usize, d_fa: usize) -> Self {
        Self {
            q: DVector::zeros(d_fo * d_fa),
            d_fo,
            d_fa,
        }
    }

    pub fn matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.d_fo, self.d_fa, self.q.as_slice())
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|x| x.is_finite())
    }
}

/// Extended state blocks.
///
/// `p_xi` is indexed `((i * d_o + j) * d_fa + k) * d_a + l` over
/// `(ψᵒ, φᵒ, ψᵃ, φᵃ)`; `p_o` is indexed `(i * d_o + j) * d_a + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState<T: Scalar> {
    pub p_xi: DVector<T>,
    pub p_o: DVector<T>,
    pub dims: FeatureDims,
}

impl<T: Scalar> ExtendedState<T> {
    pub fn xi(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        let d = &self.dims;
        self.p_xi[((i * d.d_o + j) * d.d_fa + k) * d.d_a + l]
    }

    pub fn o(&self, i: usize, j: usize, l: usize) -> T {
        let d = &self.dims;
        self.p_o[(i * d.d_o + j) * d.d_a + l]
    }

    /// Concatenation `[p_xi; p_o]`.
    pub fn flat(&self) -> DVector<T> {
        let mut out = DVector::zeros(self.p_xi.len() + self.p_o.len());
        out.rows_mut(0, self.p_xi.len()).copy_from(&self.p_xi);
        out.rows_mut(self.p_xi.len(), self.p_o.len()).copy_from(&self.p_o);
        out
    }
}

/// Intermediate values of one conditioning step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ConditionCache<T: Scalar> {
    pub phi_a: DVector<T>,
    pub phi_o: DVector<T>,
    /// `P_xi` contracted with `φᵃ`, indexed `(i * d_o + j) * d_fa + k`.
    pub contracted: DVector<T>,
    /// `(C + λI)⁻¹`
    pub inverse: DMatrix<T>,
    /// `(C + λI)⁻¹ φᵒ`
    pub m: DVector<T>,
}

/// One filter step with its cache, after normalization and the norm cap.
#[derive(Debug, Clone)]
pub struct FilterStep<T: Scalar> {
    pub state: PredictiveState<T>,
    pub cache: ConditionCache<T>,
    /// `W_ext_xi ×_a φᵃ`, so that the contracted `P_xi` is this times `q`.
    pub w_xi_a: DMatrix<T>,
    /// `W_ext_o ×_a φᵃ`
    pub w_o_a: DMatrix<T>,
    /// Norm of the conditioned state before unit normalization, when applied.
    pub pre_norm: Option<T>,
    /// Factor applied by the norm cap (1 when not capped).
    pub scale: T,
    pub capped: bool,
}

/// Filter parameters together with the feature pipeline they act on.
#[derive(Debug, Clone, PartialEq)]
pub struct PsrParams<T: Scalar> {
    pub q0: DVector<T>,
    /// `d_fo·d_o·d_fa·d_a x d_q`
    pub w_ext_xi: DMatrix<T>,
    /// `d_o²·d_a x d_q`
    pub w_ext_o: DMatrix<T>,
    /// `dim(O) x d_q·d_a`
    pub w_pred: DMatrix<T>,
    pub lambda: T,
    pub state_cap: T,
    /// Rescale every conditioned state to unit norm.
    pub normalize: bool,
    pub pipeline: FeaturePipeline<T>,
}

impl<T: Scalar> PsrParams<T> {
    /// All-zero maps with default λ and cap.
    pub fn zeros(pipeline: FeaturePipeline<T>) -> Self {
        let d = pipeline.dims();
        Self {
            q0: DVector::zeros(d.d_q()),
            w_ext_xi: DMatrix::zeros(d.p_xi(), d.d_q()),
            w_ext_o: DMatrix::zeros(d.p_o(), d.d_q()),
            w_pred: DMatrix::zeros(pipeline.obs_dim, d.d_q() * d.d_a),
            lambda: T::of(DEFAULT_LAMBDA),
            state_cap: T::of(DEFAULT_STATE_CAP),
            normalize: true,
            pipeline,
        }
    }

    pub fn dims(&self) -> FeatureDims {
        self.pipeline.dims()
    }

    pub fn obs_dim(&self) -> usize {
        self.pipeline.obs_dim
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(RpspError::InvalidArgument(format!("{what} has inconsistent dimensions")))
            }
        };
        check(self.q0.len() == d.d_q(), "q0")?;
        check(self.w_ext_xi.shape() == (d.p_xi(), d.d_q()), "W_ext_xi")?;
        check(self.w_ext_o.shape() == (d.p_o(), d.d_q()), "W_ext_o")?;
        check(self.w_pred.shape() == (self.obs_dim(), d.d_q() * d.d_a), "W_pred")?;
        if !(self.lambda > T::zero()) {
            return Err(RpspError::InvalidConfig("KBR regularizer must be positive".into()));
        }
        if !(self.state_cap > T::zero()) {
            return Err(RpspError::InvalidConfig("state cap must be positive".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> PredictiveState<T> {
        let d = self.dims();
        PredictiveState {
            q: self.q0.clone(),
            d_fo: d.d_fo,
            d_fa: d.d_fa,
        }
    }

    fn check_state(&self, q: &PredictiveState<T>) -> Result<()> {
        let d = self.dims();
        if q.q.len() != d.d_q() {
            return Err(RpspError::InvalidArgument(format!(
                "predictive state has {} entries, parameters expect {}",
                q.q.len(),
                d.d_q()
            )));
        }
        Ok(())
    }

    /// `P = W_ext q`.
    pub fn extend(&self, q: &PredictiveState<T>) -> Result<ExtendedState<T>> {
        self.check_state(q)?;
        Ok(ExtendedState {
            p_xi: &self.w_ext_xi * &q.q,
            p_o: &self.w_ext_o * &q.q,
            dims: self.dims(),
        })
    }

    /// Extension then conditioning, followed by unit normalization (when
    /// enabled) and the norm cap.
    pub fn filter(
        &self,
        q: &PredictiveState<T>,
        a: &DVector<T>,
        o: &DVector<T>,
    ) -> Result<PredictiveState<T>> {
        Ok(self.filter_step(q, a, o)?.state)
    }

    /// [`PsrParams::filter`] retaining the intermediate values.
    pub fn filter_step(
        &self,
        q: &PredictiveState<T>,
        a: &DVector<T>,
        o: &DVector<T>,
    ) -> Result<FilterStep<T>> {
        self.filter_step_with(&self.action_major_maps(), q, a, o)
    }

    /// Extension maps reordered for repeated filtering with these parameters.
    pub fn action_major_maps(&self) -> ActionMajorMaps<T> {
        let d_a = self.dims().d_a;
        ActionMajorMaps {
            xi: action_major(&self.w_ext_xi, d_a),
            o: action_major(&self.w_ext_o, d_a),
            d_a,
        }
    }

    /// [`PsrParams::filter_step`] using maps from
    /// [`PsrParams::action_major_maps`] of these same parameters.
    pub fn filter_step_with(
        &self,
        maps: &ActionMajorMaps<T>,
        q: &PredictiveState<T>,
        a: &DVector<T>,
        o: &DVector<T>,
    ) -> Result<FilterStep<T>> {
        self.check_state(q)?;
        check_lambda(self.lambda)?;
        let d = self.dims();
        let (phi_a, phi_o) = self.features(a, o, d)?;
        if maps.d_a != d.d_a || maps.xi.shape() != self.w_ext_xi.shape() || maps.o.shape() != self.w_ext_o.shape() {
            return Err(RpspError::InvalidArgument("reordered maps do not match the filter".into()));
        }
        let w_xi_a = contract_blocks(&maps.xi, &phi_a);
        let w_o_a = contract_blocks(&maps.o, &phi_a);
        let contracted = &w_xi_a * &q.q;
        let c_flat = &w_o_a * &q.q;
        let (mut state, cache) = condition_contracted(d, phi_a, phi_o, contracted, &c_flat, self.lambda)?;
        let mut pre_norm = None;
        if self.normalize {
            let n = state.q.norm();
            if n > T::zero() {
                state.q /= n;
                pre_norm = Some(n);
            }
        }
        let norm = state.q.norm();
        let (scale, capped) = if norm > self.state_cap {
            (self.state_cap / norm, true)
        } else {
            (T::one(), false)
        };
        if capped {
            state.q *= scale;
        }
        Ok(FilterStep {
            state,
            cache,
            w_xi_a,
            w_o_a,
            pre_norm,
            scale,
            capped,
        })
    }

    fn features(&self, a: &DVector<T>, o: &DVector<T>, d: FeatureDims) -> Result<(DVector<T>, DVector<T>)> {
        let phi_a = self.pipeline.phi_act(a);
        let phi_o = self.pipeline.phi_obs(o);
        if phi_a.len() != d.d_a || phi_o.len() != d.d_o {
            return Err(RpspError::InvalidArgument("feature dimensions disagree with the filter".into()));
        }
        Ok((phi_a, phi_o))
    }

    /// `W_pred (q ⊗ φᵃ(a))`.
    pub fn predict_observation(&self, q: &PredictiveState<T>, a: &DVector<T>) -> Result<DVector<T>> {
        self.check_state(q)?;
        let phi_a = self.pipeline.phi_act(a);
        Ok(&self.w_pred * kron(&q.q, &phi_a))
    }

    /// `[q0, q1, ..., q_T]` for a trajectory of length `T`.
    pub fn filter_trajectory(&self, traj: &Trajectory<T>) -> Result<Vec<PredictiveState<T>>> {
        let maps = self.action_major_maps();
        let mut states = Vec::with_capacity(traj.len() + 1);
        states.push(self.initial_state());
        for t in 0..traj.len() {
            let next = self
                .filter_step_with(&maps, &states[t], &traj.actions[t], &traj.observations[t])
                .map_err(|e| e.at_step(t))?;
            states.push(next.state);
        }
        Ok(states)
    }

    /// Filtered states of a trajectory and the number of capping events.
    pub fn filter_trajectory_counting(
        &self,
        traj: &Trajectory<T>,
    ) -> Result<(Vec<PredictiveState<T>>, usize)> {
        let mut states = Vec::with_capacity(traj.len() + 1);
        let mut caps = 0;
        let maps = self.action_major_maps();
        states.push(self.initial_state());
        for t in 0..traj.len() {
            let step = self
                .filter_step_with(&maps, &states[t], &traj.actions[t], &traj.observations[t])
                .map_err(|e| e.at_step(t))?;
            caps += usize::from(step.capped);
            states.push(step.state);
        }
        Ok((states, caps))
    }

    /// Number of trainable scalars in `[q0, W_ext_xi, W_ext_o, W_pred]`.
    pub fn num_params(&self) -> usize {
        self.q0.len() + self.w_ext_xi.len() + self.w_ext_o.len() + self.w_pred.len()
    }

    /// Trainable parameters as one vector, matrices row-major.
    pub fn to_flat(&self) -> DVector<T> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.q0.iter().copied());
        for m in [&self.w_ext_xi, &self.w_ext_o, &self.w_pred] {
            push_row_major(&mut out, m);
        }
        DVector::from_vec(out)
    }

    pub fn set_flat(&mut self, flat: &DVector<T>) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(RpspError::InvalidArgument(format!(
                "flat PSR vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for v in self.q0.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        for m in [&mut self.w_ext_xi, &mut self.w_ext_o, &mut self.w_pred] {
            offset = read_row_major(m, flat, offset);
        }
        Ok(())
    }
}

pub(crate) fn push_row_major<T: Scalar>(out: &mut Vec<T>, m: &DMatrix<T>) {
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter().copied());
    }
}

pub(crate) fn read_row_major<T: Scalar>(m: &mut DMatrix<T>, flat: &DVector<T>, mut offset: usize) -> usize {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[(r, c)] = flat[offset];
            offset += 1;
        }
    }
    offset
}

/// Conditions an extended state on the executed action and the observation.
pub fn condition<T: Scalar>(
    ext: &ExtendedState<T>,
    a: &DVector<T>,
    o: &DVector<T>,
    pipeline: &FeaturePipeline<T>,
    lambda: T,
) -> Result<PredictiveState<T>> {
    Ok(condition_cached(ext, a, o, pipeline, lambda)?.0)
}

fn condition_cached<T: Scalar>(
    ext: &ExtendedState<T>,
    a: &DVector<T>,
    o: &DVector<T>,
    pipeline: &FeaturePipeline<T>,
    lambda: T,
) -> Result<(PredictiveState<T>, ConditionCache<T>)> {
    check_lambda(lambda)?;
    let d = ext.dims;
    let phi_a = pipeline.phi_act(a);
    let phi_o = pipeline.phi_obs(o);
    if phi_a.len() != d.d_a || phi_o.len() != d.d_o {
        return Err(RpspError::InvalidArgument("feature dimensions disagree with the extended state".into()));
    }
    // C[i, j] = Σ_l P_o[i, j, l] φᵃ_l
    let po = DMatrix::from_row_slice(d.d_o * d.d_o, d.d_a, ext.p_o.as_slice());
    let c_flat = po * &phi_a;
    let pxi = DMatrix::from_row_slice(d.d_fo * d.d_o * d.d_fa, d.d_a, ext.p_xi.as_slice());
    let contracted = pxi * &phi_a;
    condition_contracted(d, phi_a, phi_o, contracted, &c_flat, lambda)
}

/// Extension maps with rows reordered so that the action-feature index is
/// the slowest, turning the contraction with `φᵃ` into a sum of contiguous
/// row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMajorMaps<T: Scalar> {
    xi: DMatrix<T>,
    o: DMatrix<T>,
    d_a: usize,
}

/// Row `r * d_a + l` of `w` becomes row `l * R + r`.
fn action_major<T: Scalar>(w: &DMatrix<T>, d_a: usize) -> DMatrix<T> {
    let rows = w.nrows() / d_a;
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    let n = w.nrows();
    for (src, dst) in w.as_slice().chunks_exact(n).zip(out.as_mut_slice().chunks_exact_mut(n)) {
        for r in 0..rows {
            for l in 0..d_a {
                dst[l * rows + r] = src[r * d_a + l];
            }
        }
    }
    out
}

/// `out[r, m] = Σ_l φᵃ_l w[l * R + r, m]` for an action-major `w`.
fn contract_blocks<T: Scalar>(w: &DMatrix<T>, phi_a: &DVector<T>) -> DMatrix<T> {
    let d_a = phi_a.len();
    let rows = w.nrows() / d_a;
    let mut out = DMatrix::zeros(rows, w.ncols());
    for (src, dst) in w.as_slice().chunks_exact(w.nrows()).zip(out.as_mut_slice().chunks_exact_mut(rows)) {
        for (block, &f) in src.chunks_exact(rows).zip(phi_a.iter()) {
            for (o, &x) in dst.iter_mut().zip(block) {
                *o += f * x;
            }
        }
    }
    out
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if lambda > T::zero() {
        Ok(())
    } else {
        Err(RpspError::InvalidArgument("KBR regularizer must be positive".into()))
    }
}

fn condition_contracted<T: Scalar>(
    d: FeatureDims,
    phi_a: DVector<T>,
    phi_o: DVector<T>,
    contracted: DVector<T>,
    c_flat: &DVector<T>,
    lambda: T,
) -> Result<(PredictiveState<T>, ConditionCache<T>)> {
    let mut m_mat = DMatrix::from_row_slice(d.d_o, d.d_o, c_flat.as_slice());
    for i in 0..d.d_o {
        m_mat[(i, i)] += lambda;
    }
    let (inverse, cond) = inverse_with_condition(&m_mat).ok_or(RpspError::FilterDegeneracy {
        step: 0,
        condition: f64::INFINITY,
    })?;
    if !(cond.as_f64() <= MAX_CONDITION) {
        return Err(RpspError::FilterDegeneracy {
            step: 0,
            condition: cond.as_f64(),
        });
    }
    let m = &inverse * &phi_o;

    let mut q = DVector::zeros(d.d_fo * d.d_fa);
    for i in 0..d.d_fo {
        for j in 0..d.d_o {
            let mj = m[j];
            let base = (i * d.d_o + j) * d.d_fa;
            for k in 0..d.d_fa {
                q[i * d.d_fa + k] += contracted[base + k] * mj;
            }
        }
    }
    Ok((
        PredictiveState {
            q,
            d_fo: d.d_fo,
            d_fa: d.d_fa,
        },
        ConditionCache {
            phi_a,
            phi_o,
            contracted,
            inverse,
            m,
        },
    ))
}
