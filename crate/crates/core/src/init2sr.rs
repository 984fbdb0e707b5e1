//! Two-stage regression initialization of the filter parameters.
//!
//! Stage 1 regresses future-feature outer products on history features and
//! forms per-step conditional operators. Stage 2 fits the linear extension
//! map between the denoised predictive and extended states. The prediction
//! map is then fitted on states produced by the resulting filter.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, RpspError};
use crate::features::{FeatureConfig, FeatureDims, FeaturePipeline, PerStepFeatures, StepFeatures};
use crate::linalg::{kron, with_bias, RidgeAccumulator};
use crate::psr::{PsrParams, DEFAULT_LAMBDA, DEFAULT_STATE_CAP};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed};
use crate::trajectory::Trajectory;

/// Settings for [`initialize_psr`].
#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub features: FeatureConfig,
    pub stage1_ridge: f64,
    pub stage2_ridge: f64,
    pub prediction_ridge: f64,
    /// KBR regularizer of the resulting filter.
    pub lambda: f64,
    pub state_cap: f64,
    /// Unit-normalize filtered states.
    pub normalize: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            stage1_ridge: 1e-3,
            stage2_ridge: 1e-3,
            prediction_ridge: 1e-4,
            lambda: DEFAULT_LAMBDA,
            state_cap: DEFAULT_STATE_CAP,
            normalize: true,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        for (name, v) in [
            ("stage1_ridge", self.stage1_ridge),
            ("stage2_ridge", self.stage2_ridge),
            ("prediction_ridge", self.prediction_ridge),
        ] {
            if !(v >= 0.0) {
                return Err(RpspError::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        if !(self.lambda > 0.0) || !(self.state_cap > 0.0) {
            return Err(RpspError::InvalidConfig("lambda and state_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Regression of one conditional operator `C_{xy|h} (C_{yy|h} + ridge I)⁻¹`.
#[derive(Debug, Clone)]
struct OperatorModel<T: Scalar> {
    rows: usize,
    cols: usize,
    /// `rows·cols x (d_h + 1)`
    cross: DMatrix<T>,
    /// `cols² x (d_h + 1)`
    gram: DMatrix<T>,
}

impl<T: Scalar> OperatorModel<T> {
    fn evaluate(&self, h: &DVector<T>, ridge: T) -> Result<DVector<T>> {
        let cross = &self.cross * h;
        let gram = &self.gram * h;
        let cross = DMatrix::from_row_slice(self.rows, self.cols, cross.as_slice());
        let mut gram = DMatrix::from_row_slice(self.cols, self.cols, gram.as_slice());
        for i in 0..self.cols {
            gram[(i, i)] += ridge;
        }
        // X = cross · gram⁻¹  <=>  gramᵀ Xᵀ = crossᵀ
        let xt = gram
            .transpose()
            .lu()
            .solve(&cross.transpose())
            .ok_or_else(|| RpspError::Singular("stage-1 conditional covariance".into()))?;
        Ok(DVector::from_iterator(
            self.rows * self.cols,
            xt.transpose().row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
        ))
    }
}

/// Per-step stage-1 outputs, evaluated on demand from the fitted regressions.
#[derive(Debug, Clone)]
pub struct Stage1Estimates<T: Scalar> {
    pub dims: FeatureDims,
    pub ridge: T,
    /// `(trajectory, time)` of each estimate.
    pub index: Vec<(usize, usize)>,
    pub weights: Vec<T>,
    histories: Vec<DVector<T>>,
    q_model: OperatorModel<T>,
    xi_model: OperatorModel<T>,
    o_model: OperatorModel<T>,
}

impl<T: Scalar> Stage1Estimates<T> {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Denoised predictive state at estimate `i`, row-major `d_fo x d_fa`.
    pub fn q_bar(&self, i: usize) -> Result<DVector<T>> {
        self.q_model.evaluate(&self.histories[i], self.ridge)
    }

    /// Denoised extended state `[p_xi; p_o]` at estimate `i`.
    pub fn p_bar(&self, i: usize) -> Result<DVector<T>> {
        let xi = self.xi_model.evaluate(&self.histories[i], self.ridge)?;
        let o = self.o_model.evaluate(&self.histories[i], self.ridge)?;
        let mut out = DVector::zeros(xi.len() + o.len());
        out.rows_mut(0, xi.len()).copy_from(&xi);
        out.rows_mut(xi.len(), o.len()).copy_from(&o);
        Ok(out)
    }

    /// Denoised extended state for arbitrary (un-augmented) history features.
    pub fn p_bar_at(&self, history: &DVector<T>) -> Result<DVector<T>> {
        let h = with_bias(history);
        let xi = self.xi_model.evaluate(&h, self.ridge)?;
        let o = self.o_model.evaluate(&h, self.ridge)?;
        let mut out = DVector::zeros(xi.len() + o.len());
        out.rows_mut(0, xi.len()).copy_from(&xi);
        out.rows_mut(xi.len(), o.len()).copy_from(&o);
        Ok(out)
    }

    /// Denoised predictive state for arbitrary (un-augmented) history features.
    pub fn q_bar_at(&self, history: &DVector<T>) -> Result<DVector<T>> {
        self.q_model.evaluate(&with_bias(history), self.ridge)
    }
}

fn operator_accumulator<T: Scalar>(rows: usize, cols: usize, d_in: usize) -> (RidgeAccumulator<T>, RidgeAccumulator<T>) {
    (RidgeAccumulator::new(d_in, rows * cols), RidgeAccumulator::new(d_in, cols * cols))
}

/// Stage-1 regressions of outer-product features on `[1; h_t]`.
pub fn stage1_regression<T: Scalar>(features: &PerStepFeatures<T>, ridge: T) -> Result<Stage1Estimates<T>> {
    let d = features.dims;
    let d_in = d.d_h + 1;
    if features.len() < d_in {
        return Err(RpspError::InitializationData(format!(
            "stage 1 needs at least {d_in} valid time steps, got {}",
            features.len()
        )));
    }
    if !(ridge >= T::zero()) {
        return Err(RpspError::InvalidArgument("stage-1 ridge must be non-negative".into()));
    }
    let (mut q_cross, mut q_gram) = operator_accumulator::<T>(d.d_fo, d.d_fa, d_in);
    let (mut xi_cross, mut xi_gram) = operator_accumulator::<T>(d.d_fo * d.d_o, d.xi_act(), d_in);
    let (mut o_cross, mut o_gram) = operator_accumulator::<T>(d.d_o * d.d_o, d.d_a, d_in);
    let mut histories = Vec::with_capacity(features.len());
    let mut index = Vec::with_capacity(features.len());
    let mut weights = Vec::with_capacity(features.len());
    for s in &features.steps {
        let h = with_bias(&s.history);
        let w = s.weight;
        q_cross.add(&h, &kron(&s.psi_o, &s.psi_a), w);
        q_gram.add(&h, &kron(&s.psi_a, &s.psi_a), w);
        let (xo, xa) = xi_pair(s);
        xi_cross.add(&h, &kron(&xo, &xa), w);
        xi_gram.add(&h, &kron(&xa, &xa), w);
        let oo = kron(&s.phi_o, &s.phi_o);
        o_cross.add(&h, &kron(&oo, &s.phi_a), w);
        o_gram.add(&h, &kron(&s.phi_a, &s.phi_a), w);
        histories.push(h);
        index.push((s.traj, s.t));
        weights.push(w);
    }
    let model = |rows, cols, cross: RidgeAccumulator<T>, gram: RidgeAccumulator<T>| -> Result<OperatorModel<T>> {
        Ok(OperatorModel {
            rows,
            cols,
            cross: cross.solve_mean(ridge)?,
            gram: gram.solve_mean(ridge)?,
        })
    };
    Ok(Stage1Estimates {
        dims: d,
        ridge,
        index,
        weights,
        histories,
        q_model: model(d.d_fo, d.d_fa, q_cross, q_gram)?,
        xi_model: model(d.d_fo * d.d_o, d.xi_act(), xi_cross, xi_gram)?,
        o_model: model(d.d_o * d.d_o, d.d_a, o_cross, o_gram)?,
    })
}

/// `(ψᵒ_{t+1} ⊗ φᵒ_t, ψᵃ_{t+1} ⊗ φᵃ_t)`
fn xi_pair<T: Scalar>(s: &StepFeatures<T>) -> (DVector<T>, DVector<T>) {
    (kron(&s.psi_o_next, &s.phi_o), kron(&s.psi_a_next, &s.phi_a))
}

/// Ridge fit of `p̄_t ≈ W q̄_t`, split into `(W_ext_xi, W_ext_o)`.
pub fn stage2_regression<T: Scalar>(est: &Stage1Estimates<T>, ridge: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let pairs = (0..est.len()).map(|i| Ok((est.q_bar(i)?, est.p_bar(i)?, est.weights[i])));
    fit_extension(est.dims, pairs, ridge)
}

/// Stage-2 regression over explicit `(q̄, p̄, weight)` triples.
pub fn fit_extension<T: Scalar>(
    dims: FeatureDims,
    pairs: impl Iterator<Item = Result<(DVector<T>, DVector<T>, T)>>,
    ridge: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let mut acc = RidgeAccumulator::new(dims.d_q(), dims.d_p());
    for pair in pairs {
        let (q, p, w) = pair?;
        acc.add(&q, &p, w);
    }
    if acc.samples() < dims.d_q() + 1 {
        return Err(RpspError::InitializationData(format!(
            "stage 2 needs at least {} estimate pairs, got {}",
            dims.d_q() + 1,
            acc.samples()
        )));
    }
    let w = acc.solve_mean(ridge)?;
    Ok((w.rows(0, dims.p_xi()).into_owned(), w.rows(dims.p_xi(), dims.p_o()).into_owned()))
}

/// Normal equations of the regression from `q_t ⊗ φᵃ(a_t)` to `o_t` over filtered states.
pub fn prediction_statistics<T: Scalar>(
    params: &PsrParams<T>,
    trajectories: &[Trajectory<T>],
) -> Result<RidgeAccumulator<T>> {
    let d = params.dims();
    let mut acc = RidgeAccumulator::new(d.d_q() * d.d_a, params.obs_dim());
    for traj in trajectories {
        let states = params.filter_trajectory(traj)?;
        for t in 0..traj.len() {
            let x = kron(&states[t].q, &params.pipeline.phi_act(&traj.actions[t]));
            acc.add(&x, &traj.observations[t], T::one());
        }
    }
    Ok(acc)
}

/// Fits `W_pred` on states filtered with the current extension maps.
pub fn fit_w_pred<T: Scalar>(params: &PsrParams<T>, trajectories: &[Trajectory<T>], ridge: T) -> Result<DMatrix<T>> {
    let acc = prediction_statistics(params, trajectories)?;
    if acc.samples() == 0 {
        return Err(RpspError::InitializationData("no steps to fit the prediction map".into()));
    }
    acc.solve_mean(ridge)
}

/// Runs both stages and the prediction fit with a given feature pipeline.
pub fn initialize_with_pipeline<T: Scalar>(
    pipeline: FeaturePipeline<T>,
    trajectories: &[Trajectory<T>],
    config: &InitConfig,
) -> Result<PsrParams<T>> {
    let features = pipeline.featurize_batch(trajectories);
    if features.skipped > 0 {
        log::warn!("{} trajectories too short for initialization were skipped", features.skipped);
    }
    let est = stage1_regression(&features, T::of(config.stage1_ridge)).map_err(|e| e.in_stage("stage 1"))?;
    let (w_xi, w_o) = stage2_regression(&est, T::of(config.stage2_ridge)).map_err(|e| e.in_stage("stage 2"))?;

    let earliest = pipeline.history_window;
    let mut q0 = DVector::zeros(est.dims.d_q());
    let mut total = T::zero();
    for i in 0..est.len() {
        if est.index[i].1 == earliest {
            q0 += est.q_bar(i)? * est.weights[i];
            total += est.weights[i];
        }
    }
    if total > T::zero() {
        q0 /= total;
    }

    let mut params = PsrParams::zeros(pipeline);
    params.q0 = q0;
    params.w_ext_xi = w_xi;
    params.w_ext_o = w_o;
    params.lambda = T::of(config.lambda);
    params.state_cap = T::of(config.state_cap);
    params.normalize = config.normalize;
    params.w_pred = fit_w_pred(&params, trajectories, T::of(config.prediction_ridge))
        .map_err(|e| e.in_stage("prediction map"))?;
    params.validate()?;
    Ok(params)
}

/// Fits features on exploration trajectories and initializes the filter.
pub fn initialize_psr<T: Scalar>(trajectories: &[Trajectory<T>], config: &InitConfig) -> Result<PsrParams<T>> {
    config.validate()?;
    let pipeline = FeaturePipeline::fit(trajectories, &config.features).map_err(|e| e.in_stage("features"))?;
    initialize_with_pipeline(pipeline, trajectories, config)
}

/// Random filter parameters on a fitted pipeline: every entry of `q0` and
/// the maps is drawn from `N(0, 1 / d_q)`.
pub fn random_psr<T: Scalar>(pipeline: FeaturePipeline<T>, config: &InitConfig, seed: u64) -> PsrParams<T> {
    let mut params = PsrParams::zeros(pipeline);
    params.lambda = T::of(config.lambda);
    params.state_cap = T::of(config.state_cap);
    params.normalize = config.normalize;
    let std = 1.0 / (params.dims().d_q() as f64).sqrt();
    let mut rng = rng_from_seed(derive_seed(seed, 0x7073_72));
    let mut draw = || {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::of(std * z)
    };
    let mut flat = params.to_flat();
    for v in flat.iter_mut() {
        *v = draw();
    }
    params.set_flat(&flat).expect("length matches");
    params
}

/// Mean squared one-step observation prediction error over all steps.
pub fn prediction_mse<T: Scalar>(params: &PsrParams<T>, trajectories: &[Trajectory<T>]) -> Result<f64> {
    let mut sq = 0.0;
    let mut n = 0usize;
    for traj in trajectories {
        let states = params.filter_trajectory(traj)?;
        for t in 0..traj.len() {
            let pred = params.predict_observation(&states[t], &traj.actions[t])?;
            sq += (pred - &traj.observations[t]).map(|x| x.as_f64()).norm_squared();
            n += 1;
        }
    }
    if n == 0 {
        return Err(RpspError::InvalidArgument("no steps to evaluate".into()));
    }
    Ok(sq / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{collect_trajectories, BlindPolicy, Environment, KalmanPredictor, SyntheticLds};
    use crate::hmm::ControlledHmm;
    use crate::seeding::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn weighted_features(hmm: &ControlledHmm, probs: &[f64], k: usize, w_h: usize, len: usize) -> (FeaturePipeline<f64>, PerStepFeatures<f64>) {
        let pipeline = FeaturePipeline::<f64>::indicator(hmm.n_obs(), hmm.n_act(), k, w_h);
        let mut features = PerStepFeatures::empty(pipeline.dims());
        for (i, (traj, p)) in hmm.enumerate(len, probs).into_iter().enumerate() {
            let mut f = pipeline.featurize_trajectory(&traj);
            for s in f.steps.iter_mut() {
                s.weight = p;
                s.traj = i;
            }
            features.steps.append(&mut f.steps);
        }
        (pipeline, features)
    }

    fn lds_batch(n: usize, seed: u64) -> Vec<Trajectory<f64>> {
        let mut lds = SyntheticLds::default_system();
        let blind = BlindPolicy::for_spec(lds.spec());
        collect_trajectories(&mut lds, &blind, n, seed).unwrap().trajectories
    }

    fn kalman_mse(trajs: &[Trajectory<f64>]) -> f64 {
        let lds = SyntheticLds::default_system();
        let mut sq = 0.0;
        let mut n = 0;
        for traj in trajs {
            let mut kf = KalmanPredictor::new(&lds);
            for t in 0..traj.len() {
                sq += (kf.predict() - &traj.observations[t]).norm_squared();
                kf.update(&traj.actions[t], &traj.observations[t]);
                n += 1;
            }
        }
        sq / n as f64
    }

    fn small_config() -> InitConfig {
        let mut c = InitConfig::default();
        c.features = FeatureConfig::with_dims(10, 5, 2, 7);
        c.features.rff_features = 300;
        c.features.immediate_rff_features = 100;
        c
    }

    #[test]
    fn blind_stage1_recovers_conditional_tables() {
        let mut rng = rng_from_seed(1);
        let hmm = ControlledHmm::random(2, 2, 2, &mut rng);
        let probs = [0.4, 0.6];
        let (pipeline, features) = weighted_features(&hmm, &probs, 1, 1, 3);
        let est = stage1_regression(&features, 1e-10).unwrap();
        for i in 0..est.len() {
            let (traj_index, t) = est.index[i];
            assert_eq!(t, 1);
            let traj = &hmm.enumerate(3, &probs)[traj_index].0;
            let belief = hmm.forward(&hmm.initial, traj.actions[0][0] as usize, traj.observations[0][0] as usize);
            let exact = hmm.observation_table(&belief);
            let q = DMatrix::from_row_slice(2, 2, est.q_bar(i).unwrap().as_slice());
            assert!((q - exact).amax() <= 1e-6);
        }
        let _ = pipeline;
    }

    #[test]
    fn huge_ridge_shrinks_estimates_to_zero() {
        let mut rng = rng_from_seed(2);
        let hmm = ControlledHmm::random(2, 2, 2, &mut rng);
        let (_, features) = weighted_features(&hmm, &[0.5, 0.5], 1, 1, 3);
        let est = stage1_regression(&features, 1e12).unwrap();
        assert!(est.q_bar(0).unwrap().amax() < 1e-9);
    }

    #[test]
    fn stage1_rejects_too_few_steps() {
        let pipeline = FeaturePipeline::<f64>::indicator(2, 2, 1, 1);
        let features = PerStepFeatures::empty(pipeline.dims());
        assert!(matches!(stage1_regression(&features, 1e-3), Err(RpspError::InitializationData(_))));
    }

    #[test]
    fn stage2_recovers_exact_linear_relation() {
        let dims = FeaturePipeline::<f64>::indicator(2, 2, 1, 0).dims();
        let mut rng = rng_from_seed(3);
        let mut gauss = |r, c| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let a: DMatrix<f64> = gauss(dims.d_p(), dims.d_q());
        let qs: DMatrix<f64> = gauss(dims.d_q(), 40);
        let pairs = (0..40).map(|i| {
            let q = qs.column(i).into_owned();
            Ok((q.clone(), &a * q, 1.0))
        });
        let (xi, po) = fit_extension(dims, pairs, 0.0).unwrap();
        assert!((xi - a.rows(0, dims.p_xi())).amax() <= 1e-8);
        assert!((po - a.rows(dims.p_xi(), dims.p_o())).amax() <= 1e-8);
    }

    #[test]
    fn stage2_on_exact_hmm_moments_and_ridge_shrinkage() {
        let mut rng = rng_from_seed(3);
        let hmm = ControlledHmm::random(3, 2, 2, &mut rng);
        let (_, features) = weighted_features(&hmm, &[0.5, 0.5], 1, 2, 4);
        let est = stage1_regression(&features, 1e-9).unwrap();
        let (xi, po) = stage2_regression(&est, 1e-12).unwrap();
        let mut w = DMatrix::zeros(xi.nrows() + po.nrows(), xi.ncols());
        w.rows_mut(0, xi.nrows()).copy_from(&xi);
        w.rows_mut(xi.nrows(), po.nrows()).copy_from(&po);
        for i in 0..est.len() {
            let resid = &w * est.q_bar(i).unwrap() - est.p_bar(i).unwrap();
            assert!(resid.amax() <= 1e-5, "{}", resid.amax());
        }
        let norms: Vec<f64> = [1e-3, 1e-1, 10.0]
            .iter()
            .map(|&r| {
                let (a, b) = stage2_regression(&est, r).unwrap();
                (a.norm_squared() + b.norm_squared()).sqrt()
            })
            .collect();
        assert!(norms[0] >= norms[1] && norms[1] >= norms[2], "{norms:?}");
    }

    #[test]
    fn stage2_needs_positive_ridge_when_rank_deficient() {
        let mut rng = rng_from_seed(4);
        // a single hidden state makes every q̄ identical
        let hmm = ControlledHmm::random(1, 2, 2, &mut rng);
        let (_, features) = weighted_features(&hmm, &[0.5, 0.5], 1, 1, 3);
        let est = stage1_regression(&features, 1e-9).unwrap();
        assert!(matches!(stage2_regression(&est, 0.0), Err(RpspError::Singular(_))));
        assert!(stage2_regression(&est, 1e-3).is_ok());
    }

    #[test]
    fn prediction_residuals_are_orthogonal_at_zero_ridge() {
        let trajs = lds_batch(60, 5);
        let params = initialize_psr(&trajs, &small_config()).unwrap();
        let acc = prediction_statistics(&params, &trajs).unwrap();
        // q ⊗ φᵃ is rank deficient, so take the minimum-norm solution
        let pinv = acc.gram().clone().pseudo_inverse(1e-12).unwrap();
        let w = acc.cross() * pinv;
        let resid = acc.residual_cross_moment(&w);
        assert!(resid.amax() <= 1e-8 * acc.weight_sum(), "{}", resid.amax());
    }

    #[test]
    fn constant_observations_are_predicted_exactly() {
        let mut trajs = lds_batch(40, 6);
        for traj in trajs.iter_mut() {
            for o in traj.observations.iter_mut() {
                o[0] = 0.7;
            }
        }
        let pipeline = FeaturePipeline::fit(&trajs, &small_config().features).unwrap();
        let mut params = PsrParams::zeros(pipeline);
        // states constant at a unit vector on the bias-bias entry
        params.q0[0] = 1.0;
        params.w_ext_xi.fill(0.0);
        let d = params.dims();
        params.w_ext_xi[(0, 0)] = 1.0;
        params.w_ext_o[(0, 0)] = 1.0;
        let _ = d;
        let w = fit_w_pred(&params, &trajs, 0.0).unwrap_or_else(|_| fit_w_pred(&params, &trajs, 1e-12).unwrap());
        let states = params.filter_trajectory(&trajs[0]).unwrap();
        let pred = params.predict_observation(&states[1], &trajs[0].actions[1]);
        let mut p2 = params.clone();
        p2.w_pred = w;
        let pred2 = p2.predict_observation(&states[1], &trajs[0].actions[1]).unwrap();
        assert!(pred.is_ok());
        assert_relative_eq!(pred2[0], 0.7, epsilon = 1e-6);
    }

    #[test]
    fn initialization_is_deterministic() {
        let trajs = lds_batch(50, 7);
        let a = initialize_psr(&trajs, &small_config()).unwrap();
        let b = initialize_psr(&trajs, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initialization_beats_the_mean_predictor() {
        let trajs = lds_batch(200, 8);
        let test = lds_batch(100, 9);
        let params = initialize_psr(&trajs, &small_config()).unwrap();
        let mse = prediction_mse(&params, &test).unwrap();
        let n: usize = trajs.iter().map(|t| t.len()).sum();
        let mean = trajs.iter().flat_map(|t| t.observations.iter()).map(|o| o[0]).sum::<f64>() / n as f64;
        let baseline = test
            .iter()
            .flat_map(|t| t.observations.iter())
            .map(|o| (o[0] - mean).powi(2))
            .sum::<f64>()
            / test.iter().map(|t| t.len()).sum::<usize>() as f64;
        assert!(baseline >= 2.0 * mse, "psr {mse} vs mean {baseline}; kalman {}", kalman_mse(&test));
    }

    #[test]
    fn held_out_extension_residual_shrinks_with_data() {
        let held = lds_batch(30, 11);
        let config = small_config();
        let residual = |n: usize| {
            let trajs = lds_batch(n, 10);
            let pipeline = FeaturePipeline::fit(&trajs, &config.features).unwrap();
            let est = stage1_regression(&pipeline.featurize_batch(&trajs), config.stage1_ridge).unwrap();
            let (xi, po) = stage2_regression(&est, config.stage2_ridge).unwrap();
            let (mut num, mut den) = (0.0, 0.0);
            for s in &pipeline.featurize_batch(&held).steps {
                let q = est.q_bar_at(&s.history).unwrap();
                let p = est.p_bar_at(&s.history).unwrap();
                num += (&xi * &q - p.rows(0, xi.nrows())).norm_squared()
                    + (&po * &q - p.rows(xi.nrows(), po.nrows())).norm_squared();
                den += p.norm_squared();
            }
            (num / den).sqrt()
        };
        let r: Vec<f64> = [50, 200, 500].into_iter().map(residual).collect();
        assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
    }

    #[test]
    fn trajectory_order_does_not_matter() {
        let trajs = lds_batch(60, 12);
        let mut config = small_config();
        // features fitted once so that only the regressions see the permutation
        config.features.pca_samples = usize::MAX;
        config.features.bandwidth_subset = usize::MAX;
        let pipeline = FeaturePipeline::fit(&trajs, &config.features).unwrap();
        let a = initialize_with_pipeline(pipeline.clone(), &trajs, &config).unwrap();
        let mut rev = trajs.clone();
        rev.reverse();
        let b = initialize_with_pipeline(pipeline, &rev, &config).unwrap();
        assert!((a.to_flat() - b.to_flat()).amax() <= 1e-10 * (1.0 + a.to_flat().amax()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn stage1_exact_on_random_hmms(seed in any::<u64>(), n_states in 1usize..=3, p in 0.2f64..0.8) {
            let mut rng = rng_from_seed(seed);
            let hmm = ControlledHmm::random(n_states, 2, 2, &mut rng);
            let probs = [p, 1.0 - p];
            let all = hmm.enumerate(3, &probs);
            let (_, features) = weighted_features(&hmm, &probs, 1, 1, 3);
            let est = stage1_regression(&features, 1e-11).unwrap();
            for i in 0..est.len() {
                let traj = &all[est.index[i].0].0;
                let belief = hmm.forward(&hmm.initial, traj.actions[0][0] as usize, traj.observations[0][0] as usize);
                let q = DMatrix::from_row_slice(2, 2, est.q_bar(i).unwrap().as_slice());
                prop_assert!((q - hmm.observation_table(&belief)).amax() <= 1e-6);
            }
        }
    }
}
