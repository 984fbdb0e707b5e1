//! On-disk formats: trajectory batches and parameter checkpoints.
//!
//! # Trajectory batch file
//!
//! Little-endian, columnar per trajectory:
//!
//! ```text
//! magic      8 bytes  "RPSPTRJ1"
//! count      u64      number of trajectories
//! obs_dim    u32
//! act_dim    u32
//! per trajectory:
//!   len        u64
//!   terminated u8      0 or 1
//!   actions    len * act_dim f64, step-major
//!   obs        len * obs_dim f64, step-major
//!   rewards    len f64
//! ```
//!
//! # Checkpoint
//!
//! JSON object with a `format` tag, a dims header and every matrix stored as
//! `{rows, cols, data}` with `data` row-major. Floats are written with
//! shortest round-trip formatting, so reading back is bit-exact for both
//! `f32` and `f64` parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::baselines::StateRepresentation;
use crate::error::{Result, RpspError};
use crate::features::{FeatureMap, FeaturePipeline, PcaProjection, RffMap};
use crate::policy::ReactivePolicyParams;
use crate::psr::PsrParams;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"RPSPTRJ1";
pub const CHECKPOINT_FORMAT: &str = "rpsp-checkpoint-1";

/// Upper bound on lengths read from a trajectory file before allocating.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_trajectories<T: Scalar, W: Write>(mut w: W, trajs: &[Trajectory<T>]) -> Result<()> {
    let (obs_dim, act_dim) = batch_dims(trajs)?;
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_u64::<LittleEndian>(trajs.len() as u64)?;
    w.write_u32::<LittleEndian>(obs_dim as u32)?;
    w.write_u32::<LittleEndian>(act_dim as u32)?;
    for traj in trajs {
        traj.validate()?;
        w.write_u64::<LittleEndian>(traj.len() as u64)?;
        w.write_u8(u8::from(traj.terminated))?;
        for v in traj.actions.iter().chain(&traj.observations) {
            for x in v.iter() {
                w.write_f64::<LittleEndian>(x.as_f64())?;
            }
        }
        for r in &traj.rewards {
            w.write_f64::<LittleEndian>(r.as_f64())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn batch_dims<T: Scalar>(trajs: &[Trajectory<T>]) -> Result<(usize, usize)> {
    let first = trajs.iter().find(|t| !t.is_empty());
    let obs_dim = first.map_or(0, |t| t.observations[0].len());
    let act_dim = first.map_or(0, |t| t.actions[0].len());
    for t in trajs {
        if t.observations.iter().any(|o| o.len() != obs_dim) || t.actions.iter().any(|a| a.len() != act_dim) {
            return Err(RpspError::InvalidArgument("trajectories disagree on observation or action dimension".into()));
        }
    }
    if obs_dim > u32::MAX as usize || act_dim > u32::MAX as usize {
        return Err(RpspError::InvalidArgument("dimension too large for the trajectory format".into()));
    }
    Ok((obs_dim, act_dim))
}

pub fn read_trajectories<T: Scalar, R: Read>(mut r: R) -> Result<Vec<Trajectory<T>>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(RpspError::Format("not a trajectory batch file (bad magic)".into()));
    }
    let count = r.read_u64::<LittleEndian>()?;
    let obs_dim = r.read_u32::<LittleEndian>()? as usize;
    let act_dim = r.read_u32::<LittleEndian>()? as usize;
    if count > MAX_ELEMENTS {
        return Err(RpspError::Format(format!("implausible trajectory count {count}")));
    }
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.read_u64::<LittleEndian>()?;
        if len.saturating_mul((obs_dim + act_dim + 1) as u64) > MAX_ELEMENTS {
            return Err(RpspError::Format(format!("implausible trajectory length {len}")));
        }
        let len = len as usize;
        let terminated = match r.read_u8()? {
            0 => false,
            1 => true,
            b => return Err(RpspError::Format(format!("bad terminated flag {b}"))),
        };
        let mut read_vecs = |dim: usize| -> Result<Vec<DVector<T>>> {
            (0..len)
                .map(|_| {
                    let mut v = DVector::zeros(dim);
                    for x in v.iter_mut() {
                        *x = T::of(r.read_f64::<LittleEndian>()?);
                    }
                    Ok(v)
                })
                .collect()
        };
        let actions = read_vecs(act_dim)?;
        let observations = read_vecs(obs_dim)?;
        let rewards = (0..len)
            .map(|_| Ok(T::of(r.read_f64::<LittleEndian>()?)))
            .collect::<Result<Vec<T>>>()?;
        out.push(Trajectory::new(actions, observations, rewards, terminated).map_err(|e| RpspError::Format(e.to_string()))?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(RpspError::Format("trailing bytes after the last trajectory".into()));
    }
    Ok(out)
}

pub fn save_trajectories<T: Scalar>(path: &Path, trajs: &[Trajectory<T>]) -> Result<()> {
    write_trajectories(BufWriter::new(File::create(path)?), trajs)
}

pub fn load_trajectories<T: Scalar>(path: &Path) -> Result<Vec<Trajectory<T>>> {
    read_trajectories(BufReader::new(File::open(path)?))
}

/// Matrix with row-major data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix<T: Scalar>(m: &DMatrix<T>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter().map(|x| x.as_f64()));
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix<T: Scalar>(&self) -> Result<DMatrix<T>> {
        if self.rows.checked_mul(self.cols) != Some(self.data.len()) {
            return Err(RpspError::Format(format!(
                "matrix record {}x{} has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&x| T::of(x))))
    }

    fn expect_shape(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if (self.rows, self.cols) == (rows, cols) {
            Ok(())
        } else {
            Err(RpspError::Format(format!(
                "{what} is {}x{}, expected {rows}x{cols}",
                self.rows, self.cols
            )))
        }
    }
}

fn vec_record<T: Scalar>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn vec_from<T: Scalar>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| T::of(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRecord {
    pub basis: MatrixRecord,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMapRecord {
    Projected {
        frequencies: MatrixRecord,
        offsets: Vec<f64>,
        bandwidth: f64,
        pca: Option<PcaRecord>,
        bias: bool,
    },
    Indicator {
        categories: usize,
        window: usize,
    },
    Linear {
        input_dim: usize,
        bias: bool,
    },
}

impl FeatureMapRecord {
    fn from_map<T: Scalar>(m: &FeatureMap<T>) -> Self {
        match m {
            FeatureMap::Projected { rff, pca, bias } => FeatureMapRecord::Projected {
                frequencies: MatrixRecord::from_matrix(&rff.frequencies),
                offsets: vec_record(&rff.offsets),
                bandwidth: rff.bandwidth.as_f64(),
                pca: pca.as_ref().map(|p| PcaRecord {
                    basis: MatrixRecord::from_matrix(&p.basis),
                    mean: vec_record(&p.mean),
                }),
                bias: *bias,
            },
            FeatureMap::Indicator { categories, window } => FeatureMapRecord::Indicator {
                categories: *categories,
                window: *window,
            },
            FeatureMap::Linear { input_dim, bias } => FeatureMapRecord::Linear {
                input_dim: *input_dim,
                bias: *bias,
            },
        }
    }

    fn to_map<T: Scalar>(&self) -> Result<FeatureMap<T>> {
        Ok(match self {
            FeatureMapRecord::Projected {
                frequencies,
                offsets,
                bandwidth,
                pca,
                bias,
            } => {
                let frequencies = frequencies.to_matrix::<T>()?;
                if offsets.len() != frequencies.nrows() {
                    return Err(RpspError::Format("RFF offsets do not match the frequency count".into()));
                }
                let pca = match pca {
                    Some(p) => {
                        let basis = p.basis.to_matrix::<T>()?;
                        if basis.ncols() != frequencies.nrows() || p.mean.len() != frequencies.nrows() {
                            return Err(RpspError::Format("PCA projection does not match the RFF map".into()));
                        }
                        Some(PcaProjection {
                            basis,
                            mean: vec_from(&p.mean),
                        })
                    }
                    None => None,
                };
                FeatureMap::Projected {
                    rff: RffMap {
                        frequencies,
                        offsets: vec_from(offsets),
                        bandwidth: T::of(*bandwidth),
                    },
                    pca,
                    bias: *bias,
                }
            }
            FeatureMapRecord::Indicator { categories, window } => FeatureMap::Indicator {
                categories: *categories,
                window: *window,
            },
            FeatureMapRecord::Linear { input_dim, bias } => FeatureMap::Linear {
                input_dim: *input_dim,
                bias: *bias,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub immediate_obs: FeatureMapRecord,
    pub immediate_act: FeatureMapRecord,
    pub future_obs: FeatureMapRecord,
    pub future_act: FeatureMapRecord,
    pub history: FeatureMapRecord,
    pub k: usize,
    pub history_window: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
}

/// Dimension header of a filter checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsrDimsRecord {
    pub d_o: usize,
    pub d_a: usize,
    pub d_fo: usize,
    pub d_fa: usize,
    pub d_h: usize,
    pub obs_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrRecord {
    pub dims: PsrDimsRecord,
    pub q0: Vec<f64>,
    pub w_ext_xi: MatrixRecord,
    pub w_ext_o: MatrixRecord,
    pub w_pred: MatrixRecord,
    pub lambda: f64,
    pub state_cap: f64,
    pub normalize: bool,
    pub pipeline: PipelineRecord,
}

impl PsrRecord {
    pub fn from_params<T: Scalar>(p: &PsrParams<T>) -> Self {
        let d = p.dims();
        let pl = &p.pipeline;
        Self {
            dims: PsrDimsRecord {
                d_o: d.d_o,
                d_a: d.d_a,
                d_fo: d.d_fo,
                d_fa: d.d_fa,
                d_h: d.d_h,
                obs_dim: pl.obs_dim,
            },
            q0: vec_record(&p.q0),
            w_ext_xi: MatrixRecord::from_matrix(&p.w_ext_xi),
            w_ext_o: MatrixRecord::from_matrix(&p.w_ext_o),
            w_pred: MatrixRecord::from_matrix(&p.w_pred),
            lambda: p.lambda.as_f64(),
            state_cap: p.state_cap.as_f64(),
            normalize: p.normalize,
            pipeline: PipelineRecord {
                immediate_obs: FeatureMapRecord::from_map(&pl.immediate_obs),
                immediate_act: FeatureMapRecord::from_map(&pl.immediate_act),
                future_obs: FeatureMapRecord::from_map(&pl.future_obs),
                future_act: FeatureMapRecord::from_map(&pl.future_act),
                history: FeatureMapRecord::from_map(&pl.history),
                k: pl.k,
                history_window: pl.history_window,
                obs_dim: pl.obs_dim,
                act_dim: pl.act_dim,
            },
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<PsrParams<T>> {
        let r = &self.pipeline;
        let pipeline = FeaturePipeline {
            immediate_obs: r.immediate_obs.to_map()?,
            immediate_act: r.immediate_act.to_map()?,
            future_obs: r.future_obs.to_map()?,
            future_act: r.future_act.to_map()?,
            history: r.history.to_map()?,
            k: r.k,
            history_window: r.history_window,
            obs_dim: r.obs_dim,
            act_dim: r.act_dim,
        };
        let d = pipeline.dims();
        let h = self.dims;
        if (h.d_o, h.d_a, h.d_fo, h.d_fa, h.d_h, h.obs_dim) != (d.d_o, d.d_a, d.d_fo, d.d_fa, d.d_h, pipeline.obs_dim) {
            return Err(RpspError::Format("dims header disagrees with the feature pipeline".into()));
        }
        self.w_ext_xi.expect_shape(d.p_xi(), d.d_q(), "w_ext_xi")?;
        self.w_ext_o.expect_shape(d.p_o(), d.d_q(), "w_ext_o")?;
        self.w_pred.expect_shape(pipeline.obs_dim, d.d_q() * d.d_a, "w_pred")?;
        if self.q0.len() != d.d_q() {
            return Err(RpspError::Format(format!("q0 has {} entries, expected {}", self.q0.len(), d.d_q())));
        }
        let mut p = PsrParams::zeros(pipeline);
        p.q0 = vec_from(&self.q0);
        p.w_ext_xi = self.w_ext_xi.to_matrix()?;
        p.w_ext_o = self.w_ext_o.to_matrix()?;
        p.w_pred = self.w_pred.to_matrix()?;
        p.lambda = T::of(self.lambda);
        p.state_cap = T::of(self.state_cap);
        p.normalize = self.normalize;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub w1: MatrixRecord,
    pub b1: Vec<f64>,
    pub w2: MatrixRecord,
    pub b2: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyRecord {
    pub fn from_params<T: Scalar>(p: &ReactivePolicyParams<T>) -> Self {
        Self {
            w1: MatrixRecord::from_matrix(&p.w1),
            b1: vec_record(&p.b1),
            w2: MatrixRecord::from_matrix(&p.w2),
            b2: vec_record(&p.b2),
            log_std: vec_record(&p.r),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<ReactivePolicyParams<T>> {
        let w1: DMatrix<T> = self.w1.to_matrix()?;
        let w2: DMatrix<T> = self.w2.to_matrix()?;
        if self.b1.len() != w1.nrows()
            || w2.ncols() != w1.nrows()
            || self.b2.len() != w2.nrows()
            || self.log_std.len() != w2.nrows()
        {
            return Err(RpspError::Format("policy record shapes are inconsistent".into()));
        }
        Ok(ReactivePolicyParams {
            w1,
            b1: vec_from(&self.b1),
            w2,
            b2: vec_from(&self.b2),
            r: vec_from(&self.log_std),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepresentationRecord {
    Predictive { obs_window: usize },
    FiniteMemory { window: usize },
}

impl From<StateRepresentation> for RepresentationRecord {
    fn from(r: StateRepresentation) -> Self {
        match r {
            StateRepresentation::Predictive { obs_window } => RepresentationRecord::Predictive { obs_window },
            StateRepresentation::FiniteMemory { window } => RepresentationRecord::FiniteMemory { window },
        }
    }
}

impl From<RepresentationRecord> for StateRepresentation {
    fn from(r: RepresentationRecord) -> Self {
        match r {
            RepresentationRecord::Predictive { obs_window } => StateRepresentation::Predictive { obs_window },
            RepresentationRecord::FiniteMemory { window } => StateRepresentation::FiniteMemory { window },
        }
    }
}

/// Complete agent parameters with the iteration they were taken at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub agent: String,
    /// Number of completed training iterations.
    pub iteration: usize,
    pub obs_dim: usize,
    pub representation: RepresentationRecord,
    pub psr: Option<PsrRecord>,
    pub policy: PolicyRecord,
}

impl Checkpoint {
    pub fn from_agent<T: Scalar>(agent: &Agent<T>, name: &str, iteration: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            agent: name.to_string(),
            iteration,
            obs_dim: agent.obs_dim,
            representation: agent.representation.into(),
            psr: agent.psr.as_ref().map(PsrRecord::from_params),
            policy: PolicyRecord::from_params(&agent.policy),
        }
    }

    pub fn to_agent<T: Scalar>(&self) -> Result<Agent<T>> {
        let psr = self.psr.as_ref().map(|p| p.to_params()).transpose()?;
        Agent::new(psr, self.policy.to_params()?, self.representation.into(), self.obs_dim)
            .map_err(|e| RpspError::Format(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        check_finite(self.psr.iter().flat_map(psr_values).chain(policy_values(&self.policy)))?;
        serde_json::to_string_pretty(self).map_err(|e| RpspError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| RpspError::Format(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(RpspError::Format(format!("unsupported checkpoint format {:?}", c.format)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn psr_values(p: &PsrRecord) -> impl Iterator<Item = f64> + '_ {
    p.q0.iter()
        .chain(&p.w_ext_xi.data)
        .chain(&p.w_ext_o.data)
        .chain(&p.w_pred.data)
        .copied()
}

fn policy_values(p: &PolicyRecord) -> impl Iterator<Item = f64> + '_ {
    p.w1.data
        .iter()
        .chain(&p.b1)
        .chain(&p.w2.data)
        .chain(&p.b2)
        .chain(&p.log_std)
        .copied()
}

/// JSON has no encoding for NaN or infinities.
fn check_finite(mut values: impl Iterator<Item = f64>) -> Result<()> {
    if values.all(f64::is_finite) {
        Ok(())
    } else {
        Err(RpspError::Format("cannot checkpoint non-finite parameters".into()))
    }
}

/// Filter-only checkpoint, as written by offline initialization.
pub fn psr_to_json<T: Scalar>(p: &PsrParams<T>) -> Result<String> {
    let rec = PsrRecord::from_params(p);
    check_finite(psr_values(&rec))?;
    serde_json::to_string_pretty(&rec).map_err(|e| RpspError::Format(e.to_string()))
}

pub fn psr_from_json<T: Scalar>(s: &str) -> Result<PsrParams<T>> {
    serde_json::from_str::<PsrRecord>(s)
        .map_err(|e| RpspError::Format(e.to_string()))?
        .to_params()
}
