//! Finite-memory observation windows and predictive-state augmentation.

use nalgebra::DVector;

use crate::error::{Result, RpspError};
use crate::scalar::Scalar;

/// What the reactive policy sees at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRepresentation {
    /// Predictive state, optionally followed by the last `obs_window` observations.
    Predictive { obs_window: usize },
    /// The last `window` observations only.
    FiniteMemory { window: usize },
}

impl StateRepresentation {
    pub fn uses_filter(&self) -> bool {
        matches!(self, StateRepresentation::Predictive { .. })
    }

    pub fn window(&self) -> usize {
        match *self {
            StateRepresentation::Predictive { obs_window } => obs_window,
            StateRepresentation::FiniteMemory { window } => window,
        }
    }

    /// Policy input dimension given the predictive-state and observation sizes.
    pub fn input_dim(&self, d_q: usize, obs_dim: usize) -> usize {
        match *self {
            StateRepresentation::Predictive { obs_window } => d_q + obs_window * obs_dim,
            StateRepresentation::FiniteMemory { window } => window * obs_dim,
        }
    }
}

/// Zero window of `w` observations.
pub fn empty_window<T: Scalar>(w: usize, obs_dim: usize) -> DVector<T> {
    DVector::zeros(w * obs_dim)
}

/// Drops the oldest observation and appends `o`; oldest first.
pub fn fm_state_update<T: Scalar>(window: &DVector<T>, o: &DVector<T>) -> Result<DVector<T>> {
    let d = o.len();
    if d == 0 || window.len() % d != 0 {
        return Err(RpspError::InvalidArgument(format!(
            "window of length {} cannot hold observations of dimension {d}",
            window.len()
        )));
    }
    let n = window.len();
    if n == 0 {
        return Ok(window.clone());
    }
    let mut out = DVector::zeros(n);
    out.rows_mut(0, n - d).copy_from(&window.rows(d, n - d));
    out.rows_mut(n - d, d).copy_from(o);
    Ok(out)
}

/// `[q ; window]`
pub fn augment_state<T: Scalar>(q: &DVector<T>, window: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(q.len() + window.len());
    out.rows_mut(0, q.len()).copy_from(q);
    out.rows_mut(q.len(), window.len()).copy_from(window);
    out
}
