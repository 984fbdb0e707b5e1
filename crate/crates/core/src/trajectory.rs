//! Episode data shared by environments, filters and optimizers.

use nalgebra::DVector;

use crate::error::{Result, RpspError};
use crate::scalar::Scalar;

/// Time-aligned actions, observations and rewards from one episode.
///
/// `observations[t]` and `rewards[t]` are produced by executing `actions[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub actions: Vec<DVector<T>>,
    pub observations: Vec<DVector<T>>,
    pub rewards: Vec<T>,
    /// True when the episode ended by a terminal condition rather than the horizon.
    pub terminated: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(
        actions: Vec<DVector<T>>,
        observations: Vec<DVector<T>>,
        rewards: Vec<T>,
        terminated: bool,
    ) -> Result<Self> {
        let traj = Self {
            actions,
            observations,
            rewards,
            terminated,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn empty() -> Self {
        Self {
            actions: Vec::new(),
            observations: Vec::new(),
            rewards: Vec::new(),
            terminated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, action: DVector<T>, observation: DVector<T>, reward: T) {
        self.actions.push(action);
        self.observations.push(observation);
        self.rewards.push(reward);
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> T {
        self.rewards.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.actions.len();
        if self.observations.len() != n || self.rewards.len() != n {
            return Err(RpspError::InvalidArgument(format!(
                "trajectory columns differ in length: {} actions, {} observations, {} rewards",
                n,
                self.observations.len(),
                self.rewards.len()
            )));
        }
        let finite = self
            .actions
            .iter()
            .chain(self.observations.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
            && self.rewards.iter().all(|r| r.is_finite());
        if !finite {
            return Err(RpspError::InvalidArgument("trajectory contains non-finite values".into()));
        }
        Ok(())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Trajectory<U> {
        let conv = |v: &DVector<T>| v.map(|x| U::of(x.as_f64()));
        Trajectory {
            actions: self.actions.iter().map(conv).collect(),
            observations: self.observations.iter().map(conv).collect(),
            rewards: self.rewards.iter().map(|r| U::of(r.as_f64())).collect(),
            terminated: self.terminated,
        }
    }
}
