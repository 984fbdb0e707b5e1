//! A complete recurrent agent: optional filter, state representation and
//! reactive policy.

use std::sync::Arc;

use nalgebra::DVector;

use crate::baselines::{augment_state, empty_window, fm_state_update, StateRepresentation};
use crate::envs::RecurrentPolicy;
use crate::error::{Result, RpspError};
use crate::policy::ReactivePolicyParams;
use crate::psr::{ActionMajorMaps, PredictiveState, PsrParams};
use crate::scalar::Scalar;
use crate::seeding::Rng;
use crate::trajectory::Trajectory;

/// How an agent's parameters are updated each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// One Adam step on the joint normalized loss over all parameters.
    Vrpg,
    /// Adam on the filter parameters, then TRPO on the reactive policy.
    Alternating,
}

/// How the filter parameters are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsrInit {
    TwoStage,
    Random,
}

impl PsrInit {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "two-stage" => Ok(PsrInit::TwoStage),
            "random" => Ok(PsrInit::Random),
            other => Err(RpspError::InvalidConfig(format!(
                "unknown PSR initialization '{other}' (expected two-stage or random)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PsrInit::TwoStage => "two-stage",
            PsrInit::Random => "random",
        }
    }
}

/// Named agent variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentKind {
    pub representation: StateRepresentation,
    pub update: UpdateRule,
}

impl AgentKind {
    pub const NAMES: [&'static str; 7] = [
        "fm1",
        "fm2",
        "fm5",
        "rpsp-vrpg",
        "rpsp-alt",
        "rpsp-vrpg+obs",
        "rpsp-alt+obs",
    ];

    /// Finite-memory agents train their policy with TRPO; the `+obs`
    /// variants append the last two observations to the predictive state.
    pub fn parse(name: &str) -> Result<Self> {
        use StateRepresentation::*;
        let (representation, update) = match name {
            "fm1" => (FiniteMemory { window: 1 }, UpdateRule::Alternating),
            "fm2" => (FiniteMemory { window: 2 }, UpdateRule::Alternating),
            "fm5" => (FiniteMemory { window: 5 }, UpdateRule::Alternating),
            "rpsp-vrpg" => (Predictive { obs_window: 0 }, UpdateRule::Vrpg),
            "rpsp-alt" => (Predictive { obs_window: 0 }, UpdateRule::Alternating),
            "rpsp-vrpg+obs" => (Predictive { obs_window: 2 }, UpdateRule::Vrpg),
            "rpsp-alt+obs" => (Predictive { obs_window: 2 }, UpdateRule::Alternating),
            other => {
                return Err(RpspError::InvalidConfig(format!(
                    "unknown agent '{other}' (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(Self { representation, update })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent<T: Scalar> {
    /// Present exactly when the representation uses a filter.
    pub psr: Option<PsrParams<T>>,
    pub policy: ReactivePolicyParams<T>,
    pub representation: StateRepresentation,
    pub obs_dim: usize,
}

/// Running memory of an [`Agent`] within an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMemory<T: Scalar> {
    pub q: Option<PredictiveState<T>>,
    /// Reordered filter maps, shared by the clones of one episode's memory.
    pub maps: Option<Arc<ActionMajorMaps<T>>>,
    pub window: DVector<T>,
    pub cap_events: usize,
}

impl<T: Scalar> Agent<T> {
    pub fn new(
        psr: Option<PsrParams<T>>,
        policy: ReactivePolicyParams<T>,
        representation: StateRepresentation,
        obs_dim: usize,
    ) -> Result<Self> {
        if psr.is_some() != representation.uses_filter() {
            return Err(RpspError::InvalidConfig(
                "a filter must be supplied exactly for predictive representations".into(),
            ));
        }
        let d_q = psr.as_ref().map_or(0, |p| p.dims().d_q());
        if policy.input_dim() != representation.input_dim(d_q, obs_dim) {
            return Err(RpspError::InvalidConfig(format!(
                "policy input {} does not match representation input {}",
                policy.input_dim(),
                representation.input_dim(d_q, obs_dim)
            )));
        }
        Ok(Self {
            psr,
            policy,
            representation,
            obs_dim,
        })
    }

    fn input(&self, memory: &AgentMemory<T>) -> DVector<T> {
        match &memory.q {
            Some(q) => augment_state(&q.q, &memory.window),
            None => memory.window.clone(),
        }
    }

    /// Policy inputs for every step of a trajectory, replaying the filter.
    pub fn policy_inputs(&self, traj: &Trajectory<T>) -> Result<Vec<DVector<T>>> {
        let mut memory = self.initial_memory();
        let mut out = Vec::with_capacity(traj.len());
        for t in 0..traj.len() {
            out.push(self.input(&memory));
            self.observe(&mut memory, &traj.actions[t], &traj.observations[t], t)?;
        }
        Ok(out)
    }
}

impl<T: Scalar> RecurrentPolicy<T> for Agent<T> {
    type Memory = AgentMemory<T>;

    fn initial_memory(&self) -> AgentMemory<T> {
        AgentMemory {
            q: self.psr.as_ref().map(|p| p.initial_state()),
            maps: self.psr.as_ref().map(|p| Arc::new(p.action_major_maps())),
            window: empty_window(self.representation.window(), self.obs_dim),
            cap_events: 0,
        }
    }

    fn state_vector(&self, memory: &AgentMemory<T>) -> DVector<T> {
        self.input(memory)
    }

    fn sample_action(&self, memory: &AgentMemory<T>, rng: &mut Rng) -> DVector<T> {
        // dimensions are validated at construction
        let dist = self.policy.forward(&self.input(memory)).expect("policy input dimension");
        dist.sample(rng)
    }

    fn observe(&self, memory: &mut AgentMemory<T>, action: &DVector<T>, obs: &DVector<T>, t: usize) -> Result<()> {
        if let (Some(psr), Some(q), Some(maps)) = (&self.psr, &memory.q, &memory.maps) {
            let step = psr.filter_step_with(maps, q, action, obs).map_err(|e| e.at_step(t))?;
            memory.cap_events += usize::from(step.capped);
            memory.q = Some(step.state);
        }
        if self.representation.window() > 0 {
            memory.window = fm_state_update(&memory.window, obs)?;
        }
        Ok(())
    }
}
