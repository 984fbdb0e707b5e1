//! Discrete controlled hidden Markov models: exact forward filtering and
//! closed-form predictive-state embeddings under indicator features.
//!
//! Convention: with action `a_t` in state `s_t`, the system emits
//! `o_t ~ O_{a_t}(· | s_t)` and then moves to `s_{t+1} ~ T_{a_t}(· | s_t)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::seeding::Rng;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledHmm {
    /// `transitions[a][(s', s)] = P(s' | s, a)`
    pub transitions: Vec<DMatrix<f64>>,
    /// `emissions[a][(o, s)] = P(o | s, a)`
    pub emissions: Vec<DMatrix<f64>>,
    pub initial: DVector<f64>,
}

fn random_columns(rows: usize, cols: usize, floor: f64, rng: &mut Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(floor..1.0));
    for mut c in m.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    m
}

impl ControlledHmm {
    /// Random system with entries bounded away from zero before normalization.
    pub fn random(n_states: usize, n_obs: usize, n_act: usize, rng: &mut Rng) -> Self {
        let transitions = (0..n_act).map(|_| random_columns(n_states, n_states, 0.05, rng)).collect();
        let emissions = (0..n_act).map(|_| random_columns(n_obs, n_states, 0.05, rng)).collect();
        let initial = random_columns(n_states, 1, 0.05, rng).column(0).into_owned();
        Self {
            transitions,
            emissions,
            initial,
        }
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_obs(&self) -> usize {
        self.emissions[0].nrows()
    }

    pub fn n_act(&self) -> usize {
        self.transitions.len()
    }

    /// Belief over the next state after executing `a` and seeing `o`.
    pub fn forward(&self, belief: &DVector<f64>, a: usize, o: usize) -> DVector<f64> {
        let weighted = belief.component_mul(&self.emissions[a].row(o).transpose());
        let next = &self.transitions[a] * weighted;
        let z = next.sum();
        next / z
    }

    /// `P(o_t = o | belief, a_t = a)` laid out as an `n_obs x n_act` table.
    pub fn observation_table(&self, belief: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_obs(), self.n_act(), |o, a| {
            (self.emissions[a].row(o) * belief)[0]
        })
    }

    /// Linear map from a belief to the row-major one-step predictive state (k = 1).
    pub fn predictive_map(&self) -> DMatrix<f64> {
        let (no, na, ns) = (self.n_obs(), self.n_act(), self.n_states());
        DMatrix::from_fn(no * na, ns, |r, s| {
            let (o, a) = (r / na, r % na);
            self.emissions[a][(o, s)]
        })
    }

    /// Linear maps from a belief to the extended-state blocks (k = 1).
    ///
    /// `P_xi[o', o, a', a] = P(o_{t+1} = o', o_t = o | do a_t = a, a_{t+1} = a')` and
    /// `P_o[o, o, a] = P(o_t = o | do a_t = a)`, zero off the diagonal.
    pub fn extended_maps(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (no, na, ns) = (self.n_obs(), self.n_act(), self.n_states());
        let mut xi = DMatrix::zeros(no * no * na * na, ns);
        let mut po = DMatrix::zeros(no * no * na, ns);
        for s in 0..ns {
            for a in 0..na {
                let next = self.transitions[a].column(s);
                for o in 0..no {
                    let emit = self.emissions[a][(o, s)];
                    po[((o * no + o) * na + a, s)] = emit;
                    for a2 in 0..na {
                        for o2 in 0..no {
                            let p2: f64 = (0..ns).map(|s2| next[s2] * self.emissions[a2][(o2, s2)]).sum();
                            xi[(((o2 * no + o) * na + a2) * na + a, s)] = emit * p2;
                        }
                    }
                }
            }
        }
        (xi, po)
    }

    /// Exact extension operators `W = P_map · Q_map⁺`, or `None` when the
    /// predictive map does not have full column rank.
    pub fn exact_extension(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let q_map = self.predictive_map();
        let svd = q_map.clone().svd(false, false);
        let smin = svd.singular_values.min();
        if smin < 1e-6 * svd.singular_values.max() || q_map.nrows() < q_map.ncols() {
            return None;
        }
        let pinv = q_map.pseudo_inverse(1e-12).ok()?;
        let (xi, po) = self.extended_maps();
        Some((xi * &pinv, po * pinv))
    }

    /// Samples a trajectory under i.i.d. actions drawn from `action_probs`.
    /// Observations and actions are stored as category indices.
    pub fn sample(&self, len: usize, action_probs: &[f64], rng: &mut Rng) -> Trajectory<f64> {
        let draw = |p: &[f64], rng: &mut Rng| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        };
        let mut s = draw(self.initial.as_slice(), rng);
        let mut traj = Trajectory::empty();
        for _ in 0..len {
            let a = draw(action_probs, rng);
            let o = draw(self.emissions[a].column(s).as_slice(), rng);
            s = draw(self.transitions[a].column(s).as_slice(), rng);
            traj.push(DVector::from_element(1, a as f64), DVector::from_element(1, o as f64), 0.0);
        }
        traj
    }

    /// Every length-`len` trajectory with its probability under i.i.d. actions.
    pub fn enumerate(&self, len: usize, action_probs: &[f64]) -> Vec<(Trajectory<f64>, f64)> {
        let mut out = vec![(Trajectory::empty(), self.initial.clone())];
        for _ in 0..len {
            let mut next = Vec::new();
            for (traj, alpha) in &out {
                for (a, &pa) in action_probs.iter().enumerate() {
                    for o in 0..self.n_obs() {
                        // alpha carries unnormalized joint mass over the current state
                        let weighted = alpha.component_mul(&self.emissions[a].row(o).transpose()) * pa;
                        let mut t = traj.clone();
                        t.push(DVector::from_element(1, a as f64), DVector::from_element(1, o as f64), 0.0);
                        next.push((t, &self.transitions[a] * weighted));
                    }
                }
            }
            out = next;
        }
        out.into_iter().map(|(t, alpha)| (t, alpha.sum())).collect()
    }
}
