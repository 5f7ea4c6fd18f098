//! Discrete-time, no-leak integrate-and-fire dynamics.
//!
//! Every node integrates `v[k] += Σ w_ik · fired[i]` synchronously from the
//! previous step's spikes. Non-muscle nodes fire when `v ≥ fire_threshold`
//! and reset to 0. Muscles only accumulate; [`NetworkState::muscle_activity`]
//! reads and zeroes them once per environment step.

use serde::{Deserialize, Serialize};

use crate::connectome::{Connectome, NeuronId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub fire_threshold: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            fire_threshold: 30.0,
        }
    }
}

impl SimParams {
    /// Potential a firing neuron is reset to.
    pub const RESET_VALUE: f64 = 0.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.fire_threshold > 0.0) || !self.fire_threshold.is_finite() {
            return Err(Error::Config(format!(
                "fire_threshold must be positive, got {}",
                self.fire_threshold
            )));
        }
        Ok(())
    }
}

/// A weight vector together with each node's summed incoming weight, so a
/// step can be computed from whichever of the fired or silent sets is smaller.
#[derive(Debug, Clone)]
pub(crate) struct Drive<'a> {
    weights: &'a [f64],
    totals: Vec<f64>,
}

impl<'a> Drive<'a> {
    pub(crate) fn new(weights: &'a [f64], conn: &Connectome) -> Self {
        let mut totals = vec![0.0; conn.node_count()];
        for (syn, &w) in conn.synapses().iter().zip(weights) {
            totals[syn.post.index()] += w;
        }
        Drive { weights, totals }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkState {
    v: Vec<f64>,
    fired: Vec<bool>,
    forced: Vec<bool>,
    has_forced: bool,
    scratch: Vec<f64>,
}

impl PartialEq for NetworkState {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
            && self.fired == other.fired
            && self.forced == other.forced
            && self.has_forced == other.has_forced
    }
}

impl NetworkState {
    /// All potentials zero, nothing fired, nothing forced.
    pub fn reset(conn: &Connectome) -> Self {
        Self::zeroed(conn.node_count())
    }

    pub fn zeroed(nodes: usize) -> Self {
        NetworkState {
            v: vec![0.0; nodes],
            fired: vec![false; nodes],
            forced: vec![false; nodes],
            has_forced: false,
            scratch: vec![0.0; nodes],
        }
    }

    pub fn node_count(&self) -> usize {
        self.v.len()
    }

    pub fn potentials(&self) -> &[f64] {
        &self.v
    }

    pub fn potentials_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn fired(&self) -> &[bool] {
        &self.fired
    }

    pub fn fired_mut(&mut self) -> &mut [bool] {
        &mut self.fired
    }

    pub fn fired_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.fired
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| NeuronId(i as u32))
    }

    pub fn forced(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.forced
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| NeuronId(i as u32))
    }

    /// Marks `ids` to fire on the next [`step`](Self::step) regardless of
    /// their potential. Repeated calls accumulate as a set union.
    pub fn force_fire(&mut self, conn: &Connectome, ids: &[NeuronId]) -> Result<()> {
        for &id in ids {
            if id.index() >= self.v.len() {
                return Err(Error::UnknownNeuron(format!("#{}", id.0)));
            }
            if conn.is_muscle(id) {
                return Err(Error::UnknownNeuron(format!(
                    "`{}` is a muscle and cannot be forced",
                    conn.name(id)
                )));
            }
        }
        self.force_unchecked(ids);
        Ok(())
    }

    pub(crate) fn force_unchecked(&mut self, ids: &[NeuronId]) {
        for &id in ids {
            self.forced[id.index()] = true;
        }
        self.has_forced |= !ids.is_empty();
    }

    /// Advances the network by one synchronous update.
    pub fn step(&mut self, weights: &[f64], conn: &Connectome, params: &SimParams) -> Result<()> {
        if self.v.len() != conn.node_count() {
            return Err(Error::DimensionMismatch {
                expected: conn.node_count(),
                actual: self.v.len(),
            });
        }
        if weights.len() != conn.synapse_count() {
            return Err(Error::DimensionMismatch {
                expected: conn.synapse_count(),
                actual: weights.len(),
            });
        }
        self.step_unchecked(weights, conn, params.fire_threshold);
        Ok(())
    }

    pub(crate) fn step_unchecked(&mut self, weights: &[f64], conn: &Connectome, threshold: f64) {
        let drive = Drive::new(weights, conn);
        self.step_drive(&drive, conn, threshold);
    }

    pub(crate) fn step_drive(&mut self, drive: &Drive<'_>, conn: &Connectome, threshold: f64) {
        let n = self.v.len();
        let active = self.fired.iter().filter(|&&f| f).count();
        let w = drive.weights;
        if active * 2 <= n {
            for pre in (0..n).filter(|&i| self.fired[i]) {
                for &(post, syn) in conn.outgoing(pre) {
                    self.v[post as usize] += w[syn as usize];
                }
            }
        } else {
            // mostly active: full input minus what the silent nodes would send
            self.scratch.copy_from_slice(&drive.totals);
            for pre in (0..n).filter(|&i| !self.fired[i]) {
                for &(post, syn) in conn.outgoing(pre) {
                    self.scratch[post as usize] -= w[syn as usize];
                }
            }
            for (v, d) in self.v.iter_mut().zip(&self.scratch) {
                *v += d;
            }
        }
        let muscle = conn.muscle_mask();
        for k in 0..self.v.len() {
            if muscle[k] {
                self.fired[k] = false;
                continue;
            }
            let fire = self.v[k] >= threshold || self.forced[k];
            self.fired[k] = fire;
            if fire {
                self.v[k] = SimParams::RESET_VALUE;
            }
        }
        if self.has_forced {
            self.forced.iter_mut().for_each(|f| *f = false);
            self.has_forced = false;
        }
    }

    /// Sums left and right muscle potentials, then zeroes those muscles.
    pub fn muscle_activity(&mut self, conn: &Connectome) -> (f64, f64) {
        let mut drain = |ids: &[NeuronId]| {
            ids.iter()
                .map(|id| std::mem::take(&mut self.v[id.index()]))
                .sum::<f64>()
        };
        let left = drain(conn.muscle_left());
        let right = drain(conn.muscle_right());
        (left, right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectome::{RoleSets, SynapseKind};

    // S1, S2 -> K ; K -> ML ; S1 -> MR
    fn net() -> Connectome {
        let edges = vec![
            ("S1", "K", 3.0, SynapseKind::Chemical),
            ("S2", "K", -1.0, SynapseKind::Chemical),
            ("K", "ML", 2.0, SynapseKind::Neuromuscular),
            ("S1", "MR", 5.0, SynapseKind::Neuromuscular),
            ("S2", "ML2", 1.0, SynapseKind::Neuromuscular),
        ];
        let roles = RoleSets {
            sensory_food: vec!["S1".into(), "S2".into()],
            sensory_avoid: vec![],
            muscle_left: vec!["ML".into(), "ML2".into()],
            muscle_right: vec!["MR".into()],
            muscle_other: vec![],
        };
        Connectome::from_edges(edges, roles).unwrap()
    }

    fn id(c: &Connectome, n: &str) -> NeuronId {
        c.id(n).unwrap()
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let c = net();
        let p = SimParams::default();
        let mut s = NetworkState::reset(&c);
        s.step(c.prior(), &c, &p).unwrap();
        assert_eq!(s, NetworkState::reset(&c));
    }

    #[test]
    fn hand_evaluated_accumulation() {
        let c = net();
        let p = SimParams { fire_threshold: 30.0 };
        let mut s = NetworkState::reset(&c);
        s.fired_mut()[id(&c, "S1").index()] = true;
        s.fired_mut()[id(&c, "S2").index()] = true;
        s.step(c.prior(), &c, &p).unwrap();
        assert_eq!(s.potentials()[id(&c, "K").index()], 2.0);
        assert!(!s.fired()[id(&c, "K").index()]);
    }

    #[test]
    fn threshold_crossing_resets() {
        let c = net();
        let p = SimParams { fire_threshold: 30.0 };
        let mut s = NetworkState::reset(&c);
        let k = id(&c, "K").index();
        s.potentials_mut()[k] = 29.0;
        s.fired_mut()[id(&c, "S1").index()] = true;
        let mut w = c.prior().to_vec();
        w[0] = 2.0;
        s.step(&w, &c, &p).unwrap();
        assert!(s.fired()[k]);
        assert_eq!(s.potentials()[k], 0.0);
    }

    #[test]
    fn forced_neurons_drive_downstream_one_step_later() {
        let c = net();
        let p = SimParams::default();
        let mut s = NetworkState::reset(&c);
        let ids = [id(&c, "S1"), id(&c, "S2")];
        s.force_fire(&c, &ids).unwrap();
        s.force_fire(&c, &ids).unwrap();
        s.step(c.prior(), &c, &p).unwrap();
        assert!(s.fired()[ids[0].index()] && s.fired()[ids[1].index()]);
        assert_eq!(s.forced().count(), 0);
        s.step(c.prior(), &c, &p).unwrap();
        assert_eq!(s.potentials()[id(&c, "K").index()], 3.0 - 1.0);
        assert_eq!(s.muscle_activity(&c), (1.0, 5.0));
    }

    #[test]
    fn forcing_empty_set_changes_nothing() {
        let c = net();
        let p = SimParams::default();
        let mut a = NetworkState::reset(&c);
        a.fired_mut()[0] = true;
        let mut b = a.clone();
        b.force_fire(&c, &[]).unwrap();
        a.step(c.prior(), &c, &p).unwrap();
        b.step(c.prior(), &c, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn force_rejects_unknown_and_muscle_ids() {
        let c = net();
        let mut s = NetworkState::reset(&c);
        assert!(s.force_fire(&c, &[NeuronId(99)]).is_err());
        assert!(s.force_fire(&c, &[id(&c, "ML")]).is_err());
    }

    #[test]
    fn muscle_readout_sums_and_resets() {
        let c = net();
        let mut s = NetworkState::reset(&c);
        assert_eq!(s.muscle_activity(&c), (0.0, 0.0));
        s.potentials_mut()[id(&c, "ML").index()] = 2.0;
        s.potentials_mut()[id(&c, "ML2").index()] = 3.0;
        s.potentials_mut()[id(&c, "MR").index()] = 5.0;
        assert_eq!(s.muscle_activity(&c), (5.0, 5.0));
        assert_eq!(s.muscle_activity(&c), (0.0, 0.0));
    }

    #[test]
    fn muscles_never_fire() {
        let c = net();
        let p = SimParams { fire_threshold: 1.0 };
        let mut s = NetworkState::reset(&c);
        let ml = id(&c, "ML").index();
        s.potentials_mut()[ml] = 100.0;
        s.step(c.prior(), &c, &p).unwrap();
        assert!(!s.fired()[ml]);
        assert_eq!(s.potentials()[ml], 100.0);
    }

    #[test]
    fn dimension_mismatch() {
        let c = net();
        let p = SimParams::default();
        let mut s = NetworkState::zeroed(3);
        assert!(s.step(c.prior(), &c, &p).is_err());
        let mut s = NetworkState::reset(&c);
        assert!(s.step(&[1.0], &c, &p).is_err());
    }

    #[test]
    fn threshold_must_be_positive() {
        assert!(SimParams { fire_threshold: 0.0 }.validate().is_err());
        assert!(SimParams { fire_threshold: f64::NAN }.validate().is_err());
        assert!(SimParams::default().validate().is_ok());
    }
}
