#![allow(dead_code)]

use enomad::connectome::{Connectome, RoleSets, SynapseKind};
use enomad::NetworkState;
use rand::Rng;

/// A random network of at most 10 nodes with integer weights, plus a
/// random starting state.
pub struct Instance {
    pub conn: Connectome,
    pub weights: Vec<f64>,
    pub v: Vec<f64>,
    pub fired: Vec<bool>,
    pub forced: Vec<bool>,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    loop {
        let n = rng.random_range(2..=10usize);
        let muscles = rng.random_range(0..=2usize.min(n - 1));
        let neurons = n - muscles;
        let name = |i: usize| {
            if i < neurons {
                format!("N{i}")
            } else {
                format!("M{i}")
            }
        };
        let density = rng.random_range(0.1..0.9);
        let mut edges = Vec::new();
        for pre in 0..neurons {
            for post in 0..n {
                if rng.random_bool(density) {
                    let w = rng.random_range(-40..=40) as f64;
                    let kind = if post >= neurons {
                        SynapseKind::Neuromuscular
                    } else {
                        SynapseKind::Chemical
                    };
                    edges.push((name(pre), name(post), w, kind));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let mut roles = RoleSets::default();
        for i in neurons..n {
            if i % 2 == 0 {
                roles.muscle_left.push(name(i));
            } else {
                roles.muscle_right.push(name(i));
            }
        }
        // muscles that ended up without inputs do not exist as nodes
        let present: std::collections::HashSet<String> =
            edges.iter().flat_map(|e| [e.0.clone(), e.1.clone()]).collect();
        roles.muscle_left.retain(|m| present.contains(m));
        roles.muscle_right.retain(|m| present.contains(m));
        let conn = Connectome::from_edges(edges, roles).expect("valid random network");
        let nodes = conn.node_count();
        let p_fire = rng.random_range(0.0..1.0);
        let weights = conn.prior().to_vec();
        let v = (0..nodes).map(|_| rng.random_range(-60..=60) as f64).collect();
        let fired = (0..nodes)
            .map(|k| !conn.is_muscle(enomad::NeuronId(k as u32)) && rng.random_bool(p_fire))
            .collect();
        let forced = (0..nodes)
            .map(|k| !conn.is_muscle(enomad::NeuronId(k as u32)) && rng.random_bool(0.2))
            .collect();
        return Instance {
            conn,
            weights,
            v,
            fired,
            forced,
        };
    }
}

/// Direct transcription of the update: integrate the previous spikes over
/// every synapse, then threshold, force and reset the non-muscle nodes.
pub fn oracle_step(inst: &Instance, threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let mut v = inst.v.clone();
    for (syn, w) in inst.conn.synapses().iter().zip(&inst.weights) {
        if inst.fired[syn.pre.index()] {
            v[syn.post.index()] += w;
        }
    }
    let mut fired = vec![false; v.len()];
    for k in 0..v.len() {
        if inst.conn.is_muscle(enomad::NeuronId(k as u32)) {
            continue;
        }
        if v[k] >= threshold || inst.forced[k] {
            fired[k] = true;
            v[k] = 0.0;
        }
    }
    (v, fired)
}

pub fn state_of(inst: &Instance) -> NetworkState {
    let mut s = NetworkState::reset(&inst.conn);
    s.potentials_mut().copy_from_slice(&inst.v);
    s.fired_mut().copy_from_slice(&inst.fired);
    let forced: Vec<_> = (0..inst.forced.len())
        .filter(|&k| inst.forced[k])
        .map(|k| enomad::NeuronId(k as u32))
        .collect();
    s.force_fire(&inst.conn, &forced).expect("non-muscle forcing");
    s
}

/// Steps the library implementation once from the instance's state.
pub fn library_step(inst: &Instance, threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let mut s = state_of(inst);
    let params = enomad::SimParams {
        fire_threshold: threshold,
    };
    s.step(&inst.weights, &inst.conn, &params).expect("step");
    (s.potentials().to_vec(), s.fired().to_vec())
}

/// Bowl with its peak at 3 in every subset coordinate.
pub fn bowl(subset: &[usize]) -> impl Fn(&enomad::Genome) -> f64 + Sync + '_ {
    move |g: &enomad::Genome| -subset.iter().map(|&i| (g.get(i) - 3.0).powi(2)).sum::<f64>()
}
