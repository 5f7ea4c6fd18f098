//! The biological network prior and the genomes derived from it.
//!
//! A [`Connectome`] is an immutable directed multigraph of neurons and muscle
//! cells. Its synapse list order defines the genome coordinates: synapse `s`
//! owns weight `s` of every [`Genome`].
//!
//! On disk a connectome is a CSV file with header `pre,post,weight,kind`
//! (`kind` one of `chem`, `gap`, `nmj`) plus a JSON role sidecar naming the
//! sensory and muscle cells.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Food-sensing neurons driven when food is within detection range.
pub const FOOD_SENSORS: [&str; 8] = [
    "ADFL", "ADFR", "ASGR", "ASGL", "ASIL", "ASIR", "ASJR", "ASJL",
];

/// Avoidance neurons driven when the worm is near a wall.
pub const AVOID_SENSORS: [&str; 10] = [
    "FLPR", "FLPL", "ASHL", "ASHR", "IL1VL", "IL1VR", "OLQDL", "OLQDR", "OLQVR", "OLQVL",
];

/// Weight range of the contact-count prior.
pub const PRIOR_WEIGHT_MIN: f64 = -13.0;
pub const PRIOR_WEIGHT_MAX: f64 = 37.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NeuronId(pub u32);

impl NeuronId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SynapseKind {
    Chemical,
    GapJunction,
    Neuromuscular,
}

impl SynapseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynapseKind::Chemical => "chem",
            SynapseKind::GapJunction => "gap",
            SynapseKind::Neuromuscular => "nmj",
        }
    }
}

impl fmt::Display for SynapseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynapseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chem" => Ok(SynapseKind::Chemical),
            "gap" => Ok(SynapseKind::GapJunction),
            "nmj" => Ok(SynapseKind::Neuromuscular),
            other => Err(format!("unknown synapse kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synapse {
    pub pre: NeuronId,
    pub post: NeuronId,
    /// Signed contact count used as the prior weight.
    pub base_weight: f64,
    pub kind: SynapseKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    SensoryFood,
    SensoryAvoid,
    Interneuron,
    MuscleLeft,
    MuscleRight,
    /// A muscle present in the data that does not drive locomotion.
    MuscleOther,
}

impl Role {
    pub fn is_muscle(self) -> bool {
        matches!(self, Role::MuscleLeft | Role::MuscleRight | Role::MuscleOther)
    }
}

/// The role sidecar, stored as JSON next to the connectome CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSets {
    pub sensory_food: Vec<String>,
    pub sensory_avoid: Vec<String>,
    pub muscle_left: Vec<String>,
    pub muscle_right: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub muscle_other: Vec<String>,
}

impl RoleSets {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("role sets serialize")
    }
}

/// Sidecar path used when none is given: `<stem>.roles.json` beside the CSV.
pub fn default_roles_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.roles.json"))
}

#[derive(Debug, Clone)]
pub struct Connectome {
    names: Vec<String>,
    index: HashMap<String, NeuronId>,
    roles: Vec<Role>,
    role_sets: RoleSets,
    food_sensors: Vec<NeuronId>,
    avoid_sensors: Vec<NeuronId>,
    muscle_left: Vec<NeuronId>,
    muscle_right: Vec<NeuronId>,
    synapses: Vec<Synapse>,
    // CSR adjacency by presynaptic node: (post, synapse index).
    out_offsets: Vec<u32>,
    out_edges: Vec<(u32, u32)>,
    muscle_mask: Vec<bool>,
    prior: Arc<[f64]>,
}

impl Connectome {
    /// Builds and validates a connectome from named edges.
    ///
    /// Node indices follow first appearance in `edges` (pre before post).
    pub fn from_edges<S: AsRef<str>>(
        edges: impl IntoIterator<Item = (S, S, f64, SynapseKind)>,
        roles: RoleSets,
    ) -> Result<Self> {
        let mut names = Vec::new();
        let mut index: HashMap<String, NeuronId> = HashMap::new();
        let mut intern = |name: &str| -> NeuronId {
            if let Some(&id) = index.get(name) {
                return id;
            }
            let id = NeuronId(names.len() as u32);
            names.push(name.to_owned());
            index.insert(name.to_owned(), id);
            id
        };
        let mut synapses = Vec::new();
        let mut seen = HashSet::new();
        for (line0, (pre, post, weight, kind)) in edges.into_iter().enumerate() {
            let (pre, post) = (intern(pre.as_ref()), intern(post.as_ref()));
            if !seen.insert((pre, post, kind)) {
                return Err(Error::DuplicateSynapse {
                    // header occupies line 1
                    line: line0 + 2,
                    pre: names[pre.index()].clone(),
                    post: names[post.index()].clone(),
                    kind: kind.to_string(),
                });
            }
            synapses.push(Synapse {
                pre,
                post,
                base_weight: weight,
                kind,
            });
        }
        if synapses.is_empty() {
            return Err(Error::NoSynapses);
        }
        Self::assemble(names, index, synapses, roles)
    }

    fn assemble(
        names: Vec<String>,
        index: HashMap<String, NeuronId>,
        synapses: Vec<Synapse>,
        role_sets: RoleSets,
    ) -> Result<Self> {
        let n = names.len();
        let resolve = |role: &'static str, list: &[String]| -> Result<Vec<NeuronId>> {
            let mut out = Vec::with_capacity(list.len());
            let mut uniq = HashSet::new();
            for name in list {
                let id = *index.get(name).ok_or_else(|| Error::UnknownRoleNeuron {
                    role,
                    name: name.clone(),
                })?;
                if !uniq.insert(id) {
                    return Err(Error::InvalidConnectome(format!(
                        "`{name}` listed twice in `{role}`"
                    )));
                }
                out.push(id);
            }
            Ok(out)
        };
        let food_sensors = resolve("sensory_food", &role_sets.sensory_food)?;
        let avoid_sensors = resolve("sensory_avoid", &role_sets.sensory_avoid)?;
        let muscle_left = resolve("muscle_left", &role_sets.muscle_left)?;
        let muscle_right = resolve("muscle_right", &role_sets.muscle_right)?;
        let muscle_other = resolve("muscle_other", &role_sets.muscle_other)?;

        let mut roles = vec![Role::Interneuron; n];
        let mut assign = |ids: &[NeuronId], role: Role| -> Result<()> {
            for &id in ids {
                let slot = &mut roles[id.index()];
                if *slot != Role::Interneuron && *slot != role {
                    return Err(Error::InvalidConnectome(format!(
                        "`{}` has conflicting roles {:?} and {:?}",
                        names[id.index()],
                        slot,
                        role
                    )));
                }
                *slot = role;
            }
            Ok(())
        };
        assign(&muscle_left, Role::MuscleLeft)?;
        assign(&muscle_right, Role::MuscleRight)?;
        assign(&muscle_other, Role::MuscleOther)?;
        assign(&food_sensors, Role::SensoryFood)?;
        assign(&avoid_sensors, Role::SensoryAvoid)?;

        let mut gap_pairs = HashSet::new();
        for syn in &synapses {
            let post_role = roles[syn.post.index()];
            match syn.kind {
                SynapseKind::Neuromuscular if !post_role.is_muscle() => {
                    return Err(Error::InvalidConnectome(format!(
                        "neuromuscular synapse {} -> {} does not end on a muscle",
                        names[syn.pre.index()],
                        names[syn.post.index()]
                    )));
                }
                SynapseKind::GapJunction => {
                    gap_pairs.insert((syn.pre, syn.post));
                }
                _ => {}
            }
            if roles[syn.pre.index()].is_muscle() {
                return Err(Error::InvalidConnectome(format!(
                    "muscle `{}` has an outgoing synapse",
                    names[syn.pre.index()]
                )));
            }
        }
        for &(pre, post) in &gap_pairs {
            if !gap_pairs.contains(&(post, pre)) {
                return Err(Error::InvalidConnectome(format!(
                    "gap junction {} -> {} has no reverse edge",
                    names[pre.index()],
                    names[post.index()]
                )));
            }
        }

        let mut out_offsets = vec![0u32; n + 1];
        for syn in &synapses {
            out_offsets[syn.pre.index() + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }
        let mut cursor = out_offsets.clone();
        let mut out_edges = vec![(0u32, 0u32); synapses.len()];
        for (s, syn) in synapses.iter().enumerate() {
            let slot = &mut cursor[syn.pre.index()];
            out_edges[*slot as usize] = (syn.post.0, s as u32);
            *slot += 1;
        }
        let prior: Arc<[f64]> = synapses.iter().map(|s| s.base_weight).collect();
        let muscle_mask = roles.iter().map(|r| r.is_muscle()).collect();

        Ok(Connectome {
            names,
            index,
            roles,
            role_sets,
            food_sensors,
            avoid_sensors,
            muscle_left,
            muscle_right,
            synapses,
            out_offsets,
            out_edges,
            muscle_mask,
            prior,
        })
    }

    /// Parses connectome CSV text. A leading `#` line (checkpoint metadata)
    /// is skipped.
    pub fn parse_csv(text: &str, roles: RoleSets) -> Result<Self> {
        let mut edges = Vec::new();
        let mut header_seen = false;
        for (i, raw) in text.split('\n').enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() || (!header_seen && line.starts_with('#')) {
                continue;
            }
            if !header_seen {
                if line != "pre,post,weight,kind" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected header `pre,post,weight,kind`, found `{line}`"),
                    });
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let weight: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid weight `{}`", fields[2]),
            })?;
            if !weight.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite weight `{}`", fields[2]),
                });
            }
            let kind = fields[3]
                .parse::<SynapseKind>()
                .map_err(|message| Error::Parse {
                    line: line_no,
                    message,
                })?;
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty neuron name".into(),
                });
            }
            edges.push((line_no, fields[0], fields[1], weight, kind));
        }
        if edges.is_empty() {
            return Err(Error::NoSynapses);
        }
        // Re-run duplicate detection here so errors carry file line numbers.
        let mut seen = HashSet::new();
        for &(line, pre, post, _, kind) in &edges {
            if !seen.insert((pre, post, kind)) {
                return Err(Error::DuplicateSynapse {
                    line,
                    pre: pre.into(),
                    post: post.into(),
                    kind: kind.to_string(),
                });
            }
        }
        Self::from_edges(edges.into_iter().map(|(_, a, b, w, k)| (a, b, w, k)), roles)
    }

    pub fn load(csv_path: &Path, roles_path: &Path) -> Result<Self> {
        let roles = RoleSets::load(roles_path)?;
        let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        Self::parse_csv(&text, roles)
    }

    /// Serializes `weights` (one per synapse, in genome order) as connectome CSV.
    pub fn write_csv(&self, weights: &[f64], mut out: impl Write) -> std::io::Result<()> {
        assert_eq!(weights.len(), self.synapses.len(), "weight vector length");
        let mut buf = String::with_capacity(self.synapses.len() * 24);
        buf.push_str("pre,post,weight,kind\n");
        for (syn, w) in self.synapses.iter().zip(weights) {
            use std::fmt::Write as _;
            let _ = writeln!(
                buf,
                "{},{},{},{}",
                self.names[syn.pre.index()],
                self.names[syn.post.index()],
                w,
                syn.kind
            );
        }
        out.write_all(buf.as_bytes())
    }

    pub fn to_csv_string(&self, weights: &[f64]) -> String {
        let mut v = Vec::new();
        self.write_csv(weights, &mut v).expect("in-memory write");
        String::from_utf8(v).expect("utf-8")
    }

    /// Writes the prior CSV and its role sidecar.
    pub fn save(&self, csv_path: &Path, roles_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv_string(&self.prior))
            .map_err(|e| Error::io(csv_path, e))?;
        fs::write(roles_path, self.role_sets.to_json()).map_err(|e| Error::io(roles_path, e))
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    /// Number of synapses, i.e. genome dimension.
    pub fn synapse_count(&self) -> usize {
        self.synapses.len()
    }

    pub fn synapses(&self) -> &[Synapse] {
        &self.synapses
    }

    pub fn name(&self, id: NeuronId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<NeuronId> {
        self.index.get(name).copied()
    }

    pub fn role(&self, id: NeuronId) -> Role {
        self.roles[id.index()]
    }

    pub fn is_muscle(&self, id: NeuronId) -> bool {
        self.muscle_mask[id.index()]
    }

    pub(crate) fn muscle_mask(&self) -> &[bool] {
        &self.muscle_mask
    }


    pub fn role_sets(&self) -> &RoleSets {
        &self.role_sets
    }

    pub fn food_sensors(&self) -> &[NeuronId] {
        &self.food_sensors
    }

    pub fn avoid_sensors(&self) -> &[NeuronId] {
        &self.avoid_sensors
    }

    pub fn muscle_left(&self) -> &[NeuronId] {
        &self.muscle_left
    }

    pub fn muscle_right(&self) -> &[NeuronId] {
        &self.muscle_right
    }

    /// Outgoing edges of `pre` as `(post, synapse index)` pairs.
    #[inline]
    pub fn outgoing(&self, pre: usize) -> &[(u32, u32)] {
        let (a, b) = (self.out_offsets[pre], self.out_offsets[pre + 1]);
        &self.out_edges[a as usize..b as usize]
    }

    /// Prior weights W₀, shared by every genome derived from this connectome.
    pub fn prior(&self) -> &Arc<[f64]> {
        &self.prior
    }

    pub fn prior_genome(&self) -> Genome {
        Genome::from_prior(Arc::clone(&self.prior))
    }

    pub fn kind_counts(&self) -> (usize, usize, usize) {
        self.synapses.iter().fold((0, 0, 0), |(c, g, m), s| match s.kind {
            SynapseKind::Chemical => (c + 1, g, m),
            SynapseKind::GapJunction => (c, g + 1, m),
            SynapseKind::Neuromuscular => (c, g, m + 1),
        })
    }
}

/// Generates a deterministic stand-in connectome with the real sensory
/// names, `n_neurons` nodes in total and `n_synapses` synapses.
///
/// Sensory neurons are purely upstream, muscles purely downstream. Interneurons
/// carry chemical synapses and paired gap junctions; a share of them project
/// neuromuscular junctions onto the muscles. Weights are integers drawn
/// uniformly from the prior range.
pub fn synthetic_connectome(seed: u64, n_neurons: usize, n_synapses: usize) -> Result<Connectome> {
    let n_sensory = FOOD_SENSORS.len() + AVOID_SENSORS.len();
    if n_neurons < n_sensory + 2 {
        return Err(Error::Config(format!(
            "synthetic connectome needs at least {} neurons, got {n_neurons}",
            n_sensory + 2
        )));
    }
    if n_synapses == 0 {
        return Err(Error::NoSynapses);
    }
    let n_muscle = ((n_neurons as f64 * 68.0 / 368.0).round() as usize).clamp(2, n_neurons - n_sensory);
    let n_inter = n_neurons - n_sensory - n_muscle;
    let n_left = n_muscle.div_ceil(2);

    let mut names: Vec<String> = FOOD_SENSORS.iter().chain(&AVOID_SENSORS).map(|s| s.to_string()).collect();
    names.extend((0..n_inter).map(|i| format!("N{:03}", i + 1)));
    let muscle_name = |side: char, k: usize| {
        let row = if k % 2 == 0 { 'D' } else { 'V' };
        format!("M{row}{side}{:02}", k / 2 + 1)
    };
    let left: Vec<String> = (0..n_left).map(|k| muscle_name('L', k)).collect();
    let right: Vec<String> = (0..n_muscle - n_left).map(|k| muscle_name('R', k)).collect();
    names.extend(left.iter().cloned());
    names.extend(right.iter().cloned());

    let sensory: Vec<usize> = (0..n_sensory).collect();
    let inter: Vec<usize> = (n_sensory..n_sensory + n_inter).collect();
    let muscles: Vec<usize> = (n_sensory + n_inter..n_neurons).collect();

    // Candidate edge pools per kind.
    let chem_pool: Vec<(usize, usize)> = sensory
        .iter()
        .chain(&inter)
        .flat_map(|&a| inter.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect();
    let gap_pool: Vec<(usize, usize)> = inter
        .iter()
        .flat_map(|&a| inter.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
        .collect();
    let motor_pre: &[usize] = if inter.is_empty() { &sensory } else { &inter };
    let nmj_pool: Vec<(usize, usize)> = motor_pre
        .iter()
        .flat_map(|&a| muscles.iter().map(move |&b| (a, b)))
        .collect();

    let capacity = chem_pool.len() + 2 * gap_pool.len() + nmj_pool.len();
    if n_synapses > capacity {
        return Err(Error::Config(format!(
            "{n_synapses} synapses do not fit {n_neurons} neurons (capacity {capacity})"
        )));
    }

    let mut want_nmj = ((n_synapses as f64 * 0.1).round() as usize).max(n_muscle.min(n_synapses));
    want_nmj = want_nmj.min(nmj_pool.len());
    let mut want_gap = ((n_synapses as f64 * 0.1).round() as usize).min(gap_pool.len());
    want_gap = want_gap.min((n_synapses - want_nmj) / 2);
    let mut want_chem = n_synapses - want_nmj - 2 * want_gap;
    // Spill any overflow into the pools that still have room.
    if want_chem > chem_pool.len() {
        let mut extra = want_chem - chem_pool.len();
        want_chem = chem_pool.len();
        let more_gap = (gap_pool.len() - want_gap).min(extra / 2);
        want_gap += more_gap;
        extra -= 2 * more_gap;
        let more_nmj = (nmj_pool.len() - want_nmj).min(extra);
        want_nmj += more_nmj;
        extra -= more_nmj;
        if extra > 0 {
            // odd remainder: trade one gap pair for chem/nmj slots is not
            // possible, so report it
            return Err(Error::Config(format!(
                "cannot place {n_synapses} synapses on {n_neurons} neurons"
            )));
        }
    }

    let mut rng = seed::rng_for(seed, &[n_neurons as u64, n_synapses as u64]);
    let weight = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        rng.random_range(PRIOR_WEIGHT_MIN as i64..=PRIOR_WEIGHT_MAX as i64) as f64
    };

    // Coverage first: every sensory neuron projects somewhere and every
    // muscle receives input, so no role-tagged node is isolated.
    let mut chem_required = Vec::new();
    let mut nmj_required = Vec::new();
    if n_inter > 0 {
        for &s in &sensory {
            chem_required.push(s * n_inter + rng.random_range(0..n_inter));
        }
    } else {
        for &s in &sensory {
            nmj_required.push(s * muscles.len() + rng.random_range(0..muscles.len()));
        }
    }
    for k in 0..muscles.len() {
        nmj_required.push(rng.random_range(0..motor_pre.len()) * muscles.len() + k);
    }

    let mut edges: Vec<(usize, usize, f64, SynapseKind)> = Vec::with_capacity(n_synapses);
    for i in pick(&mut rng, chem_pool.len(), want_chem, chem_required) {
        let (a, b) = chem_pool[i];
        let w = weight(&mut rng);
        edges.push((a, b, w, SynapseKind::Chemical));
    }
    for i in pick(&mut rng, gap_pool.len(), want_gap, Vec::new()) {
        let (a, b) = gap_pool[i];
        let (w1, w2) = (weight(&mut rng), weight(&mut rng));
        edges.push((a, b, w1, SynapseKind::GapJunction));
        edges.push((b, a, w2, SynapseKind::GapJunction));
    }
    for i in pick(&mut rng, nmj_pool.len(), want_nmj, nmj_required) {
        let (a, b) = nmj_pool[i];
        let w = weight(&mut rng);
        edges.push((a, b, w, SynapseKind::Neuromuscular));
    }
    debug_assert_eq!(edges.len(), n_synapses);

    let roles = RoleSets {
        sensory_food: FOOD_SENSORS.iter().map(|s| s.to_string()).collect(),
        sensory_avoid: AVOID_SENSORS.iter().map(|s| s.to_string()).collect(),
        muscle_left: left,
        muscle_right: right,
        muscle_other: Vec::new(),
    };
    // Intern every node in canonical order so isolated nodes still exist.
    let index: HashMap<String, NeuronId> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), NeuronId(i as u32)))
        .collect();
    let synapses = edges
        .into_iter()
        .map(|(a, b, w, kind)| Synapse {
            pre: NeuronId(a as u32),
            post: NeuronId(b as u32),
            base_weight: w,
            kind,
        })
        .collect();
    Connectome::assemble(names, index, synapses, roles)
}

/// Chooses `want` distinct pool indices, taking `required` ones first.
fn pick(rng: &mut rand_chacha::ChaCha8Rng, pool: usize, want: usize, required: Vec<usize>) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(want);
    let mut taken = HashSet::new();
    for i in required {
        if chosen.len() == want {
            break;
        }
        if taken.insert(i) {
            chosen.push(i);
        }
    }
    let rest: Vec<usize> = (0..pool).filter(|i| !taken.contains(i)).collect();
    let extra = want - chosen.len();
    chosen.extend(index::sample(rng, rest.len(), extra).into_iter().map(|i| rest[i]));
    chosen
}

/// A full weight vector over all synapses.
///
/// The set of coordinates that differ from the prior is maintained on every
/// write, so the change count used by the regularizer is O(1).
#[derive(Debug, Clone)]
pub struct Genome {
    weights: Vec<f64>,
    prior: Arc<[f64]>,
    dirty: BTreeSet<usize>,
}

impl PartialEq for Genome {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl Genome {
    pub fn from_prior(prior: Arc<[f64]>) -> Self {
        Genome {
            weights: prior.to_vec(),
            prior,
            dirty: BTreeSet::new(),
        }
    }

    pub fn from_weights(prior: Arc<[f64]>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != prior.len() {
            return Err(Error::DimensionMismatch {
                expected: prior.len(),
                actual: weights.len(),
            });
        }
        let dirty = weights
            .iter()
            .zip(prior.iter())
            .enumerate()
            .filter(|(_, (w, p))| w != p)
            .map(|(i, _)| i)
            .collect();
        Ok(Genome {
            weights,
            prior,
            dirty,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.weights[i] = value;
        if value != self.prior[i] {
            self.dirty.insert(i);
        } else {
            self.dirty.remove(&i);
        }
    }

    pub fn prior(&self) -> &Arc<[f64]> {
        &self.prior
    }

    /// Coordinates whose weight differs from the prior.
    pub fn dirty(&self) -> &BTreeSet<usize> {
        &self.dirty
    }

    pub fn changed_count(&self) -> usize {
        self.dirty.len()
    }

    /// Recomputes the changed set from scratch and compares it with the
    /// incrementally maintained one.
    pub fn audit_dirty(&self) -> bool {
        let scan: BTreeSet<usize> = self
            .weights
            .iter()
            .zip(self.prior.iter())
            .enumerate()
            .filter(|(_, (w, p))| w != p)
            .map(|(i, _)| i)
            .collect();
        scan == self.dirty
    }

    pub fn l0_from_prior(&self) -> usize {
        self.dirty.len()
    }

    pub fn l2_from_prior(&self) -> f64 {
        self.dirty
            .iter()
            .map(|&i| (self.weights[i] - self.prior[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Number of coordinates where `a` and `b` differ.
pub fn l0_distance(a: &[f64], b: &[f64]) -> Result<usize> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Euclidean distance between `a` and `b`.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_roles() -> RoleSets {
        RoleSets {
            sensory_food: vec!["A".into()],
            sensory_avoid: vec!["B".into()],
            muscle_left: vec!["ML".into()],
            muscle_right: vec!["MR".into()],
            muscle_other: vec![],
        }
    }

    const TINY: &str = "pre,post,weight,kind\nA,C,3,chem\nB,C,-1,chem\nC,D,2,gap\nD,C,5,gap\nC,ML,4,nmj\nD,MR,7,nmj\n";

    #[test]
    fn parses_tiny_file() {
        let c = Connectome::parse_csv(TINY, tiny_roles()).unwrap();
        assert_eq!(c.synapse_count(), 6);
        assert_eq!(c.node_count(), 6);
        assert_eq!(c.name(NeuronId(0)), "A");
        assert_eq!(c.prior()[1], -1.0);
        assert_eq!(c.role(c.id("ML").unwrap()), Role::MuscleLeft);
        let out: Vec<_> = c.outgoing(c.id("C").unwrap().index()).to_vec();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn empty_file_has_no_synapses() {
        let err = Connectome::parse_csv("", tiny_roles()).unwrap_err();
        assert_eq!(err.to_string(), "no synapses");
        let err = Connectome::parse_csv("pre,post,weight,kind\n", tiny_roles()).unwrap_err();
        assert!(matches!(err, Error::NoSynapses));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "pre,post,weight,kind\nA,C,3,chem\nB,C,x,chem\n";
        match Connectome::parse_csv(bad, tiny_roles()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let bad = "pre,post,weight,kind\nA,C,3,glue\n";
        assert!(matches!(
            Connectome::parse_csv(bad, tiny_roles()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_triple_rejected() {
        let dup = format!("{TINY}A,C,9,chem\n");
        match Connectome::parse_csv(&dup, tiny_roles()).unwrap_err() {
            Error::DuplicateSynapse { line, pre, post, .. } => {
                assert_eq!((line, pre.as_str(), post.as_str()), (8, "A", "C"));
            }
            e => panic!("unexpected {e}"),
        }
        // same pair, different kind, is fine
        let ok = format!("{TINY}A,C,9,gap\nC,A,1,gap\n");
        assert!(Connectome::parse_csv(&ok, tiny_roles()).is_ok());
    }

    #[test]
    fn unknown_role_name_rejected() {
        let mut roles = tiny_roles();
        roles.sensory_food.push("ADFL".into());
        assert!(matches!(
            Connectome::parse_csv(TINY, roles),
            Err(Error::UnknownRoleNeuron { name, .. }) if name == "ADFL"
        ));
    }

    #[test]
    fn structural_invariants_enforced() {
        let nmj_to_neuron = "pre,post,weight,kind\nA,C,3,nmj\nC,ML,1,nmj\nC,MR,1,nmj\n";
        assert!(Connectome::parse_csv(nmj_to_neuron, tiny_roles()).is_err());
        let one_way_gap = "pre,post,weight,kind\nA,C,3,gap\nC,ML,1,nmj\nC,MR,1,nmj\n";
        assert!(Connectome::parse_csv(one_way_gap, tiny_roles()).is_err());
        let mut overlap = tiny_roles();
        overlap.muscle_right.push("ML".into());
        assert!(Connectome::parse_csv(TINY, overlap).is_err());
    }

    #[test]
    fn write_then_read_is_byte_identical() {
        let c = synthetic_connectome(3, 30, 60).unwrap();
        let text = c.to_csv_string(c.prior());
        let back = Connectome::parse_csv(&text, c.role_sets().clone()).unwrap();
        assert_eq!(back.synapse_count(), 60);
        assert_eq!(back.to_csv_string(back.prior()), text);
        assert_eq!(&*back.prior(), &*c.prior());
    }

    #[test]
    fn fractional_weights_round_trip_exactly() {
        let c = Connectome::parse_csv(TINY, tiny_roles()).unwrap();
        let w = vec![0.1, -1.0 / 3.0, 1e-300, 17.25, -0.0, 6.02214076e23];
        let text = c.to_csv_string(&w);
        let back = Connectome::parse_csv(&text, tiny_roles()).unwrap();
        for (a, b) in back.prior().iter().zip(&w) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_seeded() {
        let a = synthetic_connectome(1, 50, 400).unwrap();
        let b = synthetic_connectome(1, 50, 400).unwrap();
        let c = synthetic_connectome(2, 50, 400).unwrap();
        assert_eq!(a.synapse_count(), 400);
        assert_eq!(a.to_csv_string(a.prior()), b.to_csv_string(b.prior()));
        assert_ne!(&*a.prior(), &*c.prior());
        assert!(a
            .prior()
            .iter()
            .all(|w| (PRIOR_WEIGHT_MIN..=PRIOR_WEIGHT_MAX).contains(w)));
        for name in FOOD_SENSORS.iter().chain(&AVOID_SENSORS) {
            assert!(a.id(name).is_some(), "{name}");
        }
        assert!(!a.muscle_left().is_empty() && !a.muscle_right().is_empty());
    }

    #[test]
    fn synthetic_minimum_size() {
        assert!(synthetic_connectome(1, 19, 10).is_err());
        let c = synthetic_connectome(1, 20, 30).unwrap();
        assert_eq!(c.node_count(), 20);
        assert_eq!(c.synapse_count(), 30);
        assert!(synthetic_connectome(1, 20, 10_000).is_err());
    }

    #[test]
    fn distances() {
        let w0 = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(l0_distance(&w0, &w0).unwrap(), 0);
        assert_eq!(l2_distance(&w0, &w0).unwrap(), 0.0);
        let mut g = w0.clone();
        for v in g.iter_mut().take(5) {
            *v += 10.0;
        }
        assert_eq!(l0_distance(&g, &w0).unwrap(), 5);
        let mut g = w0.clone();
        g[2] += 3.0;
        assert_eq!(l2_distance(&g, &w0).unwrap(), 3.0);
        let g: Vec<f64> = w0.iter().enumerate().map(|(i, v)| if i < 4 { v + 1.0 } else { *v }).collect();
        assert_eq!(l2_distance(&g, &w0).unwrap(), 2.0);
        assert!(l0_distance(&g[..3], &w0).is_err());
    }

    #[test]
    fn genome_tracks_dirty_coordinates() {
        let prior: Arc<[f64]> = vec![0.0, 1.0, 2.0].into();
        let mut g = Genome::from_prior(prior.clone());
        g.set(1, 5.0);
        g.set(2, 2.0);
        assert_eq!(g.dirty().iter().copied().collect::<Vec<_>>(), vec![1]);
        g.set(1, 1.0);
        assert!(g.dirty().is_empty());
        assert!(g.audit_dirty());
        let g = Genome::from_weights(prior, vec![0.0, 3.0, 6.0]).unwrap();
        assert_eq!(g.changed_count(), 2);
        assert_eq!(g.l2_from_prior(), (4.0f64 + 16.0).sqrt());
    }
}
