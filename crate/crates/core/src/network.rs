//! Radio connectivity graphs, periodic slot schedules and everything derived
//! from them: path delays, the network transfer function, prefix weights
//! (`alpha`) for both computational models, data rates, and the constructive
//! weight designs that realize prescribed `alpha` / `gamma` targets.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, RationalTf, SampleTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Controller to actuator.
    Controllability,
    /// Sensor to controller.
    Observability,
}

/// How relay nodes combine and forward data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComputationalModel {
    /// Sum the incoming data, weight each outgoing link separately.
    SumThenWeight,
    /// Weight the incoming data, broadcast the sum on every outgoing link.
    WeightThenBroadcast,
}

impl ComputationalModel {
    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(ComputationalModel::SumThenWeight),
            2 => Some(ComputationalModel::WeightThenBroadcast),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            ComputationalModel::SumThenWeight => 1,
            ComputationalModel::WeightThenBroadcast => 2,
        }
    }
}

/// Acyclic radio connectivity graph with a designated source and sink.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioGraph {
    kind: GraphKind,
    names: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    source: usize,
    sink: usize,
    topo: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl RadioGraph {
    pub fn new<S: AsRef<str>>(
        kind: GraphKind,
        nodes: &[S],
        edges: &[(S, S)],
        source: &str,
        sink: &str,
    ) -> Result<Self> {
        let names: Vec<String> = nodes.iter().map(|n| n.as_ref().to_string()).collect();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::structural(format!("duplicate node '{n}'")));
            }
        }
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| Error::structural(format!("unknown node '{n}'")))
        };
        let source = lookup(source)?;
        let sink = lookup(sink)?;
        if source == sink {
            return Err(Error::structural("source and sink must differ"));
        }
        let mut edge_ids = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for (a, b) in edges {
            let (u, v) = (lookup(a.as_ref())?, lookup(b.as_ref())?);
            if u == v {
                return Err(Error::Cycle(names[u].clone()));
            }
            if !seen.insert((u, v)) {
                return Err(Error::structural(format!(
                    "duplicate edge ({}, {})",
                    names[u], names[v]
                )));
            }
            edge_ids.push((u, v));
        }
        let n = names.len();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (e, &(u, v)) in edge_ids.iter().enumerate() {
            outgoing[u].push(e);
            incoming[v].push(e);
        }

        // Kahn's algorithm; nodes are released in declaration order
        let mut indeg: Vec<usize> = incoming.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            topo.push(v);
            for &e in &outgoing[v] {
                let w = edge_ids[e].1;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if topo.len() < n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(Error::Cycle(names[stuck].clone()));
        }

        let reach = |start: usize, forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                let adj = if forward { &outgoing[v] } else { &incoming[v] };
                for &e in adj {
                    let w = if forward { edge_ids[e].1 } else { edge_ids[e].0 };
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen
        };
        let from_source = reach(source, true);
        let to_sink = reach(sink, false);
        if let Some(v) = (0..n).find(|&v| !(from_source[v] && to_sink[v])) {
            return Err(Error::Unreachable(names[v].clone()));
        }

        Ok(RadioGraph {
            kind,
            names,
            index,
            edges: edge_ids,
            source,
            sink,
            topo,
            incoming,
            outgoing,
        })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_index(&self, from: &str, to: &str) -> Option<usize> {
        let (u, v) = (self.node(from)?, self.node(to)?);
        self.edges.iter().position(|&x| x == (u, v))
    }

    pub fn edge_label(&self, e: usize) -> String {
        let (u, v) = self.edges[e];
        format!("({},{})", self.names[u], self.names[v])
    }

    /// Incoming edge ids of `v`.
    pub fn inc(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    pub fn out(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Predecessor nodes of `v`, in incoming-edge order.
    pub fn pre(&self, v: usize) -> Vec<usize> {
        self.incoming[v].iter().map(|&e| self.edges[e].0).collect()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// The direct link from `v` to the sink, if any.
    pub fn sink_link(&self, v: usize) -> Option<usize> {
        self.outgoing[v].iter().copied().find(|&e| self.edges[e].1 == self.sink)
    }
}

/// Edge weights indexed like [`RadioGraph::edges`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights(pub Vec<f64>);

impl Weights {
    /// `W(v, v') = 1 / |inc(v')|`, splitting every merge evenly.
    pub fn uniform_in_degree(g: &RadioGraph) -> Weights {
        Weights(
            g.edges()
                .iter()
                .map(|&(_, v)| 1.0 / g.inc(v).len() as f64)
                .collect(),
        )
    }

    /// `W(v, v') = 1 / |inc(v)|` (source links get weight one), which makes
    /// every link carry the same prefix weight.
    pub fn uniform_sender_in_degree(g: &RadioGraph) -> Weights {
        Weights(
            g.edges()
                .iter()
                .map(|&(u, _)| {
                    if u == g.source() {
                        1.0
                    } else {
                        1.0 / g.inc(u).len() as f64
                    }
                })
                .collect(),
        )
    }

    pub fn get(&self, e: usize) -> f64 {
        self.0[e]
    }
}

/// Periodic slot assignment of links inside a frame of `period` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheduling {
    period: usize,
    slot_of_edge: Vec<Option<usize>>,
    slot_duration: f64,
}

impl Scheduling {
    /// Build from per-slot edge lists; `slots[h]` holds the edges of slot `h + 1`.
    pub fn from_slots<S: AsRef<str>>(
        g: &RadioGraph,
        slots: &[Vec<(S, S)>],
        slot_duration: f64,
    ) -> Result<Self> {
        let mut slot_of_edge = vec![None; g.edge_count()];
        for (h, edges) in slots.iter().enumerate() {
            for (a, b) in edges {
                let e = g.edge_index(a.as_ref(), b.as_ref()).ok_or_else(|| {
                    Error::structural(format!(
                        "scheduled link ({}, {}) is not in the graph",
                        a.as_ref(),
                        b.as_ref()
                    ))
                })?;
                if slot_of_edge[e].is_some() {
                    return Err(Error::structural(format!(
                        "link {} is scheduled more than once per frame",
                        g.edge_label(e)
                    )));
                }
                slot_of_edge[e] = Some(h + 1);
            }
        }
        Scheduling::new(slots.len().max(1), slot_of_edge, slot_duration)
    }

    /// Every edge assigned; `slots[e]` is 1-based.
    pub fn from_assignment(period: usize, slots: Vec<usize>, slot_duration: f64) -> Result<Self> {
        Scheduling::new(period, slots.into_iter().map(Some).collect(), slot_duration)
    }

    pub fn new(period: usize, slot_of_edge: Vec<Option<usize>>, slot_duration: f64) -> Result<Self> {
        if period == 0 {
            return Err(Error::structural("scheduling period must be at least 1"));
        }
        if !(slot_duration > 0.0) {
            return Err(Error::structural("slot duration must be positive"));
        }
        if let Some(s) = slot_of_edge.iter().flatten().find(|&&s| s == 0 || s > period) {
            return Err(Error::structural(format!("slot {s} outside 1..={period}")));
        }
        Ok(Scheduling {
            period,
            slot_of_edge,
            slot_duration,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }

    /// `T = period * slot_duration`.
    pub fn frame_duration(&self) -> f64 {
        self.period as f64 * self.slot_duration
    }

    pub fn slot(&self, e: usize) -> Option<usize> {
        self.slot_of_edge.get(e).copied().flatten()
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.slot_of_edge
    }

    /// Same assignment inside a longer frame (trailing slots left empty).
    pub fn with_period(&self, period: usize) -> Result<Scheduling> {
        Scheduling::new(period, self.slot_of_edge.clone(), self.slot_duration)
    }

    /// Edge ids per slot, index `h` holding slot `h + 1`.
    pub fn slots(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.period];
        for (e, s) in self.slot_of_edge.iter().enumerate() {
            if let Some(s) = s {
                out[s - 1].push(e);
            }
        }
        out
    }

    /// Canonical text encoding, e.g. `1,1,2,-` (one entry per edge).
    pub fn encode(&self) -> String {
        self.slot_of_edge
            .iter()
            .map(|s| s.map_or("-".to_string(), |s| s.to_string()))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn require(&self, g: &RadioGraph, e: usize) -> Result<usize> {
        self.slot(e).ok_or_else(|| {
            let (u, v) = g.edge(e);
            Error::Unscheduled(g.name(u).to_string(), g.name(v).to_string())
        })
    }
}

/// A source-to-sink path as its edge sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Path {
    pub fn label(&self, g: &RadioGraph) -> String {
        self.nodes
            .iter()
            .map(|&v| g.name(v))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// All source-to-sink paths, ordered lexicographically by node names.
pub fn enumerate_paths(g: &RadioGraph) -> Vec<Path> {
    fn dfs(g: &RadioGraph, v: usize, cur: &mut Path, out: &mut Vec<Path>) {
        if v == g.sink() {
            out.push(cur.clone());
            return;
        }
        let mut next: Vec<usize> = g.out(v).to_vec();
        next.sort_by(|&a, &b| g.name(g.edge(a).1).cmp(g.name(g.edge(b).1)));
        for e in next {
            let w = g.edge(e).1;
            cur.nodes.push(w);
            cur.edges.push(e);
            dfs(g, w, cur, out);
            cur.nodes.pop();
            cur.edges.pop();
        }
    }
    let mut out = Vec::new();
    let mut cur = Path {
        nodes: vec![g.source()],
        edges: Vec::new(),
    };
    dfs(g, g.source(), &mut cur, &mut out);
    out
}

/// Frames needed to traverse `path`: one, plus one for every hop whose slot
/// does not come strictly after the previous hop's slot.
pub fn path_delay(g: &RadioGraph, path: &Path, sched: &Scheduling) -> Result<u32> {
    let slots = path
        .edges
        .iter()
        .map(|&e| sched.require(g, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(1 + slots.windows(2).filter(|w| w[1] <= w[0]).count() as u32)
}

/// Delay set `D`, the paths of each delay class and their total weights `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile {
    pub delays: Vec<u32>,
    pub paths_by_delay: BTreeMap<u32, Vec<Path>>,
    pub gamma: BTreeMap<u32, f64>,
    pub frame_duration: f64,
}

impl DelayProfile {
    pub fn max_delay(&self) -> u32 {
        *self.delays.last().expect("delay set is never empty")
    }

    pub fn min_delay(&self) -> u32 {
        self.delays[0]
    }

    pub fn gamma_vector(&self) -> Vec<f64> {
        self.delays.iter().map(|d| self.gamma[d]).collect()
    }
}

/// Paths grouped by delay class.
pub fn delay_classes(g: &RadioGraph, sched: &Scheduling) -> Result<BTreeMap<u32, Vec<Path>>> {
    let mut out: BTreeMap<u32, Vec<Path>> = BTreeMap::new();
    for p in enumerate_paths(g) {
        let d = path_delay(g, &p, sched)?;
        out.entry(d).or_default().push(p);
    }
    Ok(out)
}

pub fn path_weight(path: &Path, w: &Weights) -> f64 {
    path.edges.iter().map(|&e| w.get(e)).product()
}

pub fn delay_profile(g: &RadioGraph, sched: &Scheduling, w: &Weights) -> Result<DelayProfile> {
    if w.0.len() != g.edge_count() {
        return Err(Error::structural("weight vector length differs from edge count"));
    }
    let paths_by_delay = delay_classes(g, sched)?;
    let gamma = paths_by_delay
        .iter()
        .map(|(&d, ps)| (d, ps.iter().map(|p| path_weight(p, w)).sum()))
        .collect();
    Ok(DelayProfile {
        delays: paths_by_delay.keys().copied().collect(),
        paths_by_delay,
        gamma,
        frame_duration: sched.frame_duration(),
    })
}

/// `G(z) = sum_d gamma(d) z^(Dmax - d) / z^Dmax` from a delay-indexed gamma map.
pub fn gamma_tf(gamma: &BTreeMap<u32, f64>, frame_duration: f64) -> Result<RationalTf> {
    let dmax = *gamma
        .keys()
        .next_back()
        .ok_or_else(|| Error::structural("empty delay set"))? as usize;
    let mut num = vec![0.0; dmax + 1];
    for (&d, &g) in gamma {
        num[dmax - d as usize] += g;
    }
    RationalTf::new(
        Polynomial::new(num),
        Polynomial::monomial(dmax, 1.0),
        SampleTime::Discrete(frame_duration),
    )
}

pub fn network_tf(profile: &DelayProfile) -> Result<RationalTf> {
    gamma_tf(&profile.gamma, profile.frame_duration)
}

/// Prefix weights per element, split by delay class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub labels: Vec<String>,
    pub by_delay: Vec<BTreeMap<u32, f64>>,
}

impl AlphaTable {
    pub fn total(&self, i: usize) -> f64 {
        self.by_delay[i].values().sum()
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.labels.len()).map(|i| self.total(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Sum of path-prefix weights ending with each edge, keyed by the number of
/// frames elapsed when the prefix completes.
fn prefix_weights(g: &RadioGraph, sched: &Scheduling, w: &Weights) -> Result<Vec<BTreeMap<u32, f64>>> {
    let mut psi: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); g.edge_count()];
    for &v in g.topological_order() {
        for &e in g.out(v) {
            let slot_e = sched.require(g, e)?;
            let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
            if v == g.source() {
                acc.insert(1, w.get(e));
            } else {
                for &ein in g.inc(v) {
                    let slot_in = sched.require(g, ein)?;
                    let bump = u32::from(slot_e <= slot_in);
                    for (&d, &x) in &psi[ein] {
                        *acc.entry(d + bump).or_insert(0.0) += w.get(e) * x;
                    }
                }
            }
            psi[e] = acc;
        }
    }
    Ok(psi)
}

/// Link prefix weights `alpha_e(d)` (computational model 1). For links into
/// the sink the classes are exactly the path delays.
pub fn alpha_links(g: &RadioGraph, sched: &Scheduling, w: &Weights) -> Result<AlphaTable> {
    let psi = prefix_weights(g, sched, w)?;
    Ok(AlphaTable {
        labels: (0..g.edge_count()).map(|e| g.edge_label(e)).collect(),
        by_delay: psi,
    })
}

/// Node prefix weights `alpha_v(d)` (computational model 2), for every node
/// except the sink. The source holds weight one under class 0. For a node
/// with a direct sink link the classes are the delays at which its
/// contributions reach the sink over that link, so that
/// `gamma(d) = sum_v W(v, sink) alpha_v(d)`; other nodes are keyed by arrival frame.
pub fn alpha_nodes(g: &RadioGraph, sched: &Scheduling, w: &Weights) -> Result<AlphaTable> {
    let psi = prefix_weights(g, sched, w)?;
    node_alpha_from_prefixes(g, sched, &psi)
}

fn node_alpha_from_prefixes(
    g: &RadioGraph,
    sched: &Scheduling,
    psi: &[BTreeMap<u32, f64>],
) -> Result<AlphaTable> {
    let mut labels = Vec::new();
    let mut by_delay = Vec::new();
    for v in 0..g.node_count() {
        if v == g.sink() {
            continue;
        }
        labels.push(g.name(v).to_string());
        if v == g.source() {
            by_delay.push(BTreeMap::from([(0, 1.0)]));
            continue;
        }
        let link = g.sink_link(v);
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for &ein in g.inc(v) {
            let bump = match link {
                Some(f) => u32::from(sched.require(g, f)? <= sched.require(g, ein)?),
                None => 0,
            };
            for (&d, &x) in &psi[ein] {
                *acc.entry(d + bump).or_insert(0.0) += x;
            }
        }
        by_delay.push(acc);
    }
    Ok(AlphaTable { labels, by_delay })
}

/// Quantizer of the data entering a network: width `delta` over `[-max_value, max_value]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub delta: f64,
    pub max_value: f64,
}

impl QuantizationSpec {
    pub fn new(delta: f64, max_value: f64) -> Result<Self> {
        let q = QuantizationSpec { delta, max_value };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.max_value > 0.0) || !self.delta.is_finite() || !self.max_value.is_finite() {
            return Err(Error::structural("quantization width and range must be positive"));
        }
        if 2.0 * self.max_value / self.delta < 2.0 {
            return Err(Error::structural("quantizer must have at least two levels"));
        }
        Ok(())
    }

    /// Number of quantization levels `2 * max_value / delta`.
    pub fn levels(&self) -> f64 {
        2.0 * self.max_value / self.delta
    }
}

/// Bits available per slot under a rate bound, `floor(bound * slot)`.
/// A relative slack of 1e-12 absorbs decimal round-off in the product.
pub fn budget_bits(bound_hz: f64, slot_duration: f64) -> i64 {
    (bound_hz * slot_duration * (1.0 + 1e-12)).floor() as i64
}

/// Per-element rate bound with the derived ratio cap `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub bound: f64,
    pub kappa: f64,
}

impl RateBound {
    /// `kappa = delta * 2^bits / (2 * max_value)`: the largest admissible
    /// ratio `|alpha_e| / min |alpha|` under the bound.
    pub fn new(bound_hz: f64, q: &QuantizationSpec, slot_duration: f64) -> RateBound {
        let bits = budget_bits(bound_hz, slot_duration);
        RateBound {
            bound: bound_hz,
            kappa: (q.delta / (2.0 * q.max_value)) * 2f64.powi(bits as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub element: String,
    pub alpha: f64,
    pub bits: i64,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub model: u8,
    pub entries: Vec<RateEntry>,
}

impl RateReport {
    pub fn max_rate(&self) -> f64 {
        self.entries.iter().map(|e| e.rate_hz).fold(0.0, f64::max)
    }

    pub fn entry(&self, element: &str) -> Option<&RateEntry> {
        self.entries.iter().find(|e| e.element == element)
    }
}

fn decompose(x: f64) -> (u128, i64) {
    let bits = x.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac as u128, -1074)
    } else {
        ((frac | (1u64 << 52)) as u128, exp - 1075)
    }
}

fn bit_len(x: u128) -> i64 {
    128 - x.leading_zeros() as i64
}

/// Exact `ceil(log2(2 * max_value * |alpha| / (delta * |alpha_min|)))`
/// evaluated on the binary values of the inputs, free of rounding.
pub fn ceil_log2_rate(delta: f64, max_value: f64, alpha: f64, alpha_min: f64) -> i64 {
    let (mu, eu) = decompose(max_value);
    let (ma, ea) = decompose(alpha);
    let (md, ed) = decompose(delta);
    let (mm, em) = decompose(alpha_min);
    let num = 2 * mu * ma;
    let den = md * mm;
    let shift = eu + ea - ed - em;
    let b0 = bit_len(num) - bit_len(den);
    let fits = if b0 >= 0 {
        num <= den << b0
    } else {
        num << (-b0) <= den
    };
    (if fits { b0 } else { b0 + 1 }) + shift
}

/// Data rate of each element: `ceil(log2(levels * |alpha| / min |alpha|))` bits per slot.
pub fn rates(
    alphas: &AlphaTable,
    q: &QuantizationSpec,
    slot_duration: f64,
    model: ComputationalModel,
) -> Result<RateReport> {
    q.validate()?;
    let totals = alphas.totals();
    if let Some(i) = totals.iter().position(|a| *a == 0.0 || !a.is_finite()) {
        return Err(Error::DegenerateRouting(alphas.labels[i].clone()));
    }
    let min = totals.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()));
    let entries = totals
        .iter()
        .zip(&alphas.labels)
        .map(|(&a, label)| {
            let bits = ceil_log2_rate(q.delta, q.max_value, a, min);
            RateEntry {
                element: label.clone(),
                alpha: a,
                bits,
                rate_hz: bits as f64 / slot_duration,
            }
        })
        .collect();
    Ok(RateReport {
        model: model.index(),
        entries,
    })
}

/// The unique weights realizing link prefix weights `targets` (model 1):
/// `W(v, v') * sum_{inc(v)} alpha = alpha_(v, v')`, source links take `alpha` directly.
pub fn weights_from_alpha_links(g: &RadioGraph, targets: &[f64]) -> Result<Weights> {
    if targets.len() != g.edge_count() {
        return Err(Error::structural("alpha target length differs from edge count"));
    }
    let mut w = vec![0.0; g.edge_count()];
    for (e, &(u, _)) in g.edges().iter().enumerate() {
        if u == g.source() {
            w[e] = targets[e];
            continue;
        }
        let inflow: f64 = g.inc(u).iter().map(|&i| targets[i]).sum();
        if inflow == 0.0 {
            if targets[e] != 0.0 {
                return Err(Error::Singular(g.name(u).to_string()));
            }
            w[e] = 0.0;
        } else {
            w[e] = targets[e] / inflow;
        }
    }
    Ok(Weights(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationWitness {
    pub node: String,
    pub edges: (String, String),
    pub delays: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySeparation {
    pub holds: bool,
    pub witness: Option<SeparationWitness>,
}

/// Delay classes carried by each link into the sink.
pub fn final_link_classes(g: &RadioGraph, sched: &Scheduling) -> Result<BTreeMap<usize, BTreeSet<u32>>> {
    let mut out: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for (d, paths) in delay_classes(g, sched)? {
        for p in paths {
            out.entry(*p.edges.last().expect("paths have at least one edge"))
                .or_default()
                .insert(d);
        }
    }
    Ok(out)
}

/// Whether paths of different delays never merge before the sink, i.e.
/// every sink link carries a single delay class. On failure the witness is
/// the node where two such paths join, with their two incoming links.
pub fn check_delay_separation(g: &RadioGraph, sched: &Scheduling) -> Result<DelaySeparation> {
    let classes = delay_classes(g, sched)?;
    let mut through: BTreeMap<usize, Vec<(u32, &Path)>> = BTreeMap::new();
    for (&d, paths) in &classes {
        for p in paths {
            through
                .entry(*p.edges.last().expect("non-empty path"))
                .or_default()
                .push((d, p));
        }
    }
    for (_, list) in through {
        let first = list[0];
        if let Some(other) = list.iter().find(|(d, _)| *d != first.0) {
            let (a, b) = (first.1, other.1);
            // walk back from the sink while the paths coincide
            let (mut i, mut j) = (a.edges.len(), b.edges.len());
            while i > 0 && j > 0 && a.edges[i - 1] == b.edges[j - 1] {
                i -= 1;
                j -= 1;
            }
            let join = if i < a.edges.len() {
                g.edge(a.edges[i]).0
            } else {
                g.sink()
            };
            let ea = if i > 0 { g.edge_label(a.edges[i - 1]) } else { String::new() };
            let eb = if j > 0 { g.edge_label(b.edges[j - 1]) } else { String::new() };
            return Ok(DelaySeparation {
                holds: false,
                witness: Some(SeparationWitness {
                    node: g.name(join).to_string(),
                    edges: (ea, eb),
                    delays: (first.0, other.0),
                }),
            });
        }
    }
    Ok(DelaySeparation {
        holds: true,
        witness: None,
    })
}

const SPLIT_ATTEMPTS: usize = 9;

/// Split fractions for `k` predecessors. Attempt 0 splits evenly; later
/// attempts use fixed irrational offsets so merged delay mixtures are generic.
fn split_fractions(k: usize, node: usize, attempt: usize) -> Vec<f64> {
    if attempt == 0 || k == 1 {
        return vec![1.0 / k as f64; k];
    }
    let phi = 0.618_033_988_749_894_9_f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| 0.5 + ((i + 1) as f64 * phi * (attempt + node + 1) as f64).fract())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    svd.solve(b, 1e-12 * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Weights for computational model 2 meeting both node prefix-weight targets
/// and a delay-indexed `gamma` target.
///
/// Every relay node keeps its prescribed `alpha` by splitting its inflow
/// across predecessors with fixed fractions. The remaining freedom, namely
/// the sink-link weights and, for final nodes that relay nowhere else, the
/// products of sink-link and incoming weights, enters `gamma` linearly and is
/// solved for in the minimum-norm sense. `target_alpha` maps node names to
/// values and must cover every node other than the source and the sink.
pub fn weights_from_gamma_model2(
    g: &RadioGraph,
    sched: &Scheduling,
    target_gamma: &BTreeMap<u32, f64>,
    target_alpha: &BTreeMap<String, f64>,
) -> Result<Weights> {
    let classes = delay_classes(g, sched)?;
    let delays: Vec<u32> = classes.keys().copied().collect();
    if let Some(d) = target_gamma.keys().find(|d| !classes.contains_key(d)) {
        return Err(Error::Construction(format!("delay {d} is not produced by the schedule")));
    }
    let mut alpha = vec![0.0; g.node_count()];
    #[allow(clippy::needless_range_loop)]
    for v in 0..g.node_count() {
        if v == g.sink() {
            continue;
        }
        if v == g.source() {
            alpha[v] = 1.0;
            continue;
        }
        let a = *target_alpha
            .get(g.name(v))
            .ok_or_else(|| Error::Construction(format!("missing alpha target for '{}'", g.name(v))))?;
        if a == 0.0 || !a.is_finite() {
            return Err(Error::DegenerateRouting(g.name(v).to_string()));
        }
        alpha[v] = a;
    }
    let gamma = DVector::from_iterator(
        delays.len(),
        delays.iter().map(|d| target_gamma.get(d).copied().unwrap_or(0.0)),
    );
    let gscale = gamma.amax().max(1.0);

    let finals: Vec<usize> = g.pre(g.sink());
    // final nodes relaying only to the sink get per-incoming-link unknowns
    let leaf = |v: usize| v != g.source() && g.out(v).len() == 1;

    for attempt in 0..SPLIT_ATTEMPTS {
        let mut w = vec![0.0; g.edge_count()];
        for v in 0..g.node_count() {
            if v == g.source() || v == g.sink() {
                continue;
            }
            let inc = g.inc(v);
            let frac = split_fractions(inc.len(), v, attempt);
            for (k, &e) in inc.iter().enumerate() {
                let p = g.edge(e).0;
                w[e] = frac[k] * alpha[v] / alpha[p];
            }
        }
        let psi = prefix_weights(g, sched, &Weights(w.clone()))?;

        // columns: (final node, optional incoming link) -> contribution per delay
        let mut cols: Vec<(usize, Option<usize>, Vec<f64>)> = Vec::new();
        for &v in &finals {
            let link = g.sink_link(v).expect("final node has a sink link");
            let link_slot = sched.require(g, link)?;
            if v == g.source() {
                let mut col = vec![0.0; delays.len()];
                col[delays.iter().position(|&d| d == 1).expect("direct link has delay 1")] = 1.0;
                cols.push((v, None, col));
                continue;
            }
            let contribution = |e: usize| -> Result<Vec<f64>> {
                let bump = u32::from(link_slot <= sched.require(g, e)?);
                let mut col = vec![0.0; delays.len()];
                for (&d, &x) in &psi[e] {
                    let i = delays.iter().position(|&dd| dd == d + bump).ok_or_else(|| {
                        Error::Construction("inconsistent delay classification".into())
                    })?;
                    col[i] += x;
                }
                Ok(col)
            };
            if leaf(v) {
                for &e in g.inc(v) {
                    // unknown y = W(v, sink) * W(p, v); column is the prefix mass per unit W(p, v)
                    let mut col = contribution(e)?;
                    let we = w[e];
                    col.iter_mut().for_each(|c| *c /= we);
                    cols.push((v, Some(e), col));
                }
            } else {
                let mut col = vec![0.0; delays.len()];
                for &e in g.inc(v) {
                    for (c, x) in col.iter_mut().zip(contribution(e)?) {
                        *c += x;
                    }
                }
                cols.push((v, None, col));
            }
        }
        let a = DMatrix::from_fn(delays.len(), cols.len(), |i, j| cols[j].2[i]);
        let x = min_norm_solve(&a, &gamma);
        let resid = (&a * &x - &gamma).amax();
        if !(resid <= 1e-12 * gscale) {
            continue;
        }

        // write the solution back into weights
        let mut ok = true;
        let mut j = 0;
        while j < cols.len() {
            let v = cols[j].0;
            let link = g.sink_link(v).expect("final node has a sink link");
            if cols[j].1.is_none() {
                w[link] = x[j];
                j += 1;
                continue;
            }
            let start = j;
            while j < cols.len() && cols[j].0 == v {
                j += 1;
            }
            let ys: Vec<(usize, f64)> = (start..j).map(|k| (cols[k].1.unwrap(), x[k])).collect();
            let s: f64 = ys.iter().map(|&(e, y)| y * alpha[g.edge(e).0]).sum();
            let mass: f64 = ys.iter().map(|&(e, y)| (y * alpha[g.edge(e).0]).abs()).sum();
            if ys.iter().all(|&(_, y)| y == 0.0) {
                w[link] = 0.0;
            } else if s.abs() <= 1e-12 * mass {
                ok = false;
                break;
            } else {
                let wl = s / alpha[v];
                w[link] = wl;
                for (e, y) in ys {
                    w[e] = y / wl;
                }
            }
        }
        if ok {
            return Ok(Weights(w));
        }
    }
    Err(Error::Construction(
        "gamma target is outside the reach of the constructive design for this graph and schedule".into(),
    ))
}
