//! JSON problem configuration and its resolution into a [`CodesignProblem`].
//!
//! Every error carries a JSON pointer to the offending value.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{
    weights_from_gamma_model2, ComputationalModel, GraphKind, QuantizationSpec, RadioGraph, Scheduling, Weights,
};
use crate::optimize::{CodesignProblem, NetworkSpec, NetworkWeights, PlantModel};
use crate::poly::RationalTf;
use crate::scheduler::{enumerate_schedules_with_budget, InterferenceSpec, DEFAULT_BUDGET};
use crate::synthesis::{ControllerStructure, MetricOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub plant: PlantConfig,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    pub model: u8,
    pub controllability: NetworkConfig,
    #[serde(default)]
    pub observability: Option<NetworkConfig>,
    pub quantization: QuantizationConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub error_lead_samples: usize,
    #[serde(default)]
    pub horizon: Option<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    /// Coefficients in ascending powers of `z`; already sampled at the frame rate.
    Discrete {
        num: Vec<f64>,
        den: Vec<f64>,
        #[serde(default)]
        sample_time: Option<f64>,
    },
    /// Coefficients in ascending powers of `s`; sampled by zero-order hold.
    Continuous { num: Vec<f64>, den: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub source: String,
    pub sink: String,
    pub scheduling: SchedulingConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SchedulingConfig {
    /// `slots[h]` lists the links transmitting in slot `h + 1`.
    Slots(Vec<Vec<(String, String)>>),
    Search(SearchConfig),
    Candidates(Vec<CandidateConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub compat_sets: Vec<Vec<String>>,
    pub max_period: usize,
    #[serde(default)]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub name: String,
    pub slots: Vec<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsConfig {
    #[default]
    Free,
    UniformInDegree,
    /// One weight per edge, in the order of `edges`.
    Explicit(Vec<f64>),
    /// Model 2 only: weights built to hit delay gains and node prefix weights.
    Targets {
        gamma: BTreeMap<String, f64>,
        #[serde(default)]
        alpha: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationConfig {
    pub delta_u: f64,
    pub u_max: f64,
    pub delta_y: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub overshoot_u: Option<f64>,
    #[serde(default)]
    pub overshoot_y: Option<f64>,
    /// Hz, applied to every link or node.
    #[serde(default)]
    pub rate: Option<f64>,
    /// Hz, keyed by `(a,b)` for links or by node name.
    #[serde(default)]
    pub rate_per_element: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub s: usize,
    /// Must agree with the value implied by the degree balance.
    #[serde(default)]
    pub m: Option<usize>,
}

/// Parse with JSON-pointer error locations.
pub fn parse(text: &str) -> Result<(ProblemConfig, serde_json::Value)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::config("", e.to_string()))?;
    let cfg: ProblemConfig = serde_path_to_error::deserialize(&value).map_err(|e| {
        let pointer = pointer_of(e.path());
        Error::config(pointer, e.into_inner().to_string())
    })?;
    Ok((cfg, value))
}

pub fn load(path: &std::path::Path) -> Result<(ProblemConfig, serde_json::Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        let token = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.clone(),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => continue,
        };
        out.push('/');
        out.push_str(&token.replace('~', "~0").replace('/', "~1"));
    }
    out
}

/// SHA-256 of the canonical (key-sorted, whitespace-free) JSON text.
pub fn config_hash(value: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(value).expect("json value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Schedules that a network configuration stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleChoices {
    pub names: Vec<String>,
    pub schedules: Vec<Scheduling>,
    /// Explicit single schedule given in the config.
    pub fixed: bool,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ProblemConfig,
    pub hash: String,
    /// Built with the first schedule of each network.
    pub problem: CodesignProblem,
    pub schedules_r: ScheduleChoices,
    pub schedules_o: Option<ScheduleChoices>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub model: Option<u8>,
    pub max_period: Option<usize>,
}

fn graph(net: &NetworkConfig, kind: GraphKind, at: &str) -> Result<RadioGraph> {
    let known: BTreeSet<&str> = net.nodes.iter().map(String::as_str).collect();
    for (i, (a, b)) in net.edges.iter().enumerate() {
        for (j, n) in [a, b].into_iter().enumerate() {
            if !known.contains(n.as_str()) {
                return Err(Error::config(format!("{at}/edges/{i}/{j}"), format!("undeclared node '{n}'")));
            }
        }
    }
    for (key, n) in [("source", &net.source), ("sink", &net.sink)] {
        if !known.contains(n.as_str()) {
            return Err(Error::config(format!("{at}/{key}"), format!("undeclared node '{n}'")));
        }
    }
    RadioGraph::new(kind, &net.nodes, &net.edges, &net.source, &net.sink)
        .map_err(|e| Error::config(format!("{at}/edges"), e.to_string()))
}

fn slots_schedule(g: &RadioGraph, slots: &[Vec<(String, String)>], delta: f64, at: &str) -> Result<Scheduling> {
    for (h, slot) in slots.iter().enumerate() {
        for (i, (a, b)) in slot.iter().enumerate() {
            if g.edge_index(a, b).is_none() {
                return Err(Error::config(format!("{at}/{h}/{i}"), format!("link ({a},{b}) is not in the graph")));
            }
        }
    }
    let s = Scheduling::from_slots(g, slots, delta).map_err(|e| Error::config(at, e.to_string()))?;
    if let Some(e) = (0..g.edge_count()).find(|&e| s.slot(e).is_none()) {
        return Err(Error::config(at, format!("link {} is not scheduled", g.edge_label(e))));
    }
    Ok(s)
}

fn schedule_choices(
    g: &RadioGraph,
    sc: &SchedulingConfig,
    delta: f64,
    max_period: Option<usize>,
    at: &str,
) -> Result<ScheduleChoices> {
    match sc {
        SchedulingConfig::Slots(slots) => Ok(ScheduleChoices {
            names: vec!["explicit".into()],
            schedules: vec![slots_schedule(g, slots, delta, &format!("{at}/slots"))?],
            fixed: true,
        }),
        SchedulingConfig::Candidates(cands) => {
            if cands.is_empty() {
                return Err(Error::config(format!("{at}/candidates"), "no candidates given"));
            }
            let mut names = Vec::new();
            let mut schedules = Vec::new();
            for (i, c) in cands.iter().enumerate() {
                names.push(c.name.clone());
                schedules.push(slots_schedule(g, &c.slots, delta, &format!("{at}/candidates/{i}/slots"))?);
            }
            Ok(ScheduleChoices {
                names,
                schedules,
                fixed: false,
            })
        }
        SchedulingConfig::Search(s) => {
            let sets: Vec<BTreeSet<String>> = s.compat_sets.iter().map(|c| c.iter().cloned().collect()).collect();
            let ifr = InterferenceSpec::new(g, sets)
                .map_err(|e| Error::config(format!("{at}/search/compat_sets"), e.to_string()))?;
            let pi = max_period.unwrap_or(s.max_period);
            if pi == 0 {
                return Err(Error::config(format!("{at}/search/max_period"), "must be at least 1"));
            }
            let schedules = enumerate_schedules_with_budget(g, &ifr, pi, delta, s.budget.unwrap_or(DEFAULT_BUDGET))?;
            if schedules.is_empty() {
                return Err(Error::infeasible(
                    "scheduling",
                    format!("no admissible schedule with period at most {pi}"),
                ));
            }
            Ok(ScheduleChoices {
                names: (1..=schedules.len()).map(|i| format!("S{i}")).collect(),
                schedules,
                fixed: false,
            })
        }
    }
}

fn weights(
    g: &RadioGraph,
    sched: &Scheduling,
    wc: &WeightsConfig,
    model: ComputationalModel,
    at: &str,
) -> Result<NetworkWeights> {
    match wc {
        WeightsConfig::Free => Ok(NetworkWeights::Free),
        WeightsConfig::UniformInDegree => Ok(NetworkWeights::Fixed(Weights::uniform_in_degree(g))),
        WeightsConfig::Explicit(w) => {
            if w.len() != g.edge_count() {
                return Err(Error::config(
                    format!("{at}/explicit"),
                    format!("expected {} weights (one per edge), got {}", g.edge_count(), w.len()),
                ));
            }
            if let Some(i) = w.iter().position(|x| !x.is_finite()) {
                return Err(Error::config(format!("{at}/explicit/{i}"), "weight must be finite"));
            }
            Ok(NetworkWeights::Fixed(Weights(w.clone())))
        }
        WeightsConfig::Targets { gamma, alpha } => {
            if model != ComputationalModel::WeightThenBroadcast {
                return Err(Error::config(format!("{at}/targets"), "weight targets need computational model 2"));
            }
            let mut g_map = BTreeMap::new();
            for (k, v) in gamma {
                let d: u32 = k
                    .parse()
                    .map_err(|_| Error::config(format!("{at}/targets/gamma/{k}"), "delay key must be an integer"))?;
                g_map.insert(d, *v);
            }
            let mut a_map = alpha.clone();
            for v in 0..g.node_count() {
                if v != g.source() && v != g.sink() {
                    a_map.entry(g.name(v).to_string()).or_insert(1.0);
                }
            }
            weights_from_gamma_model2(g, sched, &g_map, &a_map)
                .map(NetworkWeights::Fixed)
                .map_err(|e| Error::config(format!("{at}/targets"), e.to_string()))
        }
    }
}

fn finite_positive(v: f64, at: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(at, "must be a positive finite number"))
    }
}

pub fn resolve(config: ProblemConfig, raw: &serde_json::Value, ov: Overrides) -> Result<Resolved> {
    let hash = config_hash(raw);
    finite_positive(config.slot_duration, "/slot_duration")?;
    let model_index = ov.model.unwrap_or(config.model);
    let model = ComputationalModel::from_index(model_index)
        .ok_or_else(|| Error::config("/model", format!("model must be 1 or 2, got {model_index}")))?;
    if !config.amplitude.is_finite() {
        return Err(Error::config("/amplitude", "must be finite"));
    }
    let q = &config.quantization;
    let quant_u = QuantizationSpec::new(q.delta_u, q.u_max)
        .map_err(|e| Error::config("/quantization/delta_u", e.to_string()))?;
    let quant_y = QuantizationSpec::new(q.delta_y, q.y_max)
        .map_err(|e| Error::config("/quantization/delta_y", e.to_string()))?;
    let b = &config.bounds;
    for (key, v) in [("overshoot_u", b.overshoot_u), ("overshoot_y", b.overshoot_y)] {
        if let Some(v) = v {
            if !(v >= 0.0) {
                return Err(Error::config(format!("/bounds/{key}"), "must be non-negative"));
            }
        }
    }
    if let Some(r) = b.rate {
        finite_positive(r, "/bounds/rate")?;
    }
    for (k, v) in &b.rate_per_element {
        finite_positive(*v, &format!("/bounds/rate_per_element/{k}"))?;
    }

    let plant = match &config.plant {
        PlantConfig::Discrete { num, den, sample_time } => {
            let t = sample_time.unwrap_or(1.0);
            finite_positive(t, "/plant/discrete/sample_time")?;
            PlantModel::Discrete(
                RationalTf::discrete(num.clone(), den.clone(), t)
                    .map_err(|e| Error::config("/plant/discrete/den", e.to_string()))?,
            )
        }
        PlantConfig::Continuous { num, den } => PlantModel::Continuous(
            RationalTf::continuous(num.clone(), den.clone())
                .map_err(|e| Error::config("/plant/continuous/den", e.to_string()))?,
        ),
    };

    let gr = graph(&config.controllability, GraphKind::Controllability, "/controllability")?;
    let schedules_r = schedule_choices(
        &gr,
        &config.controllability.scheduling,
        config.slot_duration,
        ov.max_period,
        "/controllability/scheduling",
    )?;
    let wr = weights(
        &gr,
        &schedules_r.schedules[0],
        &config.controllability.weights,
        model,
        "/controllability/weights",
    )?;
    let (observability, schedules_o) = match &config.observability {
        None => (None, None),
        Some(o) => {
            let go = graph(o, GraphKind::Observability, "/observability")?;
            let so = schedule_choices(
                &go,
                &o.scheduling,
                config.slot_duration,
                ov.max_period,
                "/observability/scheduling",
            )?;
            let wo = weights(&go, &so.schedules[0], &o.weights, model, "/observability/weights")?;
            (
                Some(NetworkSpec {
                    graph: go,
                    schedule: so.schedules[0].clone(),
                    weights: wo,
                }),
                Some(so),
            )
        }
    };

    let element_names: BTreeSet<String> = (0..gr.edge_count())
        .map(|e| gr.edge_label(e))
        .chain(gr.names().iter().cloned())
        .chain(observability.iter().flat_map(|o| {
            (0..o.graph.edge_count())
                .map(|e| o.graph.edge_label(e))
                .chain(o.graph.names().iter().cloned())
                .collect::<Vec<_>>()
        }))
        .collect();
    if let Some(k) = b.rate_per_element.keys().find(|k| !element_names.contains(*k)) {
        return Err(Error::config(format!("/bounds/rate_per_element/{k}"), "unknown link or node"));
    }

    let problem = CodesignProblem {
        plant,
        controllability: NetworkSpec {
            graph: gr,
            schedule: schedules_r.schedules[0].clone(),
            weights: wr,
        },
        observability,
        model,
        quant_u,
        quant_y,
        overshoot_u: b.overshoot_u,
        overshoot_y: b.overshoot_y,
        rate_bound: b.rate,
        rate_bounds: b.rate_per_element.clone(),
        s: config.controller.s,
        amplitude: config.amplitude,
        metric_options: MetricOptions {
            error_lead_samples: config.error_lead_samples,
        },
    };
    if let Some(m) = config.controller.m {
        check_m(&problem, m)?;
    }
    Ok(Resolved {
        horizon: config.horizon,
        config,
        hash,
        problem,
        schedules_r,
        schedules_o,
    })
}

fn check_m(p: &CodesignProblem, m: usize) -> Result<()> {
    let split = p.plant_split().map_err(|e| Error::config("/plant", e.to_string()))?;
    let max_delay = |g: &RadioGraph, s: &Scheduling| -> Result<usize> {
        Ok(*crate::network::delay_classes(g, s)?.keys().next_back().unwrap_or(&0) as usize)
    };
    let ddr = max_delay(&p.controllability.graph, &p.controllability.schedule)?;
    let ddo = match &p.observability {
        Some(o) => max_delay(&o.graph, &o.schedule)?,
        None => 0,
    };
    let implied = ControllerStructure::new(split.stable_part, ddr, ddo, p.s)
        .map_err(|e| Error::config("/controller/s", e.to_string()))?
        .m;
    if implied != m {
        return Err(Error::config(
            "/controller/m",
            format!("degree balance requires m = {implied} for s = {}", p.s),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX3: &str = r#"{
        "plant": {"discrete": {"num": [1], "den": [3, 1], "sample_time": 0.02}},
        "slot_duration": 0.01,
        "model": 2,
        "controllability": {
            "nodes": ["v1","v2","v3","v4","v5","v6","v7"],
            "edges": [["v1","v2"],["v1","v3"],["v1","v4"],["v2","v5"],["v2","v7"],["v3","v5"],
                      ["v3","v6"],["v3","v7"],["v4","v6"],["v4","v7"],["v5","v7"],["v6","v7"]],
            "source": "v1", "sink": "v7",
            "scheduling": {"slots": [
                [["v1","v2"],["v1","v3"],["v1","v4"],["v5","v7"],["v6","v7"]],
                [["v2","v5"],["v2","v7"],["v3","v5"],["v3","v6"],["v3","v7"],["v4","v6"],["v4","v7"]]
            ]},
            "weights": "uniform_in_degree"
        },
        "quantization": {"delta_u": 0.1, "u_max": 500, "delta_y": 0.1, "y_max": 500},
        "controller": {"s": 1}
    }"#;

    #[test]
    fn parses_and_resolves() {
        let (cfg, raw) = parse(EX3).unwrap();
        let r = resolve(cfg, &raw, Overrides::default()).unwrap();
        assert_eq!(r.problem.period(), 2);
        assert_eq!(r.hash.len(), 64);
        assert!(matches!(r.problem.controllability.weights, NetworkWeights::Fixed(_)));
    }

    #[test]
    fn hash_ignores_whitespace_and_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"a": 1, "b": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{ "b":[1,2],"a":1 }"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn type_errors_carry_pointer() {
        let bad = EX3.replace(r#""delta_u": 0.1"#, r#""delta_u": "x""#);
        let e = parse(&bad).unwrap_err();
        match e {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/quantization/delta_u"),
            other => panic!("{other:?}"),
        }
        let bad = EX3.replace(r#"["v1","v4"],["v2","v5"]"#, r#"["v1","v4"],3"#);
        let Error::Config { pointer, .. } = parse(&bad).unwrap_err() else { panic!() };
        assert_eq!(pointer, "/controllability/edges/3");
    }

    #[test]
    fn semantic_errors_carry_pointer() {
        let bad = EX3.replace(r#"["v6","v7"]],"#, r#"["v6","v9"]],"#);
        let (cfg, raw) = parse(&bad).unwrap();
        let Error::Config { pointer, .. } = resolve(cfg, &raw, Overrides::default()).unwrap_err() else { panic!() };
        assert_eq!(pointer, "/controllability/edges/11/1");

        let bad = EX3.replace(r#""weights": "uniform_in_degree""#, r#""weights": {"explicit": [1, 1]}"#);
        let (cfg, raw) = parse(&bad).unwrap();
        let e = resolve(cfg, &raw, Overrides::default()).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        let Error::Config { pointer, .. } = e else { panic!() };
        assert_eq!(pointer, "/controllability/weights/explicit");

        let (cfg, raw) = parse(EX3).unwrap();
        let Error::Config { pointer, .. } = resolve(cfg, &raw, Overrides { model: Some(3), max_period: None }).unwrap_err()
        else {
            panic!()
        };
        assert_eq!(pointer, "/model");
    }

    #[test]
    fn inconsistent_m_rejected() {
        let bad = EX3.replace(r#""controller": {"s": 1}"#, r#""controller": {"s": 1, "m": 5}"#);
        let (cfg, raw) = parse(&bad).unwrap();
        let Error::Config { pointer, .. } = resolve(cfg, &raw, Overrides::default()).unwrap_err() else { panic!() };
        assert_eq!(pointer, "/controller/m");
        let ok = EX3.replace(r#""controller": {"s": 1}"#, r#""controller": {"s": 1, "m": 2}"#);
        let (cfg, raw) = parse(&ok).unwrap();
        resolve(cfg, &raw, Overrides::default()).unwrap();
    }
}
