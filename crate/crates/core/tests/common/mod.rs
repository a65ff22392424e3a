#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use mcn_codesign::config::{self, Overrides, Resolved};
use mcn_codesign::network::{ComputationalModel, GraphKind, QuantizationSpec, RadioGraph, Scheduling};
use mcn_codesign::optimize::{CodesignProblem, NetworkSpec, NetworkWeights, PlantModel};
use mcn_codesign::poly::{Polynomial, RationalTf};
use mcn_codesign::synthesis::MetricOptions;
use num_bigint::BigUint;
use num_traits::{Float, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn resolve_fixture(name: &str) -> Resolved {
    let (cfg, raw) = config::load(&fixture(name)).unwrap();
    config::resolve(cfg, &raw, Overrides::default()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random DAG on `n` nodes where every node lies on a source-to-sink path.
/// Node `0` is the source and `n - 1` the sink.
pub fn random_dag(rng: &mut impl Rng, n: usize) -> RadioGraph {
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut edges = std::collections::BTreeSet::new();
    for v in 1..n {
        edges.insert((rng.random_range(0..v), v));
    }
    for v in 0..n - 1 {
        edges.insert((v, rng.random_range(v + 1..n)));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.25) {
                edges.insert((a, b));
            }
        }
    }
    let e: Vec<(String, String)> = edges.iter().map(|&(a, b)| (names[a].clone(), names[b].clone())).collect();
    RadioGraph::new(GraphKind::Controllability, &names, &e, &names[0], &names[n - 1]).unwrap()
}

pub fn random_schedule(rng: &mut impl Rng, g: &RadioGraph, period: usize) -> Scheduling {
    let slots = (0..g.edge_count()).map(|_| rng.random_range(1..=period)).collect();
    Scheduling::from_assignment(period, slots, 0.01).unwrap()
}

/// Parallel chains from a source to a sink, one per delay; chain `d` has `d`
/// hops scheduled in decreasing slot order so its delay is exactly `d`.
pub fn chain_network(kind: GraphKind, prefix: &str, delays: &[usize]) -> (RadioGraph, Scheduling) {
    let src = format!("{prefix}s");
    let dst = format!("{prefix}t");
    let mut nodes = vec![src.clone(), dst.clone()];
    let mut edges = Vec::new();
    let mut slots = Vec::new();
    for &d in delays {
        let mut prev = src.clone();
        for h in 0..d {
            let next = if h + 1 == d { dst.clone() } else { format!("{prefix}{d}_{h}") };
            if h + 1 != d {
                nodes.push(next.clone());
            }
            edges.push((prev.clone(), next.clone()));
            slots.push(d - h);
            prev = next;
        }
    }
    let g = RadioGraph::new(kind, &nodes, &edges, &src, &dst).unwrap();
    let period = *slots.iter().max().unwrap();
    (g, Scheduling::from_assignment(period, slots, 0.01).unwrap())
}

fn random_roots(rng: &mut impl Rng, count: usize, stable: bool, avoid: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    while out.len() < count {
        let mag = if stable {
            rng.random_range(0.0..0.85)
        } else {
            rng.random_range(1.15..2.5)
        };
        let r = if rng.random_bool(0.5) { mag } else { -mag };
        if avoid.iter().chain(&out).all(|a: &f64| (a - r).abs() > 0.15) {
            out.push(r);
        }
    }
    out
}

/// Deadbeat design instance: random real-pole plant, controllability chains
/// over a random delay set, and observability chains with enough distinct
/// delays for the second stage to be solvable.
pub fn random_instance(rng: &mut impl Rng) -> CodesignProblem {
    let n = rng.random_range(1..=3usize);
    let unstable = rng.random_range(0..=n.min(2));
    let mut poles = random_roots(rng, unstable, false, &[]);
    let stable = random_roots(rng, n - unstable, true, &poles);
    poles.extend(stable);
    let zeros_n = rng.random_range(0..n);
    let mut avoid = poles.clone();
    avoid.push(1.0);
    let zeros = random_roots(rng, zeros_n, true, &avoid);
    let gain = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let num = Polynomial::from_real_roots(&zeros).scale(gain);
    let den = Polynomial::from_real_roots(&poles);
    let plant = RationalTf::discrete(num.coeffs().to_vec(), den.coeffs().to_vec(), 0.03).unwrap();

    let mut dr: Vec<usize> = (1..=3).filter(|_| rng.random_bool(0.6)).collect();
    if dr.is_empty() {
        dr.push(rng.random_range(1..=3));
    }
    let start = rng.random_range(1..=2usize);
    let count = unstable + 1 + rng.random_range(0..=1usize);
    let dobs: Vec<usize> = (start..start + count).collect();
    let (gr, sr) = chain_network(GraphKind::Controllability, "r", &dr);
    let (go, so) = chain_network(GraphKind::Observability, "o", &dobs);
    CodesignProblem {
        plant: PlantModel::Discrete(plant),
        controllability: NetworkSpec {
            graph: gr,
            schedule: sr,
            weights: NetworkWeights::Free,
        },
        observability: Some(NetworkSpec {
            graph: go,
            schedule: so,
            weights: NetworkWeights::Free,
        }),
        model: ComputationalModel::WeightThenBroadcast,
        quant_u: QuantizationSpec::new(0.1, 100.0).unwrap(),
        quant_y: QuantizationSpec::new(0.1, 100.0).unwrap(),
        overshoot_u: None,
        overshoot_y: None,
        rate_bound: None,
        rate_bounds: BTreeMap::new(),
        s: 0,
        amplitude: rng.random_range(0.5..3.0),
        metric_options: MetricOptions::default(),
    }
}

/// `ceil(log2(2 U |alpha| / (delta |alpha_min|)))` in exact big-integer arithmetic.
pub fn reference_bits(delta: f64, max_value: f64, alpha: f64, alpha_min: f64) -> i64 {
    let parts = |x: f64| {
        let (m, e, _) = x.abs().integer_decode();
        (BigUint::from(m), e as i64)
    };
    let (mu, eu) = parts(max_value);
    let (ma, ea) = parts(alpha);
    let (md, ed) = parts(delta);
    let (mm, em) = parts(alpha_min);
    let num: BigUint = BigUint::from(2u32) * mu * ma;
    let den: BigUint = md * mm;
    assert!(!num.is_zero() && !den.is_zero());
    let k = eu + ea - ed - em;
    // smallest t with den * 2^t >= num
    let mut t = num.bits() as i64 - den.bits() as i64 - 1;
    let ge = |t: i64| -> bool {
        if t >= 0 {
            (&den << t as usize) >= num
        } else {
            den >= (&num << (-t) as usize)
        }
    };
    while !ge(t) {
        t += 1;
    }
    while ge(t - 1) {
        t -= 1;
    }
    t + k
}
