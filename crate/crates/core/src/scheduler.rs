//! Enumeration of admissible schedules and L2-optimal schedule selection.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{delay_classes, RadioGraph, Scheduling};
use crate::optimize::{brute_force_codesign, codesign, CodesignProblem, CodesignSolution, Grid};

pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Relative tolerance defining the optimal set.
pub const OPTIMAL_REL_TOL: f64 = 1e-9;

/// Node-level interference model: all nodes transmitting in one slot must
/// belong to a common compatibility set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceSpec {
    pub compat_sets: Vec<BTreeSet<String>>,
}

impl InterferenceSpec {
    pub fn new(g: &RadioGraph, compat_sets: Vec<BTreeSet<String>>) -> Result<Self> {
        if compat_sets.len() > 64 {
            return Err(Error::structural("at most 64 compatibility sets are supported"));
        }
        for set in &compat_sets {
            if let Some(n) = set.iter().find(|n| g.node(n).is_none()) {
                return Err(Error::structural(format!("compatibility set names unknown node '{n}'")));
            }
        }
        for e in 0..g.edge_count() {
            let tail = g.name(g.edge(e).0);
            if !compat_sets.iter().any(|s| s.contains(tail)) {
                return Err(Error::structural(format!("transmitting node '{tail}' is in no compatibility set")));
            }
        }
        Ok(InterferenceSpec { compat_sets })
    }

    /// Every node may transmit with every other one.
    pub fn unrestricted(g: &RadioGraph) -> Self {
        InterferenceSpec {
            compat_sets: vec![g.names().iter().map(|s| s.to_string()).collect()],
        }
    }

    fn masks(&self, g: &RadioGraph) -> Vec<u64> {
        (0..g.node_count())
            .map(|v| {
                self.compat_sets
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.contains(g.name(v)))
                    .fold(0u64, |m, (i, _)| m | (1 << i))
            })
            .collect()
    }

    pub fn admits(&self, transmitters: &BTreeSet<&str>) -> bool {
        self.compat_sets
            .iter()
            .any(|s| transmitters.iter().all(|t| s.contains(*t)))
    }
}

/// Checks a schedule from scratch: every edge in exactly one slot, no empty
/// slot, and every slot's transmitters inside one compatibility set.
pub fn validate_schedule(g: &RadioGraph, ifr: &InterferenceSpec, s: &Scheduling) -> Result<()> {
    if s.assignment().len() != g.edge_count() {
        return Err(Error::structural("schedule does not cover the graph"));
    }
    let mut per_slot: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); s.period()];
    for e in 0..g.edge_count() {
        let slot = s.slot(e).ok_or_else(|| {
            let (a, b) = g.edge(e);
            Error::Unscheduled(g.name(a).into(), g.name(b).into())
        })?;
        if slot == 0 || slot > s.period() {
            return Err(Error::structural(format!("slot {slot} outside 1..={}", s.period())));
        }
        per_slot[slot - 1].insert(g.name(g.edge(e).0));
    }
    for (i, tx) in per_slot.iter().enumerate() {
        if tx.is_empty() {
            return Err(Error::structural(format!("slot {} is empty", i + 1)));
        }
        if !ifr.admits(tx) {
            return Err(Error::structural(format!("slot {} violates interference: {:?}", i + 1, tx)));
        }
    }
    Ok(())
}

pub fn enumerate_schedules(
    g: &RadioGraph,
    ifr: &InterferenceSpec,
    max_period: usize,
    slot_duration: f64,
) -> Result<Vec<Scheduling>> {
    enumerate_schedules_with_budget(g, ifr, max_period, slot_duration, DEFAULT_BUDGET)
}

/// All admissible edge-to-slot maps with every slot used, by increasing
/// period and then lexicographically on the slot vector.
pub fn enumerate_schedules_with_budget(
    g: &RadioGraph,
    ifr: &InterferenceSpec,
    max_period: usize,
    slot_duration: f64,
    budget: usize,
) -> Result<Vec<Scheduling>> {
    if max_period == 0 {
        return Err(Error::structural("maximum period must be at least 1"));
    }
    let masks = ifr.masks(g);
    let tails: Vec<usize> = (0..g.edge_count()).map(|e| g.edge(e).0).collect();
    let mut out = Vec::new();
    for period in 1..=max_period.min(g.edge_count()) {
        let mut assign = vec![0usize; tails.len()];
        let mut slot_masks = vec![u64::MAX; period];
        let mut used = vec![0usize; period];
        let mut raw = Vec::new();
        dfs(0, &tails, &masks, &mut assign, &mut slot_masks, &mut used, &mut raw, (out.len(), budget))?;
        for a in raw {
            out.push(Scheduling::from_assignment(period, a, slot_duration)?);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    e: usize,
    tails: &[usize],
    masks: &[u64],
    assign: &mut [usize],
    slot_masks: &mut [u64],
    used: &mut [usize],
    out: &mut Vec<Vec<usize>>,
    (emitted, budget): (usize, usize),
) -> Result<()> {
    let period = slot_masks.len();
    let empty = used.iter().filter(|&&u| u == 0).count();
    if empty > tails.len() - e {
        return Ok(());
    }
    if e == tails.len() {
        if emitted + out.len() >= budget {
            return Err(Error::BudgetExceeded { budget });
        }
        out.push(assign.iter().map(|s| s + 1).collect());
        return Ok(());
    }
    for s in 0..period {
        let m = slot_masks[s] & masks[tails[e]];
        if m == 0 {
            continue;
        }
        let saved = slot_masks[s];
        slot_masks[s] = m;
        used[s] += 1;
        assign[e] = s;
        dfs(e + 1, tails, masks, assign, slot_masks, used, out, (emitted, budget))?;
        used[s] -= 1;
        slot_masks[s] = saved;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub name: String,
    pub schedule_r: Scheduling,
    pub schedule_o: Option<Scheduling>,
}

impl Candidate {
    pub fn encoding(&self) -> String {
        match &self.schedule_o {
            Some(o) => format!("{}|{}", self.schedule_r.encode(), o.encode()),
            None => self.schedule_r.encode(),
        }
    }
}

/// Pairs every controllability schedule with every observability schedule.
pub fn cartesian_candidates(
    rs: &[Scheduling],
    os: Option<&[Scheduling]>,
    budget: usize,
) -> Result<Vec<Candidate>> {
    let total = rs.len().saturating_mul(os.map_or(1, |o| o.len()));
    if total > budget {
        return Err(Error::BudgetExceeded { budget });
    }
    let mut out = Vec::with_capacity(total);
    for (i, r) in rs.iter().enumerate() {
        match os {
            None => out.push(Candidate {
                name: format!("R{}", i + 1),
                schedule_r: r.clone(),
                schedule_o: None,
            }),
            Some(os) => {
                for (j, o) in os.iter().enumerate() {
                    out.push(Candidate {
                        name: format!("R{}O{}", i + 1, j + 1),
                        schedule_r: r.clone(),
                        schedule_o: Some(o.clone()),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSchedule {
    pub name: String,
    pub encoding: String,
    pub period: usize,
    pub delays_r: Vec<u32>,
    pub delays_o: Vec<u32>,
    /// Optimal L2 norm; infinite when the design is infeasible.
    pub l2: f64,
    /// Value taken from the grid oracle rather than the two-stage design.
    pub from_oracle: bool,
    pub optimal: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub solution: Option<CodesignSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSearchResult {
    pub ranking: Vec<RankedSchedule>,
    /// Names of the schedules attaining the minimum.
    pub optimal_set: Vec<String>,
}

impl ScheduleSearchResult {
    pub fn best(&self) -> Option<&RankedSchedule> {
        self.ranking.first().filter(|r| r.l2.is_finite())
    }
}

fn evaluate_candidate(template: &CodesignProblem, c: &Candidate, oracle: Option<Grid>) -> RankedSchedule {
    let mut p = template.clone();
    p.controllability.schedule = c.schedule_r.clone();
    if let (Some(o), Some(s)) = (p.observability.as_mut(), &c.schedule_o) {
        o.schedule = s.clone();
    }
    let classes = |g: &RadioGraph, s: &Scheduling| -> Vec<u32> {
        delay_classes(g, s).map(|c| c.keys().copied().collect()).unwrap_or_default()
    };
    let delays_r = classes(&p.controllability.graph, &p.controllability.schedule);
    let delays_o = p
        .observability
        .as_ref()
        .map(|o| classes(&o.graph, &o.schedule))
        .unwrap_or_default();
    let mut r = RankedSchedule {
        name: c.name.clone(),
        encoding: c.encoding(),
        period: p.period(),
        delays_r,
        delays_o,
        l2: f64::INFINITY,
        from_oracle: false,
        optimal: false,
        error: None,
        solution: None,
    };
    match codesign(&p) {
        Ok(sol) if sol.feasible() => {
            r.l2 = sol.metrics.l2;
            r.solution = Some(sol);
        }
        Ok(sol) => r.error = Some(sol.violations.join("; ")),
        Err(e) => {
            let not_convex = matches!(&e, Error::Structural(m) if m.starts_with("not convexifiable"));
            match oracle {
                Some(grid) if not_convex => match brute_force_codesign(&p, grid) {
                    Ok(o) => match o.best_problem1 {
                        Some(b) => {
                            r.l2 = b.value.sqrt();
                            r.from_oracle = true;
                        }
                        None => r.error = Some("oracle found no feasible point".into()),
                    },
                    Err(e2) => r.error = Some(format!("{e}; oracle: {e2}")),
                },
                _ => r.error = Some(e.to_string()),
            }
        }
    }
    r
}

/// Evaluates every candidate and ranks them by `(L2, encoding)`.
pub fn schedule_search(
    template: &CodesignProblem,
    candidates: &[Candidate],
    oracle: Option<Grid>,
) -> Result<ScheduleSearchResult> {
    let mut ranking: Vec<RankedSchedule> = candidates
        .par_iter()
        .map(|c| evaluate_candidate(template, c, oracle))
        .collect();
    ranking.sort_by(|a, b| a.l2.total_cmp(&b.l2).then_with(|| a.encoding.cmp(&b.encoding)));
    let mut optimal_set = Vec::new();
    if let Some(min) = ranking.first().map(|r| r.l2).filter(|v| v.is_finite()) {
        for r in ranking.iter_mut() {
            if r.l2 <= min + OPTIMAL_REL_TOL * min.abs() {
                r.optimal = true;
                optimal_set.push(r.name.clone());
            }
        }
    }
    Ok(ScheduleSearchResult { ranking, optimal_set })
}

/// Optimal L2 per rate bound for each candidate.
pub fn rate_sweep(
    template: &CodesignProblem,
    candidates: &[Candidate],
    bounds: &[f64],
) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let rows: Vec<(String, f64, f64)> = candidates
        .par_iter()
        .flat_map(|c| {
            bounds.par_iter().map(move |&b| {
                let mut p = template.clone();
                p.rate_bound = Some(b);
                let r = evaluate_candidate(&p, c, None);
                (c.name.clone(), b, r.l2)
            })
        })
        .collect();
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for c in candidates {
        out.insert(c.name.clone(), Vec::new());
    }
    for (n, b, v) in rows {
        out.get_mut(&n).expect("candidate").push((b, v));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

/// First bound after which the value stays flat (relative change at most
/// `rel_tol`) for at least `run` consecutive steps.
pub fn plateau_start(sweep: &[(f64, f64)], rel_tol: f64, run: usize) -> Option<f64> {
    let flat = |i: usize| {
        let (a, b) = (sweep[i].1, sweep[i + 1].1);
        a.is_finite() && b.is_finite() && (a - b).abs() <= rel_tol * a.abs().max(b.abs())
    };
    (0..sweep.len().saturating_sub(run)).find(|&i| (i..i + run).all(flat)).map(|i| sweep[i].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{eta_a, eta_b, fig4a};
    use crate::network::GraphKind;
    use proptest::prelude::*;

    fn sets(groups: &[&[&str]]) -> Vec<BTreeSet<String>> {
        groups.iter().map(|g| g.iter().map(|s| s.to_string()).collect()).collect()
    }

    fn example1_ifr(g: &RadioGraph) -> InterferenceSpec {
        InterferenceSpec::new(g, sets(&[&["v1", "v5", "v6"], &["v2", "v3", "v4"]])).unwrap()
    }

    #[test]
    fn example1_schedules_are_enumerated() {
        let g = fig4a();
        let all = enumerate_schedules(&g, &example1_ifr(&g), 3, 0.01).unwrap();
        let encs: BTreeSet<String> = all.iter().map(|s| s.encode()).collect();
        assert_eq!(encs.len(), all.len());
        assert!(encs.contains(&eta_a(&g).encode()));
        assert!(encs.contains(&eta_b(&g).encode()));
        let ifr = example1_ifr(&g);
        for s in &all {
            validate_schedule(&g, &ifr, s).unwrap();
        }
        // increasing period
        assert!(all.windows(2).all(|w| w[0].period() <= w[1].period()));
    }

    #[test]
    fn single_edge() {
        let g = RadioGraph::new(GraphKind::Controllability, &["a", "b"], &[("a", "b")], "a", "b").unwrap();
        let ifr = InterferenceSpec::unrestricted(&g);
        assert_eq!(enumerate_schedules(&g, &ifr, 1, 0.01).unwrap().len(), 1);
        assert_eq!(enumerate_schedules(&g, &ifr, 4, 0.01).unwrap().len(), 1);
    }

    #[test]
    fn conflicting_chain_has_no_single_slot_schedule() {
        let g = RadioGraph::new(GraphKind::Controllability, &["a", "b", "c"], &[("a", "b"), ("b", "c")], "a", "c")
            .unwrap();
        let ifr = InterferenceSpec::new(&g, sets(&[&["a"], &["b"]])).unwrap();
        assert!(enumerate_schedules(&g, &ifr, 1, 0.01).unwrap().is_empty());
        assert_eq!(enumerate_schedules(&g, &ifr, 2, 0.01).unwrap().len(), 2);
    }

    #[test]
    fn budget_overflow() {
        let g = fig4a();
        let ifr = InterferenceSpec::unrestricted(&g);
        let e = enumerate_schedules_with_budget(&g, &ifr, 3, 0.01, 100).unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { budget: 100 }));
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn uncovered_transmitter_rejected() {
        let g = fig4a();
        assert!(InterferenceSpec::new(&g, sets(&[&["v1"]])).is_err());
    }

    #[test]
    fn plateau_detection() {
        let s = [(1.0, 5.0), (2.0, 4.0), (3.0, 3.0), (4.0, 3.0), (5.0, 3.0), (6.0, 3.0)];
        assert_eq!(plateau_start(&s, 1e-6, 3), Some(3.0));
        assert_eq!(plateau_start(&s[..4], 1e-6, 3), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn emitted_schedules_are_admissible_and_distinct(
            mask in 0u32..(1 << 6),
            pi in 1usize..4,
        ) {
            let g = fig4a();
            let names = ["v1", "v2", "v3", "v4", "v5", "v6"];
            let first: Vec<&str> = names.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| *n).collect();
            let second: Vec<&str> = names.iter().enumerate().filter(|(i, _)| mask & (1 << i) == 0).map(|(_, n)| *n).collect();
            let mut groups = Vec::new();
            if !first.is_empty() { groups.push(first.as_slice()); }
            if !second.is_empty() { groups.push(second.as_slice()); }
            let ifr = InterferenceSpec::new(&g, sets(&groups)).unwrap();
            let all = enumerate_schedules(&g, &ifr, pi, 0.01).unwrap();
            let encs: BTreeSet<String> = all.iter().map(|s| s.encode()).collect();
            prop_assert_eq!(encs.len(), all.len());
            for s in &all {
                prop_assert!(validate_schedule(&g, &ifr, s).is_ok());
            }
        }
    }
}
