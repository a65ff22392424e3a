//! Joint design of the controller and the network weights.
//!
//! The design runs in two stages. Stage one is a convex QP in the products
//! `theta = d0 * gamma_R` (model 2) or `beta = d0 * alpha_R` (model 1), which
//! minimizes the L2 error under overshoot and rate constraints. Stage two
//! freezes that choice and solves the deadbeat identity, which is linear in
//! the controller poles and the observability weights. Weights are then
//! recovered constructively and every metric is recomputed from them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    self, alpha_links, alpha_nodes, budget_bits, check_delay_separation, delay_classes, delay_profile,
    final_link_classes, gamma_tf, weights_from_alpha_links, weights_from_gamma_model2, ComputationalModel,
    DelaySeparation, QuantizationSpec, RadioGraph, RateBound, RateReport, Scheduling, Weights,
};
use crate::poly::{split_stable, zoh_discretize, Polynomial, RationalTf, StableUnstableSplit, DEFAULT_BOUNDARY_TOL};
use crate::qp::{self, QpProblem, QpSolution};
use crate::synthesis::{
    least_squares, metrics, solve_deadbeat, ClosedLoop, ControllerStructure, MetricOptions, StepMetrics,
    DEADBEAT_TOL,
};

/// Lower bound on `|beta|` keeping every link weight away from zero.
pub const BETA_EPS: f64 = 1e-9;

/// Relative shrink applied to rate caps inside the QP so that the exact
/// integer ceilings still hold after recovery round-off.
const KAPPA_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    /// Already sampled at the frame rate.
    Discrete(RationalTf),
    /// Discretized by zero-order hold at the frame duration.
    Continuous(RationalTf),
}

impl PlantModel {
    pub fn split(&self, frame_duration: f64) -> Result<StableUnstableSplit> {
        match self {
            PlantModel::Discrete(tf) => split_stable(tf, DEFAULT_BOUNDARY_TOL),
            PlantModel::Continuous(tf) => split_stable(&zoh_discretize(tf, frame_duration)?, DEFAULT_BOUNDARY_TOL),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkWeights {
    Free,
    Fixed(Weights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub graph: RadioGraph,
    pub schedule: Scheduling,
    pub weights: NetworkWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodesignProblem {
    pub plant: PlantModel,
    pub controllability: NetworkSpec,
    pub observability: Option<NetworkSpec>,
    pub model: ComputationalModel,
    /// Quantizer on the controller output, feeding the controllability network.
    pub quant_u: QuantizationSpec,
    /// Quantizer on the plant output, feeding the observability network.
    pub quant_y: QuantizationSpec,
    pub overshoot_u: Option<f64>,
    pub overshoot_y: Option<f64>,
    /// Global per-element rate bound in Hz.
    pub rate_bound: Option<f64>,
    /// Per-element overrides keyed by element label (`(v1,v2)` or `v2`).
    pub rate_bounds: BTreeMap<String, f64>,
    /// Controller numerator degree.
    pub s: usize,
    pub amplitude: f64,
    pub metric_options: MetricOptions,
}

impl CodesignProblem {
    pub fn slot_duration(&self) -> f64 {
        self.controllability.schedule.slot_duration()
    }

    /// Common frame length: the longer of the two schedule periods.
    pub fn period(&self) -> usize {
        let pr = self.controllability.schedule.period();
        self.observability.as_ref().map_or(pr, |o| pr.max(o.schedule.period()))
    }

    pub fn frame_duration(&self) -> f64 {
        self.period() as f64 * self.slot_duration()
    }

    pub fn plant_split(&self) -> Result<StableUnstableSplit> {
        self.plant.split(self.frame_duration())
    }

    fn bound_for(&self, label: &str) -> Option<f64> {
        self.rate_bounds.get(label).copied().or(self.rate_bound)
    }

    fn validate(&self) -> Result<()> {
        if let Some(o) = &self.observability {
            if (o.schedule.slot_duration() - self.slot_duration()).abs() > 1e-15 * self.slot_duration() {
                return Err(Error::structural("both networks must share the slot duration"));
            }
        }
        if !self.amplitude.is_finite() {
            return Err(Error::structural("step amplitude must be finite"));
        }
        for b in [self.overshoot_u, self.overshoot_y].into_iter().flatten() {
            if !(b >= 0.0) {
                return Err(Error::structural("overshoot bounds must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub convexifiable: bool,
    /// Single delay in both networks: the problem is convex without substitution.
    pub naive: bool,
    /// `|D_O| >= r + 1`, which guarantees a stage-two solution.
    pub stage2_guaranteed: bool,
    pub separation_r: Option<DelaySeparation>,
    pub separation_o: Option<DelaySeparation>,
    pub delays_r: Vec<u32>,
    pub delays_o: Vec<u32>,
    pub reasons: Vec<String>,
}

pub fn check_convexifiable(p: &CodesignProblem) -> Result<ConvexityReport> {
    let split = p.plant_split()?;
    let delays_r: Vec<u32> = delay_classes(&p.controllability.graph, &p.controllability.schedule)?
        .keys()
        .copied()
        .collect();
    let delays_o: Vec<u32> = match &p.observability {
        Some(o) => delay_classes(&o.graph, &o.schedule)?.keys().copied().collect(),
        None => Vec::new(),
    };
    let mut reasons = Vec::new();
    if p.s != 0 {
        reasons.push(format!("controller numerator degree is {} (must be 0)", p.s));
    }
    let mut separation_r = None;
    let mut separation_o = None;
    if p.model == ComputationalModel::SumThenWeight {
        let sr = check_delay_separation(&p.controllability.graph, &p.controllability.schedule)?;
        if let Some(w) = &sr.witness {
            reasons.push(format!(
                "controllability paths with delays {} and {} merge at {} via {} and {}",
                w.delays.0, w.delays.1, w.node, w.edges.0, w.edges.1
            ));
        }
        separation_r = Some(sr);
        if let Some(o) = &p.observability {
            let so = check_delay_separation(&o.graph, &o.schedule)?;
            if let Some(w) = &so.witness {
                reasons.push(format!(
                    "observability paths with delays {} and {} merge at {} via {} and {}",
                    w.delays.0, w.delays.1, w.node, w.edges.0, w.edges.1
                ));
            }
            separation_o = Some(so);
        }
    }
    let naive = delays_r.len() == 1 && delays_o.len() <= 1;
    let stage2_guaranteed = p.observability.is_some() && delays_o.len() > split.r;
    Ok(ConvexityReport {
        convexifiable: reasons.is_empty(),
        naive,
        stage2_guaranteed,
        separation_r,
        separation_o,
        delays_r,
        delays_o,
        reasons,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Model 2: no sign restriction.
    Unsigned,
    Positive,
    Negative,
}

impl Branch {
    pub fn d0(self) -> f64 {
        match self {
            Branch::Negative => -1.0,
            _ => 1.0,
        }
    }
}

/// Stage-one QP together with the maps back to closed-loop quantities.
#[derive(Debug, Clone)]
pub struct ConvexStage {
    pub branch: Branch,
    pub qp: QpProblem,
    pub labels: Vec<String>,
    pub delays_r: Vec<u32>,
    /// `theta = theta_of_x * x`
    pub theta_of_x: DMatrix<f64>,
    /// Row `k` gives `y(k) / A` in terms of `theta`, `k = 0..=l`.
    pub y_rows: DMatrix<f64>,
    pub u_rows: DMatrix<f64>,
    pub constant: f64,
    pub l: usize,
}

impl ConvexStage {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.qp.objective(&DVector::from_column_slice(x)) + self.constant
    }

    pub fn theta(&self, x: &[f64]) -> Vec<f64> {
        (&self.theta_of_x * DVector::from_column_slice(x)).iter().copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.qp.dim()
    }
}

struct Shapes {
    split: StableUnstableSplit,
    delays_r: Vec<u32>,
    l: usize,
    y_rows: DMatrix<f64>,
    u_rows: DMatrix<f64>,
}

/// `y(k)/A` and `u(k)/A` as linear maps of `theta` for an `s = 0` controller.
fn shapes(p: &CodesignProblem) -> Result<Shapes> {
    let split = p.plant_split()?;
    let delays_r: Vec<u32> = delay_classes(&p.controllability.graph, &p.controllability.schedule)?
        .keys()
        .copied()
        .collect();
    let ddr = *delays_r.last().expect("at least one path") as usize;
    let ddo = match &p.observability {
        Some(o) => *delay_classes(&o.graph, &o.schedule)?.keys().next_back().expect("path") as usize,
        None => 0,
    };
    let ctrl = ControllerStructure::new(split.stable_part.clone(), ddr, ddo, 0)?;
    let l = ctrl.m + split.r + 1 - ddo;
    let md = &split.stable_part * &split.unstable_part_den;
    let partial = |base: &Polynomial| -> DMatrix<f64> {
        DMatrix::from_fn(l + 1, delays_r.len(), |k, i| {
            let shift = ddr - delays_r[i] as usize;
            // sum_{h >= l - k} coefficient h of base * z^shift
            (l - k..=l).map(|h| if h >= shift { base.coeff(h - shift) } else { 0.0 }).sum()
        })
    };
    let y_rows = partial(&split.numerator);
    let u_rows = partial(&md);
    Ok(Shapes {
        split,
        delays_r,
        l,
        y_rows,
        u_rows,
    })
}

fn stage_qp(p: &CodesignProblem, sh: &Shapes, t: &DMatrix<f64>, extra_g: Vec<Vec<f64>>, extra_h: Vec<f64>) -> QpProblem {
    let a2 = p.amplitude * p.amplitude;
    let yl = sh.y_rows.rows(0, sh.l).into_owned() * t;
    let hess = yl.transpose() * &yl * (2.0 * a2);
    let ones = DVector::from_element(sh.l, 1.0);
    let lin = yl.transpose() * ones * (-2.0 * a2);
    // DC gain one: y(l) / A = 1
    let a_eq = sh.y_rows.rows(sh.l, 1).into_owned() * t;
    let b_eq = DVector::from_element(1, 1.0);

    let n = t.ncols();
    let mut g_rows = extra_g;
    let mut h = extra_h;
    let amp = p.amplitude.abs();
    if amp > 0.0 {
        for (rows, bound) in [(&sh.y_rows, p.overshoot_y), (&sh.u_rows, p.overshoot_u)] {
            let Some(b) = bound else { continue };
            let mapped = rows * t;
            for k in 0..=sh.l {
                let r: Vec<f64> = mapped.row(k).iter().copied().collect();
                g_rows.push(r.clone());
                h.push(b / amp);
                g_rows.push(r.iter().map(|v| -v).collect());
                h.push(b / amp);
            }
        }
    }
    let g = DMatrix::from_fn(g_rows.len(), n, |r, c| g_rows[r][c]);
    QpProblem::new(hess, lin)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(g, DVector::from_vec(h))
}

/// Stage-one QPs: one for model 2, one per sign branch for model 1.
pub fn build_stage1(p: &CodesignProblem) -> Result<Vec<ConvexStage>> {
    p.validate()?;
    let report = check_convexifiable(p)?;
    if !report.convexifiable {
        return Err(Error::structural(format!("not convexifiable: {}", report.reasons.join("; "))));
    }
    let sh = shapes(p)?;
    let lead = p.metric_options.error_lead_samples as f64;
    let constant = p.amplitude * p.amplitude * (sh.l as f64 + lead);
    let nd = sh.delays_r.len();
    let mut out = Vec::new();
    match p.model {
        ComputationalModel::WeightThenBroadcast => {
            let t = DMatrix::identity(nd, nd);
            let qp = stage_qp(p, &sh, &t, Vec::new(), Vec::new());
            out.push(ConvexStage {
                branch: Branch::Unsigned,
                qp,
                labels: sh.delays_r.iter().map(|d| format!("theta({d})")).collect(),
                delays_r: sh.delays_r.clone(),
                theta_of_x: t,
                y_rows: sh.y_rows.clone(),
                u_rows: sh.u_rows.clone(),
                constant,
                l: sh.l,
            });
        }
        ComputationalModel::SumThenWeight => {
            let g = &p.controllability.graph;
            let ne = g.edge_count();
            let classes = final_link_classes(g, &p.controllability.schedule)?;
            let t = DMatrix::from_fn(nd, ne, |i, e| {
                classes
                    .get(&e)
                    .map_or(0.0, |c| if c.contains(&sh.delays_r[i]) { 1.0 } else { 0.0 })
            });
            let kappa: Vec<Option<f64>> = (0..ne)
                .map(|e| {
                    p.bound_for(&g.edge_label(e))
                        .map(|b| RateBound::new(b, &p.quant_u, p.slot_duration()).kappa * (1.0 - KAPPA_MARGIN))
                })
                .collect();
            for branch in [Branch::Positive, Branch::Negative] {
                let sign = branch.d0();
                let mut gr = Vec::new();
                let mut hr = Vec::new();
                for e in 0..ne {
                    // sign * beta_e >= eps
                    let mut row = vec![0.0; ne];
                    row[e] = -sign;
                    gr.push(row);
                    hr.push(-BETA_EPS);
                }
                for e in 0..ne {
                    let Some(k) = kappa[e] else { continue };
                    for other in 0..ne {
                        if other == e {
                            continue;
                        }
                        // |beta_e| <= kappa_e |beta_other|
                        let mut row = vec![0.0; ne];
                        row[e] = sign;
                        row[other] = -sign * k;
                        gr.push(row);
                        hr.push(0.0);
                    }
                }
                let qp = stage_qp(p, &sh, &t, gr, hr);
                out.push(ConvexStage {
                    branch,
                    qp,
                    labels: (0..ne).map(|e| format!("beta{}", g.edge_label(e))).collect(),
                    delays_r: sh.delays_r.clone(),
                    theta_of_x: t.clone(),
                    y_rows: sh.y_rows.clone(),
                    u_rows: sh.u_rows.clone(),
                    constant,
                    l: sh.l,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Result {
    pub branch: Branch,
    pub x: Vec<f64>,
    /// `theta(d)` keyed by controllability delay.
    pub theta: BTreeMap<u32, f64>,
    pub value: f64,
    pub qp: QpSolution,
}

pub fn solve_stage(stage: &ConvexStage) -> Result<Stage1Result> {
    let sol = qp::solve(&stage.qp)?;
    let theta = stage
        .delays_r
        .iter()
        .copied()
        .zip(stage.theta(&sol.x))
        .collect();
    Ok(Stage1Result {
        branch: stage.branch,
        value: sol.value + stage.constant,
        x: sol.x.clone(),
        theta,
        qp: sol,
    })
}

/// Solve every branch and keep the lowest value; ties go to the
/// lexicographically smallest `theta`.
pub fn solve_stage1(stages: &[ConvexStage]) -> Result<Stage1Result> {
    let results: Vec<Result<Stage1Result>> = stages.par_iter().map(solve_stage).collect();
    let mut best: Option<Stage1Result> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-12 * b.value.abs().max(1.0);
                        r.value < b.value - tol
                            || ((r.value - b.value).abs() <= tol
                                && r.theta.values().partial_cmp(b.theta.values()) == Some(std::cmp::Ordering::Less))
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| {
        first_err.unwrap_or_else(|| Error::infeasible("stage1", "no branch to solve"))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Result {
    /// `[c_{m-1}, ..., c_0]`
    pub c: Vec<f64>,
    /// Observability `gamma_O(d)`; empty without an observability network.
    pub gamma_o: BTreeMap<u32, f64>,
    pub residual: f64,
}

/// Solve the deadbeat identity for the controller poles and, when the
/// observability weights are free, `gamma_O`, with `theta` frozen.
pub fn solve_stage2(p: &CodesignProblem, theta: &BTreeMap<u32, f64>) -> Result<Stage2Result> {
    let ddr = *theta.keys().next_back().ok_or_else(|| Error::structural("empty theta"))? as usize;
    Stage2System::new(p, ddr)?.solve(theta)
}

/// The parts of the stage-two identity that do not depend on `theta`.
#[derive(Debug, Clone)]
pub struct Stage2System {
    numerator: Polynomial,
    a0: Polynomial,
    target: Polynomial,
    delays_o: Vec<u32>,
    fixed_ngo: Option<Polynomial>,
    ddr: usize,
    ddo: usize,
    m: usize,
    rows: usize,
}

impl Stage2System {
    pub fn new(p: &CodesignProblem, ddr: usize) -> Result<Self> {
        let split = p.plant_split()?;
        let (delays_o, ddo, fixed_ngo): (Vec<u32>, usize, Option<Polynomial>) = match &p.observability {
            None => (Vec::new(), 0, Some(Polynomial::one())),
            Some(o) => {
                let classes = delay_classes(&o.graph, &o.schedule)?;
                let delays: Vec<u32> = classes.keys().copied().collect();
                let ddo = *delays.last().expect("path") as usize;
                match &o.weights {
                    NetworkWeights::Free => (delays, ddo, None),
                    NetworkWeights::Fixed(w) => {
                        let prof = delay_profile(&o.graph, &o.schedule, w)?;
                        let tf = gamma_tf(&prof.gamma, 1.0)?;
                        (Vec::new(), ddo, Some(tf.num))
                    }
                }
            }
        };
        let m = ControllerStructure::new(split.stable_part.clone(), ddr, ddo, 0)?.m;
        let big_l = m + split.r + 1;
        let a0 = &Polynomial::new(vec![-1.0, 1.0]) * &split.unstable_part_den;
        let target = &Polynomial::monomial(big_l, 1.0) - &a0.shift(m);
        Ok(Stage2System {
            numerator: split.numerator,
            a0,
            target,
            delays_o,
            fixed_ngo,
            ddr,
            ddo,
            m,
            rows: big_l + 1,
        })
    }

    pub fn solve(&self, theta: &BTreeMap<u32, f64>) -> Result<Stage2Result> {
        let (m, ddr, ddo) = (self.m, self.ddr, self.ddo);
        let mut theta_poly = vec![0.0; ddr + 1];
        for (&d, &t) in theta {
            if d as usize > ddr {
                return Err(Error::structural(format!("theta has delay {d} beyond {ddr}")));
            }
            theta_poly[ddr - d as usize] += t;
        }
        let b = &Polynomial::new(theta_poly) * &self.numerator;
        let rhs_poly = match &self.fixed_ngo {
            Some(n) => &self.target - &(&b * n),
            None => self.target.clone(),
        };
        let ncols = m + self.delays_o.len();
        let mut mat = DMatrix::zeros(self.rows, ncols);
        let mut rhs = DVector::zeros(self.rows);
        for k in 0..self.rows {
            rhs[k] = rhs_poly.coeff(k);
            for i in 0..m {
                mat[(k, i)] = if k >= i { self.a0.coeff(k - i) } else { 0.0 };
            }
            for (j, &d) in self.delays_o.iter().enumerate() {
                let sh = ddo - d as usize;
                mat[(k, m + j)] = if k >= sh { b.coeff(k - sh) } else { 0.0 };
            }
        }
        let x = least_squares(&mat, &rhs);
        let resid = (&mat * &x - &rhs).amax();
        let scale = 1.0f64.max(self.a0.max_abs_coeff()).max(b.max_abs_coeff() * x.amax().max(1.0));
        let rel = resid / scale;
        if !(rel < DEADBEAT_TOL) {
            return Err(Error::infeasible(
                "stage2",
                format!(
                    "deadbeat identity has no solution for the stage-one choice (residual {rel:.3e}); \
                     the stage-one value is only a lower bound"
                ),
            ));
        }
        Ok(Stage2Result {
            c: (0..m).rev().map(|i| x[i]).collect(),
            gamma_o: self.delays_o.iter().enumerate().map(|(j, &d)| (d, x[m + j])).collect(),
            residual: rel,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub d0: f64,
    pub weights_r: Weights,
    pub weights_o: Option<Weights>,
}

fn unit_alpha(g: &RadioGraph) -> BTreeMap<String, f64> {
    (0..g.node_count())
        .filter(|&v| v != g.source() && v != g.sink())
        .map(|v| (g.name(v).to_string(), 1.0))
        .collect()
}

/// Link targets for an observability network in model 1: `gamma_O(d)` split
/// evenly over the sink links of class `d`, interior links at the largest magnitude.
fn observability_alpha_links(g: &RadioGraph, sched: &Scheduling, gamma: &BTreeMap<u32, f64>) -> Result<Vec<f64>> {
    let classes = final_link_classes(g, sched)?;
    let mut count: BTreeMap<u32, usize> = BTreeMap::new();
    for c in classes.values() {
        let d = *c.iter().next().expect("class");
        *count.entry(d).or_default() += 1;
    }
    let mut alpha = vec![f64::NAN; g.edge_count()];
    for (&e, c) in &classes {
        let d = *c.iter().next().expect("class");
        alpha[e] = gamma.get(&d).copied().unwrap_or(0.0) / count[&d] as f64;
    }
    let top = alpha.iter().filter(|a| !a.is_nan()).fold(0.0f64, |m, a| m.max(a.abs()));
    for a in alpha.iter_mut().filter(|a| a.is_nan()) {
        *a = top;
    }
    Ok(alpha)
}

pub fn recover_network_params(p: &CodesignProblem, s1: &Stage1Result, s2: &Stage2Result) -> Result<Recovered> {
    let r = &p.controllability;
    let d0 = s1.branch.d0();
    let weights_r = match p.model {
        ComputationalModel::WeightThenBroadcast => {
            weights_from_gamma_model2(&r.graph, &r.schedule, &s1.theta, &unit_alpha(&r.graph))?
        }
        ComputationalModel::SumThenWeight => {
            let alpha: Vec<f64> = s1.x.iter().map(|b| b / d0).collect();
            weights_from_alpha_links(&r.graph, &alpha)?
        }
    };
    let weights_o = match &p.observability {
        None => None,
        Some(o) => Some(match &o.weights {
            NetworkWeights::Fixed(w) => w.clone(),
            NetworkWeights::Free => match p.model {
                ComputationalModel::WeightThenBroadcast => {
                    weights_from_gamma_model2(&o.graph, &o.schedule, &s2.gamma_o, &unit_alpha(&o.graph))?
                }
                ComputationalModel::SumThenWeight => {
                    let alpha = observability_alpha_links(&o.graph, &o.schedule, &s2.gamma_o)?;
                    weights_from_alpha_links(&o.graph, &alpha)?
                }
            },
        }),
    };
    Ok(Recovered {
        d0,
        weights_r,
        weights_o,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: String,
    pub branch: Option<Branch>,
    pub stage1_value: Option<f64>,
    pub qp_iterations: Option<usize>,
    pub kkt_residual: Option<f64>,
    pub stage2_residual: Option<f64>,
    pub deadbeat_residual: f64,
    /// Largest gap between the recovered network gains and the stage-one `theta / d0`.
    pub gamma_round_trip: Option<f64>,
    pub convexity: Option<ConvexityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesignSolution {
    pub controller: ControllerStructure,
    pub weights_r: Weights,
    pub weights_o: Option<Weights>,
    pub gamma_r: BTreeMap<u32, f64>,
    pub gamma_o: Option<BTreeMap<u32, f64>>,
    pub frame_duration: f64,
    pub metrics: StepMetrics,
    pub rates_r: RateReport,
    pub rates_o: Option<RateReport>,
    pub diagnostics: Diagnostics,
    /// Unmet requirements found when recomputing from the weights.
    pub violations: Vec<String>,
}

impl CodesignSolution {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The loop realized by a controller and concrete weights, with all metrics
/// recomputed from scratch.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub split: StableUnstableSplit,
    pub gr: RationalTf,
    pub go: Option<RationalTf>,
    pub gamma_r: BTreeMap<u32, f64>,
    pub gamma_o: Option<BTreeMap<u32, f64>>,
    pub closed_loop: ClosedLoop,
    pub metrics: StepMetrics,
    pub rates_r: RateReport,
    pub rates_o: Option<RateReport>,
    pub violations: Vec<String>,
}

fn rate_report(
    p: &CodesignProblem,
    g: &RadioGraph,
    sched: &Scheduling,
    w: &Weights,
    q: &QuantizationSpec,
) -> Result<RateReport> {
    let table = match p.model {
        ComputationalModel::SumThenWeight => alpha_links(g, sched, w)?,
        ComputationalModel::WeightThenBroadcast => alpha_nodes(g, sched, w)?,
    };
    network::rates(&table, q, p.slot_duration(), p.model)
}

/// `(G_R, G_O, gamma_R, gamma_O)` for the given weights.
pub type NetworkTfs = (RationalTf, Option<RationalTf>, BTreeMap<u32, f64>, Option<BTreeMap<u32, f64>>);

pub fn network_tfs(p: &CodesignProblem, weights_r: &Weights, weights_o: Option<&Weights>) -> Result<NetworkTfs> {
    let t = p.frame_duration();
    let r = &p.controllability;
    let pr = delay_profile(&r.graph, &r.schedule, weights_r)?;
    let gr = gamma_tf(&pr.gamma, t)?;
    let (go, gamma_o) = match (&p.observability, weights_o) {
        (Some(o), Some(w)) => {
            let po = delay_profile(&o.graph, &o.schedule, w)?;
            (Some(gamma_tf(&po.gamma, t)?), Some(po.gamma))
        }
        (None, _) => (None, None),
        (Some(_), None) => return Err(Error::structural("observability weights missing")),
    };
    Ok((gr, go, pr.gamma, gamma_o))
}

/// Recompute the closed loop, metrics and rates from a controller and weights.
pub fn evaluate(
    p: &CodesignProblem,
    controller: &ControllerStructure,
    weights_r: &Weights,
    weights_o: Option<&Weights>,
) -> Result<Evaluation> {
    let split = p.plant_split()?;
    let (gr, go, gamma_r, gamma_o) = network_tfs(p, weights_r, weights_o)?;
    let cl = ClosedLoop::assemble(controller, &split, &gr, go.as_ref())?;
    let m = metrics(&cl, p.amplitude, p.metric_options)?;
    let r = &p.controllability;
    let rates_r = rate_report(p, &r.graph, &r.schedule, weights_r, &p.quant_u)?;
    let rates_o = match (&p.observability, weights_o) {
        (Some(o), Some(w)) => Some(rate_report(p, &o.graph, &o.schedule, w, &p.quant_y)?),
        _ => None,
    };
    let mut violations = Vec::new();
    if !cl.is_deadbeat() {
        violations.push(format!("deadbeat residual {:.3e}", cl.deadbeat_residual));
    }
    if let Some(b) = p.overshoot_y {
        if m.overshoot_y > b + 1e-6 {
            violations.push(format!("output overshoot {} exceeds {b}", m.overshoot_y));
        }
    }
    if let Some(b) = p.overshoot_u {
        if m.overshoot_u > b + 1e-6 {
            violations.push(format!("input overshoot {} exceeds {b}", m.overshoot_u));
        }
    }
    for rep in std::iter::once(&rates_r).chain(rates_o.as_ref()) {
        for e in &rep.entries {
            if let Some(b) = p.bound_for(&e.element) {
                if e.bits > budget_bits(b, p.slot_duration()) {
                    violations.push(format!("rate of {} is {} Hz, above {b} Hz", e.element, e.rate_hz));
                }
            }
        }
    }
    Ok(Evaluation {
        split,
        gr,
        go,
        gamma_r,
        gamma_o,
        closed_loop: cl,
        metrics: m,
        rates_r,
        rates_o,
        violations,
    })
}

fn solution_from(
    p: &CodesignProblem,
    controller: ControllerStructure,
    weights_r: Weights,
    weights_o: Option<Weights>,
    mut diagnostics: Diagnostics,
) -> Result<CodesignSolution> {
    let ev = evaluate(p, &controller, &weights_r, weights_o.as_ref())?;
    diagnostics.deadbeat_residual = ev.closed_loop.deadbeat_residual;
    Ok(CodesignSolution {
        controller,
        weights_r,
        weights_o,
        gamma_r: ev.gamma_r,
        gamma_o: ev.gamma_o,
        frame_duration: p.frame_duration(),
        metrics: ev.metrics,
        rates_r: ev.rates_r,
        rates_o: ev.rates_o,
        diagnostics,
        violations: ev.violations,
    })
}

/// Both networks fixed: solve the deadbeat identity for `(c, d)` directly.
pub fn synthesize_pinned(p: &CodesignProblem) -> Result<CodesignSolution> {
    p.validate()?;
    let NetworkWeights::Fixed(wr) = &p.controllability.weights else {
        return Err(Error::structural("controllability weights are not fixed"));
    };
    let wo = match &p.observability {
        None => None,
        Some(o) => match &o.weights {
            NetworkWeights::Fixed(w) => Some(w.clone()),
            NetworkWeights::Free => return Err(Error::structural("observability weights are not fixed")),
        },
    };
    let split = p.plant_split()?;
    let (gr, go, _, _) = network_tfs(p, wr, wo.as_ref())?;
    let (ctrl, resid) = solve_deadbeat(&split, &gr, go.as_ref(), p.s)?;
    let diag = Diagnostics {
        mode: "pinned".into(),
        branch: None,
        stage1_value: None,
        qp_iterations: None,
        kkt_residual: None,
        stage2_residual: Some(resid),
        deadbeat_residual: resid,
        gamma_round_trip: None,
        convexity: None,
    };
    solution_from(p, ctrl, wr.clone(), wo, diag)
}

/// Controllability weights fixed, observability free, `s = 0`: `d0` follows
/// from unit DC gain and stage two supplies the rest.
fn synthesize_pinned_r(p: &CodesignProblem, wr: &Weights) -> Result<CodesignSolution> {
    let split = p.plant_split()?;
    let r = &p.controllability;
    let prof = delay_profile(&r.graph, &r.schedule, wr)?;
    let dc = prof.gamma.values().sum::<f64>() * split.numerator.eval(1.0);
    if dc == 0.0 {
        return Err(Error::infeasible("stage2", "controllability network has zero DC gain"));
    }
    let d0 = 1.0 / dc;
    let theta: BTreeMap<u32, f64> = prof.gamma.iter().map(|(&d, &g)| (d, d0 * g)).collect();
    let s2 = solve_stage2(p, &theta)?;
    let o = p.observability.as_ref().expect("observability present");
    let wo = match p.model {
        ComputationalModel::WeightThenBroadcast => {
            weights_from_gamma_model2(&o.graph, &o.schedule, &s2.gamma_o, &unit_alpha(&o.graph))?
        }
        ComputationalModel::SumThenWeight => {
            let alpha = observability_alpha_links(&o.graph, &o.schedule, &s2.gamma_o)?;
            weights_from_alpha_links(&o.graph, &alpha)?
        }
    };
    let ddr = *prof.delays.last().expect("path") as usize;
    let ddo = *s2.gamma_o.keys().next_back().unwrap_or(&0) as usize;
    let ctrl = ControllerStructure::new(split.stable_part.clone(), ddr, ddo, 0)?.with_coefficients(s2.c.clone(), vec![d0])?;
    let diag = Diagnostics {
        mode: "pinned_controllability".into(),
        branch: None,
        stage1_value: None,
        qp_iterations: None,
        kkt_residual: None,
        stage2_residual: Some(s2.residual),
        deadbeat_residual: s2.residual,
        gamma_round_trip: None,
        convexity: None,
    };
    solution_from(p, ctrl, wr.clone(), Some(wo), diag)
}

/// Run the design appropriate to which weights are free.
pub fn codesign(p: &CodesignProblem) -> Result<CodesignSolution> {
    p.validate()?;
    let obs_free = matches!(p.observability.as_ref().map(|o| &o.weights), Some(NetworkWeights::Free));
    match &p.controllability.weights {
        NetworkWeights::Fixed(wr) => {
            if obs_free {
                if p.s != 0 {
                    return Err(Error::structural(
                        "free observability weights with fixed controllability weights require s = 0",
                    ));
                }
                synthesize_pinned_r(p, wr)
            } else {
                synthesize_pinned(p)
            }
        }
        NetworkWeights::Free => two_stage(p),
    }
}

fn two_stage(p: &CodesignProblem) -> Result<CodesignSolution> {
    let report = check_convexifiable(p)?;
    let stages = build_stage1(p)?;
    let s1 = solve_stage1(&stages)?;
    let s2 = solve_stage2(p, &s1.theta)?;
    let rec = recover_network_params(p, &s1, &s2)?;
    let split = p.plant_split()?;
    let ddr = *s1.theta.keys().next_back().expect("theta") as usize;
    let ddo = match &p.observability {
        Some(o) => *delay_classes(&o.graph, &o.schedule)?.keys().next_back().expect("path") as usize,
        None => 0,
    };
    let ctrl = ControllerStructure::new(split.stable_part.clone(), ddr, ddo, 0)?
        .with_coefficients(s2.c.clone(), vec![rec.d0])?;
    let r = &p.controllability;
    let prof = delay_profile(&r.graph, &r.schedule, &rec.weights_r)?;
    let round_trip = s1
        .theta
        .iter()
        .map(|(d, t)| (prof.gamma[d] - t / rec.d0).abs())
        .fold(0.0f64, f64::max);
    let diag = Diagnostics {
        mode: "two_stage".into(),
        branch: Some(s1.branch),
        stage1_value: Some(s1.value),
        qp_iterations: Some(s1.qp.iterations),
        kkt_residual: Some(s1.qp.kkt_residual),
        stage2_residual: Some(s2.residual),
        deadbeat_residual: 0.0,
        gamma_round_trip: Some(round_trip),
        convexity: Some(report),
    };
    let sol = solution_from(p, ctrl, rec.weights_r, rec.weights_o, diag)?;
    if p.model == ComputationalModel::SumThenWeight && !sol.violations.is_empty() {
        return Err(Error::infeasible("recovery", sol.violations.join("; ")));
    }
    Ok(sol)
}

/// Axis of the brute-force grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Grid { lo, hi, points }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.points <= 1 {
            return 0.5 * (self.lo + self.hi);
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub coords: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Best point of the stage-one problem (deadbeat not enforced beyond unit DC gain).
    pub best_stage1: Option<GridPoint>,
    /// Best point for which the full deadbeat design exists.
    pub best_problem1: Option<GridPoint>,
    /// Largest objective change to a grid neighbour of `best_stage1`.
    pub cell_variation: f64,
    pub evaluated: usize,
}

/// Exhaustive grid search over the network gains.
///
/// With `s = 0` the free coordinates are `theta(d)` for all but the last
/// delay, the last one following from unit DC gain. This needs model 2, where
/// rates do not constrain `theta`. With `s >= 1` every
/// `gamma_R(d)` is gridded and `(c, d)` is solved per point, which needs the
/// observability network absent or fixed.
pub fn brute_force_codesign(p: &CodesignProblem, grid: Grid) -> Result<OracleResult> {
    p.validate()?;
    if p.s == 0 {
        oracle_theta(p, grid)
    } else {
        oracle_pinned(p, grid)
    }
}

fn grid_indices(dims: usize, points: usize) -> impl ParallelIterator<Item = Vec<usize>> {
    let total = points.pow(dims as u32);
    (0..total).into_par_iter().map(move |mut flat| {
        let mut idx = vec![0; dims];
        for slot in idx.iter_mut().rev() {
            *slot = flat % points;
            flat /= points;
        }
        idx
    })
}

fn pick_best(a: Option<(Vec<usize>, f64)>, b: Option<(Vec<usize>, f64)>) -> Option<(Vec<usize>, f64)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

fn oracle_theta(p: &CodesignProblem, grid: Grid) -> Result<OracleResult> {
    if p.model == ComputationalModel::SumThenWeight {
        // sign branches and link-rate ratios do not live in theta space
        return Err(Error::structural("the s = 0 grid oracle covers computational model 2 only"));
    }
    let sh = shapes(p)?;
    let nd = sh.delays_r.len();
    if nd > 4 {
        return Err(Error::structural("oracle supports at most four variables"));
    }
    let dc = sh.split.numerator.eval(1.0);
    if dc == 0.0 {
        return Err(Error::infeasible("oracle", "plant has a zero at z = 1"));
    }
    let amp = p.amplitude;
    let lead = p.metric_options.error_lead_samples as f64;
    let theta_at = |idx: &[usize]| -> Vec<f64> {
        let mut th: Vec<f64> = idx.iter().map(|&i| grid.value(i)).collect();
        let rest: f64 = th.iter().sum();
        th.push(1.0 / dc - rest);
        th
    };
    let eval = |th: &[f64]| -> (f64, bool) {
        let t = DVector::from_column_slice(th);
        let y = &sh.y_rows * &t;
        let u = &sh.u_rows * &t;
        let val = amp * amp * ((0..sh.l).map(|k| (y[k] - 1.0).powi(2)).sum::<f64>() + lead);
        let ok_y = p.overshoot_y.is_none_or(|b| y.iter().all(|v| (amp * v).abs() <= b + 1e-12));
        let ok_u = p.overshoot_u.is_none_or(|b| u.iter().all(|v| (amp * v).abs() <= b + 1e-12));
        (val, ok_y && ok_u)
    };
    let stage2 = Stage2System::new(p, *sh.delays_r.last().expect("path") as usize)?;
    let dims = nd - 1;
    let points = if dims == 0 { 1 } else { grid.points };
    let mut feasible: Vec<(Vec<usize>, f64)> = grid_indices(dims, points)
        .filter_map(|idx| {
            let (v, ok) = eval(&theta_at(&idx));
            ok.then_some((idx, v))
        })
        .collect();
    // stage two is the expensive part, so try points from the best value upward
    feasible.par_sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let best1 = feasible.first().cloned();
    let bestp = feasible
        .iter()
        .find(|(idx, _)| {
            let theta: BTreeMap<u32, f64> = sh.delays_r.iter().copied().zip(theta_at(idx)).collect();
            stage2.solve(&theta).is_ok()
        })
        .cloned();
    let mut variation = 0.0f64;
    if let Some((idx, v)) = &best1 {
        for axis in 0..dims {
            for delta in [-1i64, 1] {
                let j = idx[axis] as i64 + delta;
                if j < 0 || j >= points as i64 {
                    continue;
                }
                let mut nb = idx.clone();
                nb[axis] = j as usize;
                let (w, _) = eval(&theta_at(&nb));
                variation = variation.max((w - v).abs());
            }
        }
    }
    let to_point = |b: Option<(Vec<usize>, f64)>| {
        b.map(|(idx, v)| GridPoint {
            coords: theta_at(&idx),
            value: v,
        })
    };
    Ok(OracleResult {
        best_stage1: to_point(best1),
        best_problem1: to_point(bestp),
        cell_variation: variation,
        evaluated: points.pow(dims as u32),
    })
}

fn oracle_pinned(p: &CodesignProblem, grid: Grid) -> Result<OracleResult> {
    let split = p.plant_split()?;
    let go = match &p.observability {
        None => None,
        Some(o) => match &o.weights {
            NetworkWeights::Fixed(w) => {
                let prof = delay_profile(&o.graph, &o.schedule, w)?;
                Some(gamma_tf(&prof.gamma, p.frame_duration())?)
            }
            NetworkWeights::Free => {
                return Err(Error::structural("oracle with s >= 1 needs fixed observability weights"))
            }
        },
    };
    let delays: Vec<u32> = delay_classes(&p.controllability.graph, &p.controllability.schedule)?
        .keys()
        .copied()
        .collect();
    let dims = delays.len();
    if dims > 4 {
        return Err(Error::structural("oracle supports at most four variables"));
    }
    let t = p.frame_duration();
    let eval = |idx: &[usize]| -> Option<f64> {
        let gamma: BTreeMap<u32, f64> = delays.iter().copied().zip(idx.iter().map(|&i| grid.value(i))).collect();
        let gr = gamma_tf(&gamma, t).ok()?;
        let (ctrl, _) = solve_deadbeat(&split, &gr, go.as_ref(), p.s).ok()?;
        let cl = ClosedLoop::assemble(&ctrl, &split, &gr, go.as_ref()).ok()?;
        let m = metrics(&cl, p.amplitude, p.metric_options).ok()?;
        let ok = p.overshoot_y.is_none_or(|b| m.overshoot_y <= b + 1e-9)
            && p.overshoot_u.is_none_or(|b| m.overshoot_u <= b + 1e-9);
        ok.then_some(m.l2_sq)
    };
    let best = grid_indices(dims, grid.points)
        .map(|idx| eval(&idx).map(|v| (idx, v)))
        .reduce(|| None, pick_best);
    let mut variation = 0.0f64;
    if let Some((idx, v)) = &best {
        for axis in 0..dims {
            for delta in [-1i64, 1] {
                let j = idx[axis] as i64 + delta;
                if j < 0 || j >= grid.points as i64 {
                    continue;
                }
                let mut nb = idx.clone();
                nb[axis] = j as usize;
                if let Some(w) = eval(&nb) {
                    variation = variation.max((w - v).abs());
                }
            }
        }
    }
    let point = best.map(|(idx, v)| GridPoint {
        coords: idx.iter().map(|&i| grid.value(i)).collect(),
        value: v,
    });
    Ok(OracleResult {
        best_stage1: point.clone(),
        best_problem1: point,
        cell_variation: variation,
        evaluated: grid.points.pow(dims as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{eta_b, fig4a};
    use crate::network::GraphKind;

    fn plant() -> PlantModel {
        PlantModel::Discrete(RationalTf::discrete(vec![1.0], vec![3.0, 1.0], 0.02).unwrap())
    }

    fn base(model: ComputationalModel, weights: NetworkWeights, s: usize) -> CodesignProblem {
        let g = fig4a();
        let sched = eta_b(&g);
        CodesignProblem {
            plant: plant(),
            controllability: NetworkSpec {
                graph: g,
                schedule: sched,
                weights,
            },
            observability: None,
            model,
            quant_u: QuantizationSpec::new(0.1, 500.0).unwrap(),
            quant_y: QuantizationSpec::new(0.1, 500.0).unwrap(),
            overshoot_u: None,
            overshoot_y: None,
            rate_bound: None,
            rate_bounds: BTreeMap::new(),
            s,
            amplitude: 1.0,
            metric_options: MetricOptions::default(),
        }
    }

    fn chain_obs(delays: &[usize]) -> NetworkSpec {
        // parallel chains from "y" to "c", chain i has delays[i] hops scheduled in reverse
        let mut nodes = vec!["y".to_string(), "c".to_string()];
        let mut edges = Vec::new();
        let mut slots = Vec::new();
        for (i, &d) in delays.iter().enumerate() {
            let mut prev = "y".to_string();
            for h in 0..d {
                let next = if h + 1 == d { "c".to_string() } else { format!("o{i}_{h}") };
                if h + 1 != d {
                    nodes.push(next.clone());
                }
                edges.push((prev.clone(), next.clone()));
                slots.push(d - h);
                prev = next;
            }
        }
        let g = RadioGraph::new(GraphKind::Observability, &nodes, &edges, "y", "c").unwrap();
        let period = *slots.iter().max().unwrap();
        let sched = Scheduling::from_assignment(period, slots, 0.01).unwrap();
        NetworkSpec {
            graph: g,
            schedule: sched,
            weights: NetworkWeights::Free,
        }
    }

    #[test]
    fn chain_observability_delays() {
        let o = chain_obs(&[1, 2]);
        let d: Vec<u32> = delay_classes(&o.graph, &o.schedule).unwrap().keys().copied().collect();
        assert_eq!(d, vec![1, 2]);
    }

    #[test]
    fn example3_without_observability_fails_stage2() {
        let p = base(ComputationalModel::WeightThenBroadcast, NetworkWeights::Free, 0);
        let stages = build_stage1(&p).unwrap();
        assert_eq!(stages.len(), 1);
        assert_eq!(stages[0].dim(), 2);
        let s1 = solve_stage1(&stages).unwrap();
        // y = 0, 0, theta1, 1 so the optimum puts theta1 = 1
        assert!((s1.theta[&1] - 1.0).abs() < 1e-9);
        assert!((s1.value - 2.0).abs() < 1e-9);
        assert!(matches!(solve_stage2(&p, &s1.theta), Err(Error::Infeasible { .. })));
        // the only deadbeat choice is theta = (7, -6)
        let fixed = BTreeMap::from([(1, 7.0), (2, -6.0)]);
        let s2 = solve_stage2(&p, &fixed).unwrap();
        assert!((s2.c[0] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn model2_with_observability_is_deadbeat() {
        let mut p = base(ComputationalModel::WeightThenBroadcast, NetworkWeights::Free, 0);
        p.observability = Some(chain_obs(&[1, 2]));
        let rep = check_convexifiable(&p).unwrap();
        assert!(rep.convexifiable && rep.stage2_guaranteed && !rep.naive);
        let sol = codesign(&p).unwrap();
        assert!(sol.feasible(), "{:?}", sol.violations);
        let s1 = sol.diagnostics.stage1_value.unwrap();
        assert!((sol.metrics.l2_sq - s1).abs() <= 1e-6 * s1);
        assert!(sol.diagnostics.gamma_round_trip.unwrap() < 1e-9);
        assert!(sol.rates_r.entries.iter().all(|e| e.rate_hz == 1400.0));
    }

    #[test]
    fn zero_output_overshoot_is_infeasible() {
        let mut p = base(ComputationalModel::WeightThenBroadcast, NetworkWeights::Free, 0);
        p.observability = Some(chain_obs(&[1, 2]));
        p.overshoot_y = Some(0.0);
        assert!(matches!(codesign(&p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn model1_requires_separation_and_s0() {
        let mut p = base(ComputationalModel::SumThenWeight, NetworkWeights::Free, 1);
        let rep = check_convexifiable(&p).unwrap();
        assert!(!rep.convexifiable);
        p.s = 0;
        assert!(check_convexifiable(&p).unwrap().convexifiable);
    }

    #[test]
    fn model1_uniform_beta_gives_minimal_rates() {
        let mut p = base(ComputationalModel::SumThenWeight, NetworkWeights::Free, 0);
        p.observability = Some(chain_obs(&[1, 2]));
        // a 1400 Hz cap keeps every link at the minimal bit count
        p.rate_bound = Some(1400.0);
        let sol = codesign(&p).unwrap();
        assert!(sol.feasible(), "{:?}", sol.violations);
        assert!(sol.rates_r.entries.iter().all(|e| e.rate_hz == 1400.0));
        let a = alpha_links(&p.controllability.graph, &p.controllability.schedule, &sol.weights_r).unwrap();
        let t = a.totals();
        let (lo, hi) = t.iter().fold((f64::MAX, 0.0f64), |(lo, hi), x| (lo.min(x.abs()), hi.max(x.abs())));
        let kappa = RateBound::new(1400.0, &p.quant_u, 0.01).kappa;
        assert!(hi / lo <= kappa);
    }

    #[test]
    fn pinned_case1_matches() {
        let g = fig4a();
        let sched = eta_b(&g);
        let alpha = BTreeMap::from([
            ("v2".to_string(), 450.0),
            ("v3".to_string(), 0.003),
            ("v4".to_string(), 0.003),
            ("v5".to_string(), 0.003),
            ("v6".to_string(), 0.003),
        ]);
        let w = weights_from_gamma_model2(&g, &sched, &BTreeMap::from([(1, 450.0), (2, 0.003)]), &alpha).unwrap();
        let mut p = base(ComputationalModel::WeightThenBroadcast, NetworkWeights::Fixed(w), 1);
        p.metric_options.error_lead_samples = 1;
        let sol = codesign(&p).unwrap();
        assert!((sol.metrics.l2 - 6.245).abs() < 0.005 * 6.245);
        assert!((sol.metrics.overshoot_y - 7.0).abs() < 0.07);
        assert_eq!(sol.rates_r.entry("v2").unwrap().rate_hz, 3100.0);
    }

    #[test]
    fn oracle_agrees_with_qp_on_two_variables() {
        let mut p = base(ComputationalModel::WeightThenBroadcast, NetworkWeights::Free, 0);
        p.observability = Some(chain_obs(&[1, 2]));
        p.overshoot_y = Some(3.0);
        let s1 = solve_stage1(&build_stage1(&p).unwrap()).unwrap();
        let o = brute_force_codesign(&p, Grid::new(-10.0, 10.0, 401)).unwrap();
        let b = o.best_stage1.unwrap();
        assert!(s1.value <= b.value + 1e-9);
        assert!((s1.value - b.value).abs() <= (1e-3 * b.value).max(o.cell_variation));
    }

    fn example4(slots: &[&[(&str, &str)]], bound: f64) -> CodesignProblem {
        let g = fig4a();
        let slots: Vec<Vec<(&str, &str)>> = slots.iter().map(|s| s.to_vec()).collect();
        let sched = Scheduling::from_slots(&g, &slots, 0.01).unwrap();
        let go = RadioGraph::new(
            GraphKind::Observability,
            &["v1", "v2", "v3", "v4", "v5", "v6", "v7"],
            &crate::network::tests::FIG4A_EDGES,
            "v1",
            "v7",
        )
        .unwrap();
        let so = Scheduling::from_slots(&go, &[crate::network::tests::FIG4A_EDGES.to_vec()], 0.01).unwrap();
        let mut p = base(ComputationalModel::SumThenWeight, NetworkWeights::Free, 0);
        p.controllability.graph = g;
        p.controllability.schedule = sched;
        p.observability = Some(NetworkSpec {
            graph: go,
            schedule: so,
            weights: NetworkWeights::Free,
        });
        p.overshoot_u = Some(10.0);
        p.overshoot_y = Some(10.0);
        p.rate_bound = Some(bound);
        p
    }

    pub(crate) const ETA4_A: [&[(&str, &str)]; 2] = [
        &[("v1", "v2"), ("v1", "v3"), ("v1", "v4"), ("v5", "v7"), ("v6", "v7")],
        &[("v2", "v5"), ("v2", "v7"), ("v3", "v5"), ("v3", "v6"), ("v3", "v7"), ("v4", "v6"), ("v4", "v7")],
    ];
    pub(crate) const ETA4_B: [&[(&str, &str)]; 2] = [
        &[("v1", "v2"), ("v1", "v3"), ("v1", "v4"), ("v2", "v7"), ("v3", "v7"), ("v4", "v7"), ("v5", "v7"), ("v6", "v7")],
        &[("v2", "v5"), ("v3", "v5"), ("v3", "v6"), ("v4", "v6")],
    ];
    pub(crate) const ETA4_C: [&[(&str, &str)]; 2] = [
        &[("v1", "v2"), ("v1", "v3"), ("v1", "v4"), ("v2", "v5"), ("v3", "v5"), ("v3", "v6"), ("v4", "v6"), ("v4", "v7"), ("v6", "v7")],
        &[("v2", "v7"), ("v3", "v7"), ("v5", "v7")],
    ];

    #[test]
    fn example4_ordering() {
        let mut vals = Vec::new();
        for (slots, m) in [(&ETA4_A, 4), (&ETA4_B, 4), (&ETA4_C, 5)] {
            let p = example4(slots, 3000.0);
            let sol = codesign(&p).unwrap();
            assert_eq!(sol.controller.m, m);
            assert!(sol.feasible(), "{:?}", sol.violations);
            vals.push(sol.metrics.l2_sq);
        }
        let kappa = RateBound::new(3000.0, &QuantizationSpec::new(0.1, 500.0).unwrap(), 0.01).kappa;
        eprintln!("{vals:?} kappa {kappa}");
        assert!(vals[0] <= vals[2] && vals[2] <= vals[1]);
        assert!((vals[1] - 3.0).abs() < 1e-6);
    }
}
