//! Controller structure, closed-loop assembly, the deadbeat identity and
//! step-response metrics.
//!
//! The controller is
//! `C(z) = M(z) z^ddr z^ddo (d_s z^s + ... + d_0) / ((z - 1)(z^m + c_{m-1} z^{m-1} + ... + c_0))`,
//! so it cancels the stable plant poles and the pure network delays. With
//! `G_R = N_GR / z^ddr`, `G_O = N_GO / z^ddo` and `P = N_P / (M D_P')` the loop
//! from the reference to the plant output is
//! `z^ddo N_C' N_GR N_P / (D_C' D_P' + N_C' N_GR N_P N_GO)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, RationalTf, SampleTime, StableUnstableSplit};

/// Deadbeat residuals below this (relative to the identity's coefficient scale) are accepted.
pub const DEADBEAT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStructure {
    /// Stable plant factor `M(z)` cancelled by the controller.
    pub stable_part: Polynomial,
    /// Maximum controllability delay.
    pub ddr: usize,
    /// Maximum observability delay (0 without an observability network).
    pub ddo: usize,
    pub m: usize,
    pub s: usize,
    /// `[c_{m-1}, ..., c_0]`
    pub c: Vec<f64>,
    /// `[d_s, ..., d_0]`
    pub d: Vec<f64>,
}

impl ControllerStructure {
    /// Structure with `m` fixed by degree balance `m + 1 = s + deg M + ddr + ddo`.
    pub fn new(stable_part: Polynomial, ddr: usize, ddo: usize, s: usize) -> Result<Self> {
        let total = s + stable_part.degree() + ddr + ddo;
        if total == 0 {
            return Err(Error::structural("controller needs at least one network delay"));
        }
        Ok(ControllerStructure {
            stable_part,
            ddr,
            ddo,
            m: total - 1,
            s,
            c: vec![0.0; total - 1],
            d: vec![0.0; s + 1],
        })
    }

    /// As [`ControllerStructure::new`] but checks a requested `m` against the balance.
    pub fn with_m(stable_part: Polynomial, ddr: usize, ddo: usize, s: usize, m: usize) -> Result<Self> {
        let ctrl = ControllerStructure::new(stable_part, ddr, ddo, s)?;
        if ctrl.m != m {
            return Err(Error::structural(format!(
                "m = {m} breaks degree balance m + 1 = s + deg M + ddr + ddo (requires m = {})",
                ctrl.m
            )));
        }
        Ok(ctrl)
    }

    pub fn with_coefficients(mut self, c: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if c.len() != self.m || d.len() != self.s + 1 {
            return Err(Error::structural(format!(
                "controller expects {} c and {} d coefficients, got {} and {}",
                self.m,
                self.s + 1,
                c.len(),
                d.len()
            )));
        }
        self.c = c;
        self.d = d;
        Ok(self)
    }

    /// `z^m + c_{m-1} z^{m-1} + ... + c_0`
    pub fn denominator_core(&self) -> Polynomial {
        let mut asc: Vec<f64> = self.c.iter().rev().copied().collect();
        asc.push(1.0);
        Polynomial::new(asc)
    }

    /// `D_C' = (z - 1) * core`
    pub fn d_c_prime(&self) -> Polynomial {
        &Polynomial::new(vec![-1.0, 1.0]) * &self.denominator_core()
    }

    /// `N_C' = d_s z^s + ... + d_0`
    pub fn n_c_prime(&self) -> Polynomial {
        Polynomial::new(self.d.iter().rev().copied().collect())
    }

    pub fn transfer_function(&self, frame_duration: f64) -> Result<RationalTf> {
        let num = &self.stable_part * &self.n_c_prime().shift(self.ddr + self.ddo);
        RationalTf::new(num, self.d_c_prime(), SampleTime::Discrete(frame_duration))
    }
}

/// Split a network transfer function `N(z) / z^D` into `(N, D)`.
pub fn network_parts(g: &RationalTf) -> Result<(Polynomial, usize)> {
    let dmax = g.den.degree();
    if g.den.z_valuation() != dmax {
        return Err(Error::structural("network denominator must be a power of z"));
    }
    let lead = g.den.leading();
    Ok((g.num.scale(1.0 / lead), dmax))
}

fn observability_parts(go: Option<&RationalTf>) -> Result<(Polynomial, usize)> {
    match go {
        Some(g) => network_parts(g),
        None => Ok((Polynomial::one(), 0)),
    }
}

fn check_delays(ctrl: &ControllerStructure, ddr: usize, ddo: usize) -> Result<()> {
    if ctrl.ddr != ddr || ctrl.ddo != ddo {
        return Err(Error::structural(format!(
            "controller built for delays ({}, {}) but networks have ({ddr}, {ddo})",
            ctrl.ddr, ctrl.ddo
        )));
    }
    Ok(())
}

/// `D_C' D_P' + N_C' N_GR N_P N_GO - z^(m + r + 1)`; zero iff the loop is deadbeat.
pub fn deadbeat_residual(
    ctrl: &ControllerStructure,
    plant: &StableUnstableSplit,
    gr: &RationalTf,
    go: Option<&RationalTf>,
) -> Result<Polynomial> {
    let (ngr, ddr) = network_parts(gr)?;
    let (ngo, ddo) = observability_parts(go)?;
    check_delays(ctrl, ddr, ddo)?;
    let char_poly = characteristic(ctrl, plant, &ngr, &ngo);
    Ok(&char_poly - &Polynomial::monomial(ctrl.m + plant.r + 1, 1.0))
}

fn characteristic(
    ctrl: &ControllerStructure,
    plant: &StableUnstableSplit,
    ngr: &Polynomial,
    ngo: &Polynomial,
) -> Polynomial {
    let a = &ctrl.d_c_prime() * &plant.unstable_part_den;
    let b = &(&(&ctrl.n_c_prime() * ngr) * &plant.numerator) * ngo;
    &a + &b
}

/// `q_h = sum_{i + j + (ddr - k) = h} b_i d_j gamma(k)`, ascending in `h`.
/// `d` is ascending (`d_0` first); `gamma` pairs delays with weights.
pub fn q_coefficients(d: &[f64], gamma: &[(u32, f64)], n_p: &Polynomial) -> Vec<f64> {
    let ddr = gamma.iter().map(|&(k, _)| k).max().unwrap_or(0) as usize;
    let b = n_p.coeffs();
    let mut q = vec![0.0; b.len() + d.len() + ddr];
    for (i, bi) in b.iter().enumerate() {
        for (j, dj) in d.iter().enumerate() {
            for &(k, g) in gamma {
                q[i + j + ddr - k as usize] += bi * dj * g;
            }
        }
    }
    while q.len() > 1 && q.last() == Some(&0.0) {
        q.pop();
    }
    q
}

/// Solve the deadbeat identity for `(c, d)` with both networks fixed.
/// Returns the controller and the relative residual of the identity.
pub fn solve_deadbeat(
    plant: &StableUnstableSplit,
    gr: &RationalTf,
    go: Option<&RationalTf>,
    s: usize,
) -> Result<(ControllerStructure, f64)> {
    let (ngr, ddr) = network_parts(gr)?;
    let (ngo, ddo) = observability_parts(go)?;
    let ctrl = ControllerStructure::new(plant.stable_part.clone(), ddr, ddo, s)?;
    let m = ctrl.m;
    let big_l = m + plant.r + 1;
    let a0 = &Polynomial::new(vec![-1.0, 1.0]) * &plant.unstable_part_den;
    let b = &(&ngr * &plant.numerator) * &ngo;
    if b.degree() + s >= big_l {
        return Err(Error::structural("plant and networks leave the loop improper"));
    }
    // columns: c_0..c_{m-1}, then d_0..d_s
    let rows = big_l;
    let mut mat = DMatrix::zeros(rows, m + s + 1);
    let mut rhs = DVector::zeros(rows);
    let base = a0.shift(m);
    for k in 0..rows {
        rhs[k] = -base.coeff(k);
        for i in 0..m {
            mat[(k, i)] = if k >= i { a0.coeff(k - i) } else { 0.0 };
        }
        for j in 0..=s {
            mat[(k, m + j)] = if k >= j { b.coeff(k - j) } else { 0.0 };
        }
    }
    let x = least_squares(&mat, &rhs);
    let c: Vec<f64> = (0..m).rev().map(|i| x[i]).collect();
    let d: Vec<f64> = (0..=s).rev().map(|j| x[m + j]).collect();
    let ctrl = ctrl.with_coefficients(c, d)?;
    let resid = deadbeat_residual(&ctrl, plant, gr, go)?;
    let scale = 1.0f64.max(a0.max_abs_coeff()).max(b.max_abs_coeff() * x.amax());
    let rel = resid.max_abs_coeff() / scale;
    if !(rel < DEADBEAT_TOL) {
        return Err(Error::infeasible(
            "deadbeat",
            format!("identity has no solution for these networks (residual {rel:.3e})"),
        ));
    }
    Ok((ctrl, rel))
}

/// Minimum-norm least squares with a `1e-10 * sigma_max` pseudo-inverse cutoff.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    // equilibrate columns, then refine against the unscaled residual
    let norms: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 { n } else { 1.0 }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let eps = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut y = svd.solve(rhs, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()));
        for (j, n) in norms.iter().enumerate() {
            y[j] /= n;
        }
        y
    };
    let mut x = solve(b);
    for _ in 0..2 {
        let r = b - a * &x;
        x += solve(&r);
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoop {
    /// Reference to plant output.
    pub y_tf: RationalTf,
    /// Reference to plant input.
    pub u_tf: RationalTf,
    pub characteristic: Polynomial,
    /// `m + r + 1`, degree of the characteristic polynomial.
    pub order: usize,
    /// Response time `m + r + 1 - ddo`.
    pub l: usize,
    /// Relative degree of the output response.
    pub nu: usize,
    /// `N_C' N_GR N_P`, ascending.
    pub q: Vec<f64>,
    /// `M D_P' N_C' N_GR`, ascending.
    pub p: Vec<f64>,
    /// Largest coefficient of the deadbeat residual, relative to the identity scale.
    pub deadbeat_residual: f64,
}

impl ClosedLoop {
    pub fn assemble(
        ctrl: &ControllerStructure,
        plant: &StableUnstableSplit,
        gr: &RationalTf,
        go: Option<&RationalTf>,
    ) -> Result<ClosedLoop> {
        let (ngr, ddr) = network_parts(gr)?;
        let (ngo, ddo) = observability_parts(go)?;
        check_delays(ctrl, ddr, ddo)?;
        let t = match gr.sample_time {
            SampleTime::Discrete(t) => t,
            SampleTime::Continuous => return Err(Error::structural("network must be discrete")),
        };
        let q = &(&ctrl.n_c_prime() * &ngr) * &plant.numerator;
        let p = &(&(&plant.stable_part * &plant.unstable_part_den) * &ctrl.n_c_prime()) * &ngr;
        let char_poly = characteristic(ctrl, plant, &ngr, &ngo);
        let order = ctrl.m + plant.r + 1;
        if char_poly.degree() != order || q.degree() + ddo > order || p.degree() + ddo > order {
            return Err(Error::structural("closed loop is improper for this controller structure"));
        }
        let l = order - ddo;
        let target = Polynomial::monomial(order, 1.0);
        let a_scale = (&ctrl.d_c_prime() * &plant.unstable_part_den).max_abs_coeff();
        let b_scale = (&q * &ngo).max_abs_coeff();
        let resid = (&char_poly - &target).max_abs_coeff() / 1.0f64.max(a_scale).max(b_scale);
        let nu = if q.is_zero() { l } else { l - q.degree() };
        Ok(ClosedLoop {
            y_tf: RationalTf::new(q.shift(ddo), char_poly.clone(), SampleTime::Discrete(t))?,
            u_tf: RationalTf::new(p.shift(ddo), char_poly.clone(), SampleTime::Discrete(t))?,
            characteristic: char_poly,
            order,
            l,
            nu,
            q: q.coeffs().to_vec(),
            p: p.coeffs().to_vec(),
            deadbeat_residual: resid,
        })
    }

    pub fn is_deadbeat(&self) -> bool {
        self.deadbeat_residual < DEADBEAT_TOL
    }

    pub fn dc_gain(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// Response of a proper discrete transfer function to `input`, by its difference equation.
pub fn simulate_tf(tf: &RationalTf, input: &[f64]) -> Result<Vec<f64>> {
    let n = tf.den.degree();
    if tf.num.degree() > n && !tf.num.is_zero() {
        return Err(Error::structural("cannot simulate an improper transfer function"));
    }
    let a = tf.den.coeffs();
    let an = a[n];
    let mut y = vec![0.0; input.len()];
    for k in 0..input.len() {
        let mut acc = 0.0;
        for j in 0..=n {
            // b_j multiplies x(k - n + j)
            if k + j >= n {
                acc += tf.num.coeff(j) * input[k + j - n];
            }
        }
        for i in 0..n {
            if k + i >= n {
                acc -= a[i] * y[k + i - n];
            }
        }
        y[k] = acc / an;
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

/// Plant output and input for a step of amplitude `amplitude`, samples `0..=horizon`.
pub fn step_response(cl: &ClosedLoop, amplitude: f64, horizon: usize) -> Result<StepResponse> {
    if horizon < cl.l {
        return Err(Error::structural(format!(
            "horizon {horizon} is shorter than the response time {}",
            cl.l
        )));
    }
    let input = vec![amplitude; horizon + 1];
    Ok(StepResponse {
        y: simulate_tf(&cl.y_tf, &input)?,
        u: simulate_tf(&cl.u_tf, &input)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Extra leading samples of full error `-A` counted in the L2 norm, for a
    /// reference that starts before the first controller sample.
    pub error_lead_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub amplitude: f64,
    /// Squared L2 norm of the error.
    pub l2_sq: f64,
    pub l2: f64,
    /// Same quantity from simulation; equals `l2_sq` up to round-off on deadbeat loops.
    pub l2_sq_simulated: f64,
    pub closed_form: bool,
    pub overshoot_y: f64,
    pub overshoot_u: f64,
    pub settled_at: usize,
    pub l: usize,
    pub nu: usize,
}

/// Error samples `e(k) = A (sum_{h >= l - k} q_h - 1)` for `k < l`.
pub fn closed_form_error(cl: &ClosedLoop, amplitude: f64) -> Vec<f64> {
    (0..cl.l)
        .map(|k| {
            let partial: f64 = cl.q.iter().skip(cl.l - k).sum();
            amplitude * (partial - 1.0)
        })
        .collect()
}

fn spectral_radius(p: &Polynomial) -> f64 {
    p.roots().iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Samples needed for a stable non-deadbeat response to die out.
fn simulation_horizon(cl: &ClosedLoop) -> Result<usize> {
    if cl.is_deadbeat() {
        return Ok(cl.l + 2);
    }
    let rho = spectral_radius(&cl.characteristic);
    if !(rho < 1.0 - 1e-9) {
        return Err(Error::NotConverged(format!(
            "closed loop is not asymptotically stable (spectral radius {rho:.6})"
        )));
    }
    let n = if rho == 0.0 { 0.0 } else { (1e-17f64).ln() / rho.ln() };
    let h = (n.ceil() as usize).saturating_add(cl.l + 10);
    if h > 1_000_000 {
        return Err(Error::NotConverged("error decays too slowly to truncate".into()));
    }
    Ok(h.max(cl.l + 2))
}

pub fn metrics(cl: &ClosedLoop, amplitude: f64, opts: MetricOptions) -> Result<StepMetrics> {
    let horizon = simulation_horizon(cl)?;
    let resp = step_response(cl, amplitude, horizon)?;
    let lead = opts.error_lead_samples as f64 * amplitude * amplitude;
    let err: Vec<f64> = resp.y.iter().map(|y| y - amplitude).collect();
    let l2_sq_simulated = err.iter().map(|e| e * e).sum::<f64>() + lead;
    let (l2_sq, closed_form) = if cl.is_deadbeat() {
        let e = closed_form_error(cl, amplitude);
        (e.iter().map(|e| e * e).sum::<f64>() + lead, true)
    } else {
        (l2_sq_simulated, false)
    };
    let window = if cl.is_deadbeat() { cl.l + 1 } else { resp.y.len() };
    let overshoot_y = resp.y[..window].iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let overshoot_u = resp.u[..window].iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let peak = resp.y.iter().fold(amplitude.abs(), |m, y| m.max(y.abs()));
    let tol = 1e-9 * peak.max(f64::MIN_POSITIVE);
    let settled_at = err
        .iter()
        .rposition(|e| e.abs() > tol)
        .map_or(0, |k| k + 1);
    Ok(StepMetrics {
        amplitude,
        l2_sq,
        l2: l2_sq.sqrt(),
        l2_sq_simulated,
        closed_form,
        overshoot_y,
        overshoot_u,
        settled_at,
        l: cl.l,
        nu: cl.nu,
    })
}

/// `(O_y, O_u)`: peak magnitudes of plant output and input over the transient.
pub fn overshoot(cl: &ClosedLoop, amplitude: f64) -> Result<(f64, f64)> {
    let m = metrics(cl, amplitude, MetricOptions::default())?;
    Ok((m.overshoot_y, m.overshoot_u))
}

/// Error norm (not squared), with the closed form on deadbeat loops.
pub fn l2_error(cl: &ClosedLoop, amplitude: f64, opts: MetricOptions) -> Result<f64> {
    Ok(metrics(cl, amplitude, opts)?.l2)
}
