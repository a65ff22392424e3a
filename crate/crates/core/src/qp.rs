//! Dense convex quadratic programs
//! `min 1/2 x'Hx + f'x  s.t.  A_eq x = b_eq,  G x <= h`
//! by a primal active-set method on the nullspace of the working constraints.
//!
//! A phase-1 linear program (`min t  s.t.  G x - t <= h, t >= 0`) provides the
//! starting point and, when its optimum is positive, an infeasibility
//! certificate. Ties are broken by lowest constraint index, so results are
//! deterministic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl QpProblem {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        QpProblem {
            hessian,
            linear,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Stationarity residual, relative to the gradient scale.
    pub kkt_residual: f64,
    /// Indices of inequality constraints active at the solution.
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
}

struct Normalized {
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    /// original index and row norm of each kept inequality row
    rows: Vec<(usize, f64)>,
}

fn normalize(p: &QpProblem) -> Result<Normalized> {
    let n = p.dim();
    let mut eq_rows = Vec::new();
    for i in 0..p.a_eq.nrows() {
        let nrm = p.a_eq.row(i).norm();
        if nrm == 0.0 {
            if p.b_eq[i].abs() > FEAS_TOL {
                return Err(Error::infeasible("qp", format!("equality {i} reads 0 = {}", p.b_eq[i])));
            }
            continue;
        }
        eq_rows.push((i, nrm));
    }
    let mut rows = Vec::new();
    for i in 0..p.g.nrows() {
        let nrm = p.g.row(i).norm();
        if nrm == 0.0 {
            if p.h[i] < -FEAS_TOL {
                return Err(Error::infeasible("qp", format!("inequality {i} reads 0 <= {}", p.h[i])));
            }
            continue;
        }
        rows.push((i, nrm));
    }
    let a_eq = DMatrix::from_fn(eq_rows.len(), n, |r, c| p.a_eq[(eq_rows[r].0, c)] / eq_rows[r].1);
    let b_eq = DVector::from_fn(eq_rows.len(), |r, _| p.b_eq[eq_rows[r].0] / eq_rows[r].1);
    let g = DMatrix::from_fn(rows.len(), n, |r, c| p.g[(rows[r].0, c)] / rows[r].1);
    let h = DVector::from_fn(rows.len(), |r, _| p.h[rows[r].0] / rows[r].1);
    Ok(Normalized { a_eq, b_eq, g, h, rows })
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    svd.solve(b, RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Orthonormal basis of the nullspace of `a` (columns).
fn nullspace(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let cols: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= RANK_TOL * smax.max(1.0))
        .collect();
    DMatrix::from_fn(n, cols.len(), |r, c| vt[(cols[c], r)])
}

fn working_matrix(a_eq: &DMatrix<f64>, g: &DMatrix<f64>, w: &[usize]) -> DMatrix<f64> {
    let n = a_eq.ncols();
    let k = a_eq.nrows();
    DMatrix::from_fn(k + w.len(), n, |r, c| if r < k { a_eq[(r, c)] } else { g[(w[r - k], c)] })
}

struct ActiveSetResult {
    x: DVector<f64>,
    working: Vec<usize>,
    lambda: DVector<f64>,
    mu: DVector<f64>,
    iterations: usize,
}

/// Primal active-set iterations from a feasible `x`.
fn active_set(
    hess: &DMatrix<f64>,
    lin: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    mut x: DVector<f64>,
) -> Result<ActiveSetResult> {
    let n = x.len();
    let m = g.nrows();
    let max_iter = 50 * (n + m) + 200;
    let mut working: Vec<usize> = Vec::new();
    let hscale = hess.amax().max(1.0);
    for it in 0..max_iter {
        let grad = hess * &x + lin;
        let aw = working_matrix(a_eq, g, &working);
        let z = nullspace(&aw, n);
        let mut step: Option<(DVector<f64>, bool)> = None;
        if z.ncols() > 0 {
            let hz = z.transpose() * hess * &z;
            let hz = (&hz + hz.transpose()) * 0.5;
            let eig = SymmetricEigen::new(hz);
            let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let ltol = 1e-10 * lmax.max(hscale);
            if eig.eigenvalues.iter().any(|&l| l < -ltol) {
                return Err(Error::structural("quadratic objective is not positive semidefinite"));
            }
            let gz = z.transpose() * &grad;
            let mut ray = DVector::zeros(z.ncols());
            let mut newton = DVector::zeros(z.ncols());
            for (i, &l) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(i);
                let comp = v.dot(&gz);
                if l <= ltol {
                    ray += v * comp;
                } else {
                    newton += v * (comp / l);
                }
            }
            let gtol = 1e-11 * (1.0 + grad.amax());
            if ray.amax() > gtol {
                step = Some((-(&z * ray), true));
            } else {
                let p = -(&z * newton);
                if p.amax() > 1e-13 * (1.0 + x.amax()) {
                    step = Some((p, false));
                }
            }
        }

        match step {
            Some((p, is_ray)) => {
                let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
                let mut block = None;
                let pn = p.amax();
                for i in 0..m {
                    if working.contains(&i) {
                        continue;
                    }
                    let gp = g.row(i).dot(&p.transpose());
                    if gp > 1e-12 * pn {
                        let slack = (h[i] - g.row(i).dot(&x.transpose())).max(0.0);
                        let a = slack / gp;
                        if a < alpha {
                            alpha = a;
                            block = Some(i);
                        }
                    }
                }
                if alpha.is_infinite() {
                    return Err(Error::Unbounded(
                        "objective decreases without bound along a feasible ray".into(),
                    ));
                }
                x += &p * alpha;
                if let Some(i) = block {
                    working.push(i);
                }
            }
            None => {
                // multipliers from  grad + A_eq' mu + G_W' lambda = 0
                let sol = lstsq(&aw.transpose(), &(-&grad));
                let k = a_eq.nrows();
                let lambda = sol.rows(k, working.len()).into_owned();
                let ltol = 1e-9 * (1.0 + grad.amax());
                let mut worst: Option<(usize, f64)> = None;
                for (j, &l) in lambda.iter().enumerate() {
                    if l < -ltol && worst.is_none_or(|(_, w)| l < w) {
                        worst = Some((j, l));
                    }
                }
                match worst {
                    Some((j, _)) => {
                        working.remove(j);
                    }
                    None => {
                        return Ok(ActiveSetResult {
                            x,
                            working,
                            lambda,
                            mu: sol.rows(0, k).into_owned(),
                            iterations: it + 1,
                        });
                    }
                }
            }
        }
    }
    Err(Error::NotConverged(format!("active set did not settle in {max_iter} iterations")))
}

/// Find a point satisfying the constraints, or certify that none exists.
fn phase_one(nz: &Normalized, n: usize) -> Result<(DVector<f64>, usize)> {
    let x0 = lstsq(&nz.a_eq, &nz.b_eq);
    if nz.a_eq.nrows() > 0 {
        let r = (&nz.a_eq * &x0 - &nz.b_eq).amax();
        if r > FEAS_TOL * (1.0 + nz.b_eq.amax()) {
            return Err(Error::infeasible(
                "qp",
                format!("equality constraints are inconsistent (least-squares residual {r:.3e})"),
            ));
        }
    }
    let m = nz.g.nrows();
    if m == 0 {
        return Ok((x0, 0));
    }
    let viol = (&nz.g * &x0 - &nz.h).max().max(0.0);
    if viol <= FEAS_TOL * (1.0 + nz.h.amax()) {
        return Ok((x0, 0));
    }
    // variables (x, t)
    let g1 = DMatrix::from_fn(m + 1, n + 1, |r, c| match (r < m, c < n) {
        (true, true) => nz.g[(r, c)],
        (true, false) => -1.0,
        (false, true) => 0.0,
        (false, false) => -1.0,
    });
    let h1 = DVector::from_fn(m + 1, |r, _| if r < m { nz.h[r] } else { 0.0 });
    let a1 = DMatrix::from_fn(nz.a_eq.nrows(), n + 1, |r, c| if c < n { nz.a_eq[(r, c)] } else { 0.0 });
    let mut lin = DVector::zeros(n + 1);
    lin[n] = 1.0;
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&x0);
    start[n] = viol;
    let res = active_set(&DMatrix::zeros(n + 1, n + 1), &lin, &a1, &g1, &h1, start)?;
    let t = res.x[n];
    if t > FEAS_TOL * (1.0 + nz.h.amax()) {
        let mut culprits: Vec<usize> = res
            .working
            .iter()
            .filter(|&&i| i < m)
            .map(|&i| nz.rows[i].0)
            .collect();
        culprits.sort_unstable();
        return Err(Error::infeasible(
            "qp",
            format!(
                "constraints cannot all hold: least achievable normalized violation {t:.6e}, jointly binding inequalities {culprits:?}"
            ),
        ));
    }
    Ok((res.x.rows(0, n).into_owned(), res.iterations))
}

pub fn solve(p: &QpProblem) -> Result<QpSolution> {
    let n = p.dim();
    if p.hessian.nrows() != n
        || p.hessian.ncols() != n
        || p.a_eq.ncols() != n
        || p.g.ncols() != n
        || p.a_eq.nrows() != p.b_eq.len()
        || p.g.nrows() != p.h.len()
    {
        return Err(Error::structural("inconsistent QP dimensions"));
    }
    let hess = (&p.hessian + p.hessian.transpose()) * 0.5;
    let nz = normalize(p)?;
    let (x0, it1) = phase_one(&nz, n)?;
    let res = active_set(&hess, &p.linear, &nz.a_eq, &nz.g, &nz.h, x0)?;

    let grad = &hess * &res.x + &p.linear;
    let mut stationarity = grad.clone();
    if nz.a_eq.nrows() > 0 {
        stationarity += nz.a_eq.transpose() * &res.mu;
    }
    for (j, &i) in res.working.iter().enumerate() {
        stationarity += nz.g.row(i).transpose() * res.lambda[j];
    }
    let scale = 1.0f64.max(p.linear.amax()).max((&hess * &res.x).amax());
    let kkt = stationarity.amax() / scale;

    let mut multipliers = vec![0.0; p.g.nrows()];
    let mut active = Vec::new();
    for (j, &i) in res.working.iter().enumerate() {
        let (orig, nrm) = nz.rows[i];
        multipliers[orig] = res.lambda[j] / nrm;
        active.push(orig);
    }
    active.sort_unstable();
    Ok(QpSolution {
        value: p.objective(&res.x),
        x: res.x.iter().copied().collect(),
        iterations: it1 + res.iterations,
        kkt_residual: kkt,
        active,
        multipliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_bound() {
        // min x^2 s.t. x >= 1
        let p = QpProblem::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1))
            .with_inequalities(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, -1.0));
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.multipliers[0] - 2.0).abs() < 1e-9);
        assert!(s.kkt_residual < 1e-8);
    }

    #[test]
    fn equality_constrained_matches_kkt_system() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0]);
        let s = solve(&QpProblem::new(h.clone(), f.clone()).with_equalities(a.clone(), b.clone())).unwrap();
        let mut k = DMatrix::zeros(4, 4);
        k.view_mut((0, 0), (3, 3)).copy_from(&h);
        k.view_mut((0, 3), (3, 1)).copy_from(&a.transpose());
        k.view_mut((3, 0), (1, 3)).copy_from(&a);
        let rhs = DVector::from_vec(vec![-f[0], -f[1], -f[2], b[0]]);
        let sol = k.lu().solve(&rhs).unwrap();
        for i in 0..3 {
            assert!((s.x[i] - sol[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn detects_infeasibility() {
        // x <= 0 and x >= 1
        let p = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1)).with_inequalities(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        );
        match solve(&p) {
            Err(Error::Infeasible { detail, .. }) => assert!(detail.contains("[0, 1]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_unbounded_linear_objective() {
        let p = QpProblem::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 0.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), DVector::from_vec(vec![1.0]));
        assert!(matches!(solve(&p), Err(Error::Unbounded(_))));
    }

    #[test]
    fn linear_program_vertex() {
        // min -x - y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let h = DVector::from_vec(vec![4.0, 6.0, 0.0, 0.0]);
        let p = QpProblem::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![-1.0, -1.0])).with_inequalities(g, h);
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 1.6).abs() < 1e-10 && (s.x[1] - 1.2).abs() < 1e-10);
    }

    #[test]
    fn semidefinite_with_flat_directions() {
        // objective depends on x0 + x1 only; x2 is free but bounded
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let f = DVector::from_vec(vec![-2.0, -2.0, 0.0]);
        let g = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, -1.0]);
        let p = QpProblem::new(h, f).with_inequalities(g, DVector::from_vec(vec![1.0, 1.0]));
        let s = solve(&p).unwrap();
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-10);
        assert!((s.value + 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_indefinite_objective() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let p = QpProblem::new(h, DVector::zeros(2));
        assert!(matches!(solve(&p), Err(Error::Structural(_))));
    }

    /// Exhaustive oracle: try every subset of inequalities as the active set.
    fn enumerate_active_sets(h: &DMatrix<f64>, f: &DVector<f64>, g: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
        let n = f.len();
        let m = g.nrows();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if act.len() > n {
                continue;
            }
            let k = act.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(h);
            let mut rhs = DVector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-f));
            for (j, &i) in act.iter().enumerate() {
                for c in 0..n {
                    kkt[(n + j, c)] = g[(i, c)];
                    kkt[(c, n + j)] = g[(i, c)];
                }
                rhs[n + j] = b[i];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let x = sol.rows(0, n).into_owned();
            if (g * &x - b).max() > 1e-9 {
                continue;
            }
            let v = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
            if best.is_none_or(|bv| v < bv) {
                best = Some(v);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_active_set_enumeration(
            l in prop::collection::vec(-2.0..2.0f64, 4),
            f in prop::collection::vec(-3.0..3.0f64, 2),
            g in prop::collection::vec(-2.0..2.0f64, 10),
            b in prop::collection::vec(0.1..3.0f64, 5),
        ) {
            let lm = DMatrix::from_row_slice(2, 2, &l);
            let h = &lm * lm.transpose() + DMatrix::identity(2, 2) * 0.1;
            let f = DVector::from_vec(f);
            let g = DMatrix::from_row_slice(5, 2, &g);
            let b = DVector::from_vec(b);
            let s = solve(&QpProblem::new(h.clone(), f.clone()).with_inequalities(g.clone(), b.clone())).unwrap();
            let oracle = enumerate_active_sets(&h, &f, &g, &b).unwrap();
            prop_assert!((s.value - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()));
            prop_assert!(s.kkt_residual < 1e-8);
        }

        #[test]
        fn infeasible_start_reaches_feasible_optimum(
            c in prop::collection::vec(-5.0..5.0f64, 3),
            lo in 1.0..4.0f64,
        ) {
            // min |x - c|^2 s.t. sum x >= lo, x >= 0 (phase one from the origin)
            let g = DMatrix::from_row_slice(4, 3, &[-1.0, -1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]);
            let h = DVector::from_vec(vec![-lo, 0.0, 0.0, 0.0]);
            let p = QpProblem::new(DMatrix::identity(3, 3) * 2.0, DVector::from_vec(c.iter().map(|v| -2.0 * v).collect()))
                .with_inequalities(g.clone(), h.clone());
            let s = solve(&p).unwrap();
            let x = DVector::from_vec(s.x.clone());
            prop_assert!((&g * &x - &h).max() <= 1e-9);
            prop_assert!(s.kkt_residual < 1e-8);
        }
    }
}
