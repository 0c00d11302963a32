//! Per-step CLF-CBF quadratic program and a dense active-set solver.
//!
//! Decision vector is `(u, zeta_1..zeta_p, eta_1..eta_q)`; the cost is
//! `|u - u_nom|^2_W + sum w_zeta zeta^2 + sum w_eta eta^2`. Safety rows are
//! hard, CLF rows are relaxed by their slack.
//!
//! The solver is the Goldfarb-Idnani dual method: start from the
//! unconstrained minimiser and repeatedly add the most violated constraint,
//! dropping active ones whose multiplier would turn negative. The active
//! constraint normals are kept in the Cholesky-whitened space and
//! re-factored by QR every step, which is cheap at these sizes (tens of
//! variables) and keeps the projections well conditioned.

use nalgebra::{Cholesky, DMatrix, DVector, RowDVector};

use crate::barrier::InputBox;
use crate::error::{Error, Result};
use crate::taylor::LinearConstraintRow;

pub const KKT_TOLERANCE: f64 = 1e-6;
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

/// `minimize 1/2 x'Hx + c'x  subject to  A x >= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub rows: DMatrix<f64>,
    pub lower: DVector<f64>,
}

impl DenseQp {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rows * x - &self.lower
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// Component-wise KKT residuals of a candidate primal-dual pair.
///
/// Stationarity is relative to the largest gradient term and
/// complementarity is `|s_i| lambda_i / (1 + lambda_i)`, so rows carrying
/// multipliers of order 1e6 (typical when a CLF error is large) are judged by
/// how tightly they hold rather than by the size of the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_residual(qp: &DenseQp, x: &DVector<f64>, multipliers: &DVector<f64>) -> KktResidual {
    let hx = &qp.hessian * x;
    let at_lambda = qp.rows.transpose() * multipliers;
    let scale = 1.0 + hx.amax().max(qp.linear.amax()).max(at_lambda.amax());
    let grad = hx + &qp.linear - at_lambda;
    let slack = qp.slacks(x);
    KktResidual {
        stationarity: grad.amax() / scale,
        primal: slack.iter().fold(0.0, |m, &s| m.max(-s)),
        dual: multipliers.iter().fold(0.0, |m, &l| m.max(-l)),
        complementarity: slack
            .iter()
            .zip(multipliers.iter())
            .fold(0.0, |m, (&s, &l)| m.max((s * l).abs() / (1.0 + l.abs()))),
    }
}

/// Dense dual active-set solver.
#[derive(Debug, Clone)]
pub struct ActiveSetSolver {
    max_iterations: Option<usize>,
    last_iterations: usize,
}

impl Default for ActiveSetSolver {
    fn default() -> Self {
        Self::new()
    }
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self {
            max_iterations: None,
            last_iterations: 0,
        }
    }

    pub fn with_max_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations: Some(max_iterations),
            last_iterations: 0,
        }
    }

    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    pub fn solve(&mut self, qp: &DenseQp) -> Result<DenseSolution> {
        let n = qp.dim();
        let m = qp.n_constraints();
        if qp.hessian.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "hessian size",
                expected: n,
                got: qp.hessian.nrows(),
            });
        }
        if qp.rows.ncols() != n || qp.lower.len() != m {
            return Err(Error::DimensionMismatch {
                context: "constraint rows",
                expected: n,
                got: qp.rows.ncols(),
            });
        }
        let chol = Cholesky::new(qp.hessian.clone()).ok_or(Error::InvalidParameter {
            name: "hessian",
            reason: "not positive definite".into(),
        })?;
        let l = chol.l();
        let limit = self.max_iterations.unwrap_or(50 + 10 * (n + m));

        // Whitened normals: column i is L^-1 a_i.
        let whitened = l
            .solve_lower_triangular(&qp.rows.transpose())
            .expect("cholesky factor has a nonzero diagonal");
        let row_scale: Vec<f64> = (0..m).map(|i| qp.rows.row(i).amax()).collect();

        let mut x = chol.solve(&(-&qp.linear));
        let mut active: Vec<usize> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let mut iterations = 0usize;

        loop {
            // Most violated inactive constraint; ties go to the lowest index.
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..m {
                if active.contains(&i) {
                    continue;
                }
                let s = qp.rows.row(i).dot(&x.transpose()) - qp.lower[i];
                let tol = 1e-11 * (1.0 + qp.lower[i].abs() + row_scale[i] * x.amax());
                if s < -tol && pick.is_none_or(|(_, worst)| s < worst) {
                    pick = Some((i, s));
                }
            }
            let Some((p, _)) = pick else {
                break;
            };
            let dp = whitened.column(p).into_owned();
            let mut lambda_p = 0.0;

            loop {
                iterations += 1;
                if iterations > limit {
                    self.last_iterations = iterations;
                    return Err(Error::MaxIterations(limit));
                }
                let (proj, dual_dir) = project(&whitened, &active, &dp);
                let z = l
                    .tr_solve_lower_triangular(&proj)
                    .expect("cholesky factor has a nonzero diagonal");
                let curvature = proj.norm_squared();
                let primal_step = curvature > 1e-22 * dp.norm_squared().max(f64::MIN_POSITIVE);

                let rmax = dual_dir.amax();
                let mut partial: Option<(usize, f64)> = None;
                for (j, (&r, &lam)) in dual_dir.iter().zip(lambda.iter()).enumerate() {
                    if r > f64::EPSILON * rmax {
                        let t = lam / r;
                        if partial.is_none_or(|(_, best)| t < best) {
                            partial = Some((j, t));
                        }
                    }
                }

                let s_p = qp.rows.row(p).dot(&x.transpose()) - qp.lower[p];
                let full = if primal_step {
                    Some((-s_p / curvature).max(0.0))
                } else {
                    None
                };

                match (full, partial) {
                    (None, None) => {
                        self.last_iterations = iterations;
                        return Err(Error::Infeasible);
                    }
                    (None, Some((k, t))) => {
                        // Pure dual step: the new normal is in the active span.
                        for (lam, r) in lambda.iter_mut().zip(dual_dir.iter()) {
                            *lam -= t * r;
                        }
                        lambda_p += t;
                        active.remove(k);
                        lambda.remove(k);
                    }
                    (Some(t_full), partial) => {
                        let (t, drop) = match partial {
                            Some((k, t_part)) if t_part < t_full => (t_part, Some(k)),
                            _ => (t_full, None),
                        };
                        x += &z * t;
                        for (lam, r) in lambda.iter_mut().zip(dual_dir.iter()) {
                            *lam -= t * r;
                        }
                        lambda_p += t;
                        match drop {
                            Some(k) => {
                                active.remove(k);
                                lambda.remove(k);
                            }
                            None => {
                                active.push(p);
                                lambda.push(lambda_p);
                                break;
                            }
                        }
                    }
                }
            }
        }

        self.last_iterations = iterations;
        let mut multipliers = DVector::zeros(m);
        for (&i, &lam) in active.iter().zip(lambda.iter()) {
            multipliers[i] = lam.max(0.0);
        }
        Ok(DenseSolution {
            x,
            multipliers,
            active,
            iterations,
        })
    }
}

/// Split a whitened normal into its component orthogonal to the active span
/// and the coordinates of its in-span part.
fn project(whitened: &DMatrix<f64>, active: &[usize], dp: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (dp.clone(), DVector::zeros(0));
    }
    let cols: Vec<_> = active.iter().map(|&i| whitened.column(i)).collect();
    let basis = DMatrix::from_columns(&cols);
    let qr = basis.qr();
    let q = qr.q();
    let r = qr.r();
    let coords = q.transpose() * dp;
    let proj = dp - &q * &coords;
    let dual = r
        .solve_upper_triangular(&coords)
        .unwrap_or_else(|| DVector::from_element(active.len(), f64::NAN));
    (proj, dual)
}

/// `grad_u . u + drift + decay <= zeta_{slack_index}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClfRow {
    pub grad_u: RowDVector<f64>,
    pub drift: f64,
    pub decay: f64,
    pub slack_index: usize,
}

/// A hard safety row, optionally tied to one adaptive gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyRow {
    pub row: LinearConstraintRow,
    pub eta_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParts {
    pub u_nom: DVector<f64>,
    pub weight_u: DMatrix<f64>,
    pub slack_weights: Vec<f64>,
    pub gain_weights: Vec<f64>,
    pub safety_rows: Vec<SafetyRow>,
    pub clf_rows: Vec<ClfRow>,
    pub bounds: InputBox,
}

/// A validated per-step safety filter QP.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyFilterProblem {
    parts: ProblemParts,
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

fn check_weights(name: &'static str, weights: &[f64]) -> Result<()> {
    match weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        Some(index) => Err(Error::NonPositiveWeight {
            name,
            index,
            value: weights[index],
        }),
        None => Ok(()),
    }
}

impl SafetyFilterProblem {
    pub fn assemble(parts: ProblemParts) -> Result<Self> {
        let m = parts.bounds.dim();
        check_len("nominal input", m, parts.u_nom.len())?;
        check_len("rows of W_u", m, parts.weight_u.nrows())?;
        check_len("columns of W_u", m, parts.weight_u.ncols())?;
        check_weights("w_zeta", &parts.slack_weights)?;
        check_weights("w_eta", &parts.gain_weights)?;
        if m > 0 && Cholesky::new(parts.weight_u.clone()).is_none() {
            return Err(Error::NonPositiveWeight {
                name: "W_u",
                index: 0,
                value: parts.weight_u.min(),
            });
        }
        for row in &parts.safety_rows {
            check_len("safety row width", m, row.row.coeff_u.len())?;
            if let Some(i) = row.eta_index {
                if i >= parts.gain_weights.len() {
                    return Err(Error::DimensionMismatch {
                        context: "eta index out of range",
                        expected: parts.gain_weights.len(),
                        got: i,
                    });
                }
            }
        }
        for row in &parts.clf_rows {
            check_len("clf row width", m, row.grad_u.len())?;
            if row.slack_index >= parts.slack_weights.len() {
                return Err(Error::DimensionMismatch {
                    context: "slack index out of range",
                    expected: parts.slack_weights.len(),
                    got: row.slack_index,
                });
            }
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &ProblemParts {
        &self.parts
    }

    pub fn dim_u(&self) -> usize {
        self.parts.bounds.dim()
    }

    pub fn n_slacks(&self) -> usize {
        self.parts.slack_weights.len()
    }

    pub fn n_gains(&self) -> usize {
        self.parts.gain_weights.len()
    }

    pub fn decision_dim(&self) -> usize {
        self.dim_u() + self.n_slacks() + self.n_gains()
    }

    /// Cost value of a decision `(u, zeta, eta)`.
    pub fn cost(&self, u: &DVector<f64>, zetas: &DVector<f64>, etas: &DVector<f64>) -> f64 {
        let p = &self.parts;
        let du = u - &p.u_nom;
        du.dot(&(&p.weight_u * &du))
            + zetas.iter().zip(&p.slack_weights).map(|(z, w)| w * z * z).sum::<f64>()
            + etas.iter().zip(&p.gain_weights).map(|(e, w)| w * e * e).sum::<f64>()
    }

    pub fn to_dense(&self) -> DenseQp {
        let p = &self.parts;
        let (m, ns, ng) = (self.dim_u(), self.n_slacks(), self.n_gains());
        let n = m + ns + ng;
        let zeta0 = m;
        let eta0 = m + ns;

        let mut hessian = DMatrix::zeros(n, n);
        hessian
            .view_mut((0, 0), (m, m))
            .copy_from(&(&p.weight_u + p.weight_u.transpose()));
        for (i, w) in p.slack_weights.iter().enumerate() {
            hessian[(zeta0 + i, zeta0 + i)] = 2.0 * w;
        }
        for (i, w) in p.gain_weights.iter().enumerate() {
            hessian[(eta0 + i, eta0 + i)] = 2.0 * w;
        }
        let mut linear = DVector::zeros(n);
        linear
            .rows_mut(0, m)
            .copy_from(&(-(&p.weight_u + p.weight_u.transpose()) * &p.u_nom));

        let n_rows = p.safety_rows.len() + p.clf_rows.len() + 2 * m + ns + 2 * ng;
        let mut rows = DMatrix::zeros(n_rows, n);
        let mut lower = DVector::zeros(n_rows);
        let mut k = 0;
        for s in &p.safety_rows {
            rows.view_mut((k, 0), (1, m)).copy_from(&s.row.coeff_u);
            if let Some(e) = s.eta_index {
                rows[(k, eta0 + e)] = s.row.coeff_eta;
            }
            lower[k] = s.row.rhs;
            k += 1;
        }
        for c in &p.clf_rows {
            rows.view_mut((k, 0), (1, m)).copy_from(&(-&c.grad_u));
            rows[(k, zeta0 + c.slack_index)] = 1.0;
            lower[k] = c.drift + c.decay;
            k += 1;
        }
        for j in 0..m {
            rows[(k, j)] = 1.0;
            lower[k] = p.bounds.lower()[j];
            rows[(k + 1, j)] = -1.0;
            lower[k + 1] = -p.bounds.upper()[j];
            k += 2;
        }
        for i in 0..ns {
            rows[(k, zeta0 + i)] = 1.0;
            k += 1;
        }
        for i in 0..ng {
            rows[(k, eta0 + i)] = 1.0;
            rows[(k + 1, eta0 + i)] = -1.0;
            lower[k + 1] = -1.0;
            k += 2;
        }
        debug_assert_eq!(k, n_rows);
        DenseQp {
            hessian,
            linear,
            rows,
            lower,
        }
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (m, ns, ng) = (self.dim_u(), self.n_slacks(), self.n_gains());
        let u = self.parts.bounds.clamp(&x.rows(0, m).into_owned());
        let zetas = x.rows(m, ns).map(|z| z.max(0.0));
        let etas = x.rows(m + ns, ng).map(|e| e.clamp(0.0, 1.0));
        (u, zetas, etas)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub zetas: DVector<f64>,
    pub etas: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Solve with a fresh solver instance.
pub fn solve(problem: &SafetyFilterProblem) -> Result<QpSolution> {
    ActiveSetSolver::new().solve_filter(problem)
}

impl ActiveSetSolver {
    pub fn solve_filter(&mut self, problem: &SafetyFilterProblem) -> Result<QpSolution> {
        let dense = problem.to_dense();
        let sol = self.solve(&dense)?;
        let kkt = kkt_residual(&dense, &sol.x, &sol.multipliers).max();
        if kkt > KKT_TOLERANCE {
            log::warn!("QP solved with KKT residual {kkt:e}");
        }
        let (u, zetas, etas) = problem.split(&sol.x);
        Ok(QpSolution {
            u,
            zetas,
            etas,
            kkt_residual: kkt,
            iterations: sol.iterations,
        })
    }
}

/// Input in the box that maximises the smallest safety-row margin.
///
/// Used when the filter QP is infeasible. Adaptive gains take whichever end
/// of `[0, 1]` helps their row. Each row is measured in box-normalised
/// coordinates `u = center + half_width * w` and scaled to a unit normal, so
/// rows of very different magnitude compete on equal terms; the sign of every
/// margin is unchanged. Rows the input cannot influence are ignored.
pub fn fallback_max_safety(problem: &SafetyFilterProblem) -> DVector<f64> {
    let p = problem.parts();
    let m = problem.dim_u();
    let center = (p.bounds.lower() + p.bounds.upper()) * 0.5;
    let half = (p.bounds.upper() - p.bounds.lower()) * 0.5;

    let mut normals: Vec<RowDVector<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    for s in &p.safety_rows {
        let eta = if s.eta_index.is_some() && s.row.coeff_eta > 0.0 {
            1.0
        } else {
            0.0
        };
        let g = s.row.coeff_u.component_mul(&half.transpose());
        let norm = g.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            continue;
        }
        let rhs = s.row.rhs - s.row.coeff_eta * eta - (&s.row.coeff_u * &center)[0];
        normals.push(g / norm);
        offsets.push(rhs / norm);
    }
    if normals.is_empty() {
        return p.bounds.clamp(&p.u_nom);
    }

    // Variables (w, s): maximise s subject to n_i . w - s >= b_i, |w| <= 1.
    let n = m + 1;
    let k = normals.len();
    let eps = 1e-8;
    let mut rows = DMatrix::zeros(k + 2 * m, n);
    let mut lower = DVector::zeros(k + 2 * m);
    for (i, (g, b)) in normals.iter().zip(&offsets).enumerate() {
        rows.view_mut((i, 0), (1, m)).copy_from(g);
        rows[(i, m)] = -1.0;
        lower[i] = *b;
    }
    for j in 0..m {
        rows[(k + 2 * j, j)] = 1.0;
        lower[k + 2 * j] = -1.0;
        rows[(k + 2 * j + 1, j)] = -1.0;
        lower[k + 2 * j + 1] = -1.0;
    }
    let mut linear = DVector::zeros(n);
    linear[m] = -1.0;
    let lp = DenseQp {
        hessian: DMatrix::identity(n, n) * eps,
        linear,
        rows,
        lower,
    };
    match ActiveSetSolver::new().solve(&lp) {
        Ok(sol) => {
            let w = sol.x.rows(0, m).map(|v| v.clamp(-1.0, 1.0));
            p.bounds.clamp(&(center + half.component_mul(&w)))
        }
        Err(err) => {
            log::warn!("max-safety fallback failed ({err}); clamping nominal input");
            p.bounds.clamp(&p.u_nom)
        }
    }
}

/// Smallest margin over all safety rows at `(u, eta)` with adaptive gains at
/// the supplied values.
pub fn min_safety_margin(problem: &SafetyFilterProblem, u: &DVector<f64>, etas: &DVector<f64>) -> f64 {
    problem
        .parts()
        .safety_rows
        .iter()
        .map(|s| s.row.margin(u, s.eta_index.map_or(0.0, |i| etas[i])))
        .fold(f64::INFINITY, f64::min)
}
