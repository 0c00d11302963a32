//! Independent oracles shared by the property tests and the acceptance gate.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ttcbf::barrier::{
    BarrierSpec, ClassK, ClassKKind, DerivativeChain, InputBox, LtiSystem,
};
use ttcbf::qp::{kkt_residual, ActiveSetSolver, DenseQp};
use ttcbf::scenarios::corridor::{corridor_barriers, CorridorParams, Unicycle};
use ttcbf::scenarios::sim::integrate_zoh;
use ttcbf::scenarios::spring_mass::{output_row, spring_mass_system, SpringMassParams};
use ttcbf::taylor::{build_ttcbf_row, r_step_margin, worst_case_top, TaylorConfig};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn random_box(rng: &mut StdRng, m: usize) -> InputBox {
    let lower: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..1.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|lo| lo + rng.random_range(0.0..6.0)).collect();
    InputBox::new(DVector::from_vec(lower), DVector::from_vec(upper)).unwrap()
}

/// Largest gap between `worst_case_top` and brute-force minimisation over
/// every vertex of the box.
pub fn box_lp_vertex_gap(cases: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = rng.random_range(1..=4);
        let bounds = random_box(&mut rng, m);
        let coeffs: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-10.0..10.0) })
            .collect();
        let chain = DerivativeChain {
            h: 0.0,
            derivs: vec![],
            top_drift: rng.random_range(-10.0..10.0),
            top_input: RowDVector::from_row_slice(&coeffs),
        };
        let mut best = f64::INFINITY;
        for mask in 0..(1usize << m) {
            let value = (0..m).fold(chain.top_drift, |acc, j| {
                let u = if mask >> j & 1 == 1 {
                    bounds.upper()[j]
                } else {
                    bounds.lower()[j]
                };
                acc + coeffs[j] * u
            });
            best = best.min(value);
        }
        worst = worst.max((worst_case_top(&chain, &bounds) - best).abs());
    }
    worst
}

/// For `r = 1` the `r`-step condition must coincide term by term with the
/// one-step discrete CBF condition, and the Taylor row with its first-order
/// prediction. Returns the largest discrepancy.
pub fn r1_reduction_gap(cases: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let kind = ClassKKind::ALL[rng.random_range(0..3)];
        let k = ClassK::new(kind, rng.random_range(0.0..1.0)).unwrap();
        let h_k = rng.random_range(-1.0..10.0);
        let h_next = rng.random_range(-1.0..10.0);
        let discrete = h_next - h_k + k.eval(h_k);
        worst = worst.max((r_step_margin(h_k, h_next, &k) - discrete).abs());

        let dt = rng.random_range(0.001..0.2);
        let m = rng.random_range(1..=3);
        let chain = DerivativeChain {
            h: h_k,
            derivs: vec![],
            top_drift: rng.random_range(-5.0..5.0),
            top_input: RowDVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0)),
        };
        let u = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let cfg = TaylorConfig::new(dt, 1).unwrap();
        let row = build_ttcbf_row(&cfg, &chain, &k, 0.0);
        let predicted = h_k + dt * chain.top(&u);
        let expected = predicted - h_k + k.eval(h_k);
        worst = worst.max((row.margin(&u, 0.0) - expected).abs());
    }
    worst
}

/// Transition matrix of the augmented system `[x; u]` with `u` held constant.
fn augmented_flow(sys: &LtiSystem, t: f64) -> DMatrix<f64> {
    let n = sys.a().nrows();
    let m = sys.b().ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(sys.a());
    aug.view_mut((0, n), (n, m)).copy_from(sys.b());
    (aug * t).exp()
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

/// Checks the Lagrange-form truncation bound on random spring-mass states.
/// Returns the number of violations and the largest ratio error / bound.
pub fn taylor_truncation_check(cases: usize, seed: u64) -> (usize, f64) {
    let p = SpringMassParams::default();
    let sys = spring_mass_system(&p).unwrap();
    let c = -output_row();
    let r = 6;
    let cfg = TaylorConfig::new(p.dt, r).unwrap();
    let dt_big = cfg.step();
    let mut rows = vec![c.clone()];
    for i in 0..=r {
        let next = &rows[i] * sys.a();
        rows.push(next);
    }
    let grid = 200;
    let full = augmented_flow(&sys, dt_big);
    let step = augmented_flow(&sys, dt_big / grid as f64);
    let mut rng = rng(seed);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..cases {
        let x = DVector::from_fn(6, |i, _| {
            if i < 3 {
                rng.random_range(-1.0..4.0)
            } else {
                rng.random_range(-3.0..3.0)
            }
        });
        let u = DVector::from_element(1, rng.random_range(-p.u_max..p.u_max));
        let h0 = (&c * &x)[0] + p.x3_safe;
        let mut predicted = h0;
        let mut coeff = 1.0;
        for i in 1..=r {
            coeff *= dt_big / i as f64;
            let d = (&rows[i] * &x)[0] + if i == r { (&rows[r - 1] * sys.b() * &u)[0] } else { 0.0 };
            predicted += coeff * d;
        }
        let z0 = stack(&x, &u);
        let exact = (&c * (&full * &z0).rows(0, 6))[0] + p.x3_safe;
        let mut max_next: f64 = 0.0;
        let mut z = z0;
        for j in 0..=grid {
            if j > 0 {
                z = &step * &z;
            }
            let d = (&rows[r + 1] * z.rows(0, 6))[0] + (&rows[r] * sys.b() * &u)[0];
            max_next = max_next.max(d.abs());
        }
        let bound = coeff * dt_big / (r + 1) as f64 * max_next;
        let err = (exact - predicted).abs();
        // Grid sampling of the max and rounding in `exact` get a small allowance.
        if err > bound * (1.0 + 1e-3) + 1e-12 {
            violations += 1;
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(err / bound);
        }
    }
    (violations, worst_ratio)
}

/// Brute-force QP solution: the best KKT point over every active subset.
pub fn enumerate_qp(qp: &DenseQp) -> Option<(DVector<f64>, f64)> {
    let n = qp.dim();
    let m = qp.n_constraints();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0..(1usize << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.linear));
        for (j, &i) in active.iter().enumerate() {
            for c in 0..n {
                kkt[(c, n + j)] = -qp.rows[(i, c)];
                kkt[(n + j, c)] = qp.rows[(i, c)];
            }
            rhs[n + j] = qp.lower[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let dual_ok = (0..k).all(|j| sol[n + j] >= -1e-9);
        let primal_ok = qp.slacks(&x).iter().all(|&s| s >= -1e-9);
        if dual_ok && primal_ok {
            let f = qp.objective(&x);
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((x, f));
            }
        }
    }
    best
}

pub fn random_feasible_qp(rng: &mut StdRng) -> DenseQp {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=6);
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let hessian = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
    let linear = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let anchor = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let rows = DMatrix::from_fn(m, n, |_, _| rng.random_range(-3.0..3.0));
    let lower = &rows * &anchor - DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
    DenseQp {
        hessian,
        linear,
        rows,
        lower,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QpOracleReport {
    pub cases: usize,
    pub max_rel_objective_gap: f64,
    pub max_kkt: f64,
    pub failures: usize,
}

pub fn qp_oracle_check(cases: usize, seed: u64) -> QpOracleReport {
    let mut rng = rng(seed);
    let mut report = QpOracleReport {
        cases,
        ..Default::default()
    };
    let mut solver = ActiveSetSolver::new();
    for _ in 0..cases {
        let qp = random_feasible_qp(&mut rng);
        let Some((_, f_oracle)) = enumerate_qp(&qp) else {
            report.failures += 1;
            continue;
        };
        match solver.solve(&qp) {
            Ok(sol) => {
                let f = qp.objective(&sol.x);
                let gap = (f - f_oracle).abs() / f_oracle.abs().max(1.0);
                report.max_rel_objective_gap = report.max_rel_objective_gap.max(gap);
                report.max_kkt = report.max_kkt.max(kkt_residual(&qp, &sol.x, &sol.multipliers).max());
            }
            Err(_) => report.failures += 1,
        }
    }
    report
}

fn random_unicycle_state(rng: &mut StdRng, p: &CorridorParams) -> DVector<f64> {
    let radius = rng.random_range(p.r_inner + p.r_robot..p.r_outer - p.r_robot);
    let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    DVector::from_vec(vec![
        p.center[0] + radius * phi.cos(),
        p.center[1] + radius * phi.sin(),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.random_range(0.0..12.0),
    ])
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}

/// Largest relative error of the closed-form unicycle chains against
/// central differences of `h` along RK4 flows.
pub fn unicycle_fd_error(cases: usize, seed: u64) -> f64 {
    let p = CorridorParams::default();
    let system = Unicycle::new(p.input_box().unwrap()).unwrap();
    let barriers: Vec<BarrierSpec> = corridor_barriers(&p, ClassK::linear(0.2));
    let delta = 1e-5;
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x = random_unicycle_state(&mut rng, &p);
        let u = DVector::from_vec(vec![rng.random_range(-p.u1_max..p.u1_max), rng.random_range(-p.u2_max..p.u2_max)]);
        let fwd = integrate_zoh(&system, &x, &u, delta, 1);
        let back = integrate_zoh(&system, &x, &u, -delta, 1);
        for b in &barriers {
            let chain = b.provider.chain(&x, 0.0);
            let (hp, hm) = (b.provider.value(&fwd, 0.0), b.provider.value(&back, 0.0));
            let d1 = (hp - hm) / (2.0 * delta);
            // Second derivative from the analytic first one: a second
            // difference of `h` (values near 2e3) drowns in rounding at this step.
            let d2 = (b.provider.chain(&fwd, 0.0).derivs[0] - b.provider.chain(&back, 0.0).derivs[0]) / (2.0 * delta);
            worst = worst.max(rel_err(d1, chain.derivs[0]));
            worst = worst.max(rel_err(d2, chain.top(&u)));
        }
    }
    worst
}

/// Total mechanical energy of the three-mass chain.
pub fn spring_energy(p: &SpringMassParams, x: &DVector<f64>) -> f64 {
    let kinetic: f64 = (0..3).map(|i| 0.5 * p.masses[i] * x[3 + i] * x[3 + i]).sum();
    let potential = 0.5 * p.stiffness * ((x[1] - x[0]).powi(2) + (x[2] - x[1]).powi(2));
    kinetic + potential
}

/// Relative energy drift of the unforced chain over `duration`.
pub fn energy_drift(duration: f64) -> f64 {
    let p = SpringMassParams::default();
    let sys = spring_mass_system(&p).unwrap();
    let u = DVector::zeros(1);
    let mut x = p.x0();
    let e0 = spring_energy(&p, &x);
    let steps = (duration / p.dt).round() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        x = integrate_zoh(&sys, &x, &u, p.dt, 10);
        worst = worst.max((spring_energy(&p, &x) - e0).abs() / e0);
    }
    worst
}
