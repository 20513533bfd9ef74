//! Solver backend: translation of the IR to Clarabel and independent
//! re-verification of the returned point.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, SymmetricEigen};

use super::{Cone, ConicProgram, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal/dual feasibility tolerance handed to the solver.
    pub feasibility: f64,
    /// Absolute and relative duality-gap tolerance handed to the solver.
    pub gap: f64,
    /// Largest scaled cone violation accepted when re-checking a solution.
    pub verify: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feasibility: 1e-7, gap: 1e-7, verify: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest scaled cone violation found by [`verify`].
    pub max_violation: f64,
}

impl SolveReport {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Largest violation over all constraint blocks at `x`, each scaled by
/// `1 + max |row value|` of its block.
pub fn verify(program: &ConicProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for c in program.constraints() {
        let vals: Vec<f64> = c.rows.iter().map(|r| r.eval(x)).collect();
        let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let viol = match c.cone {
            Cone::Zero => vals.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Cone::Nonneg => vals.iter().fold(0.0f64, |m, v| m.max(-v)),
            Cone::Soc => {
                let rest = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (rest - vals[0]).max(0.0)
            }
            Cone::Psd(d) => {
                let mut m = DMatrix::zeros(d, d);
                let mut it = vals.iter();
                for j in 0..d {
                    for i in 0..=j {
                        let v = *it.next().unwrap();
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                let min = SymmetricEigen::new(m).eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                (-min).max(0.0)
            }
        };
        if !viol.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(viol / scale);
    }
    worst
}

/// Solves the program. Never panics on solver failure: problems surface as statuses.
pub fn solve(program: &ConicProgram, tol: &Tolerances) -> SolveReport {
    let n = program.num_vars();
    let failed = |status| SolveReport {
        status,
        x: vec![0.0; n],
        objective: f64::NAN,
        iterations: 0,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        max_violation: f64::INFINITY,
    };
    if program.check().is_err() {
        return failed(SolveStatus::NumericalLimit);
    }
    if program.constraints().is_empty() {
        return if program.objective().is_constant() {
            SolveReport {
                status: SolveStatus::Optimal,
                x: vec![0.0; n],
                objective: program.objective().constant,
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                max_violation: 0.0,
            }
        } else {
            failed(SolveStatus::Unbounded)
        };
    }

    let s2 = std::f64::consts::SQRT_2;
    let mut ri = Vec::new();
    let mut cj = Vec::new();
    let mut vv = Vec::new();
    let mut b = Vec::with_capacity(program.num_rows());
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;
    for c in program.constraints() {
        let k = c.rows.len();
        match c.cone {
            Cone::Zero => cones.push(SupportedConeT::ZeroConeT(k)),
            Cone::Nonneg => cones.push(SupportedConeT::NonnegativeConeT(k)),
            Cone::Soc => cones.push(SupportedConeT::SecondOrderConeT(k)),
            Cone::Psd(d) => cones.push(SupportedConeT::PSDTriangleConeT(d)),
        }
        let mut scales = vec![1.0; k];
        if let Cone::Psd(d) = c.cone {
            let mut t = 0;
            for j in 0..d {
                for i in 0..=j {
                    scales[t] = if i == j { 1.0 } else { s2 };
                    t += 1;
                }
            }
        }
        for (expr, s) in c.rows.iter().zip(scales) {
            b.push(s * expr.constant);
            for &(j, coef) in &expr.terms {
                ri.push(row);
                cj.push(j);
                vv.push(-s * coef);
            }
            row += 1;
        }
    }
    let a = CscMatrix::new_from_triplets(row, n, ri, cj, vv);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    for &(j, c) in &program.objective().terms {
        q[j] += c;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(tol.max_iter)
        .tol_feas(tol.feasibility)
        .tol_gap_abs(tol.gap)
        .tol_gap_rel(tol.gap)
        .max_threads(1)
        .build()
        .expect("static solver settings are valid");
    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(_) => return failed(SolveStatus::NumericalLimit),
    };
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let max_violation = if x.iter().all(|v| v.is_finite()) { verify(program, &x) } else { f64::INFINITY };
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if max_violation <= tol.verify {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalLimit
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalLimit,
    };
    let objective = program.objective().eval(&x);
    SolveReport { status, x, objective, iterations: sol.iterations, primal_residual: sol.r_prim, dual_residual: sol.r_dual, max_violation }
}

#[cfg(test)]
mod tests {
    use super::super::AffExpr;
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn halfline_minimum() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_le(AffExpr::constant(3.0), AffExpr::var(x));
        p.minimize(AffExpr::var(x));
        let r = solve(&p, &Tolerances::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn second_order_cone_minimum() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        p.add_soc(AffExpr::var(t), vec![AffExpr::constant(1.0), AffExpr::constant(2.0)]);
        p.minimize(AffExpr::var(t));
        let r = solve(&p, &Tolerances::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn infeasible_program_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_le(AffExpr::var(x), AffExpr::constant(-1.0));
        p.add_le(AffExpr::zero(), AffExpr::var(x));
        p.minimize(AffExpr::var(x));
        assert_eq!(solve(&p, &Tolerances::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_program_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_le(AffExpr::var(x), AffExpr::constant(1.0));
        p.minimize(AffExpr::var(x));
        assert_eq!(solve(&p, &Tolerances::default()).status, SolveStatus::Unbounded);
    }

    #[test]
    fn min_trace_above_a_psd_matrix_uses_full_triangle_order() {
        // X ⪰ M with M dense and asymmetric in its triangle pattern: the
        // optimum X = M has trace(M), and X must equal M entry by entry.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let m = &g * g.transpose();
        let mut p = ConicProgram::new();
        let xs = p.vector("X", 6);
        let mut mat = vec![vec![AffExpr::zero(); 3]; 3];
        let mut t = 0;
        for j in 0..3 {
            for i in 0..=j {
                let e = AffExpr::var(xs[t]).plus_const(-m[(i, j)]);
                mat[i][j] = e.clone();
                mat[j][i] = e;
                t += 1;
            }
        }
        p.add_psd(&mat);
        p.minimize(AffExpr::var(xs[0]).plus(&AffExpr::var(xs[2])).plus(&AffExpr::var(xs[5])));
        let r = solve(&p, &Tolerances::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - m.trace()).abs() < 1e-6);
        assert!((r.x[3] - m[(0, 2)]).abs() < 1e-4, "{} vs {}", r.x[3], m[(0, 2)]);
    }

    #[test]
    fn solving_is_deterministic() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let x = p.vector("x", 2);
        p.add_soc(AffExpr::var(t), vec![AffExpr::var(x[0]).plus_const(-1.0), AffExpr::var(x[1]).plus_const(2.0)]);
        p.add_le(AffExpr::var(x[0]).plus(&AffExpr::var(x[1])), AffExpr::constant(0.5));
        p.minimize(AffExpr::var(t));
        let a = solve(&p, &Tolerances::default());
        let b = solve(&p, &Tolerances::default());
        assert_eq!(a.x, b.x);
    }
}
