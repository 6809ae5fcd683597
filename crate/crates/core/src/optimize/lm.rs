//! Levenberg–Marquardt over an abstract least-squares problem.

use nalgebra::{DMatrix, DVector};
use std::io::{self, Write};

use super::OptimizeError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmSettings {
    pub max_iters: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub rel_cost_tol: f64,
    pub grad_tol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iters: 50,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.1,
            rel_cost_tol: 1e-10,
            grad_tol: 1e-10,
        }
    }
}

/// Consecutive failed step attempts before the solver gives up.
const MAX_FAILED_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    /// Gradient infinity-norm fell below `grad_tol`.
    GradientTolerance,
    /// Relative cost decrease of an accepted step fell below `rel_cost_tol`.
    CostTolerance,
    /// The damped steps stopped decreasing the cost; the solution is at numerical precision.
    NoImprovement,
    MaxIterations,
    /// The damped normal equations could not be solved after repeated damping increases.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Cost at the start followed by the cost after each accepted step.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub status: LmStatus,
    pub trace: Vec<IterationRecord>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        matches!(
            self.status,
            LmStatus::GradientTolerance | LmStatus::CostTolerance | LmStatus::NoImprovement
        )
    }

    pub fn initial_cost(&self) -> f64 {
        self.cost_trace[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace starts with the initial cost")
    }

    /// Debug dump of accepted iterations: `iter,cost,damping,step_norm`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,cost,damping,step_norm")?;
        for r in &self.trace {
            writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.cost, r.damping, r.step_norm)?;
        }
        Ok(())
    }
}

/// A nonlinear least-squares problem `min ½ Σ‖r‖²` over a manifold-valued state.
pub trait LeastSquaresProblem {
    type State: Clone;
    type System;

    fn cost(&self, state: &Self::State) -> f64;

    /// Gauss–Newton normal equations at `state`.
    fn linearize(&self, state: &Self::State) -> Self::System;

    fn gradient_norm(&self, system: &Self::System) -> f64;

    /// Solves `(H + λI) δ = −g`; `None` if the factorization fails.
    fn solve_damped(&self, system: &Self::System, damping: f64) -> Option<DVector<f64>>;

    fn retract(&self, state: &Self::State, step: &DVector<f64>) -> Self::State;
}

/// Dense Gauss–Newton system `H = JᵀJ`, `g = Jᵀr`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSystem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
}

impl DenseSystem {
    pub fn zeros(n: usize) -> Self {
        Self {
            hessian: DMatrix::zeros(n, n),
            gradient: DVector::zeros(n),
        }
    }

    pub fn from_jacobian(jacobian: &DMatrix<f64>, residual: &DVector<f64>) -> Self {
        Self {
            hessian: jacobian.transpose() * jacobian,
            gradient: jacobian.transpose() * residual,
        }
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient.amax()
    }

    pub fn solve_damped(&self, damping: f64) -> Option<DVector<f64>> {
        let mut h = self.hessian.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += damping;
        }
        let chol = h.cholesky()?;
        let step = chol.solve(&(-&self.gradient));
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

pub fn solve_lm<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::State,
    settings: &LmSettings,
) -> Result<(P::State, Solution), OptimizeError> {
    let mut state = initial;
    let mut cost = problem.cost(&state);
    if !cost.is_finite() {
        return Err(OptimizeError::NonFiniteCost);
    }
    let mut damping = settings.initial_damping;
    let mut solution = Solution {
        cost_trace: vec![cost],
        iterations: 0,
        status: LmStatus::MaxIterations,
        trace: Vec::new(),
    };

    'outer: for iter in 0..settings.max_iters {
        solution.iterations = iter + 1;
        if cost == 0.0 {
            solution.status = LmStatus::GradientTolerance;
            break;
        }
        let system = problem.linearize(&state);
        if problem.gradient_norm(&system) < settings.grad_tol {
            solution.status = LmStatus::GradientTolerance;
            break;
        }
        let mut failures = 0;
        loop {
            let last_failure_was_solve;
            match problem.solve_damped(&system, damping) {
                Some(step) => {
                    let candidate = problem.retract(&state, &step);
                    let new_cost = problem.cost(&candidate);
                    if new_cost.is_finite() && new_cost < cost {
                        let rel = (cost - new_cost) / cost;
                        state = candidate;
                        cost = new_cost;
                        solution.cost_trace.push(cost);
                        solution.trace.push(IterationRecord {
                            iter,
                            cost,
                            damping,
                            step_norm: step.norm(),
                        });
                        damping = (damping * settings.damping_down).max(1e-15);
                        if rel < settings.rel_cost_tol {
                            solution.status = LmStatus::CostTolerance;
                            break 'outer;
                        }
                        continue 'outer;
                    }
                    last_failure_was_solve = false;
                }
                None => last_failure_was_solve = true,
            }
            failures += 1;
            damping *= settings.damping_up;
            if failures >= MAX_FAILED_ATTEMPTS {
                solution.status = if last_failure_was_solve {
                    LmStatus::Stalled
                } else {
                    LmStatus::NoImprovement
                };
                break 'outer;
            }
        }
    }
    if solution.status == LmStatus::Stalled {
        return Err(OptimizeError::Stalled(solution));
    }
    Ok((state, solution))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear residuals `r = A x − b`.
    struct Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl LeastSquaresProblem for Linear {
        type State = DVector<f64>;
        type System = DenseSystem;

        fn cost(&self, x: &DVector<f64>) -> f64 {
            0.5 * (&self.a * x - &self.b).norm_squared()
        }

        fn linearize(&self, x: &DVector<f64>) -> DenseSystem {
            DenseSystem::from_jacobian(&self.a, &(&self.a * x - &self.b))
        }

        fn gradient_norm(&self, s: &DenseSystem) -> f64 {
            s.gradient_norm()
        }

        fn solve_damped(&self, s: &DenseSystem, d: f64) -> Option<DVector<f64>> {
            s.solve_damped(d)
        }

        fn retract(&self, x: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
            x + step
        }
    }

    fn toy() -> Linear {
        Linear {
            a: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0, 3.0, -1.0]),
            b: DVector::from_vec(vec![1.0, 2.0, 0.5, -1.0]),
        }
    }

    #[test]
    fn linear_problem_solved_in_one_accepted_step() {
        let p = toy();
        let settings = LmSettings {
            initial_damping: 0.0,
            ..Default::default()
        };
        let (x, sol) = solve_lm(&p, DVector::zeros(2), &settings).unwrap();
        let exact = (p.a.transpose() * &p.a).cholesky().unwrap().solve(&(p.a.transpose() * &p.b));
        assert!((x - exact).amax() < 1e-12);
        assert_eq!(sol.trace.len(), 1);
        assert!(sol.converged());
    }

    #[test]
    fn at_optimum_converges_without_a_step() {
        let p = toy();
        let exact = (p.a.transpose() * &p.a).cholesky().unwrap().solve(&(p.a.transpose() * &p.b));
        let (x, sol) = solve_lm(&p, exact.clone(), &LmSettings::default()).unwrap();
        assert_eq!(x, exact);
        assert!(sol.iterations <= 1);
        assert!(sol.trace.is_empty());
        assert_eq!(sol.status, LmStatus::GradientTolerance);
    }

    #[test]
    fn non_finite_start_rejected() {
        let p = toy();
        let x = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert!(matches!(solve_lm(&p, x, &LmSettings::default()), Err(OptimizeError::NonFiniteCost)));
    }

    #[test]
    fn singular_system_stalls() {
        struct Singular;
        impl LeastSquaresProblem for Singular {
            type State = f64;
            type System = ();
            fn cost(&self, _: &f64) -> f64 {
                1.0
            }
            fn linearize(&self, _: &f64) {}
            fn gradient_norm(&self, _: &()) -> f64 {
                1.0
            }
            fn solve_damped(&self, _: &(), _: f64) -> Option<DVector<f64>> {
                None
            }
            fn retract(&self, x: &f64, _: &DVector<f64>) -> f64 {
                *x
            }
        }
        match solve_lm(&Singular, 0.0, &LmSettings::default()) {
            Err(OptimizeError::Stalled(sol)) => assert_eq!(sol.status, LmStatus::Stalled),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_csv_header() {
        let (_, sol) = solve_lm(&toy(), DVector::zeros(2), &LmSettings::default()).unwrap();
        let mut buf = Vec::new();
        sol.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,cost,damping,step_norm\n"));
        assert_eq!(text.lines().count(), sol.trace.len() + 1);
    }
}
