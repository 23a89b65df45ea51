//! Small dense least-squares machinery shared by the peak and scan fitters:
//! a Nelder–Mead simplex for derivative-free coarse search and a
//! Levenberg-damped Gauss–Newton refiner with numerically differenced
//! Jacobians. Residual closures may return `None` to mark an infeasible
//! parameter point (e.g. a Mathieu-unstable model); the optimizers treat
//! that as an infinitely bad objective.

use nalgebra::{DMatrix, DVector};

/// Sum of squared residuals, or `None` when infeasible.
fn cost(residuals: &impl Fn(&[f64]) -> Option<DVector<f64>>, x: &[f64]) -> f64 {
    match residuals(x) {
        Some(r) => r.norm_squared(),
        None => f64::INFINITY,
    }
}

/// Nelder–Mead simplex minimization of an arbitrary objective.
/// `steps` sets the initial simplex extent per coordinate.
pub(crate) fn nelder_mead(
    objective: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        objective(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        let f = eval(&v);
        simplex.push((v, f));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals.get() < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && (worst - best).abs() <= 1e-14 * (1.0 + best.abs()) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }
        let reflect: Vec<f64> = (0..n)
            .map(|i| centroid[i] + alpha * (centroid[i] - simplex[n].0[i]))
            .collect();
        let f_reflect = eval(&reflect);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|i| centroid[i] + gamma * (reflect[i] - centroid[i]))
                .collect();
            let f_expand = eval(&expand);
            simplex[n] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if f_reflect < simplex[n - 1].1 {
            simplex[n] = (reflect, f_reflect);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|i| centroid[i] + rho * (simplex[n].0[i] - centroid[i]))
                .collect();
            let f_contract = eval(&contract);
            if f_contract < simplex[n].1 {
                simplex[n] = (contract, f_contract);
            } else {
                // shrink toward the best vertex
                let best_v = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        entry.0[i] = best_v[i] + sigma * (entry.0[i] - best_v[i]);
                    }
                    entry.1 = eval(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    (x, f)
}

/// Central-difference Jacobian of the residual vector; `None` if any
/// perturbed point is infeasible.
pub(crate) fn numeric_jacobian(
    residuals: &impl Fn(&[f64]) -> Option<DVector<f64>>,
    x: &[f64],
    m: usize,
) -> Option<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-3);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let rp = residuals(&xp)?;
        let rm = residuals(&xm)?;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

pub(crate) struct LeastSquaresFit {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Jacobian at the solution, for curvature-based uncertainties.
    pub jacobian: Option<DMatrix<f64>>,
}

/// Levenberg-damped Gauss–Newton on a residual vector.
pub(crate) fn gauss_newton(
    residuals: impl Fn(&[f64]) -> Option<DVector<f64>>,
    x0: &[f64],
    max_iterations: usize,
) -> LeastSquaresFit {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut f = cost(&residuals, &x);
    let mut lambda = 1e-6;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iterations {
        iterations += 1;
        let Some(r) = residuals(&x) else { break };
        let m = r.len();
        let Some(jac) = numeric_jacobian(&residuals, &x, m) else {
            break;
        };
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        let mut stepped = false;
        for _ in 0..25 {
            let mut damped = jtj.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(delta) = damped.clone().cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate: Vec<f64> = (0..n).map(|i| x[i] - delta[i]).collect();
            let f_candidate = cost(&residuals, &candidate);
            if f_candidate < f {
                let step_scale: f64 = (0..n)
                    .map(|i| (delta[i] / (x[i].abs().max(1e-12))).abs())
                    .fold(0.0, f64::max);
                let improvement = (f - f_candidate) / f.max(1e-300);
                x = candidate;
                f = f_candidate;
                lambda = (lambda * 0.3).max(1e-12);
                stepped = true;
                if step_scale < 1e-10 || improvement < 1e-14 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // no descent direction left at any damping: local optimum
            converged = f.is_finite();
            break;
        }
        if converged {
            break;
        }
    }

    let jacobian = residuals(&x).and_then(|r| numeric_jacobian(&residuals, &x, r.len()));
    LeastSquaresFit {
        x,
        objective: f,
        iterations,
        converged,
        jacobian,
    }
}
