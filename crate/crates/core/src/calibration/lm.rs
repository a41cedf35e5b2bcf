//! Levenberg-Marquardt least squares with a forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Minimises `0.5 * |r(p)|^2`. The residual closure returns `false` when
/// `p` is outside the usable region (non-finite output); such trial points
/// are rejected like an increase in cost.
pub fn minimize<F>(mut residuals: F, p0: &[f64], max_iter: usize) -> Option<LmOutcome>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> bool,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = Vec::new();
    if !residuals(&p, &mut r) {
        return None;
    }
    let m = r.len();
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; n];
    let mut r_trial = Vec::with_capacity(m);
    let mut r_step = Vec::with_capacity(m);
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut iterations = 0;

    while iterations < max_iter && cost > 1e-30 {
        iterations += 1;
        for k in 0..n {
            let h = 1.5e-8 * p[k].abs().max(1e-4);
            trial.copy_from_slice(&p);
            trial[k] += h;
            if !residuals(&trial, &mut r_step) {
                trial[k] = p[k] - h;
                if !residuals(&trial, &mut r_step) {
                    return Some(LmOutcome { params: p, cost });
                }
                for row in 0..m {
                    jac[(row, k)] = (r[row] - r_step[row]) / h;
                }
            } else {
                for row in 0..m {
                    jac[(row, k)] = (r_step[row] - r[row]) / h;
                }
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rv;
        if grad.amax() < 1e-300 {
            break;
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&grad));
            for k in 0..n {
                trial[k] = p[k] + delta[k];
            }
            if residuals(&trial, &mut r_trial) {
                let c = cost_of(&r_trial);
                if c < cost {
                    let step = delta.norm();
                    let scale = DVector::from_column_slice(&p).norm() + 1e-12;
                    p.copy_from_slice(&trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    let rel_drop = (cost - c) / cost.max(1e-300);
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if step <= 1e-14 * scale || rel_drop < 1e-15 {
                        return Some(LmOutcome { params: p, cost });
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Some(LmOutcome { params: p, cost })
}
