//! Variance parameters of the Gaussian model and their quasi-Newton fit.

/// Floor added to every fitted variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Gaussian cost as a function of log-variance parameters `phi`, for fixed
/// residual statistics `n_k` (active site count) and `s_k` (sum of squared
/// residuals over sites and axes):
/// `sum_k n_k ln(2 pi var_k) + s_k / (2 var_k)` with
/// `var_k = sum_p a_kp (floor + exp(phi_p))`.
#[derive(Clone, Debug)]
pub struct VarianceObjective {
    pub n: Vec<f64>,
    pub s: Vec<f64>,
    /// Per observation, `(parameter, coefficient)` pairs.
    pub coef: Vec<Vec<(usize, f64)>>,
    pub num_params: usize,
}

pub fn param_value(phi: f64) -> f64 {
    VARIANCE_FLOOR + phi.exp()
}

/// Inverse of [`param_value`]; values at or below the floor map to a large
/// negative exponent.
pub fn param_phi(value: f64) -> f64 {
    let excess = value - VARIANCE_FLOOR;
    if excess > 0.0 {
        excess.ln()
    } else {
        PHI_MIN
    }
}

const PHI_MIN: f64 = -40.0;
const PHI_MAX: f64 = 40.0;

impl VarianceObjective {
    pub fn variances(&self, phi: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = phi.iter().map(|&p| param_value(p)).collect();
        self.coef
            .iter()
            .map(|terms| terms.iter().map(|&(p, a)| a * vals[p]).sum())
            .collect()
    }

    pub fn value(&self, phi: &[f64]) -> f64 {
        let var = self.variances(phi);
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..var.len())
            .map(|k| self.n[k] * (two_pi * var[k]).ln() + self.s[k] / (2.0 * var[k]))
            .sum()
    }

    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let var = self.variances(phi);
        let mut g = vec![0.0; self.num_params];
        for (k, terms) in self.coef.iter().enumerate() {
            let dv = self.n[k] / var[k] - self.s[k] / (2.0 * var[k] * var[k]);
            for &(p, a) in terms {
                g[p] += dv * a * phi[p].exp();
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsOutcome {
    pub phi: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// BFGS with Armijo backtracking. Every accepted step lowers the value, so
/// the result never exceeds the starting value.
pub fn minimise(obj: &VarianceObjective, start: &[f64], max_iters: usize) -> BfgsOutcome {
    let n = start.len();
    let mut x: Vec<f64> = start.iter().map(|v| v.clamp(PHI_MIN, PHI_MAX)).collect();
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm <= 1e-10 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
        }
        let slope = dot(&d, &g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = (0..n)
                .map(|i| (x[i] + alpha * d[i]).clamp(PHI_MIN, PHI_MAX))
                .collect();
            let fnew = obj.value(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * alpha * slope && fnew < f {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no descent along the current direction at machine precision
            converged = true;
            break;
        };
        let gn = obj.gradient(&xn);
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let rel = (f - fnew).abs() / f.abs().max(1.0);
        x = xn;
        f = fnew;
        g = gn;
        if rel < 1e-15 {
            converged = true;
            break;
        }
    }
    BfgsOutcome {
        phi: x,
        value: f,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse-Hessian update `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective() -> VarianceObjective {
        VarianceObjective {
            n: vec![10.0, 10.0, 10.0, 5.0],
            s: vec![40.0, 3.0, 9.0, 2.0],
            coef: vec![
                vec![(0, 1.0)],
                vec![(1, 1.0)],
                vec![(1, 2.0)],
                vec![(0, 1.0), (2, 1.0)],
            ],
            num_params: 3,
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let obj = objective();
        let phi = [0.3, -0.7, 0.1];
        let g = obj.gradient(&phi);
        for p in 0..3 {
            let h = 1e-6;
            let mut a = phi;
            let mut b = phi;
            a[p] += h;
            b[p] -= h;
            let fd = (obj.value(&a) - obj.value(&b)) / (2.0 * h);
            assert!(
                (fd - g[p]).abs() <= 1e-5 * g[p].abs().max(1e-3),
                "{p}: {fd} vs {}",
                g[p]
            );
        }
    }

    #[test]
    fn single_class_optimum_is_mean_square() {
        // n ln(2 pi v) + s / 2v is minimised at v = s / 2n
        let obj = VarianceObjective {
            n: vec![20.0],
            s: vec![50.0],
            coef: vec![vec![(0, 1.0)]],
            num_params: 1,
        };
        let out = minimise(&obj, &[0.0], 200);
        let v = param_value(out.phi[0]);
        assert!((v - 1.25).abs() < 1e-6, "{v}");
    }

    #[test]
    fn minimise_never_increases() {
        let obj = objective();
        let start = [2.0, -3.0, 1.0];
        let out = minimise(&obj, &start, 100);
        assert!(out.value <= obj.value(&start));
    }

    #[test]
    fn phi_round_trip() {
        assert!((param_value(param_phi(1.0)) - 1.0).abs() < 1e-15);
        assert_eq!(param_phi(VARIANCE_FLOOR), PHI_MIN);
    }
}
