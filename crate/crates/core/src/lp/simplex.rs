//! Dense two-phase revised simplex with Bland's anti-cycling rule.

/// `min c^T x` subject to `A x = b`, `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardForm {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row duals `pi` with `c_j - pi^T A_j >= 0` at optimality.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

struct Tableau<'a> {
    a: &'a [Vec<f64>],
    m: usize,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    b: &'a [f64],
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.a[i][j]).collect()
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        self.binv
            .iter()
            .map(|row| row.iter().zip(col).map(|(x, y)| x * y).sum())
            .collect()
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let mut pi = vec![0.0; self.m];
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost(bi);
            if cb != 0.0 {
                for (p, v) in pi.iter_mut().zip(&self.binv[i]) {
                    *p += cb * v;
                }
            }
        }
        pi
    }

    fn pivot(&mut self, row: usize, entering: usize, u: &[f64]) {
        let piv = u[row];
        let prow: Vec<f64> = self.binv[row].iter().map(|v| v / piv).collect();
        let xr = self.xb[row] / piv;
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = u[i];
            if f != 0.0 {
                for (v, p) in self.binv[i].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                self.xb[i] -= f * xr;
            }
        }
        self.binv[row] = prow;
        self.xb[row] = xr;
        self.basis[row] = entering;
    }

    /// Recomputes `B^-1` and `x_B` from scratch (Gauss-Jordan, partial pivoting).
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut aug: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row: Vec<f64> = self.basis.iter().map(|&j| self.a[i][j]).collect();
                row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for col in 0..m {
            let p = (col..m)
                .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
                .unwrap();
            if aug[p][col].abs() < 1e-14 {
                return false;
            }
            aug.swap(col, p);
            let d = aug[col][col];
            aug[col].iter_mut().for_each(|v| *v /= d);
            for r in 0..m {
                if r != col {
                    let f = aug[r][col];
                    if f != 0.0 {
                        let pivot_row = aug[col].clone();
                        for (v, pv) in aug[r].iter_mut().zip(&pivot_row) {
                            *v -= f * pv;
                        }
                    }
                }
            }
        }
        self.binv = aug.into_iter().map(|row| row[m..].to_vec()).collect();
        self.xb = self.ftran(self.b);
        true
    }
}

const REFACTOR_EVERY: usize = 64;

/// Runs simplex iterations with Bland's rule until optimal, unbounded or
/// the iteration budget is exhausted. `allowed(j)` filters entering columns.
fn iterate(
    t: &mut Tableau,
    n: usize,
    cost: &dyn Fn(usize) -> f64,
    allowed: &dyn Fn(usize) -> bool,
    tol: f64,
    budget: &mut usize,
    iterations: &mut usize,
) -> LpStatus {
    let mut in_basis = vec![false; n];
    for &j in &t.basis {
        in_basis[j] = true;
    }
    loop {
        let pi = t.duals(cost);
        let entering = (0..n).find(|&j| {
            if in_basis[j] || !allowed(j) {
                return false;
            }
            let d = cost(j) - (0..t.m).map(|i| pi[i] * t.a[i][j]).sum::<f64>();
            d < -tol
        });
        let Some(q) = entering else {
            return LpStatus::Optimal;
        };
        if *budget == 0 {
            return LpStatus::IterationLimit;
        }
        *budget -= 1;
        *iterations += 1;
        let u = t.ftran(&t.column(q));
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.m {
            if u[i] > tol {
                let ratio = t.xb[i].max(0.0) / u[i];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - tol || (ratio <= best + tol && t.basis[i] < t.basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return LpStatus::Unbounded;
        };
        in_basis[t.basis[row]] = false;
        in_basis[q] = true;
        t.pivot(row, q, &u);
        if iterations.is_multiple_of(REFACTOR_EVERY) {
            t.refactor();
        }
    }
}

/// Solves a standard-form LP. `tol` is the feasibility/optimality tolerance,
/// `max_iters` the total pivot budget over both phases.
pub fn revised_simplex(sf: &StandardForm, tol: f64, max_iters: usize) -> SimplexResult {
    revised_simplex_with_free(sf, &[], tol, max_iters)
}

/// As [`revised_simplex`], where each `(plus, minus)` pair in `free` splits
/// one free variable. At the optimum every such variable is pivoted into
/// the basis when its column allows it, so the returned point is a vertex
/// in the original free variables. A basic `plus` column may then hold a
/// negative value.
pub fn revised_simplex_with_free(
    sf: &StandardForm,
    free: &[(usize, usize)],
    tol: f64,
    max_iters: usize,
) -> SimplexResult {
    let m = sf.b.len();
    let n = sf.c.len();
    // flip rows so that b >= 0
    let mut a: Vec<Vec<f64>> = sf.a.clone();
    let mut b = sf.b.clone();
    let mut flipped = vec![false; m];
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            a[i].iter_mut().for_each(|v| *v = -*v);
            flipped[i] = true;
        }
    }
    // initial basis: unit columns where available, artificials elsewhere
    let mut basis = vec![usize::MAX; m];
    for j in 0..n {
        let mut hit = None;
        let mut unit = true;
        for i in 0..m {
            let v = a[i][j];
            if v == 0.0 {
                continue;
            }
            if v == 1.0 && hit.is_none() {
                hit = Some(i);
            } else {
                unit = false;
                break;
            }
        }
        if let (true, Some(i)) = (unit, hit) {
            if basis[i] == usize::MAX {
                basis[i] = j;
            }
        }
    }
    let mut n_total = n;
    for i in 0..m {
        if basis[i] == usize::MAX {
            for (r, row) in a.iter_mut().enumerate() {
                row.push(if r == i { 1.0 } else { 0.0 });
            }
            basis[i] = n_total;
            n_total += 1;
        } else {
            // empty column keeps artificial indices aligned with rows
            for row in a.iter_mut() {
                row.push(0.0);
            }
            n_total += 1;
        }
    }
    let is_artificial = |j: usize| j >= n;
    let real_artificial: Vec<bool> = (0..n_total)
        .map(|j| j >= n && (0..m).any(|i| a[i][j] != 0.0))
        .collect();

    let binv: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut t = Tableau {
        a: &a,
        m,
        basis,
        binv,
        xb: b.clone(),
        b: &b,
    };
    let mut budget = max_iters;
    let mut iterations = 0;

    let needs_phase1 = t.basis.iter().any(|&j| is_artificial(j));
    if needs_phase1 {
        let phase1_cost = |j: usize| if real_artificial[j] { 1.0 } else { 0.0 };
        let status = iterate(
            &mut t,
            n_total,
            &phase1_cost,
            &|j| !is_artificial(j) || real_artificial[j],
            tol,
            &mut budget,
            &mut iterations,
        );
        if status == LpStatus::IterationLimit {
            return finish(
                &t,
                n,
                &flipped,
                LpStatus::IterationLimit,
                iterations,
                &|j| sf_cost(sf, j),
                &[],
            );
        }
        let infeas: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(&j, _)| is_artificial(j))
            .map(|(_, &v)| v)
            .sum();
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > tol * scale * m as f64 {
            return finish(
                &t,
                n,
                &flipped,
                LpStatus::Infeasible,
                iterations,
                &|j| sf_cost(sf, j),
                &[],
            );
        }
        // drive zero-level artificials out of the basis where possible
        for row in 0..m {
            if !is_artificial(t.basis[row]) {
                continue;
            }
            let in_basis: Vec<bool> = {
                let mut v = vec![false; n_total];
                t.basis.iter().for_each(|&j| v[j] = true);
                v
            };
            let candidate = (0..n).find(|&j| {
                !in_basis[j] && {
                    let ej: f64 = (0..m).map(|k| t.binv[row][k] * a[k][j]).sum();
                    ej.abs() > 1e-9
                }
            });
            if let Some(j) = candidate {
                let u = t.ftran(&t.column(j));
                t.pivot(row, j, &u);
            }
        }
    }
    let cost = |j: usize| sf_cost(sf, j);
    let status = iterate(
        &mut t,
        n_total,
        &cost,
        &|j| !is_artificial(j),
        tol,
        &mut budget,
        &mut iterations,
    );
    let mut is_free = vec![false; n_total];
    for &(plus, minus) in free {
        is_free[plus] = true;
        is_free[minus] = true;
    }
    if status == LpStatus::Optimal {
        for &(plus, minus) in free {
            if t.basis.contains(&plus) || t.basis.contains(&minus) {
                continue;
            }
            // zero reduced cost, so either direction keeps the objective
            for j in [plus, minus] {
                let u = t.ftran(&t.column(j));
                // basic free columns may change sign, so they never block
                let row = (0..m)
                    .filter(|&i| u[i] > tol && !is_free[t.basis[i]])
                    .min_by(|&x, &y| {
                        let (rx, ry) = (t.xb[x].max(0.0) / u[x], t.xb[y].max(0.0) / u[y]);
                        rx.total_cmp(&ry).then(t.basis[x].cmp(&t.basis[y]))
                    });
                if let Some(row) = row {
                    t.pivot(row, j, &u);
                    iterations += 1;
                    break;
                }
            }
        }
    }
    t.refactor();
    finish(&t, n, &flipped, status, iterations, &cost, &is_free)
}

fn sf_cost(sf: &StandardForm, j: usize) -> f64 {
    if j < sf.c.len() {
        sf.c[j]
    } else {
        0.0
    }
}

fn finish(
    t: &Tableau,
    n: usize,
    flipped: &[bool],
    status: LpStatus,
    iterations: usize,
    cost: &dyn Fn(usize) -> f64,
    is_free: &[bool],
) -> SimplexResult {
    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = if is_free.get(j) == Some(&true) {
                t.xb[i]
            } else {
                t.xb[i].max(0.0)
            };
        }
    }
    let mut duals = t.duals(cost);
    for (d, &f) in duals.iter_mut().zip(flipped) {
        if f {
            *d = -*d;
        }
    }
    SimplexResult {
        status,
        x,
        duals,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let sf = StandardForm {
            a: vec![
                vec![1.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0, 1.0, 0.0],
                vec![3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            b: vec![4.0, 12.0, 18.0],
            c: vec![-3.0, -5.0, 0.0, 0.0, 0.0],
        };
        let r = revised_simplex(&sf, 1e-9, 100);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y s.t. x + y >= 2 (as x + y - s = 2), x - y = 0
        let sf = StandardForm {
            a: vec![vec![1.0, 1.0, -1.0], vec![1.0, -1.0, 0.0]],
            b: vec![2.0, 0.0],
            c: vec![1.0, 1.0, 0.0],
        };
        let r = revised_simplex(&sf, 1e-9, 100);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let sf = StandardForm {
            a: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            b: vec![1.0, 2.0],
            c: vec![0.0, 0.0],
        };
        assert_eq!(revised_simplex(&sf, 1e-9, 100).status, LpStatus::Infeasible);
        let sf = StandardForm {
            a: vec![vec![1.0, -1.0]],
            b: vec![1.0],
            c: vec![0.0, -1.0],
        };
        assert_eq!(revised_simplex(&sf, 1e-9, 100).status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example; Bland's rule must reach -5/4
        let sf = StandardForm {
            a: vec![
                vec![0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0],
                vec![0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            b: vec![0.0, 0.0, 1.0],
            c: vec![-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0],
        };
        let r = revised_simplex(&sf, 1e-12, 1000);
        assert_eq!(r.status, LpStatus::Optimal);
        let obj: f64 = r.x.iter().zip(&sf.c).map(|(x, c)| x * c).sum();
        assert!((obj + 1.25).abs() < 1e-12, "objective {obj}");
    }

    #[test]
    fn iteration_limit_is_reported() {
        let sf = StandardForm {
            a: vec![
                vec![1.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0, 1.0, 0.0],
                vec![3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            b: vec![4.0, 12.0, 18.0],
            c: vec![-3.0, -5.0, 0.0, 0.0, 0.0],
        };
        assert_eq!(revised_simplex(&sf, 1e-9, 1).status, LpStatus::IterationLimit);
    }
}
