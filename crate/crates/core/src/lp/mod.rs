//! Least-absolute-deviations linear programs.
//!
//! Each control-grid location and axis yields one LP in the variables
//! `y = [D; t]`: minimise `1^T D` subject to `A1 y <= -r` and `A2 y <= r`
//! with `A1 = [-I, -W]`, `A2 = [-I, W]`. Those are solved by a dense revised
//! simplex ([`solve_lp`]). When `W` is the path matrix of a spanning tree the
//! same optimum is reached much faster on the equivalent network problem
//! ([`network::solve_graph_lad`]).

pub mod network;
mod simplex;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::PathMatrix;
use crate::{Error, Result};

pub use network::{solve_graph_lad, GraphLadSolution, GraphLadSolver};
pub use simplex::{revised_simplex, revised_simplex_with_free, LpStatus, SimplexResult, StandardForm};

/// Default feasibility and optimality tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Iteration cap `50 (K + 2L)`.
pub fn default_max_iters(k: usize, l: usize) -> usize {
    50 * (k + 2 * l)
}

/// LP in inequality form over `y = [D; t]` with `D >= 0` and `t` free.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a1: Vec<Vec<f64>>,
    pub a2: Vec<Vec<f64>>,
    pub rhs1: Vec<f64>,
    pub rhs2: Vec<f64>,
    /// Number of nonnegative leading variables (deviations).
    pub k: usize,
    /// Number of free trailing variables (latents).
    pub l: usize,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.k + self.l
    }

    /// Maximum constraint violation of `y`, including `D >= 0`.
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (rows, rhs) in [(&self.a1, &self.rhs1), (&self.a2, &self.rhs2)] {
            for (row, b) in rows.iter().zip(rhs.iter()) {
                let lhs: f64 = row.iter().zip(y).map(|(a, v)| a * v).sum();
                worst = worst.max(lhs - b);
            }
        }
        for v in &y[..self.k] {
            worst = worst.max(-v);
        }
        worst
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        self.c.iter().zip(y).map(|(c, v)| c * v).sum()
    }
}

/// Builds the LAD program for the active rows of `w` and observations `r`.
pub fn assemble_lad_lp(w: &PathMatrix, r: &[f64]) -> Result<LpProblem> {
    let k = w.num_rows();
    let l = w.num_cols();
    if k == 0 {
        return Err(Error::Validation("empty active observation set".into()));
    }
    if r.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {} active rows",
            r.len(),
            k
        )));
    }
    if let Some(v) = r.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite observation {v}")));
    }
    let mut c = vec![0.0; k + l];
    c[..k].iter_mut().for_each(|v| *v = 1.0);
    let mut a1 = vec![vec![0.0; k + l]; k];
    let mut a2 = vec![vec![0.0; k + l]; k];
    for i in 0..k {
        a1[i][i] = -1.0;
        a2[i][i] = -1.0;
        for &(col, s) in w.row(i) {
            a1[i][k + col] = -f64::from(s);
            a2[i][k + col] = f64::from(s);
        }
    }
    Ok(LpProblem {
        c,
        a1,
        a2,
        rhs1: r.iter().map(|v| -v).collect(),
        rhs2: r.to_vec(),
        k,
        l,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
    /// `max_j |x_j d_j|` over the standard-form variables and reduced costs.
    pub complementarity: f64,
}

impl LpSolution {
    /// The latent part `t` of `y`.
    pub fn latents(&self, k: usize) -> &[f64] {
        &self.y[k..]
    }
}

/// Converts to `A x = b, x >= 0` over `[D, t+, t-, s1, s2]`.
fn to_standard_form(p: &LpProblem) -> StandardForm {
    let (k, l) = (p.k, p.l);
    let m = p.a1.len() + p.a2.len();
    let n = k + 2 * l + m;
    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for (i, (row, rhs)) in
        p.a1.iter()
            .zip(&p.rhs1)
            .chain(p.a2.iter().zip(&p.rhs2))
            .enumerate()
    {
        let mut out = vec![0.0; n];
        out[..k].copy_from_slice(&row[..k]);
        for j in 0..l {
            out[k + j] = row[k + j];
            out[k + l + j] = -row[k + j];
        }
        out[k + 2 * l + i] = 1.0;
        a.push(out);
        b.push(*rhs);
    }
    let mut c = vec![0.0; n];
    c[..k].copy_from_slice(&p.c[..k]);
    for j in 0..l {
        c[k + j] = p.c[k + j];
        c[k + l + j] = -p.c[k + j];
    }
    StandardForm { a, b, c }
}

/// Solves `p` with the revised simplex and Bland's rule.
pub fn solve_lp(p: &LpProblem, tol: f64, max_iters: usize) -> Result<LpSolution> {
    let n = p.num_vars();
    if p.c.len() != n
        || p.a1.iter().chain(&p.a2).any(|r| r.len() != n)
        || p.rhs1.len() != p.a1.len()
        || p.rhs2.len() != p.a2.len()
    {
        return Err(Error::DimensionMismatch("inconsistent LP dimensions".into()));
    }
    let sf = to_standard_form(p);
    let free: Vec<(usize, usize)> = (0..p.l).map(|j| (p.k + j, p.k + p.l + j)).collect();
    let res = revised_simplex_with_free(&sf, &free, tol, max_iters);
    let (k, l) = (p.k, p.l);
    let mut y = vec![0.0; n];
    y[..k].copy_from_slice(&res.x[..k]);
    for j in 0..l {
        y[k + j] = res.x[k + j] - res.x[k + l + j];
    }
    let mut complementarity = 0.0f64;
    for (j, &xj) in res.x.iter().enumerate() {
        let d = sf.c[j] - (0..sf.b.len()).map(|i| res.duals[i] * sf.a[i][j]).sum::<f64>();
        complementarity = complementarity.max((xj * d).abs());
    }
    Ok(LpSolution {
        objective: p.objective(&y),
        y,
        status: res.status,
        iterations: res.iterations,
        complementarity,
    })
}

/// One location of a batched LAD solve.
#[derive(Clone, Debug)]
pub struct LadInstance {
    pub w: PathMatrix,
    pub r: Vec<f64>,
}

/// Solves each instance independently in parallel. Results keep input order
/// and equal the unbatched solves bit for bit.
pub fn solve_lad_batch(instances: &[LadInstance], tol: f64) -> Vec<Result<LpSolution>> {
    instances
        .par_iter()
        .map(|inst| {
            let p = assemble_lad_lp(&inst.w, &inst.r)?;
            let sol = solve_lp(&p, tol, default_max_iters(p.k, p.l))?;
            match sol.status {
                LpStatus::Optimal => Ok(sol),
                s => Err(Error::Lp(format!("solver stopped with status {s:?}"))),
            }
        })
        .collect()
}

/// Plain-text tabular dump of an LP, one constraint per line.
pub fn dump_lp(p: &LpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# lad-lp K={} L={}", p.k, p.l);
    let header: Vec<String> = (0..p.k)
        .map(|i| format!("D{i}"))
        .chain((0..p.l).map(|j| format!("t{j}")))
        .collect();
    let _ = writeln!(out, "row\t{}\trhs", header.join("\t"));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join("\t");
    let _ = writeln!(out, "c\t{}\t-", fmt(&p.c));
    for (i, (row, b)) in p.a1.iter().zip(&p.rhs1).enumerate() {
        let _ = writeln!(out, "A1.{i}\t{}\t{b}", fmt(row));
    }
    for (i, (row, b)) in p.a2.iter().zip(&p.rhs2).enumerate() {
        let _ = writeln!(out, "A2.{i}\t{}\t{b}", fmt(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(k: usize) -> PathMatrix {
        PathMatrix::from_rows(1, vec![vec![(0, 1)]; k])
    }

    fn solve(w: &PathMatrix, r: &[f64]) -> LpSolution {
        let p = assemble_lad_lp(w, r).unwrap();
        solve_lp(&p, DEFAULT_TOL, default_max_iters(p.k, p.l)).unwrap()
    }

    #[test]
    fn structure_matches_definition() {
        let w = PathMatrix::from_rows(2, vec![vec![(0, 1)], vec![(0, 1), (1, -1)]]);
        let p = assemble_lad_lp(&w, &[3.0, 4.0]).unwrap();
        assert_eq!(p.c, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(p.a1[1], vec![0.0, -1.0, -1.0, 1.0]);
        assert_eq!(p.a2[1], vec![0.0, -1.0, 1.0, -1.0]);
        assert_eq!(p.rhs1, vec![-3.0, -4.0]);
        assert_eq!(p.rhs2, vec![3.0, 4.0]);
    }

    #[test]
    fn single_equation() {
        let s = solve(&column(1), &[5.0]);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.latents(1)[0] - 5.0).abs() < 1e-12);
        assert!(s.objective.abs() < 1e-12);
    }

    #[test]
    fn median_of_three() {
        let s = solve(&column(3), &[1.0, 2.0, 100.0]);
        assert!((s.latents(3)[0] - 2.0).abs() < 1e-9);
        assert!((s.objective - 99.0).abs() < 1e-9);
        // 1-D scan over a fine grid never beats the LP
        let best = (0..=10000)
            .map(|i| {
                let t = i as f64 * 0.01;
                (1.0f64 - t).abs() + (2.0f64 - t).abs() + (100.0f64 - t).abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(s.objective <= best + 1e-9);
    }

    #[test]
    fn even_count_returns_vertex() {
        let s = solve(&column(2), &[0.0, 4.0]);
        assert!((s.objective - 4.0).abs() < 1e-9);
        let t = s.latents(2)[0];
        assert!(t.abs() < 1e-9 || (t - 4.0).abs() < 1e-9, "t = {t}");
    }

    #[test]
    fn zero_observations() {
        let w = PathMatrix::from_rows(2, vec![vec![(0, 1)], vec![(1, 1)], vec![(0, 1), (1, 1)]]);
        let s = solve(&w, &[0.0; 3]);
        assert!(s.latents(3).iter().all(|v| v.abs() < 1e-12));
        assert!(s.objective.abs() < 1e-12);
    }

    #[test]
    fn empty_active_set_is_rejected() {
        let w = PathMatrix::from_rows(1, vec![]);
        assert!(assemble_lad_lp(&w, &[]).is_err());
    }

    #[test]
    fn dump_lists_every_row() {
        let p = assemble_lad_lp(&column(2), &[1.0, 2.0]).unwrap();
        let d = dump_lp(&p);
        assert_eq!(d.lines().count(), 2 + 1 + 4);
        assert!(d.contains("A2.1\t0\t-1\t1\t2"));
    }
}
