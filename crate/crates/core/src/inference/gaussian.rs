//! Gaussian likelihood: weighted least squares per site alternating with a
//! variance fit.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::variance::{self, param_phi, param_value, VarianceObjective};
use super::{
    assemble_fields, count_components, residual_statistics, InferenceOptions, InferenceProblem,
    LatentSolution, LikelihoodParams, Model, SiteStatus, VarianceModel,
};
use crate::fields::SvfField;
use crate::graph::RowSet;
use crate::{Error, Result};

const BFGS_MAX_ITERS: usize = 200;

struct Factor {
    chol: Cholesky<f64, Dyn>,
    rank_deficient: bool,
}

/// Factorises `W_A^T diag(w) W_A` for the active rows `rows`.
fn factor(
    problem: &InferenceProblem,
    arcs: &[(usize, usize)],
    rows: &RowSet,
    weights: &[f64],
    ridge: f64,
) -> Result<Factor> {
    let l = problem.graph.tree().len();
    let path = problem.graph.path();
    let mut n = DMatrix::<f64>::zeros(l, l);
    for k in rows.iter() {
        let row = path.row(k);
        for &(a, sa) in row {
            for &(b, sb) in row {
                n[(a, b)] += weights[k] * f64::from(sa) * f64::from(sb);
            }
        }
    }
    let nodes = problem.graph.nodes().len();
    let rank_deficient = count_components(nodes, rows.iter().map(|k| arcs[k])) > 1;
    let mean_diag = if l == 0 { 1.0 } else { n.trace() / l as f64 };
    let lambda = ridge * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    if rank_deficient {
        for i in 0..l {
            n[(i, i)] += lambda;
        }
    }
    if let Some(chol) = Cholesky::new(n.clone()) {
        return Ok(Factor { chol, rank_deficient });
    }
    for i in 0..l {
        n[(i, i)] += lambda;
    }
    Cholesky::new(n)
        .map(|chol| Factor {
            chol,
            rank_deficient: true,
        })
        .ok_or_else(|| Error::Validation("normal equations are not positive definite".into()))
}

/// Weighted least-squares latents at every site for fixed per-observation
/// variances. Factorisations are shared between sites with equal row sets.
pub fn gaussian_latents(
    problem: &InferenceProblem,
    variances: &[f64],
    ridge: f64,
) -> Result<(Vec<SvfField>, Vec<SiteStatus>)> {
    let weights: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    let arcs = problem.observation_arcs();
    let mut groups: BTreeMap<&RowSet, usize> = BTreeMap::new();
    let mut unique: Vec<&RowSet> = Vec::new();
    let site_group: Vec<Option<usize>> = problem
        .subgraphs
        .sites()
        .iter()
        .map(|rows| {
            if rows.is_empty() {
                return None;
            }
            Some(*groups.entry(rows).or_insert_with(|| {
                unique.push(rows);
                unique.len() - 1
            }))
        })
        .collect();
    let factors: Vec<Factor> = unique
        .par_iter()
        .map(|rows| factor(problem, &arcs, rows, &weights, ridge))
        .collect::<Result<_>>()?;

    let l = problem.graph.tree().len();
    let path = problem.graph.path();
    let per_site: Vec<([Vec<f64>; 2], SiteStatus)> = (0..problem.num_sites())
        .into_par_iter()
        .map(|site| {
            let Some(g) = site_group[site] else {
                return ([vec![0.0; l], vec![0.0; l]], SiteStatus::Skipped);
            };
            let f = &factors[g];
            let solve_axis = |axis: usize| -> Vec<f64> {
                let mut rhs = DVector::<f64>::zeros(l);
                for k in problem.subgraphs.sites()[site].iter() {
                    let r = weights[k] * problem.observations[k].plane(axis)[site];
                    for &(col, s) in path.row(k) {
                        rhs[col] += f64::from(s) * r;
                    }
                }
                f.chol.solve(&rhs).as_slice().to_vec()
            };
            let status = if f.rank_deficient {
                SiteStatus::RankDeficient
            } else {
                SiteStatus::Solved
            };
            ([solve_axis(0), solve_axis(1)], status)
        })
        .collect();
    let (axes, status): (Vec<[Vec<f64>; 2]>, Vec<SiteStatus>) = per_site.into_iter().unzip();
    Ok((assemble_fields(problem, &axes), status))
}

/// Parameter layout: index 0 is the intermodality variance, then one rate
/// per contrast (or a single shared rate).
fn variance_objective(
    problem: &InferenceProblem,
    model: VarianceModel,
    n: Vec<f64>,
    s: Vec<f64>,
) -> VarianceObjective {
    let param_of = |c: usize| match model {
        VarianceModel::PerContrast => 1 + c,
        VarianceModel::Shared => 1,
    };
    let coef = problem
        .graph
        .observations()
        .iter()
        .map(|o| {
            if o.inter() {
                vec![(0, 1.0)]
            } else {
                let c = o.from.contrast;
                vec![(param_of(c), o.separation(c))]
            }
        })
        .collect();
    VarianceObjective {
        n,
        s,
        coef,
        num_params: match model {
            VarianceModel::PerContrast => 2 + problem.graph.num_contrasts(),
            VarianceModel::Shared => 2,
        },
    }
}

fn params_to_phi(p: &LikelihoodParams, model: VarianceModel, contrasts: usize) -> Vec<f64> {
    let mut phi = vec![param_phi(p.sigma2_inter)];
    match model {
        VarianceModel::PerContrast => {
            phi.extend((0..contrasts).map(|c| param_phi(p.sigma2_contrast.get(c).copied().unwrap_or(1.0))));
        }
        VarianceModel::Shared => phi.push(param_phi(p.sigma2_contrast.first().copied().unwrap_or(1.0))),
    }
    phi
}

fn phi_to_params(phi: &[f64], model: VarianceModel, contrasts: usize) -> LikelihoodParams {
    let sigma2_contrast = match model {
        VarianceModel::PerContrast => phi[1..].iter().map(|&p| param_value(p)).collect(),
        VarianceModel::Shared => vec![param_value(phi[1]); contrasts],
    };
    LikelihoodParams {
        model: Model::Gaussian,
        sigma2_inter: param_value(phi[0]),
        sigma2_contrast,
        b: None,
    }
}

/// Coordinate descent on latents and variances, starting from unit
/// variances with a latent update. The recorded cost never increases.
pub fn infer_gaussian(problem: &InferenceProblem, opts: &InferenceOptions) -> Result<LatentSolution> {
    let contrasts = problem.graph.num_contrasts() + 1;
    let vm = opts.variance_model;
    let start = opts
        .fixed_params
        .clone()
        .unwrap_or_else(|| LikelihoodParams::unit(Model::Gaussian, contrasts));
    let mut phi = params_to_phi(&start, vm, contrasts);

    let variances_of = |phi: &[f64]| -> Result<Vec<f64>> {
        phi_to_params(phi, vm, contrasts).observation_variances(problem.graph)
    };
    if let Some(fixed) = &opts.fixed_params {
        let var = fixed.observation_variances(problem.graph)?;
        let (latents, status) = gaussian_latents(problem, &var, opts.ridge)?;
        let mut params = fixed.clone();
        params.model = Model::Gaussian;
        let cost = super::evaluate_cost(Model::Gaussian, problem, &latents, &params)?;
        return Ok(LatentSolution {
            latents,
            status,
            params,
            cost,
            cost_history: vec![cost],
            outer_iterations: 0,
            converged: true,
        });
    }
    let (mut latents, mut status) = gaussian_latents(problem, &variances_of(&phi)?, opts.ridge)?;
    let (n, s) = residual_statistics(problem, &latents);
    let mut obj = variance_objective(problem, vm, n, s);
    let mut cost = obj.value(&phi);
    let mut history = vec![cost];
    let mut converged = false;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let fit = variance::minimise(&obj, &phi, BFGS_MAX_ITERS);
        let mid = fit.value.min(cost);
        if fit.value <= cost {
            phi = fit.phi;
        }
        let (new_latents, new_status) = gaussian_latents(problem, &variances_of(&phi)?, opts.ridge)?;
        let (n, s) = residual_statistics(problem, &new_latents);
        let new_obj = variance_objective(problem, vm, n, s);
        let new_cost = new_obj.value(&phi);
        let next = if new_cost <= mid {
            latents = new_latents;
            status = new_status;
            obj = new_obj;
            new_cost
        } else {
            // latent update lost to rounding; keep the previous latents
            mid
        };
        let change = (cost - next).abs() / cost.abs().max(1.0);
        cost = next;
        history.push(cost);
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(LatentSolution {
        latents,
        status,
        params: phi_to_params(&phi, vm, contrasts),
        cost,
        cost_history: history,
        outer_iterations: outer,
        converged,
    })
}
