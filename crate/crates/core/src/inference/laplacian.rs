//! Laplacian likelihood: one LAD problem per site and axis.

use rayon::prelude::*;

use super::gaussian::gaussian_latents;
use super::{
    assemble_fields, count_components, evaluate_cost, latents_from_potentials, InferenceOptions,
    InferenceProblem, LadBackend, LatentSolution, LikelihoodParams, Model, SiteStatus,
};
use crate::graph::{RowSet, SubgraphMap};
use crate::lp::{assemble_lad_lp, default_max_iters, solve_lp, GraphLadSolver, LpStatus};
use crate::Result;

/// Result of one site: latents per axis, or `None` when the LP failed.
type SiteResult = (Option<[Vec<f64>; 2]>, SiteStatus);

/// LAD optimum at every site. Sites along a grid row reuse the network
/// solver of their left neighbour when the active rows agree, so results do
/// not depend on the number of threads.
pub fn infer_laplacian(problem: &InferenceProblem, opts: &InferenceOptions) -> Result<LatentSolution> {
    let (h, w) = (problem.height(), problem.width());
    let l = problem.graph.tree().len();
    let nodes = problem.graph.nodes().len();
    let arcs = problem.observation_arcs();
    let tree = problem.tree_arcs();

    let rows: Vec<Vec<SiteResult>> = (0..h)
        .into_par_iter()
        .map(|row| {
            let mut solvers: [Option<(RowSet, Vec<usize>, GraphLadSolver)>; 2] = [None, None];
            (0..w)
                .map(|col| {
                    let site = row * w + col;
                    let active = problem.subgraphs.at(row, col);
                    if active.is_empty() {
                        return (Some([vec![0.0; l], vec![0.0; l]]), SiteStatus::Skipped);
                    }
                    let rank_deficient = count_components(nodes, active.iter().map(|k| arcs[k])) > 1;
                    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                    for axis in 0..2 {
                        let solved = match opts.lad_backend {
                            LadBackend::Network => {
                                let slot = &mut solvers[axis];
                                if slot.as_ref().is_none_or(|(set, _, _)| set != active) {
                                    let ks: Vec<usize> = active.iter().collect();
                                    let sub: Vec<(usize, usize)> = ks.iter().map(|&k| arcs[k]).collect();
                                    *slot = Some((active.clone(), ks, GraphLadSolver::new(nodes, &sub)));
                                }
                                let (_, ks, solver) = slot.as_mut().unwrap();
                                let r: Vec<f64> = ks
                                    .iter()
                                    .map(|&k| problem.observations[k].plane(axis)[site])
                                    .collect();
                                let sol = solver.solve(
                                    &r,
                                    opts.lp_max_iters.unwrap_or(default_max_iters(ks.len(), nodes)),
                                );
                                (sol.status == LpStatus::Optimal).then(|| {
                                    latents_from_potentials(nodes, &tree, &sol.potentials, &sol.components)
                                })
                            }
                            LadBackend::Dense => {
                                let ks: Vec<usize> = active.iter().collect();
                                let cols: Vec<usize> = (0..l).collect();
                                let wa = problem.graph.path().restrict(&ks, &cols);
                                let r: Vec<f64> = ks
                                    .iter()
                                    .map(|&k| problem.observations[k].plane(axis)[site])
                                    .collect();
                                assemble_lad_lp(&wa, &r)
                                    .and_then(|p| {
                                        solve_lp(
                                            &p,
                                            opts.lp_tol,
                                            opts.lp_max_iters.unwrap_or(default_max_iters(p.k, p.l)),
                                        )
                                    })
                                    .ok()
                                    .filter(|s| s.status == LpStatus::Optimal)
                                    .map(|s| s.latents(ks.len()).to_vec())
                            }
                        };
                        match solved {
                            Some(t) => out[axis] = t,
                            None => return (None, SiteStatus::LpFallback),
                        }
                    }
                    let status = if rank_deficient {
                        SiteStatus::RankDeficient
                    } else {
                        SiteStatus::Solved
                    };
                    (Some(out), status)
                })
                .collect()
        })
        .collect();
    let mut results: Vec<SiteResult> = rows.into_iter().flatten().collect();

    // failed sites take the unit-variance Gaussian solution
    if results.iter().any(|(t, _)| t.is_none()) {
        let failed: Vec<RowSet> = results
            .iter()
            .zip(problem.subgraphs.sites())
            .map(|((t, _), rows)| {
                if t.is_none() {
                    rows.clone()
                } else {
                    RowSet::empty(rows.capacity())
                }
            })
            .collect();
        let sub = SubgraphMap::from_sets(h, w, failed)?;
        let fallback_problem = InferenceProblem {
            subgraphs: &sub,
            ..*problem
        };
        let unit = LikelihoodParams::unit(Model::Gaussian, problem.graph.num_contrasts() + 1);
        let (fields, _) = gaussian_latents(
            &fallback_problem,
            &unit.observation_variances(problem.graph)?,
            opts.ridge,
        )?;
        for (site, (t, _)) in results.iter_mut().enumerate() {
            if t.is_none() {
                let axes = [0, 1].map(|axis| fields.iter().map(|f| f.plane(axis)[site]).collect());
                *t = Some(axes);
            }
        }
    }
    let (axes, status): (Vec<[Vec<f64>; 2]>, Vec<SiteStatus>) =
        results.into_iter().map(|(t, s)| (t.unwrap(), s)).unzip();
    let latents = assemble_fields(problem, &axes);

    let mut params = LikelihoodParams::unit(Model::Laplacian, problem.graph.num_contrasts() + 1);
    let cost = evaluate_cost(Model::Laplacian, problem, &latents, &params)?;
    let active_pairs: usize = problem.subgraphs.sites().iter().map(|s| s.count()).sum();
    if active_pairs > 0 {
        params.b = Some(cost / (2.0 * active_pairs as f64));
    }
    Ok(LatentSolution {
        latents,
        status,
        params,
        cost,
        cost_history: vec![cost],
        outer_iterations: 0,
        converged: true,
    })
}
