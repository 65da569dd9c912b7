#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use svftree::fields::{DeformationField, SvfField};
use svftree::graph::{NodeId, ObservationEdge, PathMatrix, StackGraph, SubgraphMap};
use svftree::metrics::{pixel_error, ErrorField};
use svftree::rng::Stream;
use svftree::synth::bspline::BSplineGrid;

/// Reference plus `c` histology contrasts at levels `0..n`.
pub fn stack_nodes(n: i64, c: usize) -> Vec<NodeId> {
    (0..n)
        .flat_map(|lv| (0..=c).map(move |ct| NodeId::new(ct, lv)))
        .collect()
}

/// Random latent fields, one per tree edge.
pub fn random_latents(g: &StackGraph, h: usize, w: usize, s: &mut Stream, scale: f64) -> Vec<SvfField> {
    (0..g.tree().len())
        .map(|_| SvfField::from_fn(h, w, 1.0, |_, _| [scale * s.normal(), scale * s.normal()]))
        .collect()
}

/// `R = W T` per site and axis.
pub fn apply_w(g: &StackGraph, t: &[SvfField]) -> Vec<SvfField> {
    let (h, w) = (t[0].height(), t[0].width());
    g.path()
        .rows()
        .map(|row| {
            SvfField::from_fn(h, w, t[0].spacing(), |r, c| {
                let mut v = [0.0; 2];
                for &(l, sgn) in row {
                    let x = t[l].at(r, c);
                    v[0] += f64::from(sgn) * x[0];
                    v[1] += f64::from(sgn) * x[1];
                }
                v
            })
        })
        .collect()
}

pub fn add_noise(obs: &mut [SvfField], s: &mut Stream, sigma: f64) {
    for o in obs.iter_mut() {
        for axis in 0..2 {
            for v in o.plane_mut(axis) {
                *v += sigma * s.normal();
            }
        }
    }
}

pub fn full_subgraphs(g: &StackGraph, h: usize, w: usize) -> SubgraphMap {
    SubgraphMap::full(h, w, g.observations().len())
}

/// Graph with one tree edge (0,0)->(1,0) observed `k` times directly.
pub fn repeated_scalar(k: usize) -> StackGraph {
    let nodes = vec![NodeId::new(0, 0), NodeId::new(1, 0)];
    let obs = (0..k)
        .map(|index| ObservationEdge {
            index,
            from: nodes[0],
            to: nodes[1],
        })
        .collect();
    StackGraph::with_observations(&nodes, obs).unwrap()
}

/// Single-site observation fields holding the given scalars on both axes.
pub fn scalar_fields(values: &[f64]) -> Vec<SvfField> {
    values
        .iter()
        .map(|&v| SvfField::from_fn(1, 1, 1.0, |_, _| [v, v]))
        .collect()
}

pub fn max_abs_diff(a: &[SvfField], b: &[SvfField]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            (0..2).flat_map(move |axis| {
                x.plane(axis)
                    .iter()
                    .zip(y.plane(axis))
                    .map(|(p, q)| (p - q).abs())
            })
        })
        .fold(0.0, f64::max)
}

pub fn lad_cost(w: &PathMatrix, r: &[f64], t: &[f64]) -> f64 {
    (0..w.num_rows()).map(|k| (r[k] - w.row_dot(k, t)).abs()).sum()
}

pub fn dense(w: &PathMatrix) -> DMatrix<f64> {
    let d = w.to_dense();
    DMatrix::from_fn(w.num_rows(), w.num_cols(), |i, j| d[i][j])
}

/// Best LAD cost over all square row subsets with a unique exact fit.
pub fn enumeration_oracle(w: &PathMatrix, r: &[f64]) -> f64 {
    let (k, l) = (w.num_rows(), w.num_cols());
    let full = dense(w);
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..l).collect();
    loop {
        let a = DMatrix::from_fn(l, l, |i, j| full[(subset[i], j)]);
        let b = DVector::from_iterator(l, subset.iter().map(|&i| r[i]));
        let lu = a.lu();
        if lu.determinant().abs() > 1e-9 {
            let t = lu.solve(&b).unwrap();
            best = best.min(lad_cost(w, r, t.as_slice()));
        }
        // next combination in lexicographic order
        let mut i = l;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < k - l + i {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..l {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

/// Random full-column-rank matrix with entries in {-1, 0, 1}.
pub fn random_full_rank(s: &mut Stream, k: usize, l: usize) -> PathMatrix {
    loop {
        let rows: Vec<Vec<(usize, i8)>> = (0..k)
            .map(|_| {
                (0..l)
                    .filter_map(|j| match s.below(3) {
                        0 => None,
                        1 => Some((j, 1)),
                        _ => Some((j, -1)),
                    })
                    .collect()
            })
            .collect();
        let w = PathMatrix::from_rows(l, rows);
        if dense(&w).rank(1e-9) == l {
            return w;
        }
    }
}

/// Cubic B-spline field over a 5x5 lattice of normal coefficients,
/// rescaled to `max` pixels.
pub fn smooth_field(s: &mut Stream, h: usize, w: usize, max: f64) -> SvfField {
    let grid = BSplineGrid {
        rows: 5,
        cols: 5,
        values: (0..25).map(|_| [s.normal(), s.normal()]).collect(),
    };
    let d = grid.render(h, w);
    let v = SvfField::from_fn(h, w, 1.0, |r, c| d[r * w + c]);
    v.scaled(max / v.max_magnitude())
}

pub fn random_deformation(h: usize, w: usize, rng: &mut Stream, scale: f64) -> DeformationField {
    DeformationField::from_displacement(h, w, |_, _| [scale * rng.normal(), scale * rng.normal()])
}

pub fn random_mask(n: usize, rng: &mut Stream, p_zero: f64) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.uniform() >= p_zero)).collect()
}

pub struct SeededErrors {
    pub errors: Vec<ErrorField>,
    pub truth: Vec<DeformationField>,
    pub est: Vec<DeformationField>,
    pub masks: Vec<Vec<u8>>,
}

/// Seeded 16x16x4 stack of error fields with random domains.
pub fn seeded_errors(seed: u64) -> SeededErrors {
    let mut rng = Stream::new(seed, 99);
    let mut out = SeededErrors {
        errors: vec![],
        truth: vec![],
        est: vec![],
        masks: vec![],
    };
    for _ in 0..4 {
        let t = random_deformation(16, 16, &mut rng, 2.0);
        let e = random_deformation(16, 16, &mut rng, 2.0);
        let m = random_mask(256, &mut rng, 0.3);
        out.errors.push(pixel_error(&t, &e, &m).unwrap());
        out.truth.push(t);
        out.est.push(e);
        out.masks.push(m);
    }
    out
}

/// `(E_W, E_B)` by flat loops straight from the definitions.
pub fn brute_force_metrics(c: &SeededErrors) -> (f64, f64) {
    let n = c.truth.len();
    let px = c.masks[0].len();
    let mut ew = 0.0;
    for s in 0..n {
        let (mut sum, mut cnt) = (0.0, 0.0);
        for i in 0..px {
            if c.masks[s][i] == 1 {
                let (a, b) = (c.truth[s].mapping()[i], c.est[s].mapping()[i]);
                sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                cnt += 1.0;
            }
        }
        ew += sum / cnt;
    }
    ew /= n as f64;
    let mut eb = 0.0;
    for s in 0..n - 1 {
        let (mut sum, mut cnt) = (0.0, 0.0);
        for i in 0..px {
            if c.masks[s][i] == 1 && c.masks[s + 1][i] == 1 {
                let (a, b) = (c.truth[s].mapping()[i], c.est[s].mapping()[i]);
                let (p, q) = (c.truth[s + 1].mapping()[i], c.est[s + 1].mapping()[i]);
                let dx = (a[0] - b[0]) - (p[0] - q[0]);
                let dy = (a[1] - b[1]) - (p[1] - q[1]);
                sum += (dx * dx + dy * dy).sqrt();
                cnt += 1.0;
            }
        }
        eb += sum / cnt;
    }
    (ew, eb / (n - 1) as f64)
}

/// Error fields on 16x16 with dyadic entries, so sums and differences
/// of them and of dyadic shifts are exact.
pub fn dyadic_errors(seed: u64) -> Vec<ErrorField> {
    let mut rng = Stream::new(seed, 3);
    (0..4)
        .map(|_| ErrorField {
            height: 16,
            width: 16,
            error: (0..256)
                .map(|_| {
                    [
                        rng.below(4096) as f64 / 256.0 - 8.0,
                        rng.below(4096) as f64 / 256.0 - 8.0,
                    ]
                })
                .collect(),
            domain: (0..256).map(|_| rng.uniform() > 0.2).collect(),
        })
        .collect()
}

pub fn shifted(errs: &[ErrorField], s: [f64; 2]) -> Vec<ErrorField> {
    errs.iter()
        .map(|f| ErrorField {
            error: f.error.iter().map(|e| [e[0] + s[0], e[1] + s[1]]).collect(),
            ..f.clone()
        })
        .collect()
}

/// Random single-slab stack graph with at most `max_l` tree edges and 20 rows.
pub fn random_graph(s: &mut Stream, max_l: usize) -> StackGraph {
    loop {
        let c = 1 + s.below(2) as usize;
        let n = 1 + s.below(4) as i64;
        let p = s.below(4) as u32;
        let nodes = stack_nodes(n, c);
        let g = StackGraph::new(&nodes, p).unwrap();
        if g.tree().len() <= max_l && g.observations().len() <= 20 && g.slabs().unwrap().len() == 1 {
            return g;
        }
    }
}
