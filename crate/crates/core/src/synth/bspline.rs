//! Tensor-product uniform cubic B-spline displacement fields.

/// Uniform cubic B-spline basis weights at local coordinate `t` in `[0, 1)`.
pub fn basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Control lattice of 2-vectors spanning an image corner to corner.
#[derive(Clone, Debug, PartialEq)]
pub struct BSplineGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `[dx, dy]` coefficients.
    pub values: Vec<[f64; 2]>,
}

impl BSplineGrid {
    fn coef(&self, r: isize, c: isize) -> [f64; 2] {
        let r = r.clamp(0, self.rows as isize - 1) as usize;
        let c = c.clamp(0, self.cols as isize - 1) as usize;
        self.values[r * self.cols + c]
    }

    /// Displacement at lattice coordinates `(u, v)` (column, row), with
    /// boundary coefficients replicated outside the lattice.
    pub fn eval(&self, u: f64, v: f64) -> [f64; 2] {
        let (iu, iv) = (u.floor(), v.floor());
        let (bu, bv) = (basis(u - iu), basis(v - iv));
        let (iu, iv) = (iu as isize, iv as isize);
        let mut out = [0.0; 2];
        for (a, wv) in bv.iter().enumerate() {
            for (b, wu) in bu.iter().enumerate() {
                let c = self.coef(iv - 1 + a as isize, iu - 1 + b as isize);
                let w = wv * wu;
                out[0] += w * c[0];
                out[1] += w * c[1];
            }
        }
        out
    }

    /// Dense displacement on an `height x width` image, row-major.
    pub fn render(&self, height: usize, width: usize) -> Vec<[f64; 2]> {
        let su = if width > 1 {
            (self.cols - 1) as f64 / (width - 1) as f64
        } else {
            0.0
        };
        let sv = if height > 1 {
            (self.rows - 1) as f64 / (height - 1) as f64
        } else {
            0.0
        };
        let mut out = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                out.push(self.eval(c as f64 * su, r as f64 * sv));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_a_partition_of_unity() {
        for i in 0..10 {
            let t = i as f64 / 10.0;
            let s: f64 = basis(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_coefficients_give_constant_field() {
        let g = BSplineGrid {
            rows: 3,
            cols: 4,
            values: vec![[1.5, -2.0]; 12],
        };
        for v in g.render(7, 9) {
            assert!((v[0] - 1.5).abs() < 1e-14 && (v[1] + 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_coefficients_are_reproduced_inside() {
        // cubic B-splines reproduce linear functions away from the clamped border
        let g = BSplineGrid {
            rows: 6,
            cols: 6,
            values: (0..36).map(|i| [(i % 6) as f64, 0.0]).collect(),
        };
        for k in 0..20 {
            let u = 1.0 + 3.0 * k as f64 / 20.0;
            assert!((g.eval(u, 2.5)[0] - u).abs() < 1e-12);
        }
    }
}
