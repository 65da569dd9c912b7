use super::{sample_plane, DeformationField, SvfField};
use crate::error::Result;

/// Number of squaring steps for scaling-and-squaring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Steps {
    /// Smallest `s` with `max|v| / 2^s < 0.5` grid units.
    #[default]
    Auto,
    Fixed(u32),
}

const MAX_STEPS: u32 = 40;

/// Step count chosen by [`Steps::Auto`] for `v`.
pub fn auto_steps(v: &SvfField) -> u32 {
    let max = v.max_magnitude() / v.spacing();
    let mut s = 0;
    while s < MAX_STEPS && max / f64::powi(2.0, s as i32) >= 0.5 {
        s += 1;
    }
    s
}

/// Lie exponential of a stationary velocity field by scaling and squaring.
///
/// The result lives on the field's own grid; coordinates are in grid units
/// (values divided by `spacing`). Lookups outside the grid clamp to the edge.
pub fn svf_exp(v: &SvfField, steps: Steps) -> Result<DeformationField> {
    v.validate()?;
    let s = match steps {
        Steps::Auto => auto_steps(v),
        Steps::Fixed(n) => n,
    };
    let (h, w) = (v.height(), v.width());
    let scale = 1.0 / (v.spacing() * f64::powi(2.0, s as i32));
    let mut dx: Vec<f64> = v.plane(0).iter().map(|a| a * scale).collect();
    let mut dy: Vec<f64> = v.plane(1).iter().map(|a| a * scale).collect();
    let mut nx = vec![0.0; dx.len()];
    let mut ny = vec![0.0; dy.len()];
    for _ in 0..s {
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let (x, y) = (c as f64 + dx[i], r as f64 + dy[i]);
                nx[i] = dx[i] + sample_plane(&dx, h, w, x, y);
                ny[i] = dy[i] + sample_plane(&dy, h, w, x, y);
            }
        }
        std::mem::swap(&mut dx, &mut nx);
        std::mem::swap(&mut dy, &mut ny);
    }
    Ok(DeformationField::from_displacement(h, w, |r, c| {
        let i = r * w + c;
        [dx[i], dy[i]]
    }))
}

/// Discrete Jacobian determinant (central differences) at interior pixels;
/// border entries are `NaN`.
pub fn jacobian_determinant(d: &DeformationField) -> Vec<f64> {
    let (h, w) = (d.height(), d.width());
    let mut out = vec![f64::NAN; h * w];
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let xp = d.at(r, c + 1);
            let xm = d.at(r, c - 1);
            let yp = d.at(r + 1, c);
            let ym = d.at(r - 1, c);
            let dxdx = (xp[0] - xm[0]) / 2.0;
            let dydx = (xp[1] - xm[1]) / 2.0;
            let dxdy = (yp[0] - ym[0]) / 2.0;
            let dydy = (yp[1] - ym[1]) / 2.0;
            out[r * w + c] = dxdx * dydy - dxdy * dydx;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_zero_is_exact_identity() {
        let v = SvfField::zeros(16, 12, 1.0);
        let d = svf_exp(&v, Steps::Auto).unwrap();
        assert_eq!(d, DeformationField::identity(16, 12));
        let d = svf_exp(&v, Steps::Fixed(6)).unwrap();
        assert_eq!(d, DeformationField::identity(16, 12));
    }

    #[test]
    fn exp_of_constant_is_translation() {
        let v = SvfField::from_fn(20, 20, 1.0, |_, _| [2.5, -1.25]);
        let d = svf_exp(&v, Steps::Auto).unwrap();
        for r in 0..20 {
            for c in 0..20 {
                assert_eq!(d.displacement(r, c), [2.5, -1.25]);
            }
        }
    }

    #[test]
    fn auto_steps_rule() {
        assert_eq!(auto_steps(&SvfField::zeros(3, 3, 1.0)), 0);
        let v = SvfField::from_fn(3, 3, 1.0, |_, _| [0.49, 0.0]);
        assert_eq!(auto_steps(&v), 0);
        let v = SvfField::from_fn(3, 3, 1.0, |_, _| [3.0, 4.0]);
        // 5 / 2^4 = 0.3125 < 0.5, 5 / 2^3 = 0.625
        assert_eq!(auto_steps(&v), 4);
        // spacing converts to grid units
        let v = SvfField::from_fn(3, 3, 10.0, |_, _| [3.0, 4.0]);
        assert_eq!(auto_steps(&v), 1);
    }

    #[test]
    fn non_finite_rejected() {
        let mut v = SvfField::zeros(2, 2, 1.0);
        v.plane_mut(0)[1] = f64::INFINITY;
        assert!(svf_exp(&v, Steps::Auto).is_err());
    }
}
