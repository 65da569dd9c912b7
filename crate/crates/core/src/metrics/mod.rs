//! Deformation-error metrics: per-pixel error fields, the intra-slice error
//! `E_W`, the inter-slice error `E_B` and cross-contrast composites.

mod report;

pub use report::{evaluate_stack, ErrorReport, GroupSummary, SliceInput, SliceRow};

use crate::error::{Error, Result};
use crate::fields::DeformationField;

/// Fixed-point inversion of fields that do not come from an SVF.
pub const INVERSION_ITERS: usize = 20;
pub const INVERSION_TOL: f64 = 1e-3;

/// Per-pixel error `truth - est` with its validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorField {
    pub height: usize,
    pub width: usize,
    pub error: Vec<[f64; 2]>,
    pub domain: Vec<bool>,
}

impl ErrorField {
    pub fn norm(&self, i: usize) -> f64 {
        let e = self.error[i];
        (e[0] * e[0] + e[1] * e[1]).sqrt()
    }

    pub fn valid_pixels(&self) -> usize {
        self.domain.iter().filter(|&&d| d).count()
    }

    /// Mean error norm over the domain, `None` when the domain is empty.
    pub fn mean_norm(&self) -> Option<f64> {
        let norms: Vec<f64> = (0..self.error.len())
            .filter(|&i| self.domain[i])
            .map(|i| self.norm(i))
            .collect();
        (!norms.is_empty()).then(|| pairwise_sum(&norms) / norms.len() as f64)
    }

    fn same_dims(&self, other: &ErrorField) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Sum by recursive halving; the result depends only on the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn pixel_error(truth: &DeformationField, est: &DeformationField, domain: &[u8]) -> Result<ErrorField> {
    if !truth.same_dims(est) {
        return Err(Error::DimensionMismatch(format!(
            "truth {}x{} vs estimate {}x{}",
            truth.height(),
            truth.width(),
            est.height(),
            est.width()
        )));
    }
    if domain.len() != truth.mapping().len() {
        return Err(Error::DimensionMismatch(format!(
            "domain has {} pixels, fields have {}",
            domain.len(),
            truth.mapping().len()
        )));
    }
    let error = truth
        .mapping()
        .iter()
        .zip(est.mapping())
        .map(|(t, e)| [t[0] - e[0], t[1] - e[1]])
        .collect();
    Ok(ErrorField {
        height: truth.height(),
        width: truth.width(),
        error,
        domain: domain.iter().map(|&m| m != 0).collect(),
    })
}

/// A scalar metric with the slices (or slice pairs) it skipped for having an
/// empty domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub value: f64,
    pub used: usize,
    pub empty: Vec<usize>,
}

fn average(terms: Vec<Option<f64>>) -> Result<Metric> {
    let empty: Vec<usize> = terms
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_none())
        .map(|(i, _)| i)
        .collect();
    let vals: Vec<f64> = terms.into_iter().flatten().collect();
    if vals.is_empty() {
        return Err(Error::Validation("no slice has a nonempty valid domain".into()));
    }
    Ok(Metric {
        value: pairwise_sum(&vals) / vals.len() as f64,
        used: vals.len(),
        empty,
    })
}

/// `E_W`: mean over slices of the per-slice mean error norm.
pub fn intra_slice_error(errors: &[ErrorField]) -> Result<Metric> {
    average(errors.iter().map(ErrorField::mean_norm).collect())
}

/// Mean of `||a(x) - b(x)||` over pixels valid in both.
pub fn pair_difference(a: &ErrorField, b: &ErrorField) -> Result<Option<f64>> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(
            "consecutive error fields differ in size".into(),
        ));
    }
    let norms: Vec<f64> = (0..a.error.len())
        .filter(|&i| a.domain[i] && b.domain[i])
        .map(|i| {
            let (x, y) = (a.error[i], b.error[i]);
            let d = [x[0] - y[0], x[1] - y[1]];
            (d[0] * d[0] + d[1] * d[1]).sqrt()
        })
        .collect();
    Ok((!norms.is_empty()).then(|| pairwise_sum(&norms) / norms.len() as f64))
}

/// `E_B`: mean over consecutive pairs of the mean norm of the error change,
/// each pair on the intersection of the two domains.
pub fn inter_slice_error(errors: &[ErrorField]) -> Result<Metric> {
    if errors.len() < 2 {
        return Err(Error::Validation(
            "inter-slice error needs at least two slices".into(),
        ));
    }
    let terms = errors
        .windows(2)
        .map(|w| pair_difference(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    average(terms)
}

/// A deformation together with its inverse when one is known in closed
/// form (for example `exp(-v)` of an SVF).
#[derive(Clone, Copy, Debug)]
pub struct Mapping<'a> {
    pub forward: &'a DeformationField,
    pub inverse: Option<&'a DeformationField>,
}

impl<'a> Mapping<'a> {
    pub fn new(forward: &'a DeformationField) -> Self {
        Mapping {
            forward,
            inverse: None,
        }
    }

    pub fn with_inverse(forward: &'a DeformationField, inverse: &'a DeformationField) -> Self {
        Mapping {
            forward,
            inverse: Some(inverse),
        }
    }

    /// `self^-1 ∘ other` and the pixels where the inverse converged.
    pub fn relative(&self, other: &Mapping) -> Result<(DeformationField, Vec<bool>)> {
        let (inv, ok) = match self.inverse {
            Some(inv) => (inv.clone(), vec![true; inv.mapping().len()]),
            None => self.forward.invert_fixed_point(INVERSION_ITERS, INVERSION_TOL),
        };
        Ok((inv.compose(other.forward)?, ok))
    }
}

/// Error of the cross-contrast map `phi_c^-1 ∘ phi_c'`. Pixels where a
/// numerical inversion did not converge leave the domain; their count is
/// returned.
pub fn cross_contrast_error(
    truth_c: Mapping,
    truth_c2: Mapping,
    est_c: Mapping,
    est_c2: Mapping,
    domain: &[u8],
) -> Result<(ErrorField, usize)> {
    let (t, ok_t) = truth_c.relative(&truth_c2)?;
    let (e, ok_e) = est_c.relative(&est_c2)?;
    let mut field = pixel_error(&t, &e, domain)?;
    let mut dropped = 0;
    for (i, d) in field.domain.iter_mut().enumerate() {
        if *d && !(ok_t[i] && ok_e[i]) {
            *d = false;
            dropped += 1;
        }
    }
    Ok((field, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn translation(h: usize, w: usize, t: [f64; 2]) -> DeformationField {
        DeformationField::from_displacement(h, w, |_, _| t)
    }

    fn constant_error(t: [f64; 2]) -> ErrorField {
        pixel_error(&translation(4, 4, t), &DeformationField::identity(4, 4), &[1; 16]).unwrap()
    }

    #[test]
    fn translation_error_norm() {
        let e = constant_error([3.0, 4.0]);
        assert!(e.error.iter().all(|&v| v == [3.0, 4.0]));
        assert_eq!(e.mean_norm(), Some(5.0));
    }

    #[test]
    fn hand_computed_values() {
        let a = constant_error([3.0, 4.0]);
        let z = constant_error([0.0, 0.0]);
        assert_eq!(intra_slice_error(&[a, z]).unwrap().value, 2.5);
        let p = constant_error([1.0, 0.0]);
        let m = constant_error([-1.0, 0.0]);
        let alt = vec![p.clone(), m.clone(), p, m];
        assert_eq!(inter_slice_error(&alt).unwrap().value, 2.0);
        let same = vec![constant_error([0.5, 2.0]); 3];
        assert_eq!(inter_slice_error(&same).unwrap().value, 0.0);
    }

    #[test]
    fn empty_slices_are_reported() {
        let a = constant_error([3.0, 4.0]);
        let mut b = constant_error([1.0, 1.0]);
        b.domain = vec![false; 16];
        let m = intra_slice_error(&[a.clone(), b.clone()]).unwrap();
        assert_eq!((m.value, m.used, m.empty.clone()), (5.0, 1, vec![1]));
        assert!(intra_slice_error(&[b]).is_err());
        assert!(inter_slice_error(&[a]).is_err());
    }

    #[test]
    fn translation_group() {
        let (t1, t3) = (translation(6, 6, [1.0, 0.0]), translation(6, 6, [3.0, 0.0]));
        let (rel, ok) = Mapping::new(&t1).relative(&Mapping::new(&t3)).unwrap();
        assert!(ok.iter().all(|&b| b));
        for r in 0..6 {
            for c in 0..4 {
                let d = rel.displacement(r, c);
                assert!((d[0] - 2.0).abs() < 1e-3 && d[1].abs() < 1e-12);
            }
        }
        let (e, dropped) = cross_contrast_error(
            Mapping::new(&t1),
            Mapping::new(&t3),
            Mapping::new(&t1),
            Mapping::new(&t3),
            &[1; 36],
        )
        .unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(e.mean_norm(), Some(0.0));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
