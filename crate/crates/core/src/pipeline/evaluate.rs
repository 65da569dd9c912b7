use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::Result;
use crate::fields::{svf_exp, upsample_svf, DeformationField, Steps, SvfField};
use crate::graph::NodeId;
use crate::metrics::{evaluate_stack, ErrorReport, Mapping, SliceInput};
use crate::synth::GroundTruth;

/// Forward and inverse full-resolution maps of a control-grid SVF.
pub fn integrate_pair(
    v: &SvfField,
    height: usize,
    width: usize,
) -> Result<(DeformationField, DeformationField)> {
    let up = upsample_svf(v, height, width)?;
    Ok((svf_exp(&up, Steps::Auto)?, svf_exp(&up.negate(), Steps::Auto)?))
}

/// Truth maps with their inverses, computed once and reused across
/// evaluations.
#[derive(Clone, Debug)]
pub struct TruthMaps {
    pub forward: BTreeMap<NodeId, DeformationField>,
    pub inverse: BTreeMap<NodeId, Option<DeformationField>>,
    /// `Ω_n`: reference mask and the section mask pulled back through the truth.
    pub domains: BTreeMap<NodeId, Vec<u8>>,
    pub excluded: BTreeSet<NodeId>,
    pub height: usize,
    pub width: usize,
}

fn pulled_mask(phi: &DeformationField, reference: Option<&[u8]>, section: Option<&[u8]>) -> Vec<u8> {
    let (h, w) = (phi.height(), phi.width());
    phi.mapping()
        .iter()
        .enumerate()
        .map(|(i, &[x, y])| {
            let eps = 1e-9;
            let inside = x >= -eps && y >= -eps && x <= (w - 1) as f64 + eps && y <= (h - 1) as f64 + eps;
            if !inside || reference.is_some_and(|m| m[i] == 0) {
                return 0;
            }
            let (xn, yn) = (
                (x.round().max(0.0) as usize).min(w - 1),
                (y.round().max(0.0) as usize).min(h - 1),
            );
            section.map_or(1, |m| m[yn * w + xn])
        })
        .collect()
}

impl TruthMaps {
    /// `masks` holds full-resolution tissue masks per node; missing masks
    /// count as all tissue.
    pub fn new(truth: &GroundTruth, masks: Option<&BTreeMap<NodeId, Vec<u8>>>) -> Result<Self> {
        let (h, w) = (truth.height, truth.width);
        let nodes: Vec<NodeId> = truth.deformations.keys().copied().collect();
        let maps = nodes
            .par_iter()
            .map(|n| match truth.spokes.get(n) {
                Some(v) => {
                    let (f, i) = integrate_pair(v, h, w)?;
                    Ok((f, Some(i)))
                }
                None => Ok((truth.deformations[n].clone(), None)),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = TruthMaps {
            forward: BTreeMap::new(),
            inverse: BTreeMap::new(),
            domains: BTreeMap::new(),
            excluded: truth.outliers.iter().map(|f| f.node).collect(),
            height: h,
            width: w,
        };
        for (n, (f, i)) in nodes.into_iter().zip(maps) {
            let reference = masks
                .and_then(|m| m.get(&NodeId::new(0, n.level)))
                .map(Vec::as_slice);
            let section = masks.and_then(|m| m.get(&n)).map(Vec::as_slice);
            out.domains.insert(n, pulled_mask(&f, reference, section));
            out.forward.insert(n, f);
            out.inverse.insert(n, i);
        }
        Ok(out)
    }

    /// Metrics of spoke estimates against the truth. Sections without an
    /// estimate are scored as the identity.
    pub fn evaluate(&self, spokes: &BTreeMap<NodeId, SvfField>) -> Result<ErrorReport> {
        let nodes: Vec<NodeId> = self.forward.keys().copied().collect();
        let est = nodes
            .par_iter()
            .map(|n| match spokes.get(n) {
                Some(v) if !self.excluded.contains(n) => integrate_pair(v, self.height, self.width),
                _ => {
                    let id = DeformationField::identity(self.height, self.width);
                    Ok((id.clone(), id))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs: BTreeMap<NodeId, SliceInput> = nodes
            .iter()
            .zip(&est)
            .map(|(n, (f, i))| {
                let truth = match &self.inverse[n] {
                    Some(inv) => Mapping::with_inverse(&self.forward[n], inv),
                    None => Mapping::new(&self.forward[n]),
                };
                (
                    *n,
                    SliceInput {
                        truth,
                        est: Mapping::with_inverse(f, i),
                        domain: &self.domains[n],
                    },
                )
            })
            .collect();
        evaluate_stack(&inputs, &self.excluded)
    }
}
