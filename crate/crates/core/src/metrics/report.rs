use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cross_contrast_error, pair_difference, pixel_error, ErrorField, Mapping};
use crate::error::Result;
use crate::graph::NodeId;

/// Truth and estimate for one section, with the valid domain used for it.
#[derive(Clone, Copy, Debug)]
pub struct SliceInput<'a> {
    pub truth: Mapping<'a>,
    pub est: Mapping<'a>,
    pub domain: &'a [u8],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// `c1` for a contrast, `c1-c2` for a cross-contrast pair.
    pub group: String,
    pub e_w: Option<f64>,
    pub e_b: Option<f64>,
    pub slices: usize,
    pub pairs: usize,
    pub excluded: usize,
    pub empty: usize,
    pub dropped_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub group: String,
    pub level: i64,
    pub pixels: usize,
    /// Mean error norm on this slice.
    pub e_w: Option<f64>,
    /// Mean error change towards the next slice of the group.
    pub e_b_next: Option<f64>,
    pub excluded: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub groups: Vec<GroupSummary>,
    pub slices: Vec<SliceRow>,
}

pub const CSV_HEADER: &str = "group,level,pixels,e_w,e_b_next,excluded";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ErrorReport {
    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }

    /// Per-slice rows without the header line.
    pub fn csv_rows(&self, prefix: &str) -> String {
        let mut s = String::new();
        for r in &self.slices {
            let _ = writeln!(
                s,
                "{prefix}{},{},{},{},{},{}",
                r.group,
                r.level,
                r.pixels,
                opt(r.e_w),
                opt(r.e_b_next),
                r.excluded
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.csv_rows(""))
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| super::pairwise_sum(v) / v.len() as f64)
}

/// Slices in level order; `None` marks excluded ones.
fn summarise(
    group: String,
    levels: Vec<(i64, Option<ErrorField>)>,
    dropped: usize,
) -> Result<(GroupSummary, Vec<SliceRow>)> {
    let mut rows = Vec::with_capacity(levels.len());
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    let mut empty = 0;
    for (i, (level, field)) in levels.iter().enumerate() {
        let next = levels.get(i + 1).and_then(|(_, f)| f.as_ref());
        let (e_w, e_b_next, pixels) = match field {
            Some(f) => {
                let e_w = f.mean_norm();
                if e_w.is_none() {
                    empty += 1;
                }
                let e_b = match next {
                    Some(g) => pair_difference(f, g)?,
                    None => None,
                };
                (e_w, e_b, f.valid_pixels())
            }
            None => (None, None, 0),
        };
        intra.extend(e_w);
        inter.extend(e_b_next);
        rows.push(SliceRow {
            group: group.clone(),
            level: *level,
            pixels,
            e_w,
            e_b_next,
            excluded: field.is_none(),
        });
    }
    let summary = GroupSummary {
        group,
        e_w: mean(&intra),
        e_b: mean(&inter),
        slices: intra.len(),
        pairs: inter.len(),
        excluded: levels.iter().filter(|(_, f)| f.is_none()).count(),
        empty,
        dropped_pixels: dropped,
    };
    Ok((summary, rows))
}

/// Evaluates every histology contrast and every pair of contrasts. Slices in
/// `excluded`, and cross pairs touching one, do not contribute.
pub fn evaluate_stack(
    slices: &BTreeMap<NodeId, SliceInput>,
    excluded: &BTreeSet<NodeId>,
) -> Result<ErrorReport> {
    let mut by_contrast: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for n in slices.keys().filter(|n| !n.is_reference()) {
        by_contrast.entry(n.contrast).or_default().push(n.level);
    }
    let mut report = ErrorReport::default();
    for (&c, levels) in &by_contrast {
        let fields = levels
            .par_iter()
            .map(|&n| {
                let node = NodeId::new(c, n);
                if excluded.contains(&node) {
                    return Ok((n, None));
                }
                let s = &slices[&node];
                Ok((n, Some(pixel_error(s.truth.forward, s.est.forward, s.domain)?)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (g, rows) = summarise(format!("c{c}"), fields, 0)?;
        report.groups.push(g);
        report.slices.extend(rows);
    }
    let contrasts: Vec<usize> = by_contrast.keys().copied().collect();
    for (i, &c) in contrasts.iter().enumerate() {
        for &c2 in &contrasts[i + 1..] {
            let shared: Vec<i64> = by_contrast[&c]
                .iter()
                .copied()
                .filter(|n| by_contrast[&c2].contains(n))
                .collect();
            let fields = shared
                .par_iter()
                .map(|&n| {
                    let (a, b) = (NodeId::new(c, n), NodeId::new(c2, n));
                    if excluded.contains(&a) || excluded.contains(&b) {
                        return Ok((n, None, 0));
                    }
                    let (sa, sb) = (&slices[&a], &slices[&b]);
                    let domain: Vec<u8> = sa.domain.iter().zip(sb.domain).map(|(&x, &y)| x & y).collect();
                    let (f, dropped) = cross_contrast_error(sa.truth, sb.truth, sa.est, sb.est, &domain)?;
                    Ok((n, Some(f), dropped))
                })
                .collect::<Result<Vec<_>>>()?;
            let dropped = fields.iter().map(|f| f.2).sum();
            let fields = fields.into_iter().map(|(n, f, _)| (n, f)).collect();
            let (g, rows) = summarise(format!("c{c}-c{c2}"), fields, dropped)?;
            report.groups.push(g);
            report.slices.extend(rows);
        }
    }
    Ok(report)
}
