use std::collections::BTreeMap;

use super::{NodeId, ObservationEdge};
use crate::error::{Error, Result};
use crate::fields::downsample_mask_nearest;

/// Fixed-size bitset over observation rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowSet {
    len: usize,
    words: Vec<u64>,
}

impl RowSet {
    pub fn empty(len: usize) -> Self {
        RowSet {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut s = Self::empty(len);
        for k in 0..len {
            s.insert(k);
        }
        s
    }

    pub fn insert(&mut self, k: usize) {
        assert!(k < self.len);
        self.words[k / 64] |= 1 << (k % 64);
    }

    pub fn remove(&mut self, k: usize) {
        self.words[k / 64] &= !(1 << (k % 64));
    }

    pub fn contains(&self, k: usize) -> bool {
        k < self.len && self.words[k / 64] & (1 << (k % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn capacity(&self) -> usize {
        self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&k| self.contains(k))
    }
}

/// Per control-site set of active observation rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphMap {
    pub height: usize,
    pub width: usize,
    active: Vec<RowSet>,
}

impl SubgraphMap {
    /// Every row active at every site.
    pub fn full(height: usize, width: usize, rows: usize) -> Self {
        SubgraphMap {
            height,
            width,
            active: vec![RowSet::full(rows); height * width],
        }
    }

    pub fn from_sets(height: usize, width: usize, active: Vec<RowSet>) -> Result<Self> {
        if active.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} row sets for {height}x{width} sites",
                active.len()
            )));
        }
        Ok(SubgraphMap {
            height,
            width,
            active,
        })
    }

    pub fn at(&self, row: usize, col: usize) -> &RowSet {
        &self.active[row * self.width + col]
    }

    pub fn sites(&self) -> &[RowSet] {
        &self.active
    }
}

/// Drops, at every control site, the observations whose source image has
/// no tissue there. Masks are full resolution (`height x width`) and are
/// looked up with nearest neighbour at the control sites.
pub fn build_subgraphs(
    masks: &BTreeMap<NodeId, Vec<u8>>,
    height: usize,
    width: usize,
    control: (usize, usize),
    observations: &[ObservationEdge],
) -> Result<SubgraphMap> {
    let (ch, cw) = control;
    let mut coarse: BTreeMap<NodeId, Vec<u8>> = BTreeMap::new();
    for o in observations {
        if coarse.contains_key(&o.from) {
            continue;
        }
        let mask = masks
            .get(&o.from)
            .ok_or_else(|| Error::Graph(format!("no mask for node {}", o.from)))?;
        coarse.insert(o.from, downsample_mask_nearest(mask, height, width, ch, cw)?);
    }
    let mut active = vec![RowSet::empty(observations.len()); ch * cw];
    for (k, o) in observations.iter().enumerate() {
        let m = &coarse[&o.from];
        for (site, set) in active.iter_mut().enumerate() {
            if m[site] != 0 {
                set.insert(k);
            }
        }
    }
    SubgraphMap::from_sets(ch, cw, active)
}
