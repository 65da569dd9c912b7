//! JSON dataset/graph manifest.
//!
//! ```json
//! {
//!   "p": 2,
//!   "nodes": [{"contrast": 0, "level": 1, "image": "img/c0_n1.pgm", "mask": "mask/c0_n1.pgm"}],
//!   "observations": [{"from": {"contrast": 0, "level": 1}, "to": {"contrast": 1, "level": 1},
//!                     "svf": "obs/k0000.svf"}]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. The listed
//! registrations must be exactly the edges of the canonical observation
//! graph for `p`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{build_observation_graph, NodeId, ObservationEdge};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub contrast: usize,
    pub level: i64,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub from: NodeId,
    pub to: NodeId,
    pub svf: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphManifest {
    pub p: u32,
    pub nodes: Vec<NodeEntry>,
    pub observations: Vec<ObservationEntry>,
}

impl GraphManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: GraphManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for n in &mut m.nodes {
            n.image = base.join(&n.image);
            if let Some(mask) = &mut n.mask {
                *mask = base.join(&*mask);
            }
        }
        for o in &mut m.observations {
            o.svf = base.join(&o.svf);
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .map(|n| NodeId::new(n.contrast, n.level))
            .collect()
    }

    /// Observation edges in canonical order. Every listed registration must
    /// be an edge of the canonical graph for `p`, and every canonical edge
    /// must be listed. Returns the edges and, per edge, the SVF path.
    pub fn canonical_observations(&self) -> Result<(Vec<ObservationEdge>, Vec<PathBuf>)> {
        let edges = build_observation_graph(&self.node_ids(), self.p);
        let mut paths = Vec::with_capacity(edges.len());
        for e in &edges {
            let hit = self
                .observations
                .iter()
                .find(|o| o.from == e.from && o.to == e.to)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "manifest is missing the registration {} -> {}",
                        e.from, e.to
                    ))
                })?;
            paths.push(hit.svf.clone());
        }
        if self.observations.len() != edges.len() {
            let extra = self
                .observations
                .iter()
                .find(|o| !edges.iter().any(|e| e.from == o.from && e.to == o.to))
                .map(|o| format!("{} -> {}", o.from, o.to))
                .unwrap_or_else(|| "duplicate entry".into());
            return Err(Error::Config(format!(
                "manifest lists a registration outside the P={} graph: {extra}",
                self.p
            )));
        }
        Ok((edges, paths))
    }
}

impl GraphManifest {
    /// Canonical edges for a radius `p` no larger than the manifest's own,
    /// with their SVF paths. Listed registrations outside the smaller graph
    /// are ignored.
    pub fn observations_for(&self, p: u32) -> Result<(Vec<ObservationEdge>, Vec<PathBuf>)> {
        if p > self.p {
            return Err(Error::Config(format!(
                "P={p} needs registrations the P={} manifest does not provide",
                self.p
            )));
        }
        let (edges, paths) = self.canonical_observations()?;
        let keep: Vec<usize> = (0..edges.len())
            .filter(|&k| edges[k].inter() || (edges[k].to.level - edges[k].from.level) <= p as i64)
            .collect();
        let paths = keep.iter().map(|&k| paths[k].clone()).collect();
        let edges = keep
            .iter()
            .enumerate()
            .map(|(index, &k)| ObservationEdge { index, ..edges[k] })
            .collect();
        Ok((edges, paths))
    }
}
