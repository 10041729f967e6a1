//! Layered sub-proposal graph, exact best-path search, and iterative top-K
//! extraction.
//!
//! Each proposal contributes one node per temporal segment; consecutive
//! layers are completely connected. A path picks one node per layer and its
//! energy is the sum of node scores plus `lambda_edge` times the edge scores
//! along it (no edge term after the last layer). The best path is found by
//! dynamic programming with ties broken toward the smaller proposal id at
//! every argmax; ranked proposals are extracted by repeatedly taking the best
//! path and removing its nodes from the graph.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Tube};
use crate::score::{
    appearance_similarity, edge_score, node_score, shape_score, subproposal_actionness,
    ScoreWeights, SubProposal,
};

/// One node of the trellis: a (proposal, segment) pair with its score.
#[derive(Debug, Clone, Copy)]
pub struct TrellisNode {
    pub proposal_id: u32,
    pub score: f64,
}

/// F layers of scored nodes with complete edges between consecutive layers.
#[derive(Debug, Clone)]
pub struct Trellis {
    layers: Vec<Vec<TrellisNode>>,
    /// `edges[f][(i, j)]` scores the edge from node `i` of layer `f` to node
    /// `j` of layer `f + 1`.
    edges: Vec<Array2<f64>>,
    lambda_edge: f64,
}

impl Trellis {
    /// Builds a trellis from per-layer nodes and per-gap edge matrices,
    /// validating layer/edge shape consistency.
    pub fn new(
        layers: Vec<Vec<TrellisNode>>,
        edges: Vec<Array2<f64>>,
        lambda_edge: f64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("trellis requires at least one layer"));
        }
        if layers.iter().any(|l| l.is_empty()) {
            return Err(Error::invalid("trellis layer with no nodes"));
        }
        if edges.len() + 1 != layers.len() {
            return Err(Error::invalid(format!(
                "expected {} edge matrices for {} layers, got {}",
                layers.len() - 1,
                layers.len(),
                edges.len()
            )));
        }
        for (f, e) in edges.iter().enumerate() {
            if e.dim() != (layers[f].len(), layers[f + 1].len()) {
                return Err(Error::invalid(format!(
                    "edge matrix {f} has shape {:?}, expected ({}, {})",
                    e.dim(),
                    layers[f].len(),
                    layers[f + 1].len()
                )));
            }
        }
        Ok(Self {
            layers,
            edges,
            lambda_edge,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<TrellisNode>] {
        &self.layers
    }

    pub fn lambda_edge(&self) -> f64 {
        self.lambda_edge
    }

    pub fn edge(&self, layer: usize, i: usize, j: usize) -> f64 {
        self.edges[layer][(i, j)]
    }

    fn index_of(&self, layer: usize, proposal_id: u32) -> Option<usize> {
        self.layers[layer]
            .iter()
            .position(|n| n.proposal_id == proposal_id)
    }
}

/// Path energy per the graph energy definition: sum over layers of the node
/// score plus `lambda_edge` times the outgoing edge score, with the edge term
/// absent on the last layer. The path names one proposal id per layer.
pub fn energy_of_path(t: &Trellis, path: &[u32]) -> Result<f64> {
    if path.len() != t.num_layers() {
        return Err(Error::invalid(format!(
            "path has {} entries for {} layers",
            path.len(),
            t.num_layers()
        )));
    }
    let idx: Vec<usize> = path
        .iter()
        .enumerate()
        .map(|(f, &pid)| {
            t.index_of(f, pid)
                .ok_or_else(|| Error::invalid(format!("proposal {pid} not in layer {f}")))
        })
        .collect::<Result<_>>()?;
    let mut energy = 0.0;
    for f in 0..t.num_layers() {
        energy += t.layers[f][idx[f]].score;
        if f + 1 < t.num_layers() {
            energy += t.lambda_edge * t.edges[f][(idx[f], idx[f + 1])];
        }
    }
    Ok(energy)
}

/// Masked DP over alive nodes. Every layer must have at least one alive node.
/// Ties break toward the smaller in-layer index at every argmax, which is the
/// smaller proposal id when layers are sorted.
fn dp_best(t: &Trellis, alive: &[Vec<bool>]) -> (Vec<usize>, f64) {
    let f_count = t.num_layers();
    let mut score: Vec<Vec<f64>> = Vec::with_capacity(f_count);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(f_count);

    let first: Vec<f64> = t.layers[0]
        .iter()
        .enumerate()
        .map(|(i, n)| if alive[0][i] { n.score } else { f64::NEG_INFINITY })
        .collect();
    score.push(first);
    back.push(vec![0; t.layers[0].len()]);

    for f in 1..f_count {
        let prev = &score[f - 1];
        let mut cur = vec![f64::NEG_INFINITY; t.layers[f].len()];
        let mut ptr = vec![0usize; t.layers[f].len()];
        for (i, node) in t.layers[f].iter().enumerate() {
            if !alive[f][i] {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_j = 0usize;
            for (j, &p) in prev.iter().enumerate() {
                if p == f64::NEG_INFINITY {
                    continue;
                }
                let v = t.lambda_edge * t.edges[f - 1][(j, i)] + p;
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            cur[i] = node.score + best;
            ptr[i] = best_j;
        }
        score.push(cur);
        back.push(ptr);
    }

    let last = &score[f_count - 1];
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0usize;
    for (i, &v) in last.iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }

    let mut idx = vec![0usize; f_count];
    idx[f_count - 1] = best_i;
    for f in (1..f_count).rev() {
        idx[f - 1] = back[f][idx[f]];
    }
    (idx, best)
}

/// The exact maximum-energy path through the trellis, as one proposal id per
/// layer, together with its energy.
pub fn best_path(t: &Trellis) -> (Vec<u32>, f64) {
    let alive: Vec<Vec<bool>> = t.layers.iter().map(|l| vec![true; l.len()]).collect();
    let (idx, energy) = dp_best(t, &alive);
    let path = idx
        .iter()
        .enumerate()
        .map(|(f, &i)| t.layers[f][i].proposal_id)
        .collect();
    (path, energy)
}

/// A selected path with the energy it had at selection time.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPath {
    pub path: Vec<u32>,
    pub energy: f64,
}

/// Iterated best-path extraction: after each selection the path's nodes are
/// removed and the search repeats, stopping after `k` rounds or when a layer
/// runs out of nodes. May return fewer than `k` paths.
pub fn rank_proposals(t: &Trellis, k: usize) -> Vec<SelectedPath> {
    let mut alive: Vec<Vec<bool>> = t.layers.iter().map(|l| vec![true; l.len()]).collect();
    let mut out = Vec::new();
    for _ in 0..k {
        if alive.iter().any(|l| !l.iter().any(|&a| a)) {
            break;
        }
        let (idx, energy) = dp_best(t, &alive);
        let path = idx
            .iter()
            .enumerate()
            .map(|(f, &i)| t.layers[f][i].proposal_id)
            .collect();
        for (f, &i) in idx.iter().enumerate() {
            alive[f][i] = false;
        }
        out.push(SelectedPath { path, energy });
    }
    out
}

/// Front-loaded near-equal partition of `len` items into `parts` segments:
/// lengths differ by at most one and the first `len % parts` segments carry
/// the extra item.
pub fn split_lengths(len: usize, parts: usize) -> Vec<usize> {
    let base = len / parts;
    let rem = len % parts;
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Splits a tube into `f` temporally contiguous sub-proposals whose lengths
/// differ by at most one frame (extra frames front-loaded). Actionness and
/// appearance are attached separately.
pub fn split_subproposals(tube: &Tube, f: usize) -> Result<Vec<SubProposal>> {
    if f == 0 {
        return Err(Error::invalid("segment count must be at least 1"));
    }
    if tube.len() < f {
        return Err(Error::invalid(format!(
            "tube {} has {} frames, cannot split into {f} segments",
            tube.proposal_id,
            tube.len()
        )));
    }
    let lengths = split_lengths(tube.len(), f);
    let mut subs = Vec::with_capacity(f);
    let mut offset = 0;
    for (segment, &len) in lengths.iter().enumerate() {
        let boxes = tube.boxes()[offset..offset + len].to_vec();
        subs.push(SubProposal::new(tube.proposal_id, segment, boxes));
        offset += len;
    }
    Ok(subs)
}

/// One proposal's full set of per-segment data entering the trellis.
#[derive(Debug, Clone)]
pub struct ProposalChain {
    pub video_id: String,
    pub proposal_id: u32,
    /// One sub-proposal per layer, with actionness and appearance attached.
    pub subs: Vec<SubProposal>,
    /// Per-layer motion scores, already normalized per ranking unit.
    pub motion: Vec<f64>,
}

/// Builds the trellis over all proposals: one node per (proposal, layer)
/// scored by the actionness/motion combination, complete edges between
/// consecutive layers scored by shape consistency and appearance similarity.
/// Layers are ordered by proposal id.
pub fn build_trellis(
    chains: &[ProposalChain],
    weights: &ScoreWeights,
    sigma: f64,
) -> Result<Trellis> {
    if chains.is_empty() {
        return Err(Error::invalid("cannot build a trellis from zero proposals"));
    }
    let f_count = chains[0].subs.len();
    for c in chains {
        if c.subs.len() != f_count || c.motion.len() != f_count {
            return Err(Error::invalid(format!(
                "proposal {} contributes {} segments / {} motion scores, expected {f_count}",
                c.proposal_id,
                c.subs.len(),
                c.motion.len()
            )));
        }
    }
    let mut order: Vec<usize> = (0..chains.len()).collect();
    order.sort_by_key(|&i| chains[i].proposal_id);

    let mut layers = Vec::with_capacity(f_count);
    for f in 0..f_count {
        let mut layer = Vec::with_capacity(chains.len());
        for &ci in &order {
            let chain = &chains[ci];
            let phi_i = subproposal_actionness(&chain.subs[f])?;
            layer.push(TrellisNode {
                proposal_id: chain.proposal_id,
                score: node_score(phi_i, chain.motion[f], weights),
            });
        }
        layers.push(layer);
    }

    let mut edges = Vec::with_capacity(f_count - 1);
    for f in 0..f_count.saturating_sub(1) {
        let mut m = Array2::zeros((chains.len(), chains.len()));
        for (i, &ci) in order.iter().enumerate() {
            for (j, &cj) in order.iter().enumerate() {
                let a = &chains[ci].subs[f];
                let b = &chains[cj].subs[f + 1];
                let psi_o = shape_score(a, b)?;
                let psi_a = appearance_similarity(&a.appearance, &b.appearance, sigma)?;
                m[(i, j)] = edge_score(psi_o, psi_a, weights);
            }
        }
        edges.push(m);
    }
    Trellis::new(layers, edges, weights.lambda_edge)
}

/// Concatenates the boxes of the sub-proposals selected by `path` (one
/// proposal id per layer) into a recombined tube. The tube inherits the video
/// id of the chains and the proposal id of the first selected segment.
pub fn assemble(path: &[u32], chains: &[ProposalChain]) -> Result<Tube> {
    if chains.is_empty() || path.is_empty() {
        return Err(Error::invalid("cannot assemble an empty path"));
    }
    let mut boxes: Vec<BoundingBox> = Vec::new();
    for (f, &pid) in path.iter().enumerate() {
        let chain = chains
            .iter()
            .find(|c| c.proposal_id == pid)
            .ok_or_else(|| Error::invalid(format!("no proposal {pid} among the chains")))?;
        let sub = chain
            .subs
            .get(f)
            .ok_or_else(|| Error::invalid(format!("proposal {pid} has no segment {f}")))?;
        boxes.extend_from_slice(&sub.boxes);
    }
    Tube::new(chains[0].video_id.clone(), path[0], boxes)
}

/// A recombined proposal with its selection rank (1-based) and energy.
#[derive(Debug, Clone)]
pub struct RankedProposal {
    pub rank: usize,
    pub path: Vec<u32>,
    pub energy: f64,
    pub tube: Tube,
}

/// Runs [`rank_proposals`] and assembles each selected path into a tube.
pub fn rank_and_assemble(
    t: &Trellis,
    chains: &[ProposalChain],
    k: usize,
) -> Result<Vec<RankedProposal>> {
    rank_proposals(t, k)
        .into_iter()
        .enumerate()
        .map(|(i, sel)| {
            Ok(RankedProposal {
                rank: i + 1,
                tube: assemble(&sel.path, chains)?,
                path: sel.path,
                energy: sel.energy,
            })
        })
        .collect()
}
