//! Attribution scoring and bottom-up pruning: hidden nodes first, then
//! edges, then input variables.
//!
//! An edge's activity is the batch standard deviation of its output, so
//! constant contributions score zero. Scores flow top-down from the outputs:
//! an additive node splits its score over incoming edges in proportion to
//! their activity, a multiplicative node passes its full score to each of
//! its two slots, and a node's own score is the sum of its outgoing edge
//! scores.

use serde::{Deserialize, Serialize};

use crate::data::FrictionDataset;
use crate::error::{Error, Result};
use crate::kan::{ForwardTrace, KanNetwork, LayerNodes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub node_threshold: f64,
    pub edge_threshold: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { node_threshold: 1e-2, edge_threshold: 3e-2 }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.node_threshold >= 0.0 && self.edge_threshold >= 0.0) {
            return Err(Error::invalid(format!(
                "prune thresholds must be >= 0, got node {} edge {}",
                self.node_threshold, self.edge_threshold
            )));
        }
        Ok(())
    }
}

/// Raw (unnormalized) attribution scores of one network on one batch.
/// Keeps the per-edge activities so scores can be re-propagated after mask
/// changes without re-running the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScores {
    /// Per node layer, `[width]`; masked nodes score 0, active output nodes 1.
    pub node_scores: Vec<Vec<f64>>,
    /// Per weight layer, `[out_width * in_width]` row-major.
    pub edge_scores: Vec<Vec<f64>>,
    /// Batch standard deviation of each edge output, masked elements forced
    /// to exactly 0.
    pub edge_activity: Vec<Vec<f64>>,
}

/// Scores a univariate network on velocity data.
pub fn attribution_scores(net: &KanNetwork, data: &FrictionDataset) -> Result<AttributionScores> {
    data.validate()?;
    if net.in_width() != 1 {
        return Err(Error::invalid(format!(
            "velocity data feeds 1-input networks, this one has {} inputs",
            net.in_width()
        )));
    }
    attribution_scores_batch(net, &data.velocities, data.velocities.len())
}

/// Scores any network on a row-major `[n][in_width]` input batch.
pub fn attribution_scores_batch(
    net: &KanNetwork,
    inputs: &[f64],
    n: usize,
) -> Result<AttributionScores> {
    if n == 0 {
        return Err(Error::invalid("attribution scores need at least one sample"));
    }
    let mut trace = ForwardTrace::default();
    net.forward_trace(inputs, n, &mut trace)?;

    let mut activity = Vec::with_capacity(net.layers().len());
    for (l, layer) in net.layers().iter().enumerate() {
        let stride = layer.out_width() * layer.in_width();
        let edge_out = &trace.layers[l].edge_out;
        let mut a = vec![0.0; stride];
        for (e, slot) in a.iter_mut().enumerate() {
            let mean: f64 = (0..n).map(|s| edge_out[s * stride + e]).sum::<f64>() / n as f64;
            let var: f64 = (0..n)
                .map(|s| {
                    let d = edge_out[s * stride + e] - mean;
                    d * d
                })
                .sum::<f64>()
                / n as f64;
            *slot = var.sqrt();
        }
        activity.push(a);
    }
    force_masked_activity(net, &mut activity);
    let (node_scores, edge_scores) = propagate_scores(net, &activity);
    Ok(AttributionScores { node_scores, edge_scores, edge_activity: activity })
}

/// Zeroes activities of masked edges and of edges fed by masked nodes, so
/// downstream score algebra treats them as exactly absent.
fn force_masked_activity(net: &KanNetwork, activity: &mut [Vec<f64>]) {
    for (l, layer) in net.layers().iter().enumerate() {
        let iw = layer.in_width();
        for k in 0..layer.out_width() {
            for j in 0..iw {
                if !layer.edge_mask[k * iw + j] || !net.node_masks()[l][j] {
                    activity[l][k * iw + j] = 0.0;
                }
            }
        }
    }
}

/// Top-down score propagation over fixed activities. Output nodes score 1
/// (0 when masked); slots with all-zero activity but live incoming edges
/// split the score uniformly so it is still conserved.
fn propagate_scores(net: &KanNetwork, activity: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let depth = net.layers().len();
    let masks = net.node_masks();
    let mut node_scores: Vec<Vec<f64>> = masks
        .iter()
        .map(|layer_mask| layer_mask.iter().map(|_| 0.0).collect())
        .collect();
    let mut edge_scores: Vec<Vec<f64>> =
        activity.iter().map(|a| vec![0.0; a.len()]).collect();

    for (o, &active) in masks[depth].iter().enumerate() {
        node_scores[depth][o] = if active { 1.0 } else { 0.0 };
    }

    for l in (0..depth).rev() {
        let layer = &net.layers()[l];
        let iw = layer.in_width();
        let spec = &net.arch().layers[l + 1];
        for k in 0..layer.out_width() {
            let slot_score = node_scores[l + 1][node_of_slot(spec, k)];
            if slot_score == 0.0 {
                continue;
            }
            let edges = k * iw..(k + 1) * iw;
            let total: f64 = activity[l][edges.clone()].iter().sum();
            if total > 0.0 {
                for j in 0..iw {
                    edge_scores[l][k * iw + j] = slot_score * activity[l][k * iw + j] / total;
                }
            } else {
                let live: Vec<usize> = (0..iw)
                    .filter(|&j| layer.edge_mask[k * iw + j] && masks[l][j])
                    .collect();
                for &j in &live {
                    edge_scores[l][k * iw + j] = slot_score / live.len() as f64;
                }
            }
        }
        for j in 0..iw {
            if masks[l][j] {
                node_scores[l][j] =
                    (0..layer.out_width()).map(|k| edge_scores[l][k * iw + j]).sum();
            }
        }
    }
    (node_scores, edge_scores)
}

/// Node receiving slot `k`: additive nodes take their own slot, each
/// multiplicative node the following pair.
pub(crate) fn node_of_slot(spec: &LayerNodes, k: usize) -> usize {
    let n_add = spec.additive();
    if k < n_add {
        k
    } else {
        n_add + (k - n_add) / 2
    }
}

/// Per-layer copies rescaled so each layer's maximum is 1 (layers that are
/// all zero stay zero).
fn normalize_layers(layers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    layers
        .iter()
        .map(|layer| {
            let max = layer.iter().fold(0.0f64, |m, &x| m.max(x));
            if max > 0.0 {
                layer.iter().map(|&x| x / max).collect()
            } else {
                layer.clone()
            }
        })
        .collect()
}

fn check_scores_shape(net: &KanNetwork, scores: &AttributionScores) -> Result<()> {
    let node_ok = scores.node_scores.len() == net.node_masks().len()
        && scores.node_scores.iter().zip(net.node_masks()).all(|(s, m)| s.len() == m.len());
    let edge_ok = scores.edge_activity.len() == net.layers().len()
        && scores
            .edge_activity
            .iter()
            .zip(net.layers())
            .all(|(a, l)| a.len() == l.out_width() * l.in_width());
    if !node_ok || !edge_ok {
        return Err(Error::invalid(
            "attribution scores do not match the network shape; recompute them on this network",
        ));
    }
    Ok(())
}

/// What one prune pass removed and what survived. `Display` renders the
/// human-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub node_threshold: f64,
    pub edge_threshold: f64,
    /// (node layer, node index) pairs newly masked.
    pub nodes_removed: Vec<(usize, usize)>,
    /// (weight layer, slot, source node) triples newly masked.
    pub edges_removed: Vec<(usize, usize, usize)>,
    /// Input variables left without any active outgoing edge.
    pub pruned_inputs: Vec<usize>,
    /// Per node layer: (active, total).
    pub surviving_nodes: Vec<(usize, usize)>,
    /// Per weight layer: (active, total).
    pub surviving_edges: Vec<(usize, usize)>,
    /// Normalized scores after the node-prune re-propagation.
    pub node_scores: Vec<Vec<f64>>,
    pub edge_scores: Vec<Vec<f64>>,
}

impl std::fmt::Display for PruneReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "prune thresholds: node {}, edge {}",
            self.node_threshold, self.edge_threshold
        )?;
        for (l, (active, total)) in self.surviving_nodes.iter().enumerate() {
            write!(f, "node layer {l}: {active}/{total} active, scores [")?;
            for (j, s) in self.node_scores[l].iter().enumerate() {
                write!(f, "{}{s:.4}", if j > 0 { " " } else { "" })?;
            }
            writeln!(f, "]")?;
        }
        for (l, (active, total)) in self.surviving_edges.iter().enumerate() {
            writeln!(f, "edge layer {l}: {active}/{total} active")?;
        }
        if self.nodes_removed.is_empty() && self.edges_removed.is_empty() {
            writeln!(f, "nothing removed")?;
        } else {
            for (l, j) in &self.nodes_removed {
                writeln!(f, "removed node {j} in layer {l}")?;
            }
            for (l, k, j) in &self.edges_removed {
                writeln!(f, "removed edge ({k},{j}) in layer {l}")?;
            }
        }
        if !self.pruned_inputs.is_empty() {
            writeln!(f, "inputs left without active edges: {:?}", self.pruned_inputs)?;
        }
        Ok(())
    }
}

/// Returns a masked copy of the network plus a report; the input is never
/// mutated. Hidden nodes whose normalized score falls below the node
/// threshold go first, scores are re-propagated, then edges below the edge
/// threshold. Inputs left dangling are reported (see [`prune_inputs`] for
/// actually masking inputs).
pub fn prune(
    net: &KanNetwork,
    scores: &AttributionScores,
    config: &PruneConfig,
) -> Result<(KanNetwork, PruneReport)> {
    config.validate()?;
    check_scores_shape(net, scores)?;
    let mut out = net.clone();

    let node_norm = normalize_layers(&scores.node_scores);
    let mut nodes_removed = Vec::new();
    for l in 1..out.node_masks().len() - 1 {
        for j in 0..node_norm[l].len() {
            if out.node_masks()[l][j] && node_norm[l][j] < config.node_threshold {
                out.set_node_mask(l, j, false)?;
                nodes_removed.push((l, j));
            }
        }
    }

    let mut activity = scores.edge_activity.clone();
    force_masked_activity(&out, &mut activity);
    let (node_after, edge_after) = propagate_scores(&out, &activity);
    let edge_norm = normalize_layers(&edge_after);

    let mut edges_removed = Vec::new();
    for l in 0..out.layers().len() {
        let iw = out.layers()[l].in_width();
        for e in 0..edge_norm[l].len() {
            if out.layers()[l].edge_mask[e] && edge_norm[l][e] < config.edge_threshold {
                out.layers_mut()[l].edge_mask[e] = false;
                edges_removed.push((l, e / iw, e % iw));
            }
        }
    }

    let pruned_inputs = dangling_inputs(&out);
    check_connectivity(&out, &pruned_inputs)?;

    let report = PruneReport {
        node_threshold: config.node_threshold,
        edge_threshold: config.edge_threshold,
        nodes_removed,
        edges_removed,
        pruned_inputs,
        surviving_nodes: count_active_nodes(&out),
        surviving_edges: count_active_edges(&out),
        node_scores: normalize_layers(&node_after),
        edge_scores: edge_norm,
    };
    Ok((out, report))
}

/// Masks input variables scoring below `threshold` (normalized), zeroing
/// their outgoing edges; returns the masked copy and the removed indices.
pub fn prune_inputs(
    net: &KanNetwork,
    scores: &AttributionScores,
    threshold: f64,
) -> Result<(KanNetwork, Vec<usize>)> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("input threshold must be >= 0, got {threshold}")));
    }
    check_scores_shape(net, scores)?;
    let mut out = net.clone();
    let norm = normalize_layers(&scores.node_scores);
    let mut removed = Vec::new();
    for j in 0..out.in_width() {
        if out.node_masks()[0][j] && norm[0][j] < threshold {
            out.set_node_mask(0, j, false)?;
            let iw = out.layers()[0].in_width();
            let ow = out.layers()[0].out_width();
            for k in 0..ow {
                out.layers_mut()[0].edge_mask[k * iw + j] = false;
            }
            removed.push(j);
        }
    }
    check_connectivity(&out, &[])?;
    Ok((out, removed))
}

/// Active (unmasked) inputs all of whose outgoing edges are masked.
fn dangling_inputs(net: &KanNetwork) -> Vec<usize> {
    let layer = &net.layers()[0];
    let iw = layer.in_width();
    (0..iw)
        .filter(|&j| {
            net.node_masks()[0][j] && (0..layer.out_width()).all(|k| !layer.edge_mask[k * iw + j])
        })
        .collect()
}

fn count_active_nodes(net: &KanNetwork) -> Vec<(usize, usize)> {
    net.node_masks()
        .iter()
        .map(|m| (m.iter().filter(|&&x| x).count(), m.len()))
        .collect()
}

fn count_active_edges(net: &KanNetwork) -> Vec<(usize, usize)> {
    net.layers()
        .iter()
        .map(|l| (l.edge_mask.iter().filter(|&&x| x).count(), l.edge_mask.len()))
        .collect()
}

/// Requires a path through active nodes and edges from every surviving input
/// (active and not in `dangling`) to every active output.
fn check_connectivity(net: &KanNetwork, dangling: &[usize]) -> Result<()> {
    let depth = net.layers().len();
    let masks = net.node_masks();
    let outputs: Vec<usize> =
        (0..masks[depth].len()).filter(|&o| masks[depth][o]).collect();
    let survivors: Vec<usize> = (0..masks[0].len())
        .filter(|&j| masks[0][j] && !dangling.contains(&j))
        .collect();
    if outputs.is_empty() || survivors.is_empty() {
        return Err(Error::OverPruned(
            "no active path from any input to any output remains; lower the thresholds"
                .to_string(),
        ));
    }
    for &input in &survivors {
        let mut reach = vec![false; masks[0].len()];
        reach[input] = true;
        for l in 0..depth {
            let layer = &net.layers()[l];
            let iw = layer.in_width();
            let spec = &net.arch().layers[l + 1];
            let mut next = vec![false; spec.node_count()];
            for k in 0..layer.out_width() {
                let target = node_of_slot(spec, k);
                if !masks[l + 1][target] {
                    continue;
                }
                if (0..iw).any(|j| reach[j] && masks[l][j] && layer.edge_mask[k * iw + j]) {
                    next[target] = true;
                }
            }
            reach = next;
        }
        if let Some(&o) = outputs.iter().find(|&&o| !reach[o]) {
            return Err(Error::OverPruned(format!(
                "input {input} no longer reaches output {o}; lower the thresholds"
            )));
        }
    }
    Ok(())
}
