//! Exact gradients of the mean-squared-error loss, by reverse accumulation
//! through the explicit network graph (spline bases, base activations,
//! squashes, multiplicative nodes, normalization maps), plus the closed-form
//! gradient of the Stribeck model.

use serde::{Deserialize, Serialize};

use crate::data::FrictionDataset;
use crate::error::{Error, Result};
use crate::friction::{stribeck, StribeckParams};
use crate::kan::{ForwardTrace, KanNetwork};

/// Gradients shaped like the parameter set they differentiate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
    /// Parameter-vector gradient for closed-form models (k1, k2, k3, k4).
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub spline_coeffs: Vec<f64>,
    pub base_weight: Vec<f64>,
    pub spline_scaler: Vec<f64>,
}

/// Mean-squared error of the network on the dataset together with exact
/// gradients for every trainable parameter. Masked edges get gradient 0.
pub fn loss_and_gradients(net: &KanNetwork, data: &FrictionDataset) -> Result<(f64, GradientSet)> {
    data.validate()?;
    let mut ws = Workspace::default();
    let mut flat = Vec::new();
    let loss = loss_and_grad_flat(net, &data.velocities, &data.torques, &mut ws, &mut flat)?;
    let mut layers = Vec::with_capacity(net.layers().len());
    let mut at = 0;
    for layer in net.layers() {
        let nc = layer.out_width() * layer.in_width() * layer.basis_count();
        let ne = layer.out_width() * layer.in_width();
        layers.push(LayerGrads {
            spline_coeffs: flat[at..at + nc].to_vec(),
            base_weight: flat[at + nc..at + nc + ne].to_vec(),
            spline_scaler: flat[at + nc + ne..at + nc + 2 * ne].to_vec(),
        });
        at += nc + 2 * ne;
    }
    Ok((loss, GradientSet { layers, params: None }))
}

/// Forward-only MSE of the network on explicit velocity/torque slices.
pub(crate) fn loss_only(
    net: &KanNetwork,
    velocities: &[f64],
    torques: &[f64],
    ws: &mut Workspace,
) -> Result<f64> {
    let n = check_univariate(net, velocities, torques)?;
    net.forward_trace(velocities, n, &mut ws.trace)?;
    let mut loss = 0.0;
    for s in 0..n {
        let r = ws.trace.predictions()[s] - torques[s];
        loss += r * r;
    }
    Ok(loss / n as f64)
}

fn check_univariate(net: &KanNetwork, velocities: &[f64], torques: &[f64]) -> Result<usize> {
    if velocities.is_empty() {
        return Err(Error::invalid("loss needs a non-empty dataset"));
    }
    if velocities.len() != torques.len() {
        return Err(Error::invalid("velocity/torque length mismatch"));
    }
    if net.in_width() != 1 || net.out_width() != 1 {
        return Err(Error::invalid(format!(
            "velocity-torque loss expects a univariate network, this one is {} -> {}",
            net.in_width(),
            net.out_width()
        )));
    }
    Ok(velocities.len())
}

/// Reusable buffers across repeated gradient evaluations of one network.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    pub(crate) trace: ForwardTrace,
    d_node: Vec<f64>,
    d_slot: Vec<f64>,
}

/// MSE and flat gradient vector (layout matching `KanNetwork::read_params`).
pub(crate) fn loss_and_grad_flat(
    net: &KanNetwork,
    velocities: &[f64],
    torques: &[f64],
    ws: &mut Workspace,
    grad: &mut Vec<f64>,
) -> Result<f64> {
    let n = check_univariate(net, velocities, torques)?;
    net.forward_trace(velocities, n, &mut ws.trace)?;

    grad.clear();
    grad.resize(net.total_parameters(), 0.0);

    let mut loss = 0.0;
    // d_node holds dL/d(node outputs) of the layer currently above us;
    // start at the output nodes, through the output normalization.
    ws.d_node.clear();
    ws.d_node.resize(n, 0.0);
    let scale = net.output_norm()[0].scale;
    for s in 0..n {
        let r = ws.trace.predictions()[s] - torques[s];
        loss += r * r;
        ws.d_node[s] = 2.0 / n as f64 * r * scale;
    }
    loss /= n as f64;

    // Offsets of each layer's parameter block in the flat vector.
    let mut offsets = Vec::with_capacity(net.layers().len());
    let mut at = 0;
    for layer in net.layers() {
        offsets.push(at);
        let ne = layer.out_width() * layer.in_width();
        at += ne * layer.basis_count() + 2 * ne;
    }

    for l in (0..net.layers().len()).rev() {
        let layer = &net.layers()[l];
        let trace = &ws.trace.layers[l];
        let spec = &net.arch().layers[l + 1];
        let (iw, ow, nb) = (layer.in_width(), layer.out_width(), layer.basis_count());
        let n_add = spec.additive();
        let node_mask = &net.node_masks()[l + 1];

        // Node grads -> pre-node slot grads (additive pass-through, product
        // rule at multiplicative nodes), then through the optional squash.
        ws.d_slot.clear();
        ws.d_slot.resize(n * ow, 0.0);
        for s in 0..n {
            let d_nodes = &ws.d_node[s * spec.node_count()..(s + 1) * spec.node_count()];
            let slots = &trace.post[s * ow..(s + 1) * ow];
            let d_slots = &mut ws.d_slot[s * ow..(s + 1) * ow];
            for k in 0..n_add {
                d_slots[k] = if node_mask[k] { d_nodes[k] } else { 0.0 };
            }
            for t in 0..spec.multiplicative() {
                let node = n_add + t;
                let (a, b) = (n_add + 2 * t, n_add + 2 * t + 1);
                if node_mask[node] {
                    d_slots[a] = d_nodes[node] * slots[b];
                    d_slots[b] = d_nodes[node] * slots[a];
                } else {
                    d_slots[a] = 0.0;
                    d_slots[b] = 0.0;
                }
            }
            if layer.squash_output {
                for i in 0..ow {
                    let z = slots[i];
                    d_slots[i] *= 1.0 - z * z;
                }
            }
        }

        // Slot grads -> parameter grads and input grads.
        let base = offsets[l];
        let coeff_at = |i: usize, j: usize| base + (i * iw + j) * nb;
        let weight_at = |i: usize, j: usize| base + ow * iw * nb + i * iw + j;
        let scaler_at = |i: usize, j: usize| base + ow * iw * nb + ow * iw + i * iw + j;

        ws.d_node.clear();
        ws.d_node.resize(n * iw, 0.0);
        for s in 0..n {
            for i in 0..ow {
                let du = ws.d_slot[s * ow + i];
                if du == 0.0 {
                    continue;
                }
                for j in 0..iw {
                    if !layer.edge_active(i, j) {
                        continue;
                    }
                    let e = s * ow * iw + i * iw + j;
                    let scaler = layer.spline_scaler[i * iw + j];
                    let weight = layer.base_weight[i * iw + j];
                    grad[scaler_at(i, j)] += du * trace.phi[e];
                    grad[weight_at(i, j)] += du * trace.base_act[s * iw + j];
                    let basis = &trace.basis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                    let dbasis = &trace.dbasis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                    let coeffs = &layer.spline_coeffs[(i * iw + j) * nb..(i * iw + j + 1) * nb];
                    let g = &mut grad[coeff_at(i, j)..coeff_at(i, j) + nb];
                    let mut dphi_dx = 0.0;
                    for m in 0..nb {
                        g[m] += du * scaler * basis[m];
                        dphi_dx += coeffs[m] * dbasis[m];
                    }
                    ws.d_node[s * iw + j] +=
                        du * (scaler * dphi_dx + weight * trace.dbase_act[s * iw + j]);
                }
            }
        }
        // ws.d_node is now dL/d(node outputs of layer l); the node mask of
        // layer l is already baked into the stored outputs, and masked nodes
        // produce constant zeros whose incoming-edge grads vanish below
        // because the next iteration multiplies by that mask.
        if l > 0 {
            let mask = &net.node_masks()[l];
            for s in 0..n {
                for j in 0..iw {
                    if !mask[j] {
                        ws.d_node[s * iw + j] = 0.0;
                    }
                }
            }
        }
    }
    Ok(loss)
}

/// MSE of the Stribeck model on the dataset with its gradient packed into
/// `GradientSet::params` as (dk1, dk2, dk3, dk4). `|v|` uses subgradient 0
/// at v = 0.
pub fn stribeck_loss_and_gradients(
    p: &StribeckParams,
    data: &FrictionDataset,
) -> Result<(f64, GradientSet)> {
    p.validate()?;
    data.validate()?;
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut g = [0.0f64; 4];
    for (&v, &t) in data.velocities.iter().zip(&data.torques) {
        let decay = (-(v / p.k3).abs()).exp();
        let smooth = (p.smoothing * v).tanh();
        let r = stribeck(v, p) - t;
        loss += r * r;
        g[0] += r * smooth;
        g[1] += r * decay * smooth;
        g[2] += r * p.k2 * decay * (v.abs() / (p.k3 * p.k3)) * smooth;
        g[3] += r * v;
    }
    loss /= n;
    for gi in &mut g {
        *gi *= 2.0 / n;
    }
    Ok((loss, GradientSet { layers: Vec::new(), params: Some(g.to_vec()) }))
}

/// Outcome of comparing analytic gradients against central finite
/// differences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_deviation: f64,
    pub worst_parameter: String,
    pub checked: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks every unmasked network parameter against a central finite
/// difference of the loss with the given step. Deviations are relative with
/// a 1e-8 absolute floor.
pub fn gradient_check(
    net: &KanNetwork,
    data: &FrictionDataset,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if step <= 0.0 {
        return Err(Error::invalid(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut ws = Workspace::default();
    let mut analytic = Vec::new();
    loss_and_grad_flat(net, &data.velocities, &data.torques, &mut ws, &mut analytic)?;
    let (max_dev, worst, checked) = compare_with_fd(net, data, &analytic, step)?;
    Ok(GradCheckReport {
        max_relative_deviation: max_dev,
        worst_parameter: worst,
        checked,
        tolerance,
        pass: max_dev <= tolerance,
    })
}

/// Deviation of a given flat gradient from finite differences over all
/// unmasked parameters. Split out so tests can feed corrupted gradients.
pub(crate) fn compare_with_fd(
    net: &KanNetwork,
    data: &FrictionDataset,
    flat_grad: &[f64],
    step: f64,
) -> Result<(f64, String, usize)> {
    let mut probe = net.clone();
    let mut params = Vec::new();
    net.read_params(&mut params);
    if flat_grad.len() != params.len() {
        return Err(Error::invalid(format!(
            "gradient length {} does not match {} parameters",
            flat_grad.len(),
            params.len()
        )));
    }
    let mut ws = Workspace::default();
    let mut max_dev = 0.0;
    let mut worst = String::from("none");
    let mut checked = 0;
    for idx in 0..params.len() {
        let Some(name) = unmasked_param_name(net, idx) else { continue };
        let saved = params[idx];
        params[idx] = saved + step;
        probe.write_params(&params);
        let up = loss_only(&probe, &data.velocities, &data.torques, &mut ws)?;
        params[idx] = saved - step;
        probe.write_params(&params);
        let down = loss_only(&probe, &data.velocities, &data.torques, &mut ws)?;
        params[idx] = saved;
        let fd = (up - down) / (2.0 * step);
        let a = flat_grad[idx];
        let dev = if (a - fd).abs() <= 1e-8 { 0.0 } else { (a - fd).abs() / a.abs().max(fd.abs()) };
        checked += 1;
        if dev > max_dev {
            max_dev = dev;
            worst = name;
        }
    }
    probe.write_params(&params);
    Ok((max_dev, worst, checked))
}

/// Name of the flat parameter `idx`, or None when its edge is masked.
fn unmasked_param_name(net: &KanNetwork, idx: usize) -> Option<String> {
    let mut at = 0;
    for (l, layer) in net.layers().iter().enumerate() {
        let (iw, ow, nb) = (layer.in_width(), layer.out_width(), layer.basis_count());
        let ne = ow * iw;
        let segments = [(ne * nb, "spline_coeffs", nb), (ne, "base_weight", 1), (ne, "spline_scaler", 1)];
        for (len, kind, per_edge) in segments {
            if idx < at + len {
                let local = idx - at;
                let edge = local / per_edge;
                let (i, j) = (edge / iw, edge % iw);
                if !layer.edge_active(i, j) {
                    return None;
                }
                return Some(format!("layers[{l}].{kind}[{local}] (edge {i},{j})"));
            }
            at += len;
        }
    }
    unreachable!("parameter index {idx} out of range");
}
