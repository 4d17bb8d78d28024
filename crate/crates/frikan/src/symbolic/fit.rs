//! Fitting one library function to one edge, and joint refinement of a
//! network whose edges are a mix of frozen splines and symbolic functions.

use serde::{Deserialize, Serialize};

use crate::data::{FrictionDataset, Provenance};
use crate::error::{Error, Result};
use crate::kan::layer::{silu, silu_deriv};
use crate::kan::KanNetwork;
use crate::optim::{self, FitConfig, Trainable};
use crate::symbolic::library::{FunctionLibrary, LibraryEntry};

/// Candidate grid: 41 magnitudes of `a` per sign, log-spaced over
/// [1e-2, 1e2], crossed with 41 values of `b` spanning the observed inputs.
const GRID_STEPS: usize = 41;
const A_EXP_RANGE: (f64, f64) = (-2.0, 2.0);

/// Steps of the local refinement run after the grid search.
const EDGE_REFINE_STEPS: usize = 50;

/// Affine wrapper of one symbolic edge: `y = c * f(a * x + b) + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// One fitted candidate for an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub name: String,
    pub complexity: u32,
    pub params: AffineParams,
    /// Coefficient of determination against the edge outputs. Zero-variance
    /// targets score 0 here: a constant carries no shape worth replacing.
    pub r_squared: f64,
}

/// Fits `y = c * f(a * x + b) + d` for one library function: grid search
/// over (a, b) with closed-form (c, d), then a short local refinement.
pub fn fit_edge(x: &[f64], y: &[f64], entry: &LibraryEntry) -> Result<EdgeFit> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "edge fit needs paired samples, got {} inputs and {} outputs",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 8 {
        return Err(Error::invalid(format!(
            "edge fit needs at least 8 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("edge fit samples must be finite"));
    }
    let (x_min, x_max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if x_max - x_min <= 1e-12 {
        return Err(Error::invalid("edge inputs are constant; nothing to fit a shape to"));
    }

    let n = x.len() as f64;
    let mut f = vec![0.0; x.len()];
    let mut best: Option<(AffineParams, f64)> = None;
    for step_a in 0..GRID_STEPS {
        let exp = A_EXP_RANGE.0
            + (A_EXP_RANGE.1 - A_EXP_RANGE.0) * step_a as f64 / (GRID_STEPS - 1) as f64;
        for a in [10f64.powf(exp), -(10f64.powf(exp))] {
            'b_grid: for step_b in 0..GRID_STEPS {
                let b = x_min + (x_max - x_min) * step_b as f64 / (GRID_STEPS - 1) as f64;
                for (fi, &xi) in f.iter_mut().zip(x) {
                    match entry.value(a * xi + b) {
                        Some(v) => *fi = v,
                        None => continue 'b_grid,
                    }
                }
                let Some((c, d)) = solve_affine(&f, y) else { continue };
                let ss_res: f64 =
                    f.iter().zip(y).map(|(&fi, &yi)| (c * fi + d - yi) * (c * fi + d - yi)).sum();
                if !ss_res.is_finite() {
                    continue;
                }
                if best.is_none_or(|(_, without)| ss_res < without) {
                    best = Some((AffineParams { a, b, c, d }, ss_res));
                }
            }
        }
    }
    let (grid_params, grid_ss_res) = best.ok_or_else(|| Error::Domain {
        message: format!(
            "no grid candidate keeps all edge inputs inside the domain of {}",
            entry.name
        ),
        context: entry.name.to_string(),
    })?;

    // Local refinement; keep the grid solution when it does not help.
    let mut params = grid_params;
    let mut ss_res = grid_ss_res;
    let mut model = EdgeCurve { entry, params };
    let samples = FrictionDataset::new(x.to_vec(), y.to_vec(), Provenance::Unspecified)?;
    if let Ok(trace) = optim::fit(&mut model, &samples, &FitConfig::lbfgs(EDGE_REFINE_STEPS)) {
        let refined_ss_res = trace.final_loss * n;
        if refined_ss_res.is_finite() && refined_ss_res < ss_res {
            params = model.params;
            ss_res = refined_ss_res;
        }
    }

    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|&yi| (yi - mean) * (yi - mean)).sum();
    let r_squared = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok(EdgeFit {
        name: entry.name.to_string(),
        complexity: entry.complexity,
        params,
        r_squared,
    })
}

/// Least squares for `c * f + d ~ y`; None when `f` carries no variation.
fn solve_affine(f: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = f.len() as f64;
    let sf: f64 = f.iter().sum();
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().sum();
    let sfy: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sff - sf * sf;
    if !det.is_finite() || det.abs() <= 1e-12 * (n * sff).abs().max(1.0) {
        // f is (numerically) constant: only the offset is identified.
        return Some((0.0, sy / n));
    }
    let c = (n * sfy - sf * sy) / det;
    let d = (sff * sy - sf * sfy) / det;
    (c.is_finite() && d.is_finite()).then_some((c, d))
}

/// `Trainable` view of a single symbolic edge; x and y ride in the dataset.
struct EdgeCurve<'a> {
    entry: &'a LibraryEntry,
    params: AffineParams,
}

impl Trainable for EdgeCurve<'_> {
    fn param_count(&self) -> usize {
        4
    }

    fn params(&self) -> Vec<f64> {
        let p = self.params;
        vec![p.a, p.b, p.c, p.d]
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != 4 {
            return Err(Error::invalid("edge curve expects 4 parameters"));
        }
        self.params = AffineParams { a: params[0], b: params[1], c: params[2], d: params[3] };
        Ok(())
    }

    fn loss_and_grad(&mut self, data: &FrictionDataset, grad: &mut Vec<f64>) -> Result<f64> {
        grad.clear();
        grad.resize(4, 0.0);
        let p = self.params;
        let n = data.len() as f64;
        let mut loss = 0.0;
        for (&xi, &yi) in data.velocities.iter().zip(&data.torques) {
            let u = p.a * xi + p.b;
            // Stepping outside the domain costs infinity; the line search
            // backs off.
            let Some(fu) = self.entry.value(u) else {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return Ok(f64::INFINITY);
            };
            let slope = self.entry.slope(u);
            let r = p.c * fu + p.d - yi;
            loss += r * r;
            let g = 2.0 * r / n;
            grad[0] += g * p.c * slope * xi;
            grad[1] += g * p.c * slope;
            grad[2] += g * fu;
            grad[3] += g;
        }
        if !loss.is_finite() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return Ok(f64::INFINITY);
        }
        Ok(loss / n)
    }
}

/// What one edge of a mixed model computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum EdgeKind {
    Masked,
    /// Frozen spline and base path, parameters owned by the network.
    Spline,
    /// Symbolic replacement; `entry` indexes the function library.
    Symbolic { entry: usize, params: AffineParams },
}

/// A network whose edges are partly replaced by symbolic functions. Only the
/// affine parameters of the symbolic edges are trainable; spline edges stay
/// frozen. Masks, node structure and normalization follow the network.
pub(crate) struct MixedModel<'a> {
    net: &'a KanNetwork,
    library: &'a FunctionLibrary,
    kinds: Vec<Vec<EdgeKind>>,
    /// (layer, edge index) of every symbolic edge, in parameter order.
    sym_edges: Vec<(usize, usize)>,
    bufs: Vec<LayerBuf>,
    node_out: Vec<Vec<f64>>,
    d_node: Vec<f64>,
    d_slot: Vec<f64>,
    work: Vec<f64>,
    n: usize,
}

/// Forward intermediates of one mixed layer.
#[derive(Default)]
struct LayerBuf {
    /// Edge inputs after node combination, `[n][in_width]`.
    base_act: Vec<f64>,
    dbase_act: Vec<f64>,
    basis: Vec<f64>,
    dbasis: Vec<f64>,
    /// Per edge `[n][out_width][in_width]`: f(u) for symbolic edges.
    f_val: Vec<f64>,
    /// Per edge: f'(u) for symbolic edges, d(edge)/dx for spline edges.
    f_slope: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

impl<'a> MixedModel<'a> {
    /// Wraps the network with every unmasked edge still a spline; callers
    /// swap individual edges to `Symbolic` via `replace_edge`.
    pub(crate) fn new(net: &'a KanNetwork, library: &'a FunctionLibrary) -> Result<Self> {
        net.validate()?;
        if net.in_width() != 1 || net.out_width() != 1 {
            return Err(Error::invalid(format!(
                "symbolic extraction expects a univariate network, this one is {} -> {}",
                net.in_width(),
                net.out_width()
            )));
        }
        let kinds = net
            .layers()
            .iter()
            .map(|layer| {
                layer
                    .edge_mask
                    .iter()
                    .map(|&m| if m { EdgeKind::Spline } else { EdgeKind::Masked })
                    .collect()
            })
            .collect();
        Ok(MixedModel {
            net,
            library,
            kinds,
            sym_edges: Vec::new(),
            bufs: Vec::new(),
            node_out: Vec::new(),
            d_node: Vec::new(),
            d_slot: Vec::new(),
            work: Vec::new(),
            n: 0,
        })
    }

    pub(crate) fn replace_edge(
        &mut self,
        layer: usize,
        slot: usize,
        input: usize,
        name: &str,
        params: AffineParams,
    ) -> Result<()> {
        let entry = self
            .library
            .entries()
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::invalid(format!("unknown library function {name:?}")))?;
        let l = &self.net.layers()[layer];
        let e = l.eidx(slot, input);
        if self.kinds[layer][e] == EdgeKind::Masked {
            return Err(Error::invalid(format!(
                "edge ({slot}, {input}) of layer {layer} is masked and cannot be replaced"
            )));
        }
        self.kinds[layer][e] = EdgeKind::Symbolic { entry, params };
        self.sym_edges = Vec::new();
        for (l, kinds) in self.kinds.iter().enumerate() {
            for (e, kind) in kinds.iter().enumerate() {
                if matches!(kind, EdgeKind::Symbolic { .. }) {
                    self.sym_edges.push((l, e));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn edge_kind(&self, layer: usize, slot: usize, input: usize) -> EdgeKind {
        self.kinds[layer][self.net.layers()[layer].eidx(slot, input)]
    }

    pub(crate) fn symbolic_edge_count(&self) -> usize {
        self.sym_edges.len()
    }

    /// Univariate batch prediction in physical units; None when a symbolic
    /// edge leaves its domain.
    #[cfg(test)]
    pub(crate) fn predict(&mut self, velocities: &[f64]) -> Result<Option<Vec<f64>>> {
        if !self.forward(velocities)? {
            return Ok(None);
        }
        let out = self.net.output_norm()[0];
        let last = &self.node_out[self.net.layers().len()];
        Ok(Some(last.iter().map(|&y| out.apply(y)).collect()))
    }

    /// Traced forward pass; false when a symbolic edge leaves its domain.
    fn forward(&mut self, velocities: &[f64]) -> Result<bool> {
        let n = velocities.len();
        if n == 0 {
            return Err(Error::invalid("mixed model needs a non-empty batch"));
        }
        if velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mixed model input contains non-finite values"));
        }
        self.prepare(n);
        let net = self.net;

        let x0 = &mut self.node_out[0];
        let norm = net.input_norm()[0];
        let input_live = net.node_masks()[0][0];
        for (slot, &v) in x0.iter_mut().zip(velocities) {
            *slot = if input_live { norm.apply(v) } else { 0.0 };
        }

        for l in 0..net.layers().len() {
            let layer = &net.layers()[l];
            let (iw, ow, nb) = (layer.in_width(), layer.out_width(), layer.basis_count());
            let (head, tail) = self.node_out.split_at_mut(l + 1);
            let x = &head[l];
            let buf = &mut self.bufs[l];
            let kinds = &self.kinds[l];

            for s in 0..n {
                for j in 0..iw {
                    let xj = x[s * iw + j];
                    let b = &mut buf.basis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                    let db = &mut buf.dbasis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                    layer.grids[j].basis_into(xj, &mut self.work, b, Some(db));
                    buf.base_act[s * iw + j] = silu(xj);
                    buf.dbase_act[s * iw + j] = silu_deriv(xj);
                }
                for i in 0..ow {
                    let mut acc = 0.0;
                    for j in 0..iw {
                        let e = s * ow * iw + i * iw + j;
                        let value = match kinds[i * iw + j] {
                            EdgeKind::Masked => 0.0,
                            EdgeKind::Spline => {
                                let basis = &buf.basis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                                let dbasis = &buf.dbasis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                                let coeffs =
                                    &layer.spline_coeffs[layer.cidx(i, j, 0)..layer.cidx(i, j, nb)];
                                let mut phi = 0.0;
                                let mut dphi = 0.0;
                                for m in 0..nb {
                                    phi += coeffs[m] * basis[m];
                                    dphi += coeffs[m] * dbasis[m];
                                }
                                let scaler = layer.spline_scaler[i * iw + j];
                                let weight = layer.base_weight[i * iw + j];
                                buf.f_slope[e] =
                                    scaler * dphi + weight * buf.dbase_act[s * iw + j];
                                scaler * phi + weight * buf.base_act[s * iw + j]
                            }
                            EdgeKind::Symbolic { entry, params } => {
                                let u = params.a * x[s * iw + j] + params.b;
                                let entry = &self.library.entries()[entry];
                                let Some(fu) = entry.value(u) else {
                                    return Ok(false);
                                };
                                buf.f_val[e] = fu;
                                buf.f_slope[e] = entry.slope(u);
                                params.c * fu + params.d
                            }
                        };
                        acc += value;
                    }
                    buf.pre[s * ow + i] = acc;
                    buf.post[s * ow + i] =
                        if layer.squash_output { acc.tanh() } else { acc };
                }
            }

            let spec = &net.arch().layers[l + 1];
            let n_add = spec.additive();
            let n_nodes = spec.node_count();
            let mask = &net.node_masks()[l + 1];
            let next = &mut tail[0];
            for s in 0..n {
                let slots = &buf.post[s * ow..(s + 1) * ow];
                let row = &mut next[s * n_nodes..(s + 1) * n_nodes];
                for k in 0..n_add {
                    row[k] = if mask[k] { slots[k] } else { 0.0 };
                }
                for t in 0..spec.multiplicative() {
                    let node = n_add + t;
                    row[node] = if mask[node] {
                        slots[n_add + 2 * t] * slots[n_add + 2 * t + 1]
                    } else {
                        0.0
                    };
                }
            }
        }
        Ok(true)
    }

    fn prepare(&mut self, n: usize) {
        self.n = n;
        let net = self.net;
        self.bufs.resize_with(net.layers().len(), LayerBuf::default);
        self.node_out.resize(net.arch().layers.len(), Vec::new());
        for (l, spec) in net.arch().layers.iter().enumerate() {
            self.node_out[l].resize(n * spec.node_count(), 0.0);
        }
        for (buf, layer) in self.bufs.iter_mut().zip(net.layers()) {
            let (iw, ow, nb) = (layer.in_width(), layer.out_width(), layer.basis_count());
            buf.basis.resize(n * iw * nb, 0.0);
            buf.dbasis.resize(n * iw * nb, 0.0);
            buf.base_act.resize(n * iw, 0.0);
            buf.dbase_act.resize(n * iw, 0.0);
            buf.f_val.resize(n * ow * iw, 0.0);
            buf.f_slope.resize(n * ow * iw, 0.0);
            buf.pre.resize(n * ow, 0.0);
            buf.post.resize(n * ow, 0.0);
        }
    }
}

impl Trainable for MixedModel<'_> {
    fn param_count(&self) -> usize {
        4 * self.sym_edges.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for &(l, e) in &self.sym_edges {
            let EdgeKind::Symbolic { params: p, .. } = self.kinds[l][e] else {
                unreachable!("symbolic edge list out of sync");
            };
            out.extend_from_slice(&[p.a, p.b, p.c, p.d]);
        }
        out
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        for (k, &(l, e)) in self.sym_edges.iter().enumerate() {
            let EdgeKind::Symbolic { params: p, .. } = &mut self.kinds[l][e] else {
                unreachable!("symbolic edge list out of sync");
            };
            *p = AffineParams {
                a: params[4 * k],
                b: params[4 * k + 1],
                c: params[4 * k + 2],
                d: params[4 * k + 3],
            };
        }
        Ok(())
    }

    fn loss_and_grad(&mut self, data: &FrictionDataset, grad: &mut Vec<f64>) -> Result<f64> {
        grad.clear();
        grad.resize(self.param_count(), 0.0);
        let n = data.len();
        if data.torques.len() != n {
            return Err(Error::invalid("velocity/torque length mismatch"));
        }
        if !self.forward(&data.velocities)? {
            return Ok(f64::INFINITY);
        }
        let net = self.net;

        let mut loss = 0.0;
        self.d_node.clear();
        self.d_node.resize(n, 0.0);
        let out = net.output_norm()[0];
        let last = &self.node_out[net.layers().len()];
        for s in 0..n {
            let r = out.apply(last[s]) - data.torques[s];
            loss += r * r;
            self.d_node[s] = 2.0 / n as f64 * r * out.scale;
        }
        loss /= n as f64;

        // Parameter offset of each symbolic edge, by (layer, edge index).
        let mut offsets: Vec<Vec<Option<usize>>> =
            self.kinds.iter().map(|k| vec![None; k.len()]).collect();
        for (k, &(l, e)) in self.sym_edges.iter().enumerate() {
            offsets[l][e] = Some(4 * k);
        }

        for l in (0..net.layers().len()).rev() {
            let layer = &net.layers()[l];
            let buf = &self.bufs[l];
            let kinds = &self.kinds[l];
            let spec = &net.arch().layers[l + 1];
            let (iw, ow) = (layer.in_width(), layer.out_width());
            let n_add = spec.additive();
            let node_mask = &net.node_masks()[l + 1];
            let x = &self.node_out[l];

            self.d_slot.clear();
            self.d_slot.resize(n * ow, 0.0);
            for s in 0..n {
                let d_nodes =
                    &self.d_node[s * spec.node_count()..(s + 1) * spec.node_count()];
                let slots = &buf.post[s * ow..(s + 1) * ow];
                let d_slots = &mut self.d_slot[s * ow..(s + 1) * ow];
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

            let mut d_input = vec![0.0; n * iw];
            for s in 0..n {
                for i in 0..ow {
                    let g = self.d_slot[s * ow + i];
                    if g == 0.0 {
                        continue;
                    }
                    for j in 0..iw {
                        let e = s * ow * iw + i * iw + j;
                        match kinds[i * iw + j] {
                            EdgeKind::Masked => {}
                            EdgeKind::Spline => {
                                d_input[s * iw + j] += g * buf.f_slope[e];
                            }
                            EdgeKind::Symbolic { params, .. } => {
                                let at = offsets[l][i * iw + j]
                                    .expect("symbolic edge has a parameter slot");
                                let xj = x[s * iw + j];
                                let slope = buf.f_slope[e];
                                grad[at] += g * params.c * slope * xj;
                                grad[at + 1] += g * params.c * slope;
                                grad[at + 2] += g * buf.f_val[e];
                                grad[at + 3] += g;
                                d_input[s * iw + j] += g * params.c * slope * params.a;
                            }
                        }
                    }
                }
            }
            if l > 0 {
                let mask = &net.node_masks()[l];
                for s in 0..n {
                    for j in 0..iw {
                        if !mask[j] {
                            d_input[s * iw + j] = 0.0;
                        }
                    }
                }
            }
            self.d_node = d_input;
        }
        Ok(loss)
    }
}

/// Joint refinement of all symbolic edges against the data. No-op for
/// models without symbolic edges.
pub(crate) fn refit_mixed(
    model: &mut MixedModel<'_>,
    data: &FrictionDataset,
    steps: usize,
) -> Result<()> {
    if model.symbolic_edge_count() == 0 || steps == 0 {
        return Ok(());
    }
    optim::fit(model, data, &FitConfig::lbfgs(steps))?;
    Ok(())
}
