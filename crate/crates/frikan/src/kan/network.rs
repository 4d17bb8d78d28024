//! Whole-network assembly: layer chaining, multiplicative node pairing,
//! node masks and input/output normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::FrictionDataset;
use crate::error::{Error, Result};
use crate::kan::layer::LayerTrace;
use crate::kan::{ArchSpec, KanLayer};
use crate::spline::SplineGrid;

/// Normalized domain every grid is built over; inputs and targets are
/// affinely mapped into it before training.
pub(crate) const UNIT_RANGE: (f64, f64) = (-1.0, 1.0);

/// Affine map `x -> scale * x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub offset: f64,
}

impl Affine {
    pub fn identity() -> Self {
        Affine { scale: 1.0, offset: 0.0 }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    /// Map sending `[lo, hi]` onto `[-1, 1]`.
    pub fn range_to_unit(lo: f64, hi: f64) -> Self {
        let half = (hi - lo) / 2.0;
        let mid = (hi + lo) / 2.0;
        Affine { scale: 1.0 / half, offset: -mid / half }
    }

    /// Map sending `[-1, 1]` onto `[lo, hi]`.
    pub fn unit_to_range(lo: f64, hi: f64) -> Self {
        Affine { scale: (hi - lo) / 2.0, offset: (hi + lo) / 2.0 }
    }
}

/// Parameter counts of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerParamCounts {
    pub spline: usize,
    pub base: usize,
    pub scaler: usize,
}

impl LayerParamCounts {
    pub fn total(&self) -> usize {
        self.spline + self.base + self.scaler
    }
}

/// A multi-layer KAN.
///
/// Layer `l` maps the `node_count` outputs of node layer `l` to the
/// `pre_node_count` slots of node layer `l+1`. Additive node `k` takes slot
/// `k`; multiplicative node `n_add + t` takes the product of slots
/// `n_add + 2t` and `n_add + 2t + 1`. Node masks zero node outputs;
/// `node_masks[0]` masks the input variables themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanNetwork {
    pub(crate) arch: ArchSpec,
    pub(crate) layers: Vec<KanLayer>,
    pub(crate) node_masks: Vec<Vec<bool>>,
    /// Per input: physical value -> normalized network input.
    pub(crate) input_norm: Vec<Affine>,
    /// Per output: network output -> physical value.
    pub(crate) output_norm: Vec<Affine>,
    pub(crate) norms_frozen: bool,
    pub(crate) seed: u64,
}

impl KanNetwork {
    /// Builds a network with randomly initialized parameters, deterministic
    /// per seed: spline coefficients from N(0, 0.1/sqrt(basis_count)), base
    /// weights uniform in ±1/sqrt(in_width), scalers one, all masks active,
    /// identity normalization.
    pub fn init(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let grid = SplineGrid::uniform(UNIT_RANGE.0, UNIT_RANGE.1, arch.grid, arch.order)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeff_noise = Normal::new(0.0, 0.1 / (grid.basis_count() as f64).sqrt())
            .expect("valid normal distribution");
        let mut layers = Vec::with_capacity(arch.depth());
        for l in 0..arch.depth() {
            let in_width = arch.layers[l].node_count();
            let out_width = arch.layers[l + 1].pre_node_count();
            let squash = l + 1 < arch.layers.len() - 1;
            let mut layer = KanLayer::zeroed(in_width, out_width, &grid, squash)?;
            for c in layer.spline_coeffs.iter_mut() {
                *c = coeff_noise.sample(&mut rng);
            }
            let bound = 1.0 / (in_width as f64).sqrt();
            for w in layer.base_weight.iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            layers.push(layer);
        }
        let node_masks = arch.layers.iter().map(|l| vec![true; l.node_count()]).collect();
        Ok(KanNetwork {
            input_norm: vec![Affine::identity(); arch.in_width()],
            output_norm: vec![Affine::identity(); arch.out_width()],
            arch: arch.clone(),
            layers,
            node_masks,
            norms_frozen: false,
            seed,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    /// Mutable layer access for direct parameter surgery; the layer count
    /// and widths must stay consistent with the architecture.
    pub fn layers_mut(&mut self) -> &mut [KanLayer] {
        &mut self.layers
    }

    pub fn node_masks(&self) -> &[Vec<bool>] {
        &self.node_masks
    }

    pub fn set_node_mask(&mut self, layer: usize, node: usize, active: bool) -> Result<()> {
        let mask = self
            .node_masks
            .get_mut(layer)
            .ok_or_else(|| Error::invalid(format!("no node layer {layer}")))?;
        let slot = mask
            .get_mut(node)
            .ok_or_else(|| Error::invalid(format!("no node {node} in layer {layer}")))?;
        *slot = active;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn in_width(&self) -> usize {
        self.arch.in_width()
    }

    pub fn out_width(&self) -> usize {
        self.arch.out_width()
    }

    pub fn norms_frozen(&self) -> bool {
        self.norms_frozen
    }

    pub fn input_norm(&self) -> &[Affine] {
        &self.input_norm
    }

    pub fn output_norm(&self) -> &[Affine] {
        &self.output_norm
    }

    /// Structural consistency check; `what` prefixes error field paths.
    pub(crate) fn validate_as(&self, what: &str) -> Result<()> {
        self.arch.validate().map_err(|e| Error::format(format!("{what}.arch"), e.to_string()))?;
        if self.layers.len() != self.arch.depth() {
            return Err(Error::format(
                format!("{what}.layers"),
                format!("expected {} layers, got {}", self.arch.depth(), self.layers.len()),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate(&format!("{what}.layers[{l}]"))?;
            let want_in = self.arch.layers[l].node_count();
            let want_out = self.arch.layers[l + 1].pre_node_count();
            if layer.in_width != want_in || layer.out_width != want_out {
                return Err(Error::format(
                    format!("{what}.layers[{l}]"),
                    format!(
                        "expected widths {want_in} -> {want_out}, got {} -> {}",
                        layer.in_width, layer.out_width
                    ),
                ));
            }
        }
        if self.node_masks.len() != self.arch.layers.len() {
            return Err(Error::format(
                format!("{what}.node_masks"),
                format!(
                    "expected {} mask vectors, got {}",
                    self.arch.layers.len(),
                    self.node_masks.len()
                ),
            ));
        }
        for (l, mask) in self.node_masks.iter().enumerate() {
            if mask.len() != self.arch.layers[l].node_count() {
                return Err(Error::format(
                    format!("{what}.node_masks[{l}]"),
                    format!(
                        "expected {} entries, got {}",
                        self.arch.layers[l].node_count(),
                        mask.len()
                    ),
                ));
            }
        }
        for (field, norms, want) in [
            ("input_norm", &self.input_norm, self.arch.in_width()),
            ("output_norm", &self.output_norm, self.arch.out_width()),
        ] {
            if norms.len() != want {
                return Err(Error::format(
                    format!("{what}.{field}"),
                    format!("expected {want} maps, got {}", norms.len()),
                ));
            }
            if norms.iter().any(|a| !a.scale.is_finite() || !a.offset.is_finite() || a.scale == 0.0)
            {
                return Err(Error::format(
                    format!("{what}.{field}"),
                    "normalization maps need finite, nonzero scale".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_as("network")
    }

    /// Fixes the normalization maps from the observed data ranges: inputs
    /// onto [-1, 1], network outputs onto the target range. No-op once
    /// frozen, so refits keep the maps of the original fit.
    pub fn freeze_normalization(&mut self, data: &FrictionDataset) -> Result<()> {
        if self.norms_frozen {
            return Ok(());
        }
        if self.in_width() != 1 || self.out_width() != 1 {
            return Err(Error::invalid(
                "velocity-torque data drives univariate networks only (1 input, 1 output)",
            ));
        }
        data.validate()?;
        let span = |values: &[f64]| {
            let (lo, hi) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if hi - lo > 1e-12 {
                (lo, hi)
            } else {
                // Degenerate range: keep a unit-size window around the value.
                (lo - 1.0, hi + 1.0)
            }
        };
        let (vlo, vhi) = span(&data.velocities);
        let (tlo, thi) = span(&data.torques);
        self.input_norm = vec![Affine::range_to_unit(vlo, vhi)];
        self.output_norm = vec![Affine::unit_to_range(tlo, thi)];
        self.norms_frozen = true;
        Ok(())
    }

    /// Batch forward pass; `inputs` is row-major `[n][in_width]`, the result
    /// row-major `[n][out_width]` in physical units.
    pub fn forward_batch(&self, inputs: &[f64], n: usize) -> Result<Vec<f64>> {
        let mut trace = ForwardTrace::default();
        self.forward_trace(inputs, n, &mut trace)?;
        Ok(std::mem::take(&mut trace.output))
    }

    /// Univariate convenience: one torque prediction per velocity.
    pub fn predict(&self, velocities: &[f64]) -> Result<Vec<f64>> {
        if self.in_width() != 1 || self.out_width() != 1 {
            return Err(Error::invalid(format!(
                "predict expects a univariate network, this one is {} -> {}",
                self.in_width(),
                self.out_width()
            )));
        }
        self.forward_batch(velocities, velocities.len())
    }

    /// Forward pass recording all intermediates into `trace` (buffers are
    /// reused across calls).
    pub(crate) fn forward_trace(
        &self,
        inputs: &[f64],
        n: usize,
        trace: &mut ForwardTrace,
    ) -> Result<()> {
        let iw = self.in_width();
        if n == 0 || inputs.len() != n * iw {
            return Err(Error::invalid(format!(
                "input length {} does not match {} samples of width {}",
                inputs.len(),
                n,
                iw
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("network input contains non-finite values"));
        }
        trace.prepare(self, n);

        let x0 = &mut trace.node_out[0];
        for s in 0..n {
            for j in 0..iw {
                let value = self.input_norm[j].apply(inputs[s * iw + j]);
                x0[s * iw + j] = if self.node_masks[0][j] { value } else { 0.0 };
            }
        }

        for l in 0..self.layers.len() {
            let layer = &self.layers[l];
            let (head, tail) = trace.node_out.split_at_mut(l + 1);
            let x = &head[l];
            layer.forward_trace_into(x, n, &mut trace.layers[l]);

            let spec = &self.arch.layers[l + 1];
            let n_add = spec.additive();
            let n_nodes = spec.node_count();
            let mask = &self.node_masks[l + 1];
            let post = &trace.layers[l].post;
            let next = &mut tail[0];
            let ow = layer.out_width;
            for s in 0..n {
                let slots = &post[s * ow..(s + 1) * ow];
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

        let ow = self.out_width();
        let last = &trace.node_out[self.layers.len()];
        trace.output.resize(n * ow, 0.0);
        for s in 0..n {
            for o in 0..ow {
                trace.output[s * ow + o] = self.output_norm[o].apply(last[s * ow + o]);
            }
        }
        Ok(())
    }

    /// Per-layer trainable parameter counts (spline, base, scaler).
    pub fn count_parameters(&self) -> Vec<LayerParamCounts> {
        self.layers
            .iter()
            .map(|l| LayerParamCounts {
                spline: l.out_width * l.in_width * l.basis_count(),
                base: l.in_width * l.out_width,
                scaler: l.in_width * l.out_width,
            })
            .collect()
    }

    pub fn total_parameters(&self) -> usize {
        self.count_parameters().iter().map(|c| c.total()).sum()
    }

    /// Flattens all trainable parameters: per layer, spline coefficients,
    /// then base weights, then scalers.
    pub fn read_params(&self, out: &mut Vec<f64>) {
        out.clear();
        for layer in &self.layers {
            out.extend_from_slice(&layer.spline_coeffs);
            out.extend_from_slice(&layer.base_weight);
            out.extend_from_slice(&layer.spline_scaler);
        }
    }

    pub fn write_params(&mut self, params: &[f64]) {
        debug_assert_eq!(params.len(), self.total_parameters());
        let mut at = 0;
        for layer in &mut self.layers {
            for dst in [&mut layer.spline_coeffs, &mut layer.base_weight, &mut layer.spline_scaler]
            {
                let len = dst.len();
                dst.copy_from_slice(&params[at..at + len]);
                at += len;
            }
        }
    }
}

/// Reusable buffers of one traced network forward pass.
#[derive(Debug, Default, Clone)]
pub struct ForwardTrace {
    pub(crate) n: usize,
    pub(crate) layers: Vec<LayerTrace>,
    /// Node outputs per node layer, `[n][node_count]`; entry 0 holds the
    /// masked, normalized inputs.
    pub(crate) node_out: Vec<Vec<f64>>,
    /// Physical-unit predictions, `[n][out_width]`.
    pub(crate) output: Vec<f64>,
}

impl ForwardTrace {
    fn prepare(&mut self, net: &KanNetwork, n: usize) {
        self.n = n;
        self.layers.resize(net.layers.len(), LayerTrace::default());
        self.node_out.resize(net.arch.layers.len(), Vec::new());
        for (l, spec) in net.arch.layers.iter().enumerate() {
            self.node_out[l].resize(n * spec.node_count(), 0.0);
        }
    }

    pub fn predictions(&self) -> &[f64] {
        &self.output
    }
}
