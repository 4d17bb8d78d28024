//! One KAN weight layer: a full bipartite set of edges, each carrying a
//! spline activation plus a weighted smooth base path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::SplineGrid;

/// Smooth base activation `x * logistic(x)`.
pub(crate) fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub(crate) fn silu_deriv(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Edges from `in_width` inputs to `out_width` pre-node slots. Each edge
/// (i, j) computes `S_ij * phi_ij(x_j) + W_ij * silu(x_j)` where `phi_ij` is
/// a spline in the per-input grid; the slot output is the sum over j of the
/// unmasked edges, squashed by tanh when `squash_output` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    pub(crate) in_width: usize,
    pub(crate) out_width: usize,
    /// Spline coefficients, row-major `[out_width][in_width][basis_count]`.
    pub spline_coeffs: Vec<f64>,
    /// Base-path weights, row-major `[out_width][in_width]`.
    pub base_weight: Vec<f64>,
    /// Per-edge spline amplitude, row-major `[out_width][in_width]`.
    pub spline_scaler: Vec<f64>,
    /// Active edges; a masked edge contributes exactly zero.
    pub edge_mask: Vec<bool>,
    /// One grid per input slot.
    pub grids: Vec<SplineGrid>,
    pub squash_output: bool,
}

impl KanLayer {
    /// Zero-parameter layer sharing one grid shape across inputs.
    pub fn zeroed(
        in_width: usize,
        out_width: usize,
        grid: &SplineGrid,
        squash_output: bool,
    ) -> Result<Self> {
        if in_width == 0 || out_width == 0 {
            return Err(Error::invalid("layer widths must be >= 1"));
        }
        let nb = grid.basis_count();
        Ok(KanLayer {
            in_width,
            out_width,
            spline_coeffs: vec![0.0; out_width * in_width * nb],
            base_weight: vec![0.0; out_width * in_width],
            spline_scaler: vec![1.0; out_width * in_width],
            edge_mask: vec![true; out_width * in_width],
            grids: vec![grid.clone(); in_width],
            squash_output,
        })
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn basis_count(&self) -> usize {
        self.grids[0].basis_count()
    }

    pub fn edge_active(&self, i: usize, j: usize) -> bool {
        self.edge_mask[self.eidx(i, j)]
    }

    #[inline]
    pub(crate) fn eidx(&self, i: usize, j: usize) -> usize {
        i * self.in_width + j
    }

    #[inline]
    pub(crate) fn cidx(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.in_width + j) * self.basis_count() + m
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        let edges = self.out_width * self.in_width;
        if self.in_width == 0 || self.out_width == 0 {
            return Err(Error::format(what.to_string(), "layer widths must be >= 1".to_string()));
        }
        if self.grids.len() != self.in_width {
            return Err(Error::format(
                format!("{what}.grids"),
                format!("expected {} grids, got {}", self.in_width, self.grids.len()),
            ));
        }
        let nb = self.grids[0].basis_count();
        for (j, g) in self.grids.iter().enumerate() {
            if g.basis_count() != nb {
                return Err(Error::format(
                    format!("{what}.grids[{j}]"),
                    "grids of one layer must share a basis count".to_string(),
                ));
            }
        }
        let checks = [
            ("spline_coeffs", self.spline_coeffs.len(), edges * nb),
            ("base_weight", self.base_weight.len(), edges),
            ("spline_scaler", self.spline_scaler.len(), edges),
            ("edge_mask", self.edge_mask.len(), edges),
        ];
        for (field, got, want) in checks {
            if got != want {
                return Err(Error::format(
                    format!("{what}.{field}"),
                    format!("expected {want} values, got {got}"),
                ));
            }
        }
        let finite = self
            .spline_coeffs
            .iter()
            .chain(self.base_weight.iter())
            .chain(self.spline_scaler.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::format(what.to_string(), "non-finite parameter".to_string()));
        }
        Ok(())
    }

    /// Batch forward pass; `x` is row-major `[n][in_width]`.
    pub fn forward(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        if x.len() != n * self.in_width {
            return Err(Error::invalid(format!(
                "layer input length {} does not match {} samples of width {}",
                x.len(),
                n,
                self.in_width
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("layer input contains non-finite values"));
        }
        let mut trace = LayerTrace::default();
        self.forward_trace_into(x, n, &mut trace);
        Ok(trace.post)
    }

    /// Forward pass recording every intermediate needed for gradients,
    /// attribution scores and symbolic extraction. `x` must be finite and of
    /// length `n * in_width`.
    pub(crate) fn forward_trace_into(&self, x: &[f64], n: usize, trace: &mut LayerTrace) {
        debug_assert_eq!(x.len(), n * self.in_width);
        trace.resize(n, self);
        let nb = self.basis_count();
        let iw = self.in_width;
        let ow = self.out_width;
        for s in 0..n {
            let row = &x[s * iw..(s + 1) * iw];
            for (j, &xj) in row.iter().enumerate() {
                let b = &mut trace.basis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                let db = &mut trace.dbasis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                self.grids[j].basis_into(xj, &mut trace.work, b, Some(db));
                trace.base_act[s * iw + j] = silu(xj);
                trace.dbase_act[s * iw + j] = silu_deriv(xj);
            }
            for i in 0..ow {
                let mut acc = 0.0;
                for j in 0..iw {
                    let e = s * ow * iw + i * iw + j;
                    if !self.edge_mask[self.eidx(i, j)] {
                        trace.phi[e] = 0.0;
                        trace.edge_out[e] = 0.0;
                        continue;
                    }
                    let basis = &trace.basis[(s * iw + j) * nb..(s * iw + j + 1) * nb];
                    let coeffs = &self.spline_coeffs[self.cidx(i, j, 0)..self.cidx(i, j, nb)];
                    let phi: f64 = coeffs.iter().zip(basis).map(|(c, b)| c * b).sum();
                    let out = self.spline_scaler[self.eidx(i, j)] * phi
                        + self.base_weight[self.eidx(i, j)] * trace.base_act[s * iw + j];
                    trace.phi[e] = phi;
                    trace.edge_out[e] = out;
                    acc += out;
                }
                trace.pre[s * ow + i] = acc;
                trace.post[s * ow + i] = if self.squash_output { acc.tanh() } else { acc };
            }
        }
    }
}

/// Per-layer intermediates of one traced batch forward pass.
#[derive(Debug, Default, Clone)]
pub(crate) struct LayerTrace {
    pub(crate) n: usize,
    /// Basis values per input, `[n][in_width][basis_count]`.
    pub(crate) basis: Vec<f64>,
    pub(crate) dbasis: Vec<f64>,
    /// Base activation and its derivative per input, `[n][in_width]`.
    pub(crate) base_act: Vec<f64>,
    pub(crate) dbase_act: Vec<f64>,
    /// Spline value per edge, `[n][out_width][in_width]`.
    pub(crate) phi: Vec<f64>,
    /// Masked edge output per edge, `[n][out_width][in_width]`.
    pub(crate) edge_out: Vec<f64>,
    /// Slot sums before and after the optional squash, `[n][out_width]`.
    pub(crate) pre: Vec<f64>,
    pub(crate) post: Vec<f64>,
    work: Vec<f64>,
}

impl LayerTrace {
    fn resize(&mut self, n: usize, layer: &KanLayer) {
        let nb = layer.basis_count();
        self.n = n;
        self.basis.resize(n * layer.in_width * nb, 0.0);
        self.dbasis.resize(n * layer.in_width * nb, 0.0);
        self.base_act.resize(n * layer.in_width, 0.0);
        self.dbase_act.resize(n * layer.in_width, 0.0);
        self.phi.resize(n * layer.out_width * layer.in_width, 0.0);
        self.edge_out.resize(n * layer.out_width * layer.in_width, 0.0);
        self.pre.resize(n * layer.out_width, 0.0);
        self.post.resize(n * layer.out_width, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SplineGrid {
        SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut layer = KanLayer::zeroed(2, 3, &grid(), false).unwrap();
        let x = [0.3, -0.4, 0.9, 0.1];
        let y = layer.forward(&x, 2).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));

        layer.squash_output = true;
        let y = layer.forward(&x, 2).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_edge_matches_direct_spline_evaluation() {
        let g = grid();
        let mut layer = KanLayer::zeroed(1, 1, &g, false).unwrap();
        for (m, c) in layer.spline_coeffs.iter_mut().enumerate() {
            *c = (m as f64 * 0.7).sin();
        }
        let x = 0.37;
        let y = layer.forward(&[x], 1).unwrap()[0];
        let basis = g.basis(x).unwrap();
        let phi: f64 = basis.iter().zip(&layer.spline_coeffs).map(|(b, c)| b * c).sum();
        assert!((y - phi).abs() <= 1e-15, "{y} vs {phi}");

        layer.base_weight[0] = 0.5;
        let y = layer.forward(&[x], 1).unwrap()[0];
        assert!((y - (phi + 0.5 * silu(x))).abs() <= 1e-15);
    }

    #[test]
    fn masked_edges_contribute_nothing() {
        let mut layer = KanLayer::zeroed(2, 2, &grid(), false).unwrap();
        for (m, c) in layer.spline_coeffs.iter_mut().enumerate() {
            *c = 1.0 + m as f64;
        }
        for w in layer.base_weight.iter_mut() {
            *w = 2.0;
        }
        let x = [0.5, -0.2];
        let full = layer.forward(&x, 1).unwrap();
        assert!(full.iter().any(|&v| v != 0.0));
        layer.edge_mask.fill(false);
        let masked = layer.forward(&x, 1).unwrap();
        assert!(masked.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_validates_input() {
        let layer = KanLayer::zeroed(2, 1, &grid(), false).unwrap();
        assert!(layer.forward(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(layer.forward(&[f64::NAN, 0.0], 1).is_err());
    }
}
