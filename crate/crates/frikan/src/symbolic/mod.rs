//! Symbolic extraction: fit closed-form functions to individual network
//! edges, keep the ones that hold up, refit their parameters jointly, and
//! assemble the whole network into one expression.

pub mod expr;
pub mod fit;
pub mod library;

pub use expr::{parse_expr, Expr, SplineLeaf};
pub use fit::{fit_edge, AffineParams, EdgeFit};
pub use library::{default_library, FunctionLibrary, LibraryEntry};

use serde::{Deserialize, Serialize};

use crate::data::FrictionDataset;
use crate::error::{Error, Result};
use crate::kan::{ForwardTrace, KanLayer, KanNetwork};
use crate::metrics;
use crate::prune::node_of_slot;
use fit::{refit_mixed, EdgeKind, MixedModel};

/// Acceptance threshold and refit budget of `symbolify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolifyConfig {
    /// Minimum per-edge r^2 for a symbolic replacement to stick; rejected
    /// edges stay splines.
    pub accept_threshold: f64,
    /// L-BFGS steps of the joint refinement over all accepted edges.
    pub refit_steps: usize,
}

impl Default for SymbolifyConfig {
    fn default() -> Self {
        SymbolifyConfig { accept_threshold: 0.9, refit_steps: 50 }
    }
}

impl SymbolifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.accept_threshold.is_nan() {
            return Err(Error::invalid("accept threshold must not be NaN"));
        }
        Ok(())
    }
}

/// Fate of one active edge during extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EdgeOutcome {
    Replaced(EdgeFit),
    /// Kept as a spline; `best` is the strongest rejected candidate, absent
    /// when no library function was admissible on this edge.
    KeptSpline { best: Option<EdgeFit> },
}

/// One active edge and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicEdge {
    pub layer: usize,
    pub slot: usize,
    pub input: usize,
    pub outcome: EdgeOutcome,
}

/// A network condensed into one expression, with the per-edge audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolicModel {
    pub expr: Expr,
    /// `expr` in text form; parseable back iff `fully_symbolic`.
    pub rendered: String,
    pub edges: Vec<SymbolicEdge>,
    pub fully_symbolic: bool,
    /// r^2 of the expression against the training torques.
    pub r_squared_train: f64,
    /// r^2 of the expression against the predictions of the network it
    /// condenses.
    pub r_squared_vs_network: f64,
}

impl SymbolicModel {
    pub fn eval(&self, velocities: &[f64]) -> Result<Vec<f64>> {
        velocities.iter().map(|&v| self.expr.eval(v)).collect()
    }
}

/// Ranks every admissible library function for one edge, best first: higher
/// r^2, then lower complexity, then name. The edge must be active.
pub fn suggest_symbolic(
    net: &KanNetwork,
    data: &FrictionDataset,
    layer: usize,
    slot: usize,
    input: usize,
) -> Result<Vec<EdgeFit>> {
    net.validate()?;
    data.validate()?;
    check_univariate(net)?;
    let kl = net
        .layers()
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("network has no layer {layer}")))?;
    if slot >= kl.out_width() || input >= kl.in_width() {
        return Err(Error::invalid(format!(
            "layer {layer} has no edge ({slot}, {input}); widths are {} -> {}",
            kl.in_width(),
            kl.out_width()
        )));
    }
    if !edge_is_active(net, layer, slot, input) {
        return Err(Error::invalid(format!(
            "edge ({slot}, {input}) of layer {layer} is inactive; nothing flows through it"
        )));
    }
    let mut trace = ForwardTrace::default();
    net.forward_trace(&data.velocities, data.len(), &mut trace)?;
    let (x, y) = edge_samples(&trace, kl, layer, slot, input, data.len());
    rank_entries(&x, &y, &default_library())
}

/// Replaces every active edge whose best candidate reaches the threshold,
/// refits the accepted parameters jointly, and folds the result into a
/// single expression in the physical units of the data.
pub fn symbolify(
    net: &KanNetwork,
    data: &FrictionDataset,
    config: &SymbolifyConfig,
) -> Result<SymbolicModel> {
    config.validate()?;
    data.validate()?;
    if data.len() < 8 {
        return Err(Error::invalid(format!(
            "symbolic extraction needs at least 8 samples, got {}",
            data.len()
        )));
    }
    let library = default_library();
    let mut model = MixedModel::new(net, &library)?;

    let mut trace = ForwardTrace::default();
    net.forward_trace(&data.velocities, data.len(), &mut trace)?;

    let mut edges = Vec::new();
    for (l, kl) in net.layers().iter().enumerate() {
        for slot in 0..kl.out_width() {
            for input in 0..kl.in_width() {
                if !edge_is_active(net, l, slot, input) {
                    continue;
                }
                let (x, y) = edge_samples(&trace, kl, l, slot, input, data.len());
                let outcome = match rank_entries(&x, &y, &library) {
                    Ok(fits) => match fits.into_iter().next() {
                        Some(best) if best.r_squared >= config.accept_threshold => {
                            model.replace_edge(l, slot, input, &best.name, best.params)?;
                            EdgeOutcome::Replaced(best)
                        }
                        best => EdgeOutcome::KeptSpline { best },
                    },
                    // Constant edge input: no shape to fit, keep the spline.
                    Err(Error::InvalidArgument(_)) => EdgeOutcome::KeptSpline { best: None },
                    Err(e) => return Err(e),
                };
                edges.push(SymbolicEdge { layer: l, slot, input, outcome });
            }
        }
    }

    refit_mixed(&mut model, data, config.refit_steps)?;

    // Pull the jointly refined parameters back into the audit trail.
    for edge in &mut edges {
        if let EdgeOutcome::Replaced(fit) = &mut edge.outcome {
            if let EdgeKind::Symbolic { params, .. } =
                model.edge_kind(edge.layer, edge.slot, edge.input)
            {
                fit.params = params;
            }
        }
    }

    let expr = build_expr(net, &model, &library);
    let rendered = expr.render();
    let fully_symbolic = expr.is_fully_symbolic();
    let predictions: Vec<f64> =
        data.velocities.iter().map(|&v| expr.eval(v)).collect::<Result<_>>()?;
    let r_squared_train = metrics::r_squared(&data.torques, &predictions)?;
    let net_predictions = net.predict(&data.velocities)?;
    let r_squared_vs_network = metrics::r_squared(&net_predictions, &predictions)?;
    Ok(SymbolicModel {
        expr,
        rendered,
        edges,
        fully_symbolic,
        r_squared_train,
        r_squared_vs_network,
    })
}

fn check_univariate(net: &KanNetwork) -> Result<()> {
    if net.in_width() != 1 || net.out_width() != 1 {
        return Err(Error::invalid(format!(
            "symbolic extraction expects a univariate network, this one is {} -> {}",
            net.in_width(),
            net.out_width()
        )));
    }
    Ok(())
}

/// An edge carries signal only when itself, its source node and the node fed
/// by its slot are all unmasked.
fn edge_is_active(net: &KanNetwork, layer: usize, slot: usize, input: usize) -> bool {
    let spec = &net.arch().layers[layer + 1];
    net.layers()[layer].edge_active(slot, input)
        && net.node_masks()[layer][input]
        && net.node_masks()[layer + 1][node_of_slot(spec, slot)]
}

/// Edge inputs and outputs of one traced batch.
fn edge_samples(
    trace: &ForwardTrace,
    layer: &KanLayer,
    l: usize,
    slot: usize,
    input: usize,
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (iw, ow) = (layer.in_width(), layer.out_width());
    let x = (0..n).map(|s| trace.node_out[l][s * iw + input]).collect();
    let y = (0..n).map(|s| trace.layers[l].edge_out[s * ow * iw + slot * iw + input]).collect();
    (x, y)
}

fn rank_entries(x: &[f64], y: &[f64], library: &FunctionLibrary) -> Result<Vec<EdgeFit>> {
    let mut fits = Vec::new();
    for entry in library.entries() {
        match fit_edge(x, y, entry) {
            Ok(fit) => fits.push(fit),
            // Functions whose domain excludes this edge drop out silently.
            Err(Error::Domain { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    fits.sort_by(|p, q| {
        q.r_squared
            .total_cmp(&p.r_squared)
            .then(p.complexity.cmp(&q.complexity))
            .then_with(|| p.name.cmp(&q.name))
    });
    Ok(fits)
}

/// Folds the mixed model into one expression tree, inlining the input and
/// output normalization so the tree maps physical velocity to physical
/// torque.
fn build_expr(net: &KanNetwork, model: &MixedModel<'_>, library: &FunctionLibrary) -> Expr {
    let input = net.input_norm()[0];
    let mut nodes = vec![if net.node_masks()[0][0] {
        affine_expr(input.scale, Expr::Var, input.offset)
    } else {
        Expr::Const(0.0)
    }];

    for (l, kl) in net.layers().iter().enumerate() {
        let (iw, ow, nb) = (kl.in_width(), kl.out_width(), kl.basis_count());
        let mut post = Vec::with_capacity(ow);
        for slot in 0..ow {
            let mut terms = Vec::new();
            for input in 0..iw {
                match model.edge_kind(l, slot, input) {
                    EdgeKind::Masked => {}
                    EdgeKind::Spline => {
                        terms.push(Expr::Spline(Box::new(SplineLeaf {
                            grid: kl.grids[input].clone(),
                            coeffs: kl.spline_coeffs
                                [kl.cidx(slot, input, 0)..kl.cidx(slot, input, nb)]
                                .to_vec(),
                            scaler: kl.spline_scaler[kl.eidx(slot, input)],
                            base_weight: kl.base_weight[kl.eidx(slot, input)],
                            inner: nodes[input].clone(),
                        })));
                    }
                    EdgeKind::Symbolic { entry, params } => {
                        terms.push(edge_expr(library.entries()[entry].name, params, &nodes[input]));
                    }
                }
            }
            let sum = terms.into_iter().reduce(Expr::add).unwrap_or(Expr::Const(0.0));
            post.push(if kl.squash_output && !is_zero(&sum) {
                Expr::call("tanh", sum)
            } else {
                sum
            });
        }

        let spec = &net.arch().layers[l + 1];
        let n_add = spec.additive();
        let mask = &net.node_masks()[l + 1];
        let mut next = Vec::with_capacity(spec.node_count());
        for k in 0..n_add {
            next.push(if mask[k] { post[k].clone() } else { Expr::Const(0.0) });
        }
        for t in 0..spec.multiplicative() {
            let node = n_add + t;
            let (a, b) = (&post[n_add + 2 * t], &post[n_add + 2 * t + 1]);
            next.push(if !mask[node] || is_zero(a) || is_zero(b) {
                Expr::Const(0.0)
            } else {
                Expr::mul(a.clone(), b.clone())
            });
        }
        nodes = next;
    }

    let output = net.output_norm()[0];
    affine_expr(output.scale, nodes.swap_remove(0), output.offset)
}

/// Structural zero: a literal constant 0 introduced by masking, safe to fold.
fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

/// `scale * inner + offset` with the trivial factors folded away.
fn affine_expr(scale: f64, inner: Expr, offset: f64) -> Expr {
    let scaled =
        if scale == 1.0 { inner } else { Expr::mul(Expr::Const(scale), inner) };
    if offset == 0.0 {
        scaled
    } else {
        Expr::add(scaled, Expr::Const(offset))
    }
}

/// `c * f(a * x + b) + d` for one symbolic edge.
fn edge_expr(name: &str, p: AffineParams, x: &Expr) -> Expr {
    let u = affine_expr(p.a, x.clone(), p.b);
    let f = entry_expr(name, u);
    let cf = if p.c == 1.0 { f } else { Expr::mul(Expr::Const(p.c), f) };
    if p.d == 0.0 {
        cf
    } else {
        Expr::add(cf, Expr::Const(p.d))
    }
}

/// Tree form of a library function applied to `u`. Power-law entries become
/// operator expressions; everything else stays a named call.
fn entry_expr(name: &str, u: Expr) -> Expr {
    let int_pow = |u: Expr, k: f64| Expr::pow(u, Expr::Const(k));
    match name {
        "x" => u,
        "x^2" => int_pow(u, 2.0),
        "x^3" => int_pow(u, 3.0),
        "x^4" => int_pow(u, 4.0),
        "x^5" => int_pow(u, 5.0),
        "1/x" => Expr::div(Expr::Const(1.0), u),
        "1/x^2" => Expr::div(Expr::Const(1.0), int_pow(u, 2.0)),
        "1/x^5" => Expr::div(Expr::Const(1.0), int_pow(u, 5.0)),
        _ => Expr::call(name, u),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_axis_dataset, Provenance};
    use crate::kan::ArchSpec;
    use crate::optim::{fit_network, FitConfig};

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn smooth_dataset(n: usize) -> FrictionDataset {
        let v = linspace(-1.0, 1.0, n);
        let t = v.iter().map(|&v| 2.0 * (3.0 * v).tanh() + 0.4 * v).collect();
        FrictionDataset::new(v, t, Provenance::Unspecified).unwrap()
    }

    #[test]
    fn suggestions_are_ranked_and_deterministic() {
        let data = generate_axis_dataset(1, 64, (-1.0, 1.0), 2).unwrap();
        let arch = ArchSpec::parse("[1,3,1]", 5, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 4).unwrap();
        net.freeze_normalization(&data).unwrap();

        let fits = suggest_symbolic(&net, &data, 0, 1, 0).unwrap();
        assert!(!fits.is_empty());
        for pair in fits.windows(2) {
            let better = pair[0].r_squared >= pair[1].r_squared;
            let tie = pair[0].r_squared == pair[1].r_squared;
            assert!(better, "ranking out of order: {pair:?}");
            if tie {
                assert!(pair[0].complexity <= pair[1].complexity);
            }
        }
        for fit in &fits {
            assert!(fit.r_squared <= 1.0 + 1e-9, "{} scored {}", fit.name, fit.r_squared);
        }
        assert_eq!(fits, suggest_symbolic(&net, &data, 0, 1, 0).unwrap());
    }

    #[test]
    fn suggest_rejects_inactive_edges_and_bad_indices() {
        let data = generate_axis_dataset(1, 32, (-1.0, 1.0), 2).unwrap();
        let arch = ArchSpec::parse("[1,2,1]", 4, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 1).unwrap();
        net.freeze_normalization(&data).unwrap();
        assert!(suggest_symbolic(&net, &data, 5, 0, 0).is_err());
        assert!(suggest_symbolic(&net, &data, 0, 9, 0).is_err());
        net.layers_mut()[0].edge_mask[0] = false;
        assert!(suggest_symbolic(&net, &data, 0, 0, 0).is_err());
        net.layers_mut()[0].edge_mask[0] = true;
        net.set_node_mask(1, 0, false).unwrap();
        assert!(suggest_symbolic(&net, &data, 0, 0, 0).is_err());
    }

    #[test]
    fn gaussian_ranks_high_for_a_symmetric_decay_bump() {
        let x = linspace(-1.0, 1.0, 200);
        let y: Vec<f64> = x.iter().map(|&v| (-v.abs() * 3.0).exp()).collect();
        let fits = rank_entries(&x, &y, &default_library()).unwrap();
        assert!(
            fits[..2].iter().any(|f| f.name == "gaussian"),
            "top two were {} and {}",
            fits[0].name,
            fits[1].name
        );
        assert!(fits[0].r_squared >= 0.95, "best fit only reached {}", fits[0].r_squared);
    }

    #[test]
    fn infinite_threshold_keeps_the_network() {
        let data = generate_axis_dataset(2, 48, (-1.0, 1.0), 7).unwrap();
        let arch = ArchSpec::parse("[1,[2,1],1]", 4, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 3).unwrap();
        net.freeze_normalization(&data).unwrap();

        let config =
            SymbolifyConfig { accept_threshold: f64::INFINITY, refit_steps: 50 };
        let model = symbolify(&net, &data, &config).unwrap();
        assert!(!model.fully_symbolic);
        assert!(model
            .edges
            .iter()
            .all(|e| matches!(e.outcome, EdgeOutcome::KeptSpline { .. })));
        // All edges stayed splines, so the expression IS the network.
        assert!(
            model.r_squared_vs_network >= 1.0 - 1e-12,
            "all-spline tree drifted: {}",
            model.r_squared_vs_network
        );
        assert!(model.rendered.contains("spline("));
        assert!(parse_expr(&model.rendered).is_err());
    }

    #[test]
    fn zero_threshold_replaces_every_active_edge() {
        let data = generate_axis_dataset(1, 48, (-1.0, 1.0), 5).unwrap();
        let arch = ArchSpec::parse("[1,2,1]", 4, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 6).unwrap();
        net.freeze_normalization(&data).unwrap();

        let config = SymbolifyConfig { accept_threshold: 0.0, refit_steps: 10 };
        let model = symbolify(&net, &data, &config).unwrap();
        assert!(model.fully_symbolic, "leftover splines: {}", model.rendered);
        assert!(model.edges.iter().all(|e| matches!(e.outcome, EdgeOutcome::Replaced(_))));
        let parsed = parse_expr(&model.rendered).unwrap();
        for &v in &data.velocities[..8] {
            let a = model.expr.eval(v).unwrap();
            let b = parsed.eval(v).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn extracts_a_smooth_law_from_a_trained_net() {
        let data = smooth_dataset(200);
        let arch = ArchSpec::parse("[1,3,1]", 5, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 1).unwrap();
        fit_network(&mut net, &data, &FitConfig::lbfgs(200)).unwrap();

        let model = symbolify(&net, &data, &SymbolifyConfig::default()).unwrap();
        assert_eq!(model.edges.len(), 6, "every active edge should be audited");
        assert!(
            model.r_squared_vs_network >= 0.95,
            "expression lost the network: {}",
            model.r_squared_vs_network
        );
        assert!(
            model.r_squared_train >= 0.95,
            "expression lost the data: {}",
            model.r_squared_train
        );
        let direct = model.eval(&data.velocities).unwrap();
        for (&v, &d) in data.velocities.iter().zip(&direct) {
            assert_eq!(model.expr.eval(v).unwrap(), d);
        }
        assert_eq!(model.fully_symbolic, !model.rendered.contains("spline("));
        if model.fully_symbolic {
            parse_expr(&model.rendered).unwrap();
        }
    }

    #[test]
    fn symbolify_is_deterministic() {
        let v = linspace(-1.0, 1.0, 64);
        let t = v.iter().map(|&v| (4.0 * v).tanh()).collect();
        let data = FrictionDataset::new(v, t, Provenance::Unspecified).unwrap();
        let arch = ArchSpec::parse("[1,2,1]", 4, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 9).unwrap();
        fit_network(&mut net, &data, &FitConfig::lbfgs(100)).unwrap();

        let a = symbolify(&net, &data, &SymbolifyConfig::default()).unwrap();
        let b = symbolify(&net, &data, &SymbolifyConfig::default()).unwrap();
        assert_eq!(a.rendered, b.rendered);
        assert_eq!(a.r_squared_train.to_bits(), b.r_squared_train.to_bits());
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn single_layer_tree_folds_norms_exactly() {
        let data = generate_axis_dataset(3, 32, (-1.0, 1.0), 8).unwrap();
        let arch = ArchSpec::parse("[1,1]", 5, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 2).unwrap();
        net.freeze_normalization(&data).unwrap();

        let config = SymbolifyConfig { accept_threshold: f64::INFINITY, refit_steps: 0 };
        let model = symbolify(&net, &data, &config).unwrap();
        let want = net.predict(&data.velocities).unwrap();
        let got = model.eval(&data.velocities).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_multivariate_networks_and_short_data() {
        let arch = ArchSpec::parse("[2,2,1]", 4, 3).unwrap();
        let net = KanNetwork::init(&arch, 0).unwrap();
        let data = generate_axis_dataset(1, 32, (-1.0, 1.0), 1).unwrap();
        assert!(symbolify(&net, &data, &SymbolifyConfig::default()).is_err());
        assert!(suggest_symbolic(&net, &data, 0, 0, 0).is_err());

        let uni = KanNetwork::init(&ArchSpec::parse("[1,2,1]", 4, 3).unwrap(), 0).unwrap();
        let short = generate_axis_dataset(1, 7, (-1.0, 1.0), 1).unwrap();
        assert!(symbolify(&uni, &short, &SymbolifyConfig::default()).is_err());
        let nan_cfg = SymbolifyConfig { accept_threshold: f64::NAN, refit_steps: 1 };
        assert!(symbolify(&uni, &data, &nan_cfg).is_err());
    }
}
