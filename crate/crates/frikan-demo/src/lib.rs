//! Browser bindings for the friction identification workflow. Three
//! operations back the static page in `www/`: dataset generation, a spline
//! network fit with an SVG figure, and full symbolic law extraction.
//!
//! Build with `wasm-pack build --target web --out-dir ../../www/pkg`.

use wasm_bindgen::prelude::*;

use frikan::data::{add_noise, generate_axis_dataset, FrictionDataset, NoiseSpec, Provenance};
use frikan::kan::{checkpoint_to_string, ArchSpec, KanNetwork};
use frikan::metrics::r_squared;
use frikan::optim::{fit_network, FitConfig};
use frikan::prune::{attribution_scores, prune, PruneConfig};
use frikan::report::render_svg_plot;
use frikan::symbolic::{symbolify, SymbolifyConfig};
use frikan::{Error, Result};

/// Synthetic velocity-torque CSV for one reference axis; `lambda` > 0 adds
/// Gaussian torque noise with that fraction of the torque range as sigma.
#[wasm_bindgen]
pub fn generate_csv(axis: usize, n: usize, lambda: f64, seed: u64) -> std::result::Result<String, JsError> {
    Ok(generate_csv_impl(axis, n, lambda, seed)?)
}

/// Fits a spline-edge network to CSV text and returns JSON with the train
/// r^2, an SVG figure and the serialized checkpoint.
#[wasm_bindgen]
pub fn fit_csv(
    csv: &str,
    arch: &str,
    grid: usize,
    steps: usize,
    seed: u64,
) -> std::result::Result<String, JsError> {
    Ok(fit_csv_impl(csv, arch, grid, steps, seed)?)
}

/// Full workflow on CSV text: fit [1,[5,2],1], prune, fine-tune, extract a
/// symbolic law. Returns JSON with the expression, r^2 values and an SVG.
#[wasm_bindgen]
pub fn extract_law(csv: &str, seed: u64) -> std::result::Result<String, JsError> {
    Ok(extract_law_impl(csv, seed)?)
}

pub fn generate_csv_impl(axis: usize, n: usize, lambda: f64, seed: u64) -> Result<String> {
    let mut data = generate_axis_dataset(axis, n, (-1.0, 1.0), seed)?;
    if lambda > 0.0 {
        data = add_noise(&data, &NoiseSpec::half_lambda(2.0 * lambda, seed))?;
    }
    let mut text = String::from("velocity,torque\n");
    for (v, t) in data.velocities.iter().zip(&data.torques) {
        text.push_str(&format!("{v},{t}\n"));
    }
    Ok(text)
}

/// Two-column CSV text (`velocity,torque`, extra columns ignored).
pub fn parse_csv(text: &str) -> Result<FrictionDataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::invalid("empty CSV"))?;
    if !header.trim_start().starts_with("velocity") {
        return Err(Error::invalid("first CSV line must be a velocity,torque header"));
    }
    let mut velocities = Vec::new();
    let mut torques = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut cells = line.split(',');
        let (v, t) = match (cells.next(), cells.next()) {
            (Some(v), Some(t)) => (v, t),
            _ => return Err(Error::invalid(format!("row {}: expected two columns", i + 2))),
        };
        let parse = |cell: &str, what: &str| {
            cell.trim().parse::<f64>().map_err(|_| {
                Error::invalid(format!("row {}: {what} {cell:?} is not a number", i + 2))
            })
        };
        velocities.push(parse(v, "velocity")?);
        torques.push(parse(t, "torque")?);
    }
    FrictionDataset::new(velocities, torques, Provenance::Unspecified)
}

pub fn fit_csv_impl(csv: &str, arch: &str, grid: usize, steps: usize, seed: u64) -> Result<String> {
    let data = parse_csv(csv)?;
    let arch = ArchSpec::parse(arch, grid, 3)?;
    let mut net = KanNetwork::init(&arch, seed)?;
    fit_network(&mut net, &data, &FitConfig::lbfgs(steps))?;
    let predictions = net.predict(&data.velocities)?;
    let r2 = r_squared(&data.torques, &predictions)?;
    let svg = render_svg_plot(
        &format!("{arch} fit, r^2 = {r2:.5}"),
        &data.velocities,
        &data.torques,
        &predictions,
    )?;
    let report = serde_json::json!({
        "r_squared": r2,
        "svg": svg,
        "checkpoint": checkpoint_to_string(&net)?,
    });
    Ok(report.to_string())
}

pub fn extract_law_impl(csv: &str, seed: u64) -> Result<String> {
    let data = parse_csv(csv)?;
    let arch = ArchSpec::parse("[1,[5,2],1]", 3, 3)?;
    let mut net = KanNetwork::init(&arch, seed)?;
    fit_network(&mut net, &data, &FitConfig::lbfgs(300))?;
    let scores = attribution_scores(&net, &data)?;
    let (mut pruned, prune_report) = prune(&net, &scores, &PruneConfig::default())?;
    fit_network(&mut pruned, &data, &FitConfig::lbfgs(50))?;
    let model = symbolify(&pruned, &data, &SymbolifyConfig::default())?;

    let predictions = model.eval(&data.velocities)?;
    let svg = render_svg_plot(
        &format!("extracted law, r^2 = {:.5}", model.r_squared_train),
        &data.velocities,
        &data.torques,
        &predictions,
    )?;
    let report = serde_json::json!({
        "expression": model.rendered,
        "fully_symbolic": model.fully_symbolic,
        "r_squared": model.r_squared_train,
        "r_squared_vs_network": model.r_squared_vs_network,
        "nodes_removed": prune_report.nodes_removed.len(),
        "edges_removed": prune_report.edges_removed.len(),
        "svg": svg,
    });
    Ok(report.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_csv_round_trips_through_the_parser() {
        let text = generate_csv_impl(2, 40, 0.0, 3).unwrap();
        assert!(text.starts_with("velocity,torque\n"));
        let data = parse_csv(&text).unwrap();
        assert_eq!(data.len(), 40);

        let noisy = generate_csv_impl(2, 40, 0.05, 3).unwrap();
        let noisy = parse_csv(&noisy).unwrap();
        assert_eq!(data.velocities, noisy.velocities);
        assert_ne!(data.torques, noisy.torques);
    }

    #[test]
    fn parser_rejects_malformed_text() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("x,y\n1,2\n").is_err());
        assert!(parse_csv("velocity,torque\n1\n").is_err());
        assert!(parse_csv("velocity,torque\n1,abc\n").is_err());
    }

    #[test]
    fn fit_report_carries_figure_and_checkpoint() {
        let csv = generate_csv_impl(1, 80, 0.0, 1).unwrap();
        let report = fit_csv_impl(&csv, "[1,3,1]", 5, 40, 0).unwrap();
        let report: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert!(report["r_squared"].as_f64().unwrap() > 0.99);
        assert!(report["svg"].as_str().unwrap().starts_with("<svg"));
        assert!(report["checkpoint"].as_str().unwrap().contains("arch"));
    }

    #[test]
    fn law_extraction_emits_an_expression() {
        let csv = generate_csv_impl(2, 300, 0.0, 2).unwrap();
        let report = extract_law_impl(&csv, 0).unwrap();
        let report: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert!(report["r_squared"].as_f64().unwrap() > 0.99);
        assert!(report["expression"].as_str().unwrap().contains('v'));
        assert!(report["svg"].as_str().unwrap().ends_with("</svg>\n"));
    }
}
