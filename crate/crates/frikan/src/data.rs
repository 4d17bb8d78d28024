//! Velocity-torque datasets: synthetic generation, noise injection,
//! subsampling and CSV exchange.
//!
//! CSV format: header `velocity,torque` followed by one sample per row.
//! Additional named columns (e.g. `time`, `tau_mcg`) are carried along as
//! extra channels.

use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::friction::{axis_params, stribeck, StribeckParams};

/// How a dataset came to be, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { axis: usize, params: StribeckParams, seed: u64 },
    Noisy { base: Box<Provenance>, spec: NoiseSpec },
    Subsampled { base: Box<Provenance>, fraction: f64, seed: u64 },
    File { path: String },
    Unspecified,
}

/// Gaussian torque-noise specification. The standard deviation is a fraction
/// of the observed torque range: 0.25 for `QuarterRange`, `lambda / 2` for
/// `HalfLambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    QuarterRange,
    HalfLambda,
}

impl NoiseSpec {
    pub fn quarter_range(seed: u64) -> Self {
        NoiseSpec { mode: NoiseMode::QuarterRange, lambda: 0.0, seed }
    }

    pub fn half_lambda(lambda: f64, seed: u64) -> Self {
        NoiseSpec { mode: NoiseMode::HalfLambda, lambda, seed }
    }

    /// Fraction of the torque range used as noise standard deviation.
    pub fn range_fraction(&self) -> f64 {
        match self.mode {
            NoiseMode::QuarterRange => 0.25,
            NoiseMode::HalfLambda => self.lambda / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid(format!("noise lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Paired velocity (rad/s) and torque (N·m) samples, plus optional extra
/// channels of the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionDataset {
    pub velocities: Vec<f64>,
    pub torques: Vec<f64>,
    pub provenance: Provenance,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl FrictionDataset {
    pub fn new(velocities: Vec<f64>, torques: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let data = FrictionDataset { velocities, torques, provenance, channels: Vec::new() };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.velocities.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if self.velocities.len() != self.torques.len() {
            return Err(Error::invalid(format!(
                "velocity/torque length mismatch: {} vs {}",
                self.velocities.len(),
                self.torques.len()
            )));
        }
        for (name, values) in &self.channels {
            if values.len() != self.velocities.len() {
                return Err(Error::invalid(format!(
                    "channel {name} has {} values for {} samples",
                    values.len(),
                    self.velocities.len()
                )));
            }
        }
        let all_finite = self
            .velocities
            .iter()
            .chain(self.torques.iter())
            .chain(self.channels.iter().flat_map(|(_, v)| v.iter()))
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn push_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.channel(&name).is_some() {
            return Err(Error::invalid(format!("duplicate channel {name}")));
        }
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "channel {name} has {} values for {} samples",
                values.len(),
                self.len()
            )));
        }
        self.channels.push((name, values));
        Ok(())
    }

    /// Reads `velocity,torque[,...]` CSV; extra columns become channels.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.len() < 2 || headers[0] != "velocity" || headers[1] != "torque" {
            return Err(Error::format(
                format!("{}: header", path.display()),
                format!("expected columns starting with velocity,torque, got {headers:?}"),
            ));
        }
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::format(
                    format!("{}: row {}", path.display(), row_idx + 2),
                    format!("expected {} fields, got {}", headers.len(), record.len()),
                ));
            }
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::format(
                        format!("{}: row {} column {}", path.display(), row_idx + 2, headers[col]),
                        format!("not a decimal number: {field:?}"),
                    )
                })?;
                columns[col].push(value);
            }
        }
        let mut columns = columns.into_iter();
        let velocities = columns.next().unwrap();
        let torques = columns.next().unwrap();
        let data = FrictionDataset {
            velocities,
            torques,
            provenance: Provenance::File { path: path.display().to_string() },
            channels: headers.into_iter().skip(2).zip(columns).collect(),
        };
        data.validate()?;
        Ok(data)
    }

    /// Writes `velocity,torque[,...]` CSV with one row per sample.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec!["velocity".to_string(), "torque".to_string()];
        header.extend(self.channels.iter().map(|(n, _)| n.clone()));
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format_float(self.velocities[i]), format_float(self.torques[i])];
            row.extend(self.channels.iter().map(|(_, v)| format_float(v[i])));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Shortest decimal representation that parses back to the same f64.
pub(crate) fn format_float(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains(['.', 'e', 'n', 'i']) {
        s.push_str(".0");
    }
    s
}

/// Generates `n` samples of reference axis `axis`: velocities uniform over
/// `v_range`, torques from the axis ground truth. Deterministic per seed.
pub fn generate_axis_dataset(
    axis: usize,
    n: usize,
    v_range: (f64, f64),
    seed: u64,
) -> Result<FrictionDataset> {
    let params = axis_params(axis)?;
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let (lo, hi) = v_range;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::invalid(format!("velocity range must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let velocities: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let torques = velocities.iter().map(|&v| stribeck(v, &params)).collect();
    FrictionDataset::new(velocities, torques, Provenance::Synthetic { axis, params, seed })
}

/// Adds zero-mean Gaussian noise to the torques; velocities and channels are
/// untouched. Std = `spec.range_fraction()` times the observed torque range.
pub fn add_noise(data: &FrictionDataset, spec: &NoiseSpec) -> Result<FrictionDataset> {
    data.validate()?;
    spec.validate()?;
    let (min, max) = data
        .torques
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    let std = spec.range_fraction() * (max - min);
    let mut out = data.clone();
    out.provenance =
        Provenance::Noisy { base: Box::new(data.provenance.clone()), spec: *spec };
    if std > 0.0 {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::invalid(format!("noise std {std} invalid: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for t in &mut out.torques {
            *t += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Uniform sample without replacement of `round(fraction * n)` samples.
/// Extra channels are subsampled with the same indices.
pub fn subsample(data: &FrictionDataset, fraction: f64, seed: u64) -> Result<FrictionDataset> {
    data.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = data.len();
    let k = (fraction * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {n} samples selects nothing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = index_sample(&mut rng, n, k);
    let pick = |src: &[f64]| indices.iter().map(|i| src[i]).collect::<Vec<f64>>();
    let out = FrictionDataset {
        velocities: pick(&data.velocities),
        torques: pick(&data.torques),
        provenance: Provenance::Subsampled {
            base: Box::new(data.provenance.clone()),
            fraction,
            seed,
        },
        channels: data.channels.iter().map(|(n, v)| (n.clone(), pick(v))).collect(),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_axis_dataset(2, 100, (-1.0, 1.0), 42).unwrap();
        let b = generate_axis_dataset(2, 100, (-1.0, 1.0), 42).unwrap();
        assert_eq!(a, b);
        let c = generate_axis_dataset(2, 100, (-1.0, 1.0), 43).unwrap();
        assert_ne!(a.velocities, c.velocities);
        assert!(a.velocities.iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn generation_validates_arguments() {
        assert!(generate_axis_dataset(7, 10, (-1.0, 1.0), 0).is_err());
        assert!(generate_axis_dataset(1, 0, (-1.0, 1.0), 0).is_err());
        assert!(generate_axis_dataset(1, 10, (1.0, -1.0), 0).is_err());
    }

    #[test]
    fn noise_std_follows_observed_range() {
        let data = generate_axis_dataset(1, 2000, (-1.0, 1.0), 7).unwrap();
        let spec = NoiseSpec::quarter_range(123);
        let noisy = add_noise(&data, &spec).unwrap();
        assert_eq!(noisy.velocities, data.velocities);
        assert_eq!(noisy.len(), data.len());

        let (min, max) = data
            .torques
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
        let expected_std = 0.25 * (max - min);
        let diffs: Vec<f64> =
            noisy.torques.iter().zip(&data.torques).map(|(n, c)| n - c).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64;
        assert!(mean.abs() <= 4.0 * expected_std / (diffs.len() as f64).sqrt(), "mean {mean}");
        assert!((var.sqrt() - expected_std).abs() <= 0.1 * expected_std, "std {}", var.sqrt());
    }

    #[test]
    fn zero_lambda_noise_is_identity() {
        let data = generate_axis_dataset(1, 50, (-1.0, 1.0), 1).unwrap();
        let noisy = add_noise(&data, &NoiseSpec::half_lambda(0.0, 9)).unwrap();
        assert_eq!(noisy.torques, data.torques);
    }

    #[test]
    fn subsample_sizes_and_determinism() {
        let data = generate_axis_dataset(1, 1000, (-1.0, 1.0), 3).unwrap();
        let s = subsample(&data, 0.1, 5).unwrap();
        assert_eq!(s.len(), 100);
        let s2 = subsample(&data, 0.1, 5).unwrap();
        assert_eq!(s, s2);

        let full = subsample(&data, 1.0, 5).unwrap();
        assert_eq!(full.len(), data.len());
        let mut got: Vec<(u64, u64)> = full
            .velocities
            .iter()
            .zip(&full.torques)
            .map(|(v, t)| (v.to_bits(), t.to_bits()))
            .collect();
        let mut want: Vec<(u64, u64)> = data
            .velocities
            .iter()
            .zip(&data.torques)
            .map(|(v, t)| (v.to_bits(), t.to_bits()))
            .collect();
        got.sort_unstable();
        want.sort_unstable();
        assert_eq!(got, want, "fraction 1.0 must be a permutation");

        assert!(subsample(&data, 0.0, 5).is_err());
        assert!(subsample(&data, 1.5, 5).is_err());
    }

    #[test]
    fn csv_round_trip_with_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut data = generate_axis_dataset(4, 25, (-1.0, 1.0), 11).unwrap();
        data.push_channel("time", (0..25).map(|i| i as f64 * 0.004).collect()).unwrap();
        data.push_channel("tau_mcg", vec![1.5; 25]).unwrap();
        data.write_csv(&path).unwrap();

        let loaded = FrictionDataset::read_csv(&path).unwrap();
        assert_eq!(loaded.velocities, data.velocities);
        assert_eq!(loaded.torques, data.torques);
        assert_eq!(loaded.channels, data.channels);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("velocity,torque,time,tau_mcg\n"));
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = dir.path().join("bad_header.csv");
        std::fs::write(&bad_header, "speed,torque\n1.0,2.0\n").unwrap();
        assert!(FrictionDataset::read_csv(&bad_header).is_err());

        let bad_value = dir.path().join("bad_value.csv");
        std::fs::write(&bad_value, "velocity,torque\n1.0,fast\n").unwrap();
        let err = FrictionDataset::read_csv(&bad_value).unwrap_err();
        assert!(err.to_string().contains("torque"), "{err}");

        assert!(FrictionDataset::read_csv(dir.path().join("missing.csv")).is_err());
    }
}
