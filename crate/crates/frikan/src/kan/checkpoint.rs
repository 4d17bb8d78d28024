//! Network checkpoints: versioned JSON documents that round-trip the full
//! network state bit for bit.
//!
//! Layout:
//! ```json
//! {
//!   "format_version": 1,
//!   "network": {
//!     "arch": { "layers": [...], "grid": 10, "order": 3 },
//!     "layers": [ { "in_width": ..., "spline_coeffs": [...], ... } ],
//!     "node_masks": [[true, ...]],
//!     "input_norm": [{ "scale": ..., "offset": ... }],
//!     "output_norm": [...],
//!     "norms_frozen": true,
//!     "seed": 0
//!   }
//! }
//! ```
//! Floats are written as shortest decimal strings that parse back to the
//! identical bit pattern, so save -> load -> save reproduces the bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::KanNetwork;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    network: KanNetwork,
}

/// Serializes a checkpoint to a JSON string.
pub fn checkpoint_to_string(net: &KanNetwork) -> Result<String> {
    net.validate()?;
    let doc = CheckpointDoc { format_version: CHECKPOINT_FORMAT_VERSION, network: net.clone() };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Parses a checkpoint from a JSON string; `origin` names the source in
/// errors.
pub fn checkpoint_from_str(text: &str, origin: &str) -> Result<KanNetwork> {
    let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| {
        Error::format(format!("{origin}: {}", json_error_path(&e)), e.to_string())
    })?;
    if doc.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::format(
            format!("{origin}: format_version"),
            format!("expected {CHECKPOINT_FORMAT_VERSION}, got {}", doc.format_version),
        ));
    }
    doc.network.validate_as(&format!("{origin}: network"))?;
    Ok(doc.network)
}

fn json_error_path(e: &serde_json::Error) -> String {
    format!("line {} column {}", e.line(), e.column())
}

pub fn save_checkpoint(net: &KanNetwork, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), checkpoint_to_string(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<KanNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    checkpoint_from_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_axis_dataset;
    use crate::kan::ArchSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained_shape_net() -> KanNetwork {
        let arch = ArchSpec::parse("[1,[3,1],1]", 5, 3).unwrap();
        let mut net = KanNetwork::init(&arch, 42).unwrap();
        let data = generate_axis_dataset(2, 64, (-1.0, 1.0), 9).unwrap();
        net.freeze_normalization(&data).unwrap();
        net.node_masks[1][1] = false;
        net.layers[0].edge_mask[2] = false;
        net
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net = trained_shape_net();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        save_checkpoint(&net, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded, net);
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn forward_identical_after_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = trained_shape_net();
        let path = dir.path().join("net.json");
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v = rng.random_range(-1.2..1.2);
            let a = net.predict(&[v]).unwrap()[0];
            let b = loaded.predict(&[v]).unwrap()[0];
            assert_eq!(a.to_bits(), b.to_bits(), "prediction drift at v {v}");
        }
    }

    #[test]
    fn load_rejects_shape_mismatch_naming_field() {
        let dir = tempfile::tempdir().unwrap();
        let net = trained_shape_net();
        let path = dir.path().join("net.json");
        save_checkpoint(&net, &path).unwrap();

        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let coeffs = doc["network"]["layers"][0]["spline_coeffs"].as_array_mut().unwrap();
        coeffs.pop();
        let broken = dir.path().join("broken.json");
        std::fs::write(&broken, serde_json::to_string(&doc).unwrap()).unwrap();
        let err = load_checkpoint(&broken).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layers[0].spline_coeffs"), "unhelpful error: {msg}");
    }

    #[test]
    fn load_rejects_wrong_version_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let net = trained_shape_net();
        let path = dir.path().join("net.json");
        save_checkpoint(&net, &path).unwrap();
        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc["format_version"] = serde_json::json!(99);
        let wrong = dir.path().join("wrong.json");
        std::fs::write(&wrong, serde_json::to_string(&doc).unwrap()).unwrap();
        let err = load_checkpoint(&wrong).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");

        let garbage = dir.path().join("garbage.json");
        std::fs::write(&garbage, "not json").unwrap();
        assert!(load_checkpoint(&garbage).is_err());
        assert!(load_checkpoint(dir.path().join("missing.json")).is_err());
    }
}
