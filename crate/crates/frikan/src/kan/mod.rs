//! Kolmogorov-Arnold networks: learnable spline activations on edges,
//! additive or multiplicative combination at nodes.

mod checkpoint;
pub(crate) mod layer;
mod network;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint,
    CHECKPOINT_FORMAT_VERSION,
};
pub use layer::KanLayer;
pub use network::{Affine, ForwardTrace, KanNetwork, LayerParamCounts};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node composition of one layer: a plain additive width, or a mix of
/// additive and multiplicative nodes. Each multiplicative node consumes two
/// pre-node slots and multiplies them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerNodes {
    Additive(usize),
    Mixed { additive: usize, multiplicative: usize },
}

impl LayerNodes {
    pub fn additive(&self) -> usize {
        match *self {
            LayerNodes::Additive(n) => n,
            LayerNodes::Mixed { additive, .. } => additive,
        }
    }

    pub fn multiplicative(&self) -> usize {
        match *self {
            LayerNodes::Additive(_) => 0,
            LayerNodes::Mixed { multiplicative, .. } => multiplicative,
        }
    }

    /// Number of node outputs this layer exposes to the next layer.
    pub fn node_count(&self) -> usize {
        self.additive() + self.multiplicative()
    }

    /// Number of pre-node slots the incoming edges feed (each multiplicative
    /// node consumes two).
    pub fn pre_node_count(&self) -> usize {
        self.additive() + 2 * self.multiplicative()
    }
}

/// Network architecture: node layout per layer plus the shared spline grid
/// size `G` and degree `r`.
///
/// The notation `[1,[5,2],1]` means one input, a hidden layer of five
/// additive and two multiplicative nodes, one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub layers: Vec<LayerNodes>,
    pub grid: usize,
    pub order: usize,
}

impl ArchSpec {
    pub fn new(layers: Vec<LayerNodes>, grid: usize, order: usize) -> Result<Self> {
        let spec = ArchSpec { layers, grid, order };
        spec.validate()?;
        Ok(spec)
    }

    /// All-additive architecture from a width list like `[1, 5, 1]`.
    pub fn additive(widths: &[usize], grid: usize, order: usize) -> Result<Self> {
        ArchSpec::new(widths.iter().map(|&w| LayerNodes::Additive(w)).collect(), grid, order)
    }

    /// Parses the bracket notation, e.g. `[1,[5,2],1]`.
    pub fn parse(text: &str, grid: usize, order: usize) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("unparseable architecture {text:?}: {e}")))?;
        let entries = value
            .as_array()
            .ok_or_else(|| Error::invalid(format!("architecture {text:?} must be a list")))?;
        let mut layers = Vec::with_capacity(entries.len());
        for entry in entries {
            let layer = match entry {
                serde_json::Value::Number(n) => {
                    let w = n
                        .as_u64()
                        .ok_or_else(|| Error::invalid(format!("negative width in {text:?}")))?;
                    LayerNodes::Additive(w as usize)
                }
                serde_json::Value::Array(pair) if pair.len() == 2 => {
                    let get = |v: &serde_json::Value| {
                        v.as_u64().ok_or_else(|| {
                            Error::invalid(format!("layer counts in {text:?} must be integers"))
                        })
                    };
                    LayerNodes::Mixed {
                        additive: get(&pair[0])? as usize,
                        multiplicative: get(&pair[1])? as usize,
                    }
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "architecture entries must be a width or [additive, multiplicative], got {entry} in {text:?}"
                    )))
                }
            };
            layers.push(layer);
        }
        ArchSpec::new(layers, grid, order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::invalid("architecture needs at least input and output layers"));
        }
        if self.grid == 0 || self.order == 0 {
            return Err(Error::invalid(format!(
                "grid and order must be >= 1, got grid {} order {}",
                self.grid, self.order
            )));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.node_count() == 0 {
                return Err(Error::invalid(format!("layer {idx} has no nodes")));
            }
            let boundary = idx == 0 || idx == self.layers.len() - 1;
            if boundary && layer.multiplicative() > 0 {
                return Err(Error::invalid(
                    "input and output layers must be plain additive widths",
                ));
            }
        }
        Ok(())
    }

    /// Number of weight layers (edges between consecutive node layers).
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].node_count()
    }

    pub fn out_width(&self) -> usize {
        self.layers[self.layers.len() - 1].node_count()
    }
}

impl std::fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (idx, layer) in self.layers.iter().enumerate() {
            if idx > 0 {
                write!(f, ",")?;
            }
            match layer {
                LayerNodes::Additive(w) => write!(f, "{w}")?,
                LayerNodes::Mixed { additive, multiplicative } => {
                    write!(f, "[{additive},{multiplicative}]")?
                }
            }
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let arch = ArchSpec::parse("[1,[5,2],1]", 5, 3).unwrap();
        assert_eq!(arch.layers.len(), 3);
        assert_eq!(arch.layers[1].node_count(), 7);
        assert_eq!(arch.layers[1].pre_node_count(), 9);
        assert_eq!(arch.to_string(), "[1,[5,2],1]");

        let plain = ArchSpec::parse("[1,5,5,1]", 10, 3).unwrap();
        assert_eq!(plain.to_string(), "[1,5,5,1]");
        assert_eq!(plain.depth(), 3);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(ArchSpec::parse("[1]", 5, 3).is_err());
        assert!(ArchSpec::parse("[[1,1],5,1]", 5, 3).is_err());
        assert!(ArchSpec::parse("[1,5,[2,1]]", 5, 3).is_err());
        assert!(ArchSpec::parse("[1,0,1]", 5, 3).is_err());
        assert!(ArchSpec::parse("[1,[0,0],1]", 5, 3).is_err());
        assert!(ArchSpec::parse("[1,5,1]", 0, 3).is_err());
        assert!(ArchSpec::parse("[1,5,1]", 5, 0).is_err());
        assert!(ArchSpec::parse("nonsense", 5, 3).is_err());
        assert!(ArchSpec::parse("[1,[5,2,3],1]", 5, 3).is_err());
    }

    #[test]
    fn mixed_layer_with_only_products_is_legal() {
        let arch = ArchSpec::parse("[1,[0,1],1]", 5, 3).unwrap();
        assert_eq!(arch.layers[1].node_count(), 1);
        assert_eq!(arch.layers[1].pre_node_count(), 2);
    }
}
