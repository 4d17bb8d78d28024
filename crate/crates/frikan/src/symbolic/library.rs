//! Candidate function library for symbolic edge replacement.

use crate::error::{Error, Result};

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// One candidate shape `f`. `value` returns `None` outside the domain (or on
/// overflow); `slope` is only called where `value` is `Some`.
#[derive(Clone, Copy)]
pub struct LibraryEntry {
    pub name: &'static str,
    /// Tie-break rank when candidates fit equally well; lower is simpler.
    pub complexity: u32,
    value: fn(f64) -> Option<f64>,
    slope: fn(f64) -> f64,
}

impl LibraryEntry {
    pub fn value(&self, u: f64) -> Option<f64> {
        (self.value)(u)
    }

    pub fn slope(&self, u: f64) -> f64 {
        (self.slope)(u)
    }
}

impl std::fmt::Debug for LibraryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LibraryEntry")
            .field("name", &self.name)
            .field("complexity", &self.complexity)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct FunctionLibrary {
    entries: Vec<LibraryEntry>,
}

impl FunctionLibrary {
    pub fn new(entries: Vec<LibraryEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|p| p.name == e.name) {
                return Err(Error::invalid(format!("duplicate library entry {:?}", e.name)));
            }
        }
        Ok(FunctionLibrary { entries })
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// The built-in candidates: trigonometric and sigmoid shapes, exponentials,
/// the gaussian bump exp(-x²), powers up to x⁵ and reciprocal powers.
pub fn default_library() -> FunctionLibrary {
    let entries = vec![
        LibraryEntry { name: "x", complexity: 1, value: |u| Some(u), slope: |_| 1.0 },
        LibraryEntry {
            name: "abs",
            complexity: 2,
            value: |u| Some(u.abs()),
            slope: |u| {
                if u == 0.0 {
                    0.0
                } else {
                    u.signum()
                }
            },
        },
        LibraryEntry { name: "x^2", complexity: 2, value: |u| finite(u * u), slope: |u| 2.0 * u },
        LibraryEntry {
            name: "x^3",
            complexity: 3,
            value: |u| finite(u * u * u),
            slope: |u| 3.0 * u * u,
        },
        LibraryEntry {
            name: "sqrt",
            complexity: 3,
            value: |u| (u >= 0.0).then(|| u.sqrt()),
            slope: |u| 0.5 / u.sqrt(),
        },
        LibraryEntry { name: "exp", complexity: 3, value: |u| finite(u.exp()), slope: f64::exp },
        LibraryEntry {
            name: "log",
            complexity: 3,
            value: |u| (u > 0.0).then(|| u.ln()),
            slope: |u| 1.0 / u,
        },
        LibraryEntry {
            name: "1/x",
            complexity: 3,
            value: |u| (u != 0.0).then(|| 1.0 / u).and_then(finite),
            slope: |u| -1.0 / (u * u),
        },
        LibraryEntry {
            name: "x^4",
            complexity: 4,
            value: |u| finite(u.powi(4)),
            slope: |u| 4.0 * u.powi(3),
        },
        LibraryEntry { name: "tanh", complexity: 4, value: |u| Some(u.tanh()), slope: |u| {
            let t = u.tanh();
            1.0 - t * t
        } },
        LibraryEntry { name: "sin", complexity: 4, value: |u| finite(u.sin()), slope: f64::cos },
        LibraryEntry {
            name: "cos",
            complexity: 4,
            value: |u| finite(u.cos()),
            slope: |u| -u.sin(),
        },
        LibraryEntry {
            name: "arctan",
            complexity: 4,
            value: |u| Some(u.atan()),
            slope: |u| 1.0 / (1.0 + u * u),
        },
        LibraryEntry {
            name: "1/x^2",
            complexity: 4,
            value: |u| (u != 0.0).then(|| 1.0 / (u * u)).and_then(finite),
            slope: |u| -2.0 / (u * u * u),
        },
        LibraryEntry {
            name: "x^5",
            complexity: 5,
            value: |u| finite(u.powi(5)),
            slope: |u| 5.0 * u.powi(4),
        },
        LibraryEntry {
            name: "tan",
            complexity: 5,
            value: |u| finite(u.tan()),
            slope: |u| {
                let t = u.tan();
                1.0 + t * t
            },
        },
        LibraryEntry {
            name: "gaussian",
            complexity: 5,
            value: |u| Some((-u * u).exp()),
            slope: |u| -2.0 * u * (-u * u).exp(),
        },
        LibraryEntry {
            name: "1/x^5",
            complexity: 6,
            value: |u| (u != 0.0).then(|| 1.0 / u.powi(5)).and_then(finite),
            slope: |u| -5.0 / u.powi(6),
        },
    ];
    FunctionLibrary::new(entries).expect("built-in names are unique")
}
