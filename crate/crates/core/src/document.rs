//! JSON documents describing a system, shaper and time grid.
//!
//! ```json
//! {"dim": 2,
//!  "h0": [[1,0],[0,0],[0,0],[-1,0]],
//!  "dipole": [[0,0],[1,0],[1,0],[0,0]],
//!  "decay": [{"op": [[0,0],[1,0],[0,0],[0,0]], "rate": 0.01}],
//!  "shaper": {"components": [{"omega": 2.0, "a_max": 1.0}]},
//!  "grid": {"T": 3.0, "steps": 64}}
//! ```
//!
//! Matrices are row-major lists of `[re, im]` pairs. Optional keys:
//! `psi0` and `target` (state vectors as `[re, im]` lists, defaulting to
//! |0⟩ and |N−1⟩) and `radiative_decay` (a rate applied to the default
//! lowering operators of the drift).

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::linalg::{CMat, CVec};
use crate::model::{DecayChannel, PulseShaperSpec, QuantumSystem, SpectralComponent, TimeGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayEntry {
    pub op: Vec<[f64; 2]>,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShaperEntry {
    pub components: Vec<SpectralComponent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecDocument {
    pub dim: usize,
    pub h0: Vec<[f64; 2]>,
    pub dipole: Vec<[f64; 2]>,
    #[serde(default)]
    pub decay: Vec<DecayEntry>,
    pub shaper: ShaperEntry,
    pub grid: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radiative_decay: Option<f64>,
}

/// Parsed and shape-checked contents of a [`SpecDocument`].
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub system: QuantumSystem,
    pub shaper: PulseShaperSpec,
    pub grid: TimeGrid,
    pub psi0: CVec,
    pub target: CVec,
}

fn matrix(name: &str, entries: &[[f64; 2]], dim: usize) -> Result<CMat> {
    if entries.len() != dim * dim {
        return Err(QclError::Parse(format!(
            "{name} has {} entries, expected {}",
            entries.len(),
            dim * dim
        )));
    }
    Ok(CMat::from_row_iterator(
        dim,
        dim,
        entries.iter().map(|[re, im]| Complex64::new(*re, *im)),
    ))
}

fn state(name: &str, entries: &[[f64; 2]], dim: usize) -> Result<CVec> {
    if entries.len() != dim {
        return Err(QclError::Parse(format!(
            "{name} has {} entries, expected {dim}",
            entries.len()
        )));
    }
    Ok(CVec::from_iterator(
        dim,
        entries.iter().map(|[re, im]| Complex64::new(*re, *im)),
    ))
}

pub fn basis_state(dim: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    v[k] = Complex64::new(1.0, 0.0);
    v
}

pub fn encode_matrix(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

pub fn encode_state(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

impl SpecDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| QclError::Parse(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| QclError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    /// Converts to typed values; Hermiticity and rate signs are left to
    /// [`crate::model::validate_system`].
    pub fn load(&self) -> Result<LoadedSpec> {
        let dim = self.dim;
        let h0 = matrix("h0", &self.h0, dim)?;
        let dipole = matrix("dipole", &self.dipole, dim)?;
        let decay = self
            .decay
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Ok(DecayChannel {
                    operator: matrix(&format!("decay[{i}].op"), &d.op, dim)?,
                    rate: d.rate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut system = QuantumSystem::new(h0, dipole, decay)?;
        if let Some(rate) = self.radiative_decay {
            system = system.with_radiative_decay(rate);
        }
        let shaper = PulseShaperSpec::new(self.shaper.components.clone())?;
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps)?;
        let psi0 = match &self.psi0 {
            Some(v) => state("psi0", v, dim)?,
            None => basis_state(dim, 0),
        };
        let target = match &self.target {
            Some(v) => state("target", v, dim)?,
            None => basis_state(dim, dim - 1),
        };
        Ok(LoadedSpec {
            system,
            shaper,
            grid,
            psi0,
            target,
        })
    }

    pub fn from_parts(system: &QuantumSystem, shaper: &PulseShaperSpec, grid: TimeGrid) -> Self {
        Self {
            dim: system.dim,
            h0: encode_matrix(&system.h0),
            dipole: encode_matrix(&system.dipole),
            decay: system
                .decay
                .iter()
                .map(|ch| DecayEntry {
                    op: encode_matrix(&ch.operator),
                    rate: ch.rate,
                })
                .collect(),
            shaper: ShaperEntry {
                components: shaper.components.clone(),
            },
            grid,
            psi0: None,
            target: None,
            radiative_decay: None,
        }
    }
}

/// Reads a control vector either as a bare JSON array or as `{"eps": [...]}`.
pub fn parse_controls(text: &str) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Controls {
        Bare(Vec<f64>),
        Wrapped { eps: Vec<f64> },
    }
    match serde_json::from_str::<Controls>(text) {
        Ok(Controls::Bare(v)) | Ok(Controls::Wrapped { eps: v }) => Ok(v),
        Err(e) => Err(QclError::Parse(format!("control vector: {e}"))),
    }
}
