use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::landscape::{hessian_on, norm, Coordinate, Landscape, HESSIAN_FD_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    LocalMax,
    LocalMin,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Ascent convergence tolerance; points with gradient norm above
    /// 10·tol_g are rejected as non-critical.
    pub tol_g: f64,
    /// Eigenvalue threshold relative to the largest |λ|.
    pub tol_h_rel: f64,
    /// A LOCAL_MAX below `j_global − tol_j` is flagged as a trap.
    pub tol_j: f64,
    pub j_global: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            tol_g: 1e-8,
            tol_h_rel: 1e-6,
            tol_j: 1e-3,
            j_global: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub eps: Vec<f64>,
    #[serde(rename = "J")]
    pub j: f64,
    /// Projected-gradient norm over coordinates not pinned on a bound.
    pub grad_norm: f64,
    /// Ascending eigenvalues of the Hessian over the unpinned coordinates.
    pub hessian_eigs: Vec<f64>,
    pub classification: Classification,
    pub trap_flag: bool,
    /// Coordinates pinned on a bound with the gradient pointing outward
    /// (behave like maximum directions).
    pub pinned_max_like: Vec<usize>,
    /// Coordinates pinned on a bound with the gradient pointing inward.
    pub pinned_min_like: Vec<usize>,
    pub hessian_symmetry_defect: f64,
    pub tol_g: f64,
    pub tol_h_rel: f64,
    pub tol_j: f64,
    pub hessian_step: f64,
}

/// Label from Hessian eigenvalues and pinned-bound directions.
///
/// θ = tol_h_rel·max(max|λ|, 1e-12). Negative curvature beyond θ or a
/// max-like pinned bound counts as a descending direction; positive
/// curvature beyond θ or a min-like pinned bound as an ascending one.
pub fn reclassify(eigs: &[f64], max_like: usize, min_like: usize, tol_h_rel: f64) -> Classification {
    let scale = eigs.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1e-12);
    let theta = tol_h_rel * scale;
    let down = eigs.iter().any(|&l| l < -theta) || max_like > 0;
    let up = eigs.iter().any(|&l| l > theta) || min_like > 0;
    match (down, up) {
        (true, true) => Classification::Saddle,
        (true, false) => Classification::LocalMax,
        (false, true) => Classification::LocalMin,
        (false, false) => Classification::Degenerate,
    }
}

/// Classifies a near-critical point by the spectrum of the finite-difference
/// Hessian.
pub fn classify<L: Landscape + ?Sized>(f: &L, x: &[f64], cfg: &ClassifyConfig) -> Result<CriticalPoint> {
    let coords = f.coordinates();
    let g = f.gradient(x)?;
    let limit = 10.0 * cfg.tol_g;

    let mut max_like = Vec::new();
    let mut min_like = Vec::new();
    let mut interior = Vec::new();
    for (i, c) in coords.iter().enumerate() {
        let pinned = match *c {
            Coordinate::Interval { lo, hi } => {
                if x[i] <= lo && g[i].abs() > limit {
                    Some(g[i] < 0.0)
                } else if x[i] >= hi && g[i].abs() > limit {
                    Some(g[i] > 0.0)
                } else {
                    None
                }
            }
            _ => None,
        };
        match pinned {
            Some(true) => max_like.push(i),
            Some(false) => min_like.push(i),
            None => interior.push(i),
        }
    }

    // outward components below the pinning limit are blocked by the bound,
    // as in the projected gradient used by the ascent
    let grad_norm = norm(
        &interior
            .iter()
            .map(|&i| if coords[i].blocks(x[i], g[i]) { 0.0 } else { g[i] })
            .collect::<Vec<_>>(),
    );
    if grad_norm > limit {
        return Err(QclError::NotCritical { grad_norm, limit });
    }

    let report = hessian_on(f, x, &interior)?;
    let eigs = report.eigenvalues();
    let classification = reclassify(&eigs, max_like.len(), min_like.len(), cfg.tol_h_rel);
    let j = f.value(x)?;
    Ok(CriticalPoint {
        eps: x.to_vec(),
        j,
        grad_norm,
        hessian_eigs: eigs,
        classification,
        trap_flag: classification == Classification::LocalMax && j < cfg.j_global - cfg.tol_j,
        pinned_max_like: max_like,
        pinned_min_like: min_like,
        hessian_symmetry_defect: report.symmetry_defect,
        tol_g: cfg.tol_g,
        tol_h_rel: cfg.tol_h_rel,
        tol_j: cfg.tol_j,
        hessian_step: HESSIAN_FD_STEP,
    })
}
