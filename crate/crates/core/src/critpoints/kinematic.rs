//! The kinematic landscape J(Û) = |⟨f|Û|ψ0⟩|², viewed directly on the
//! unitary group.
//!
//! Convention: the overlap is z = ⟨f|Û|ψ0⟩, matching J = |⟨Ψ_T|f⟩|² with
//! Ψ_T = Û·Ψ0, so J = |z|². Writing the element as ⟨Ψ0|Û|f⟩ instead gives
//! a different number in general, but both vanish on the sets used here by
//! construction and the first variation δJ = 2·Re(z*·δz) is zero for every δÛ
//! exactly when z = 0.
//!
//! Near z = 0 the curve s ↦ J(e^{sA}Û) behaves as s²·|⟨f|AÛ|ψ0⟩|², so every
//! sampled second derivative is non-negative. This module measures that
//! inertia; it does not assume it.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::linalg::{exp_i_hermitian, frobenius, inner, unitarity_defect, vec_norm, CMat, CVec, I};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicConfig {
    pub n_samples: usize,
    /// Step of the 5-point central differences in s.
    pub step: f64,
    /// |second derivative| at or below this counts as zero.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for KinematicConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            step: 1e-4,
            threshold: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaReport {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
    /// Largest |dJ/ds| over the sampled directions.
    pub max_first_variation: f64,
    /// Overlap z as [re, im].
    pub overlap: [f64; 2],
    #[serde(rename = "J")]
    pub j: f64,
    pub config: KinematicConfig,
}

fn check_inputs(u: &CMat, psi0: &CVec, f: &CVec) -> Result<()> {
    let n = u.nrows();
    if u.ncols() != n || psi0.len() != n || f.len() != n {
        return Err(QclError::Dimension { expected: n, got: psi0.len().min(f.len()) });
    }
    let defect = unitarity_defect(u);
    if defect > 1e-10 {
        return Err(QclError::Argument(format!("matrix is not unitary (defect {defect:e})")));
    }
    for v in [psi0, f] {
        let norm = vec_norm(v);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QclError::Normalization { norm });
        }
    }
    Ok(())
}

/// z = ⟨f|Û|ψ0⟩.
pub fn kinematic_overlap(u: &CMat, psi0: &CVec, f: &CVec) -> Result<Complex64> {
    check_inputs(u, psi0, f)?;
    Ok(inner(f, &(u * psi0)))
}

fn random_anti_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let a = (&g - g.adjoint()).scale(0.5);
    let norm = frobenius(&a);
    a.scale(1.0 / norm)
}

/// Samples random unit anti-Hermitian directions A and differentiates
/// s ↦ J(e^{sA}Û) at s = 0 with 5-point central differences.
pub fn kinematic_second_variation(
    u: &CMat,
    psi0: &CVec,
    f: &CVec,
    cfg: &KinematicConfig,
) -> Result<InertiaReport> {
    check_inputs(u, psi0, f)?;
    if cfg.n_samples == 0 || !(cfg.step > 0.0) || !(cfg.threshold >= 0.0) {
        return Err(QclError::Argument(format!("invalid kinematic configuration {cfg:?}")));
    }
    let n = u.nrows();
    let image = u * psi0;
    let z = inner(f, &image);
    let j_at = |a: &CMat, s: f64| {
        // e^{sA} = exp(−i·(iA)·s) with iA Hermitian
        let h = a.map(|w| I * w);
        inner(f, &(exp_i_hermitian(&h, s) * &image)).norm_sqr()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.step;
    let (mut n_plus, mut n_minus, mut n_zero) = (0, 0, 0);
    let mut max_first: f64 = 0.0;
    let j0 = z.norm_sqr();
    for _ in 0..cfg.n_samples {
        let a = random_anti_hermitian(n, &mut rng);
        let jp1 = j_at(&a, h);
        let jm1 = j_at(&a, -h);
        let jp2 = j_at(&a, 2.0 * h);
        let jm2 = j_at(&a, -2.0 * h);
        let first = (-jp2 + 8.0 * jp1 - 8.0 * jm1 + jm2) / (12.0 * h);
        let second = (-jp2 + 16.0 * jp1 - 30.0 * j0 + 16.0 * jm1 - jm2) / (12.0 * h * h);
        max_first = max_first.max(first.abs());
        if second > cfg.threshold {
            n_plus += 1;
        } else if second < -cfg.threshold {
            n_minus += 1;
        } else {
            n_zero += 1;
        }
    }
    Ok(InertiaReport {
        n_plus,
        n_minus,
        n_zero,
        max_first_variation: max_first,
        overlap: [z.re, z.im],
        j: j0,
        config: *cfg,
    })
}

fn gaussian_vector(n: usize, rng: &mut impl Rng) -> CVec {
    CVec::from_fn(n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Unitary whose first column is the (normalized) `first`, remaining columns
/// from Gram-Schmidt on Gaussian vectors.
fn unitary_with_first_column(first: &CVec, rng: &mut impl Rng) -> CMat {
    let n = first.len();
    let mut cols: Vec<CVec> = vec![first.scale(1.0 / vec_norm(first))];
    while cols.len() < n {
        let mut v = gaussian_vector(n, rng);
        for q in &cols {
            let proj = inner(q, &v);
            v -= q * proj;
        }
        let norm = vec_norm(&v);
        if norm > 1e-8 {
            cols.push(v.scale(1.0 / norm));
        }
    }
    CMat::from_columns(&cols)
}

/// Haar-random unitary (Gram-Schmidt on i.i.d. complex Gaussian columns).
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMat {
    let first = gaussian_vector(n, rng);
    unitary_with_first_column(&first, rng)
}

/// Random (Û, ψ0, f) with ⟨f|Û|ψ0⟩ = 0.
pub fn zero_overlap_instance(n: usize, rng: &mut impl Rng) -> (CMat, CVec, CVec) {
    let psi0 = {
        let v = gaussian_vector(n, rng);
        v.scale(1.0 / vec_norm(&v))
    };
    let f = {
        let v = gaussian_vector(n, rng);
        v.scale(1.0 / vec_norm(&v))
    };
    let mut w = gaussian_vector(n, rng);
    let proj = inner(&f, &w);
    w -= &f * proj;
    let q = unitary_with_first_column(&w, rng);
    let b = unitary_with_first_column(&psi0, rng);
    (q * b.adjoint(), psi0, f)
}
