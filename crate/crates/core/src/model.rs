//! Physical system, pulse-shaper parameterization and field synthesis.
//!
//! Units: ħ = 1, energies in rad/time. The control vector is laid out as
//! ε = (A_1, φ_1, A_2, φ_2, …, A_M, φ_M) for M spectral components, so a
//! shaper with M components has P = 2M parameters. Amplitudes live in
//! [0, A_max,k] and phases in [0, 2π).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::linalg::{frobenius, hermitian_defect, CMat};

const HERMITIAN_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayChannel {
    pub operator: CMat,
    pub rate: f64,
}

/// N-level system with drift Hamiltonian, dipole operator and optional
/// Markovian decay channels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSystem {
    pub dim: usize,
    pub h0: CMat,
    pub dipole: CMat,
    pub decay: Vec<DecayChannel>,
}

impl QuantumSystem {
    /// Builds a system after checking matrix shapes. Hermiticity and rate
    /// signs are checked by [`validate_system`].
    pub fn new(h0: CMat, dipole: CMat, decay: Vec<DecayChannel>) -> Result<Self> {
        let dim = h0.nrows();
        if dim < 2 {
            return Err(QclError::Validation(format!(
                "system dimension must be at least 2, got {dim}"
            )));
        }
        for (name, m) in std::iter::once(("h0", &h0))
            .chain(std::iter::once(("dipole", &dipole)))
            .chain(decay.iter().map(|ch| ("decay operator", &ch.operator)))
        {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(QclError::Validation(format!(
                    "{name} is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            dim,
            h0,
            dipole,
            decay,
        })
    }

    pub fn closed(h0: CMat, dipole: CMat) -> Result<Self> {
        Self::new(h0, dipole, Vec::new())
    }

    pub fn is_open(&self) -> bool {
        self.decay.iter().any(|ch| ch.rate > 0.0)
    }

    /// Adds radiative decay |e_i⟩⟨e_j| for every pair of drift eigenstates
    /// with E_i < E_j, all at the same rate.
    pub fn with_radiative_decay(mut self, rate: f64) -> Self {
        let eig = ((&self.h0 + self.h0.adjoint()).scale(0.5)).symmetric_eigen();
        let n = self.dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for lo in 0..n {
            for hi in lo + 1..n {
                let (i, j) = (order[lo], order[hi]);
                if eig.eigenvalues[j] - eig.eigenvalues[i] <= 0.0 {
                    continue;
                }
                let ket = eig.eigenvectors.column(i);
                let bra = eig.eigenvectors.column(j);
                let op = ket * bra.adjoint();
                self.decay.push(DecayChannel { operator: op, rate });
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub h0_hermitian_defect: f64,
    pub dipole_hermitian_defect: f64,
    pub negative_rates: Vec<usize>,
    pub problems: Vec<String>,
}

pub fn validate_system(sys: &QuantumSystem) -> ValidationReport {
    let mut problems = Vec::new();
    let h0_defect = hermitian_defect(&sys.h0);
    let dipole_defect = hermitian_defect(&sys.dipole);
    if h0_defect > HERMITIAN_REL_TOL * frobenius(&sys.h0) {
        problems.push(format!("h0 is not Hermitian (defect {h0_defect:e})"));
    }
    if dipole_defect > HERMITIAN_REL_TOL * frobenius(&sys.dipole) {
        problems.push(format!("dipole is not Hermitian (defect {dipole_defect:e})"));
    }
    let negative_rates: Vec<usize> = sys
        .decay
        .iter()
        .enumerate()
        .filter(|(_, ch)| !(ch.rate >= 0.0))
        .map(|(i, _)| i)
        .collect();
    for &i in &negative_rates {
        problems.push(format!(
            "decay channel {i} has negative rate {}",
            sys.decay[i].rate
        ));
    }
    ValidationReport {
        passed: problems.is_empty(),
        h0_hermitian_defect: h0_defect,
        dipole_hermitian_defect: dipole_defect,
        negative_rates,
        problems,
    }
}

/// Errors with the joined problem list when validation fails.
pub fn ensure_valid(sys: &QuantumSystem) -> Result<()> {
    let report = validate_system(sys);
    if report.passed {
        Ok(())
    } else {
        Err(QclError::Validation(report.problems.join("; ")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    pub omega: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShaperSpec {
    pub components: Vec<SpectralComponent>,
}

/// Role of one entry of the control vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Amplitude(usize),
    Phase(usize),
}

impl PulseShaperSpec {
    pub fn new(components: Vec<SpectralComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(QclError::Validation(
                "pulse shaper needs at least one component".into(),
            ));
        }
        for (k, comp) in components.iter().enumerate() {
            if !(comp.omega >= 0.0) || !comp.omega.is_finite() {
                return Err(QclError::Validation(format!(
                    "component {k} has invalid frequency {}",
                    comp.omega
                )));
            }
            if !(comp.a_max > 0.0) || !comp.a_max.is_finite() {
                return Err(QclError::Validation(format!(
                    "component {k} has invalid amplitude bound {}",
                    comp.a_max
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_params(&self) -> usize {
        2 * self.components.len()
    }

    pub fn kind(&self, index: usize) -> ParamKind {
        if index % 2 == 0 {
            ParamKind::Amplitude(index / 2)
        } else {
            ParamKind::Phase(index / 2)
        }
    }

    /// Closed/half-open interval for parameter `index`; phases are [0, 2π).
    pub fn bounds(&self, index: usize) -> (f64, f64) {
        match self.kind(index) {
            ParamKind::Amplitude(k) => (0.0, self.components[k].a_max),
            ParamKind::Phase(_) => (0.0, TAU),
        }
    }

    pub fn check_bounds(&self, eps: &[f64]) -> Result<()> {
        if eps.len() != self.n_params() {
            return Err(QclError::Dimension {
                expected: self.n_params(),
                got: eps.len(),
            });
        }
        for (i, &v) in eps.iter().enumerate() {
            let (lo, hi) = self.bounds(i);
            let inside = match self.kind(i) {
                ParamKind::Amplitude(_) => v >= lo && v <= hi,
                ParamKind::Phase(_) => v >= lo && v < hi,
            };
            if !inside {
                return Err(QclError::BoundsViolation {
                    index: i,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Field value without bounds checks. Also used off the feasible box by
    /// finite-difference stencils.
    pub fn field_unchecked(&self, eps: &[f64], t: f64) -> f64 {
        self.components
            .iter()
            .enumerate()
            .map(|(k, comp)| eps[2 * k] * (comp.omega * t + eps[2 * k + 1]).cos())
            .sum()
    }
}

/// Feasible control vector for a given shaper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlVector(Vec<f64>);

impl ControlVector {
    pub fn new(values: Vec<f64>, spec: &PulseShaperSpec) -> Result<Self> {
        spec.check_bounds(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(spec: &PulseShaperSpec) -> Self {
        Self(vec![0.0; spec.n_params()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Uniform grid on [0, T] with S piecewise-constant steps sampled at
/// midpoints t_s = (s + ½)·T/S, s = 0..S−1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(QclError::Validation(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(QclError::Validation("time grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn midpoint(&self, step: usize) -> f64 {
        (step as f64 + 0.5) * self.dt()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(move |s| self.midpoint(s))
    }
}

/// E(t; ε) = Σ_k A_k cos(ω_k t + φ_k).
pub fn synth_field(spec: &PulseShaperSpec, eps: &[f64], t: f64) -> Result<f64> {
    spec.check_bounds(eps)?;
    Ok(spec.field_unchecked(eps, t))
}

/// Wraps an angle into [0, 2π).
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Clamps amplitudes into [0, A_max,k] and wraps phases into [0, 2π).
pub fn project_controls(eps: &[f64], spec: &PulseShaperSpec) -> Result<ControlVector> {
    if eps.len() != spec.n_params() {
        return Err(QclError::Dimension {
            expected: spec.n_params(),
            got: eps.len(),
        });
    }
    let mut out = Vec::with_capacity(eps.len());
    for (i, &v) in eps.iter().enumerate() {
        if !v.is_finite() {
            return Err(QclError::Numeric(format!("control {i} is not finite")));
        }
        out.push(match spec.kind(i) {
            ParamKind::Amplitude(k) => v.clamp(0.0, spec.components[k].a_max),
            ParamKind::Phase(_) => wrap_phase(v),
        });
    }
    Ok(ControlVector(out))
}
