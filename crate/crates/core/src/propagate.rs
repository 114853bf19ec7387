//! Closed and open time evolution on a piecewise-constant field, plus the
//! fidelity measures built on top of it.
//!
//! On step s the field is frozen at its midpoint value E(t_s) and the
//! generator is H_s = h0 − dipole·E(t_s), so the closed propagator is the
//! exact product Û = Π_{s=S..1} exp(−i H_s Δt).

use std::ops::Range;

use num_complex::Complex64;

use crate::error::{QclError, Result};
use crate::linalg::{
    exp_i_hermitian, frobenius, hermitian_defect, inner, min_hermitian_eigenvalue,
    unitarity_defect, vec_norm, CMat, CVec, I,
};
use crate::model::{ensure_valid, ControlVector, PulseShaperSpec, QuantumSystem, TimeGrid};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const TRACE_FAILURE: f64 = 1e-6;
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub final_unitary: CMat,
    /// Field value on each step, E(t_s).
    pub fields: Vec<f64>,
    /// ψ at the S+1 step boundaries, when a start state was supplied.
    pub trajectory: Option<Vec<CVec>>,
}

pub fn step_generator(sys: &QuantumSystem, field: f64) -> CMat {
    &sys.h0 - sys.dipole.map(|z| z * field)
}

pub(crate) fn sample_fields(spec: &PulseShaperSpec, eps: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let fields: Vec<f64> = grid.midpoints().map(|t| spec.field_unchecked(eps, t)).collect();
    if let Some(s) = fields.iter().position(|e| !e.is_finite()) {
        return Err(QclError::Numeric(format!("field value on step {s} is not finite")));
    }
    Ok(fields)
}

pub(crate) fn step_unitaries(sys: &QuantumSystem, fields: &[f64], dt: f64) -> Vec<CMat> {
    fields
        .iter()
        .map(|&e| exp_i_hermitian(&step_generator(sys, e), dt))
        .collect()
}

fn product(steps: &[CMat], dim: usize) -> CMat {
    steps
        .iter()
        .fold(CMat::identity(dim, dim), |acc, u| u * acc)
}

fn checked_unitary(u: CMat) -> Result<CMat> {
    let defect = unitarity_defect(&u);
    if defect > UNITARITY_TOL {
        return Err(QclError::Numeric(format!(
            "propagator lost unitarity (defect {defect:e})"
        )));
    }
    Ok(u)
}

/// Closed-system propagator. Decay channels, if present, are ignored.
pub fn propagate_unitary(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
) -> Result<PropagationResult> {
    propagate_unitary_steps(sys, spec, eps, grid, 0..grid.steps)
}

/// Propagator over a sub-range of grid steps, Π_{s ∈ range} exp(−i H_s Δt).
pub fn propagate_unitary_steps(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
    range: Range<usize>,
) -> Result<PropagationResult> {
    ensure_valid(sys)?;
    spec.check_bounds(eps.as_slice())?;
    if range.end > grid.steps || range.start > range.end {
        return Err(QclError::Argument(format!(
            "step range {range:?} outside grid of {} steps",
            grid.steps
        )));
    }
    let all = sample_fields(spec, eps.as_slice(), grid)?;
    let fields = all[range].to_vec();
    let steps = step_unitaries(sys, &fields, grid.dt());
    let final_unitary = checked_unitary(product(&steps, sys.dim))?;
    Ok(PropagationResult {
        final_unitary,
        fields,
        trajectory: None,
    })
}

/// Closed propagation that also records ψ at every step boundary.
pub fn propagate_state(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
    psi0: &CVec,
) -> Result<PropagationResult> {
    ensure_valid(sys)?;
    spec.check_bounds(eps.as_slice())?;
    check_normalized(psi0)?;
    let fields = sample_fields(spec, eps.as_slice(), grid)?;
    let steps = step_unitaries(sys, &fields, grid.dt());
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push(psi0.clone());
    for u in &steps {
        let next = u * states.last().expect("non-empty");
        states.push(next);
    }
    let final_unitary = checked_unitary(product(&steps, sys.dim))?;
    Ok(PropagationResult {
        final_unitary,
        fields,
        trajectory: Some(states),
    })
}

fn check_normalized(v: &CVec) -> Result<()> {
    let norm = vec_norm(v);
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(QclError::Normalization { norm });
    }
    Ok(())
}

/// J = |⟨ψ_T|f⟩|².
pub fn fidelity_pure(psi_t: &CVec, f: &CVec) -> Result<f64> {
    check_normalized(psi_t)?;
    check_normalized(f)?;
    if psi_t.len() != f.len() {
        return Err(QclError::Dimension {
            expected: f.len(),
            got: psi_t.len(),
        });
    }
    Ok(inner(psi_t, f).norm_sqr().clamp(0.0, 1.0))
}

/// J = ⟨f|ρ_T|f⟩, the open-system analog of the pure-state overlap.
pub fn fidelity_mixed(rho_t: &CMat, f: &CVec) -> Result<f64> {
    check_normalized(f)?;
    if rho_t.nrows() != f.len() || rho_t.ncols() != f.len() {
        return Err(QclError::Dimension {
            expected: f.len(),
            got: rho_t.nrows(),
        });
    }
    check_density(rho_t)?;
    let value: Complex64 = inner(f, &(rho_t * f));
    Ok(value.re)
}

fn check_density(rho: &CMat) -> Result<()> {
    let defect = hermitian_defect(rho);
    if defect > 1e-10 {
        return Err(QclError::Validation(format!(
            "density matrix not Hermitian (defect {defect:e})"
        )));
    }
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(QclError::Validation(format!(
            "density matrix trace {trace} differs from 1"
        )));
    }
    let min_eig = min_hermitian_eigenvalue(rho);
    if min_eig < -POSITIVITY_TOL {
        return Err(QclError::Validation(format!(
            "density matrix has negative eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

pub fn pure_density(psi: &CVec) -> CMat {
    psi * psi.adjoint()
}

#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    /// Step-boundary times 0, Δt, …, T.
    pub times: Vec<f64>,
    /// ρ at every boundary; the last entry is ρ(T).
    pub states: Vec<CMat>,
    /// RK4 substeps per grid step after refinement.
    pub substeps: usize,
    /// ‖ρ_n(T) − ρ_{2n}(T)‖_F for the accepted refinement.
    pub refinement_change: f64,
    pub max_trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub max_hermitian_defect: f64,
}

impl DensityTrajectory {
    pub fn final_state(&self) -> &CMat {
        self.states.last().expect("trajectory has at least ρ0")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LindbladOptions {
    /// Accept a substep count n once halving it changes ρ(T) by at most this.
    pub refinement_tol: f64,
    pub max_substeps: usize,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self {
            refinement_tol: 1e-8,
            max_substeps: 1 << 14,
        }
    }
}

/// Right-hand side −i[H, ρ] + Σ γ (L ρ L† − ½{L†L, ρ}).
fn lindblad_rhs(h: &CMat, jumps: &[(CMat, CMat, f64)], rho: &CMat) -> CMat {
    let mut out = (h * rho - rho * h).map(|z| -I * z);
    for (l, ldl, gamma) in jumps {
        out += (l * rho * l.adjoint() - (ldl * rho + rho * ldl).scale(0.5)).scale(*gamma);
    }
    out
}

fn rk4_step(h: &CMat, jumps: &[(CMat, CMat, f64)], rho: &CMat, dt: f64) -> CMat {
    let k1 = lindblad_rhs(h, jumps, rho);
    let k2 = lindblad_rhs(h, jumps, &(rho + k1.scale(0.5 * dt)));
    let k3 = lindblad_rhs(h, jumps, &(rho + k2.scale(0.5 * dt)));
    let k4 = lindblad_rhs(h, jumps, &(rho + k3.scale(dt)));
    rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
}

fn integrate(
    generators: &[CMat],
    jumps: &[(CMat, CMat, f64)],
    rho0: &CMat,
    dt: f64,
    substeps: usize,
) -> Vec<CMat> {
    let h = dt / substeps as f64;
    let mut states = Vec::with_capacity(generators.len() + 1);
    states.push(rho0.clone());
    let mut rho = rho0.clone();
    for gen in generators {
        for _ in 0..substeps {
            rho = rk4_step(gen, jumps, &rho, h);
        }
        states.push(rho.clone());
    }
    states
}

/// Integrates the Lindblad master equation with fixed-step RK4, doubling
/// the substep count until halving the substep changes ρ(T) by no more
/// than `opts.refinement_tol` in Frobenius norm.
pub fn propagate_lindblad(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
    rho0: &CMat,
) -> Result<DensityTrajectory> {
    propagate_lindblad_with(sys, spec, eps, grid, rho0, LindbladOptions::default())
}

pub fn propagate_lindblad_with(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
    rho0: &CMat,
    opts: LindbladOptions,
) -> Result<DensityTrajectory> {
    ensure_valid(sys)?;
    spec.check_bounds(eps.as_slice())?;
    if rho0.nrows() != sys.dim || rho0.ncols() != sys.dim {
        return Err(QclError::Dimension {
            expected: sys.dim,
            got: rho0.nrows(),
        });
    }
    check_density(rho0)?;

    let fields = sample_fields(spec, eps.as_slice(), grid)?;
    let generators: Vec<CMat> = fields.iter().map(|&e| step_generator(sys, e)).collect();
    let jumps: Vec<(CMat, CMat, f64)> = sys
        .decay
        .iter()
        .filter(|ch| ch.rate > 0.0)
        .map(|ch| (ch.operator.clone(), ch.operator.adjoint() * &ch.operator, ch.rate))
        .collect();

    // initial substep guess: keep ‖generator‖·h around 0.25
    let dt = grid.dt();
    let rate_scale: f64 = jumps.iter().map(|(_, ldl, g)| g * frobenius(ldl)).sum();
    let gen_scale = generators.iter().map(frobenius).fold(0.0, f64::max);
    let scale = 2.0 * gen_scale + rate_scale;
    let mut substeps = ((scale * dt / 0.25).ceil() as usize).max(1);

    let mut coarse = integrate(&generators, &jumps, rho0, dt, substeps);
    let (states, change) = loop {
        if 2 * substeps > opts.max_substeps {
            return Err(QclError::Integration(format!(
                "RK4 did not reach refinement tolerance {:e} within {} substeps per step",
                opts.refinement_tol, opts.max_substeps
            )));
        }
        let fine = integrate(&generators, &jumps, rho0, dt, 2 * substeps);
        let change = frobenius(&(fine.last().unwrap() - coarse.last().unwrap()));
        substeps *= 2;
        if change <= opts.refinement_tol {
            break (fine, change);
        }
        coarse = fine;
    };

    let mut max_trace_deviation: f64 = 0.0;
    let mut min_eigenvalue = f64::INFINITY;
    let mut max_hermitian_defect: f64 = 0.0;
    for rho in &states {
        max_trace_deviation = max_trace_deviation.max((rho.trace().re - 1.0).abs());
        min_eigenvalue = min_eigenvalue.min(min_hermitian_eigenvalue(rho));
        max_hermitian_defect = max_hermitian_defect.max(hermitian_defect(rho));
    }
    if max_trace_deviation > TRACE_FAILURE {
        return Err(QclError::Integration(format!(
            "trace drifted by {max_trace_deviation:e}"
        )));
    }
    if min_eigenvalue < -POSITIVITY_TOL {
        return Err(QclError::Integration(format!(
            "density matrix lost positivity (eigenvalue {min_eigenvalue:e})"
        )));
    }

    Ok(DensityTrajectory {
        times: (0..=grid.steps).map(|s| s as f64 * dt).collect(),
        states,
        substeps,
        refinement_change: change,
        max_trace_deviation,
        min_eigenvalue,
        max_hermitian_defect,
    })
}

/// Liouvillian split L(E) = L0 + E·L1 acting on column-stacked ρ.
pub(crate) fn liouvillian_parts(sys: &QuantumSystem) -> (CMat, CMat) {
    let n = sys.dim;
    let id = CMat::identity(n, n);
    let h0 = &sys.h0;
    let d = &sys.dipole;
    let mut l0 = (id.kronecker(h0) - h0.transpose().kronecker(&id)).map(|z| -I * z);
    for ch in sys.decay.iter().filter(|ch| ch.rate > 0.0) {
        let l = &ch.operator;
        let ldl = l.adjoint() * l;
        let dissipator = l.conjugate().kronecker(l)
            - (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)).scale(0.5);
        l0 += dissipator.scale(ch.rate);
    }
    let l1 = (id.kronecker(d) - d.transpose().kronecker(&id)).map(|z| I * z);
    (l0, l1)
}
