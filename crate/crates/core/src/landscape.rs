//! The control landscape J(ε): evaluation, exact gradient, finite-difference
//! Hessian, grid scans and frozen-parameter slices.
//!
//! Gradients are exact for the discretized dynamics. Each step propagator
//! is differentiated with respect to its field value through the augmented
//! block exponential exp([[X, dX], [0, X]]) and the per-step sensitivities
//! are chained with ∂E(t_s)/∂A_k = cos(ω_k t_s + φ_k) and
//! ∂E(t_s)/∂φ_k = −A_k sin(ω_k t_s + φ_k).
//!
//! Closed systems use J = |⟨f|Û|ψ0⟩|². Systems with active decay channels
//! use J = ⟨f|ρ(T)|f⟩ with ρ(0) = |ψ0⟩⟨ψ0|, propagated by the exact
//! exponential of the step Liouvillian.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::linalg::{expm, expm_with_derivative, inner, vec_norm, CMat, CVec, I};
use crate::model::{
    ensure_valid, wrap_phase, ParamKind, PulseShaperSpec, QuantumSystem, TimeGrid,
};
use crate::propagate::{liouvillian_parts, sample_fields, step_generator, step_unitaries};

/// Gradient finite-difference step used by consistency checks.
pub const GRADIENT_FD_STEP: f64 = 1e-5;
/// Relative Hessian finite-difference step, h_i = 1e-4·max(1, |ε_i|).
pub const HESSIAN_FD_STEP: f64 = 1e-4;

/// Shape of one free coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coordinate {
    Interval { lo: f64, hi: f64 },
    Periodic { period: f64 },
    Unbounded,
}

impl Coordinate {
    pub fn project(&self, v: f64) -> f64 {
        match *self {
            Coordinate::Interval { lo, hi } => v.clamp(lo, hi),
            Coordinate::Periodic { period } if period == TAU => wrap_phase(v),
            Coordinate::Periodic { period } => {
                let r = v.rem_euclid(period);
                if r >= period {
                    0.0
                } else {
                    r
                }
            }
            Coordinate::Unbounded => v,
        }
    }

    /// Amplitude-style absolute difference or circular distance for phases.
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        match *self {
            Coordinate::Periodic { period } => {
                let d = (a - b).rem_euclid(period);
                d.min(period - d)
            }
            _ => (a - b).abs(),
        }
    }

    /// True when `v` sits on a bound and `g` points out of the box.
    pub fn blocks(&self, v: f64, g: f64) -> bool {
        match *self {
            Coordinate::Interval { lo, hi } => (v <= lo && g < 0.0) || (v >= hi && g > 0.0),
            _ => false,
        }
    }
}

/// A scalar objective over a box of free coordinates.
///
/// `value` and `gradient` accept points off the feasible box (the physical
/// landscape is analytic in ε), which finite-difference stencils rely on.
pub trait Landscape: Send + Sync {
    fn n_free(&self) -> usize;
    fn coordinates(&self) -> Vec<Coordinate>;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Short fingerprint identifying the underlying problem.
    fn fingerprint(&self) -> String {
        "analytic".to_string()
    }

    fn time_grid(&self) -> Option<TimeGrid> {
        None
    }
}

pub fn project_point(coords: &[Coordinate], x: &mut [f64]) {
    for (c, v) in coords.iter().zip(x.iter_mut()) {
        *v = c.project(*v);
    }
}

/// Gradient with components that push against an active bound zeroed.
pub fn projected_gradient(coords: &[Coordinate], x: &[f64], g: &[f64]) -> Vec<f64> {
    coords
        .iter()
        .zip(x.iter().zip(g.iter()))
        .map(|(c, (&v, &gi))| if c.blocks(v, gi) { 0.0 } else { gi })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean combination of per-coordinate distances.
pub fn coordinate_distance(coords: &[Coordinate], a: &[f64], b: &[f64]) -> f64 {
    coords
        .iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(c, (&x, &y))| c.distance(x, y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Landscape given by plain closures; used for analytic test functions.
pub struct AnalyticLandscape {
    coords: Vec<Coordinate>,
    value: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    gradient: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl AnalyticLandscape {
    pub fn new(
        coords: Vec<Coordinate>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            coords,
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }

    /// J(ε) = −‖ε − c‖² on an unbounded domain.
    pub fn concave_quadratic(center: Vec<f64>) -> Self {
        let n = center.len();
        let c1 = center.clone();
        let c2 = center;
        Self::new(
            vec![Coordinate::Unbounded; n],
            move |x| -x.iter().zip(&c1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            move |x| x.iter().zip(&c2).map(|(a, b)| -2.0 * (a - b)).collect(),
        )
    }
}

impl Landscape for AnalyticLandscape {
    fn n_free(&self) -> usize {
        self.coords.len()
    }

    fn coordinates(&self) -> Vec<Coordinate> {
        self.coords.clone()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_free(), x)?;
        finite((self.value)(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_free(), x)?;
        let g = (self.gradient)(x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(QclError::Numeric("gradient is not finite".into()));
        }
        Ok(g)
    }
}

/// Sign-flipped view, so ascent on it descends the wrapped landscape.
pub struct Negated<'a, L: Landscape + ?Sized>(pub &'a L);

impl<L: Landscape + ?Sized> Landscape for Negated<'_, L> {
    fn n_free(&self) -> usize {
        self.0.n_free()
    }
    fn coordinates(&self) -> Vec<Coordinate> {
        self.0.coordinates()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.0.value(x).map(|v| -v)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0
            .gradient(x)
            .map(|g| g.into_iter().map(|v| -v).collect())
    }
    fn fingerprint(&self) -> String {
        format!("neg:{}", self.0.fingerprint())
    }
}

fn check_len(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(QclError::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QclError::Numeric(format!("objective value {v} is not finite")))
    }
}

/// Frozen parameters, as (full parameter index, value) pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub frozen: Vec<(usize, f64)>,
}

impl SliceSpec {
    pub fn single(index: usize, value: f64) -> Self {
        Self {
            frozen: vec![(index, value)],
        }
    }
}

#[derive(Debug)]
enum Dynamics {
    Closed,
    Open {
        l0: CMat,
        l1: CMat,
        rho0: CVec,
        observable: CVec,
    },
}

#[derive(Debug)]
struct Problem {
    sys: QuantumSystem,
    spec: PulseShaperSpec,
    grid: TimeGrid,
    psi0: CVec,
    target: CVec,
    dynamics: Dynamics,
    fingerprint: String,
}

/// J(ε) for a concrete system, shaper, grid and transfer target, optionally
/// restricted to a slice with some parameters frozen.
#[derive(Debug, Clone)]
pub struct ControlLandscape {
    problem: Arc<Problem>,
    slice: SliceSpec,
    free: Vec<usize>,
}

impl ControlLandscape {
    /// Builds the landscape; open-system dynamics are used whenever the
    /// system has a decay channel with positive rate.
    pub fn new(
        sys: QuantumSystem,
        spec: PulseShaperSpec,
        grid: TimeGrid,
        psi0: CVec,
        target: CVec,
    ) -> Result<Self> {
        ensure_valid(&sys)?;
        for v in [&psi0, &target] {
            if v.len() != sys.dim {
                return Err(QclError::Dimension {
                    expected: sys.dim,
                    got: v.len(),
                });
            }
            let n = vec_norm(v);
            if (n - 1.0).abs() > 1e-10 {
                return Err(QclError::Normalization { norm: n });
            }
        }
        let dynamics = if sys.is_open() {
            let (l0, l1) = liouvillian_parts(&sys);
            let rho = &psi0 * psi0.adjoint();
            let obs = &target * target.adjoint();
            Dynamics::Open {
                l0,
                l1,
                rho0: CVec::from_column_slice(rho.as_slice()),
                observable: CVec::from_column_slice(obs.as_slice()),
            }
        } else {
            Dynamics::Closed
        };
        let fingerprint = fingerprint(&sys, &spec, &grid, &psi0, &target);
        let free = (0..spec.n_params()).collect();
        Ok(Self {
            problem: Arc::new(Problem {
                sys,
                spec,
                grid,
                psi0,
                target,
                dynamics,
                fingerprint,
            }),
            slice: SliceSpec::default(),
            free,
        })
    }

    pub fn system(&self) -> &QuantumSystem {
        &self.problem.sys
    }

    pub fn shaper(&self) -> &PulseShaperSpec {
        &self.problem.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.problem.grid
    }

    pub fn psi0(&self) -> &CVec {
        &self.problem.psi0
    }

    pub fn target(&self) -> &CVec {
        &self.problem.target
    }

    pub fn is_open(&self) -> bool {
        matches!(self.problem.dynamics, Dynamics::Open { .. })
    }

    pub fn slice(&self) -> &SliceSpec {
        &self.slice
    }

    /// Full-vector indices of the free parameters, in order.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    /// Restricts the landscape further. Indices refer to the full control
    /// vector, so successive freezes compose like a single combined freeze.
    pub fn freeze(&self, slice: &SliceSpec) -> Result<Self> {
        let spec = &self.problem.spec;
        let mut frozen = self.slice.frozen.clone();
        for &(index, value) in &slice.frozen {
            if index >= spec.n_params() {
                return Err(QclError::Argument(format!(
                    "frozen index {index} out of range for {} parameters",
                    spec.n_params()
                )));
            }
            if frozen.iter().any(|&(j, _)| j == index) {
                return Err(QclError::Argument(format!(
                    "parameter {index} is frozen twice"
                )));
            }
            check_single_bound(spec, index, value)?;
            frozen.push((index, value));
        }
        frozen.sort_by_key(|&(j, _)| j);
        let free: Vec<usize> = (0..spec.n_params())
            .filter(|i| !frozen.iter().any(|&(j, _)| j == *i))
            .collect();
        if free.is_empty() {
            return Err(QclError::Argument("cannot freeze every parameter".into()));
        }
        Ok(Self {
            problem: Arc::clone(&self.problem),
            slice: SliceSpec { frozen },
            free,
        })
    }

    /// Full control vector from free values and the frozen slice.
    pub fn merge(&self, free: &[f64]) -> Result<Vec<f64>> {
        check_len(self.free.len(), free)?;
        let mut full = vec![0.0; self.problem.spec.n_params()];
        for (&i, &v) in self.free.iter().zip(free) {
            full[i] = v;
        }
        for &(j, v) in &self.slice.frozen {
            full[j] = v;
        }
        Ok(full)
    }

    /// Checked evaluation: the merged vector must be feasible.
    pub fn eval_j(&self, free: &[f64]) -> Result<f64> {
        let full = self.merge(free)?;
        self.problem.spec.check_bounds(&full)?;
        Ok(self.value_full(&full)?.clamp(0.0, 1.0))
    }

    /// Checked exact gradient with respect to the free parameters.
    pub fn grad_j(&self, free: &[f64]) -> Result<Vec<f64>> {
        let full = self.merge(free)?;
        self.problem.spec.check_bounds(&full)?;
        self.gradient(free)
    }

    pub fn hessian_j(&self, free: &[f64]) -> Result<HessianReport> {
        let full = self.merge(free)?;
        self.problem.spec.check_bounds(&full)?;
        hessian(self, free)
    }

    fn value_full(&self, full: &[f64]) -> Result<f64> {
        let p = &self.problem;
        let fields = sample_fields(&p.spec, full, &p.grid)?;
        let dt = p.grid.dt();
        let j = match &p.dynamics {
            Dynamics::Closed => {
                let mut psi = p.psi0.clone();
                for u in step_unitaries(&p.sys, &fields, dt) {
                    psi = u * psi;
                }
                inner(&p.target, &psi).norm_sqr()
            }
            Dynamics::Open {
                l0,
                l1,
                rho0,
                observable,
            } => {
                let mut v = rho0.clone();
                for &e in &fields {
                    let g = expm(&(l0 + l1.scale(e)).scale(dt));
                    v = g * v;
                }
                inner(observable, &v).re
            }
        };
        finite(j)
    }

    /// dJ/dE(t_s) for every step of the grid.
    pub fn field_sensitivities(&self, full: &[f64]) -> Result<Vec<f64>> {
        let p = &self.problem;
        let fields = sample_fields(&p.spec, full, &p.grid)?;
        let dt = p.grid.dt();
        let sens = match &p.dynamics {
            Dynamics::Closed => {
                let dx = p.sys.dipole.map(|z| I * z * dt);
                let derivs: Vec<CMat> = fields
                    .iter()
                    .map(|&e| {
                        let x = step_generator(&p.sys, e).map(|z| -I * z * dt);
                        expm_with_derivative(&x, &dx).1
                    })
                    .collect();
                let steps = step_unitaries(&p.sys, &fields, dt);
                let mut forward = Vec::with_capacity(steps.len() + 1);
                forward.push(p.psi0.clone());
                for u in &steps {
                    let next = u * forward.last().expect("non-empty");
                    forward.push(next);
                }
                let z = inner(&p.target, forward.last().expect("non-empty"));
                let mut out = vec![0.0; steps.len()];
                let mut back = p.target.clone();
                for s in (0..steps.len()).rev() {
                    let dz = inner(&back, &(&derivs[s] * &forward[s]));
                    out[s] = 2.0 * (z.conj() * dz).re;
                    back = steps[s].adjoint() * back;
                }
                out
            }
            Dynamics::Open {
                l0,
                l1,
                rho0,
                observable,
            } => {
                let dl = l1.scale(dt);
                let mut props = Vec::with_capacity(fields.len());
                let mut derivs = Vec::with_capacity(fields.len());
                for &e in &fields {
                    let (g, d) = expm_with_derivative(&(l0 + l1.scale(e)).scale(dt), &dl);
                    props.push(g);
                    derivs.push(d);
                }
                let mut forward = Vec::with_capacity(props.len() + 1);
                forward.push(rho0.clone());
                for g in &props {
                    let next = g * forward.last().expect("non-empty");
                    forward.push(next);
                }
                let mut out = vec![0.0; props.len()];
                let mut back = observable.clone();
                for s in (0..props.len()).rev() {
                    out[s] = inner(&back, &(&derivs[s] * &forward[s])).re;
                    back = props[s].adjoint() * back;
                }
                out
            }
        };
        if sens.iter().any(|v| !v.is_finite()) {
            return Err(QclError::Numeric("field sensitivity is not finite".into()));
        }
        Ok(sens)
    }

    /// Exact gradient with respect to every entry of the full control vector.
    pub fn full_gradient(&self, full: &[f64]) -> Result<Vec<f64>> {
        let p = &self.problem;
        let sens = self.field_sensitivities(full)?;
        let mut grad = vec![0.0; p.spec.n_params()];
        for (s, t) in p.grid.midpoints().enumerate() {
            for (k, comp) in p.spec.components.iter().enumerate() {
                let arg = comp.omega * t + full[2 * k + 1];
                grad[2 * k] += sens[s] * arg.cos();
                grad[2 * k + 1] -= sens[s] * full[2 * k] * arg.sin();
            }
        }
        Ok(grad)
    }
}

fn check_single_bound(spec: &PulseShaperSpec, index: usize, value: f64) -> Result<()> {
    let (lo, hi) = spec.bounds(index);
    let ok = match spec.kind(index) {
        ParamKind::Amplitude(_) => value >= lo && value <= hi,
        ParamKind::Phase(_) => value >= lo && value < hi,
    };
    if ok {
        Ok(())
    } else {
        Err(QclError::BoundsViolation {
            index,
            value,
            lo,
            hi,
        })
    }
}

impl Landscape for ControlLandscape {
    fn n_free(&self) -> usize {
        self.free.len()
    }

    fn coordinates(&self) -> Vec<Coordinate> {
        let spec = &self.problem.spec;
        self.free
            .iter()
            .map(|&i| match spec.kind(i) {
                ParamKind::Amplitude(k) => Coordinate::Interval {
                    lo: 0.0,
                    hi: spec.components[k].a_max,
                },
                ParamKind::Phase(_) => Coordinate::Periodic { period: TAU },
            })
            .collect()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let full = self.merge(x)?;
        self.value_full(&full)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let full = self.merge(x)?;
        let g = self.full_gradient(&full)?;
        Ok(self.free.iter().map(|&i| g[i]).collect())
    }

    fn fingerprint(&self) -> String {
        self.problem.fingerprint.clone()
    }

    fn time_grid(&self) -> Option<TimeGrid> {
        Some(self.problem.grid)
    }
}

/// FNV-1a over the bit patterns of every number defining the problem.
fn fingerprint(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    grid: &TimeGrid,
    psi0: &CVec,
    target: &CVec,
) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut feed = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    feed(sys.dim as f64);
    for m in [&sys.h0, &sys.dipole] {
        m.iter().for_each(|z| {
            feed(z.re);
            feed(z.im);
        });
    }
    for ch in &sys.decay {
        ch.operator.iter().for_each(|z| {
            feed(z.re);
            feed(z.im);
        });
        feed(ch.rate);
    }
    for comp in &spec.components {
        feed(comp.omega);
        feed(comp.a_max);
    }
    feed(grid.horizon);
    feed(grid.steps as f64);
    for v in [psi0, target] {
        v.iter().for_each(|z| {
            feed(z.re);
            feed(z.im);
        });
    }
    let mut out = String::new();
    let _ = write!(out, "{hash:016x}");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    /// Symmetrized Hessian, row-major.
    pub matrix: Vec<Vec<f64>>,
    /// ‖H − Hᵀ‖_F before symmetrization.
    pub symmetry_defect: f64,
    /// Per-coordinate difference steps.
    pub steps: Vec<f64>,
}

impl HessianReport {
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.matrix.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.matrix.is_empty() {
            return Vec::new();
        }
        let mut eig: Vec<f64> = self.to_matrix().symmetric_eigen().eigenvalues.iter().cloned().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }
}

/// Central differences of the analytic gradient, step 1e-4·max(1, |x_i|),
/// then (H + Hᵀ)/2.
pub fn hessian<L: Landscape + ?Sized>(f: &L, x: &[f64]) -> Result<HessianReport> {
    hessian_on(f, x, &(0..f.n_free()).collect::<Vec<_>>())
}

/// Hessian restricted to the listed coordinates.
pub fn hessian_on<L: Landscape + ?Sized>(f: &L, x: &[f64], which: &[usize]) -> Result<HessianReport> {
    check_len(f.n_free(), x)?;
    let n = which.len();
    let mut raw = vec![vec![0.0; n]; n];
    let mut steps = Vec::with_capacity(n);
    for (col, &i) in which.iter().enumerate() {
        let h = HESSIAN_FD_STEP * x[i].abs().max(1.0);
        steps.push(h);
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let gp = f.gradient(&plus)?;
        let gm = f.gradient(&minus)?;
        for (row, &r) in which.iter().enumerate() {
            raw[row][col] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    let mut defect = 0.0;
    let mut matrix = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            if !raw[r][c].is_finite() {
                return Err(QclError::Numeric(format!(
                    "Hessian entry ({r}, {c}) is not finite"
                )));
            }
            defect += (raw[r][c] - raw[c][r]).powi(2);
            matrix[r][c] = 0.5 * (raw[r][c] + raw[c][r]);
        }
    }
    Ok(HessianReport {
        matrix,
        symmetry_defect: defect.sqrt(),
        steps,
    })
}

/// Central finite-difference gradient with a fixed step.
pub fn finite_difference_gradient<L: Landscape + ?Sized>(f: &L, x: &[f64], h: f64) -> Result<Vec<f64>> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            Ok((f.value(&plus)? - f.value(&minus)?) / (2.0 * h))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    /// Free-parameter index.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

impl ScanAxis {
    pub fn point(&self, k: usize) -> f64 {
        if self.resolution == 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (self.resolution - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub fingerprint: String,
    pub grid: Option<TimeGrid>,
    pub base: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeScan {
    pub axes: Vec<ScanAxis>,
    /// Row-major values; the first axis varies slowest.
    pub values: Vec<f64>,
    pub metadata: ScanMetadata,
}

impl LandscapeScan {
    /// CSV with header `eps_i,J` or `eps_i,eps_j,J`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.axes.len() {
            1 => out.push_str("eps_i,J\n"),
            _ => out.push_str("eps_i,eps_j,J\n"),
        }
        for (n, v) in self.values.iter().enumerate() {
            match self.axes.as_slice() {
                [a] => {
                    let _ = writeln!(out, "{},{}", fmt17(a.point(n)), fmt17(*v));
                }
                [a, b] => {
                    let (i, j) = (n / b.resolution, n % b.resolution);
                    let _ = writeln!(
                        out,
                        "{},{},{}",
                        fmt17(a.point(i)),
                        fmt17(b.point(j)),
                        fmt17(*v)
                    );
                }
                _ => unreachable!("scans have one or two axes"),
            }
        }
        out
    }
}

/// Decimal rendering with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dense scan over one or two free coordinates, others held at `base`.
pub fn scan_grid<L: Landscape + ?Sized>(f: &L, base: &[f64], axes: &[ScanAxis]) -> Result<LandscapeScan> {
    check_len(f.n_free(), base)?;
    if axes.is_empty() || axes.len() > 2 {
        return Err(QclError::Argument(format!(
            "scan needs one or two axes, got {}",
            axes.len()
        )));
    }
    let coords = f.coordinates();
    for axis in axes {
        if axis.resolution == 0 {
            return Err(QclError::Argument(format!(
                "axis {} has zero resolution",
                axis.index
            )));
        }
        if axis.index >= f.n_free() {
            return Err(QclError::Argument(format!(
                "axis index {} out of range for {} free parameters",
                axis.index,
                f.n_free()
            )));
        }
        if let Coordinate::Interval { lo, hi } = coords[axis.index] {
            if axis.lo.min(axis.hi) < lo || axis.lo.max(axis.hi) > hi {
                return Err(QclError::Argument(format!(
                    "axis {} range [{}, {}] leaves the feasible interval [{lo}, {hi}]",
                    axis.index, axis.lo, axis.hi
                )));
            }
        }
    }
    if axes.len() == 2 && axes[0].index == axes[1].index {
        return Err(QclError::Argument("scan axes must differ".into()));
    }
    let total: usize = axes.iter().map(|a| a.resolution).product();
    let values = (0..total)
        .into_par_iter()
        .map(|n| {
            let mut x = base.to_vec();
            match axes {
                [a] => x[a.index] = a.point(n),
                [a, b] => {
                    x[a.index] = a.point(n / b.resolution);
                    x[b.index] = b.point(n % b.resolution);
                }
                _ => unreachable!(),
            }
            f.value(&x)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LandscapeScan {
        axes: axes.to_vec(),
        values,
        metadata: ScanMetadata {
            fingerprint: f.fingerprint(),
            grid: f.time_grid(),
            base: base.to_vec(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::basis_state;
    use crate::linalg::c;
    use crate::model::SpectralComponent;
    use std::f64::consts::PI;

    fn sx_half() -> CMat {
        CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)])
    }

    /// H = −(A/2)σx for a constant drive of amplitude A: J = sin²(AT/2).
    fn rabi(t: f64, a_max: f64) -> ControlLandscape {
        let sys = QuantumSystem::closed(CMat::zeros(2, 2), sx_half()).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 0.0, a_max }]).unwrap();
        ControlLandscape::new(
            sys,
            spec,
            TimeGrid::new(t, 16).unwrap(),
            basis_state(2, 0),
            basis_state(2, 1),
        )
        .unwrap()
        .freeze(&SliceSpec::single(1, 0.0))
        .unwrap()
    }

    #[test]
    fn stationary_eigenstate_has_unit_fidelity() {
        let h0 = CMat::from_diagonal(&CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]));
        let sys = QuantumSystem::closed(h0, sx_half()).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 1.0, a_max: 1.0 }]).unwrap();
        let f = ControlLandscape::new(
            sys,
            spec,
            TimeGrid::new(3.0, 8).unwrap(),
            basis_state(2, 1),
            basis_state(2, 1),
        )
        .unwrap();
        assert!((f.eval_j(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rabi_values() {
        let f = rabi(1.0, 4.0);
        assert!((f.eval_j(&[PI]).unwrap() - 1.0).abs() < 1e-12);
        assert!(f.eval_j(&[0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_rabi_maximum() {
        let f = rabi(1.0, 4.0);
        assert!(f.grad_j(&[PI]).unwrap()[0].abs() < 1e-9);
    }

    #[test]
    fn rabi_curvature_at_maximum() {
        let t = 1.3;
        let f = rabi(t, 4.0);
        let h = f.hessian_j(&[PI / t]).unwrap();
        assert_eq!(h.matrix.len(), 1);
        // d²/dA² sin²(AT/2) = (T²/2)·cos(AT) = −T²/2 at AT = π
        assert!((h.matrix[0][0] + t * t / 2.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_hessian() {
        let q = AnalyticLandscape::concave_quadratic(vec![0.0; 3]);
        let h = hessian(&q, &[0.3, -0.2, 1.5]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { -2.0 } else { 0.0 };
                assert!((h.matrix[i][j] - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let f = rabi(1.0, 4.0);
        assert!(matches!(
            f.eval_j(&[5.0]),
            Err(QclError::BoundsViolation { index: 0, .. })
        ));
    }

    #[test]
    fn scan_contracts() {
        let t = 1.0;
        let f = rabi(t, 4.0);
        let scan = scan_grid(
            &f,
            &[PI],
            &[ScanAxis { index: 0, lo: PI - 0.1, hi: PI + 0.1, resolution: 3 }],
        )
        .unwrap();
        assert_eq!(scan.values.len(), 3);
        assert!(scan.values[1] > scan.values[0] && scan.values[1] > scan.values[2]);
        assert!(scan.to_csv().starts_with("eps_i,J\n"));

        let full = ControlLandscape::new(
            QuantumSystem::closed(CMat::zeros(2, 2), sx_half()).unwrap(),
            PulseShaperSpec::new(vec![SpectralComponent { omega: 0.0, a_max: 4.0 }]).unwrap(),
            TimeGrid::new(t, 4).unwrap(),
            basis_state(2, 0),
            basis_state(2, 1),
        )
        .unwrap();
        let scan2 = scan_grid(
            &full,
            &[0.0, 0.0],
            &[
                ScanAxis { index: 0, lo: 0.0, hi: 1.0, resolution: 2 },
                ScanAxis { index: 1, lo: 0.0, hi: 1.0, resolution: 2 },
            ],
        )
        .unwrap();
        assert_eq!(scan2.values.len(), 4);
        let csv = scan2.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("eps_i,eps_j,J\n"));
    }

    #[test]
    fn zero_resolution_rejected() {
        let f = rabi(1.0, 4.0);
        let err = scan_grid(&f, &[0.0], &[ScanAxis { index: 0, lo: 0.0, hi: 1.0, resolution: 0 }]);
        assert!(matches!(err, Err(QclError::Argument(_))));
    }

    #[test]
    fn uncoupled_scan_is_identically_zero() {
        let h0 = CMat::from_diagonal(&CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]));
        let sys = QuantumSystem::closed(h0, CMat::zeros(2, 2)).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 1.0, a_max: 2.0 }]).unwrap();
        let f = ControlLandscape::new(
            sys,
            spec,
            TimeGrid::new(2.0, 8).unwrap(),
            basis_state(2, 0),
            basis_state(2, 1),
        )
        .unwrap();
        let scan = scan_grid(
            &f,
            &[0.0, 0.0],
            &[
                ScanAxis { index: 0, lo: 0.0, hi: 2.0, resolution: 5 },
                ScanAxis { index: 1, lo: 0.0, hi: 6.0, resolution: 4 },
            ],
        )
        .unwrap();
        assert!(scan.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn freezing_everything_is_an_error() {
        let f = rabi(1.0, 4.0);
        assert!(matches!(
            f.freeze(&SliceSpec::single(0, 1.0)),
            Err(QclError::Argument(_))
        ));
        assert!(matches!(
            f.freeze(&SliceSpec::single(1, 0.5)),
            Err(QclError::Argument(_))
        ));
    }

    #[test]
    fn projected_gradient_zeroes_blocked_components() {
        let coords = [
            Coordinate::Interval { lo: 0.0, hi: 1.0 },
            Coordinate::Interval { lo: 0.0, hi: 1.0 },
            Coordinate::Periodic { period: TAU },
        ];
        let pg = projected_gradient(&coords, &[0.0, 1.0, 0.0], &[-1.0, 2.0, -3.0]);
        assert_eq!(pg, vec![0.0, 0.0, -3.0]);
        let pg = projected_gradient(&coords, &[0.0, 1.0, 0.0], &[1.0, -2.0, 3.0]);
        assert_eq!(pg, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn circular_distance_wraps() {
        let c = Coordinate::Periodic { period: TAU };
        assert!((c.distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
    }
}
