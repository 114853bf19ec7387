#![allow(dead_code)]

use qcl_core::audit::ChallengeSpec;
use qcl_core::document::basis_state;
use qcl_core::landscape::{ControlLandscape, SliceSpec};
use qcl_core::linalg::{c, CMat};
use qcl_core::model::{PulseShaperSpec, QuantumSystem, SpectralComponent, TimeGrid};

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// h0 = 0, dipole = σx/2, one static component with its phase frozen at 0:
/// J(A) = sin²(A·T/2).
pub fn rabi(a_max: f64, horizon: f64, steps: usize) -> ControlLandscape {
    let sys = QuantumSystem::closed(CMat::zeros(2, 2), sigma_x().scale(0.5)).unwrap();
    let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 0.0, a_max }]).unwrap();
    ControlLandscape::new(sys, spec, TimeGrid::new(horizon, steps).unwrap(), basis_state(2, 0), basis_state(2, 1))
        .unwrap()
        .freeze(&SliceSpec::single(1, 0.0))
        .unwrap()
}

/// Resonant qubit h0 = σz/2, dipole = σx, six components spread around the
/// transition, T = 3π.
pub fn generous_qubit(a_max: f64) -> ChallengeSpec {
    let sys = QuantumSystem::closed(sigma_z().scale(0.5), sigma_x()).unwrap();
    let comps = [0.5, 0.75, 1.0, 1.25, 1.5, 1.75]
        .iter()
        .map(|&omega| SpectralComponent { omega, a_max })
        .collect();
    let spec = PulseShaperSpec::new(comps).unwrap();
    ChallengeSpec::new(
        sys,
        spec,
        TimeGrid::new(3.0 * std::f64::consts::PI, 96).unwrap(),
        basis_state(2, 0),
        basis_state(2, 1),
    )
    .unwrap()
}

use qcl_core::linalg::CVec;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_hermitian(n: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&g + g.adjoint()).scale(0.5 * scale)
}

pub fn random_state(n: usize, rng: &mut impl Rng) -> CVec {
    let v = CVec::from_fn(n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let norm = v.norm();
    v.unscale(norm)
}

/// Random closed N-level instance with M components and S steps, plus a
/// random interior control vector.
pub fn random_instance(n: usize, m: usize, steps: usize, rng: &mut impl Rng) -> (ControlLandscape, Vec<f64>) {
    let sys = QuantumSystem::closed(random_hermitian(n, 1.0, rng), random_hermitian(n, 0.5, rng)).unwrap();
    let comps: Vec<SpectralComponent> = (0..m)
        .map(|_| SpectralComponent { omega: rng.random_range(0.2..2.5), a_max: rng.random_range(0.5..2.0) })
        .collect();
    let eps: Vec<f64> = comps
        .iter()
        .flat_map(|c| [rng.random_range(0.05..0.95) * c.a_max, rng.random_range(0.1..6.1)])
        .collect();
    let spec = PulseShaperSpec::new(comps).unwrap();
    let horizon = rng.random_range(1.0..4.0);
    let f = ControlLandscape::new(
        sys,
        spec,
        TimeGrid::new(horizon, steps).unwrap(),
        random_state(n, rng),
        random_state(n, rng),
    )
    .unwrap();
    (f, eps)
}
