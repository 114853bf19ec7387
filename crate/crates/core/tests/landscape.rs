mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qcl_core::critpoints::{ascend, classify, AscentConfig, ClassifyConfig};
use qcl_core::error::Result;
use qcl_core::landscape::{
    finite_difference_gradient, scan_grid, ControlLandscape, Coordinate, Landscape, ScanAxis, SliceSpec, GRADIENT_FD_STEP,
};

/// The wrapped landscape with its free coordinates listed in another order.
struct Permuted<'a> {
    inner: &'a ControlLandscape,
    /// perm[k] = inner index shown at position k.
    perm: Vec<usize>,
}

impl Permuted<'_> {
    fn to_inner(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (k, &i) in self.perm.iter().enumerate() {
            y[i] = x[k];
        }
        y
    }
}

impl Landscape for Permuted<'_> {
    fn n_free(&self) -> usize {
        self.perm.len()
    }
    fn coordinates(&self) -> Vec<Coordinate> {
        let c = self.inner.coordinates();
        self.perm.iter().map(|&i| c[i]).collect()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.inner.value(&self.to_inner(x))
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.inner.gradient(&self.to_inner(x))?;
        Ok(self.perm.iter().map(|&i| g[i]).collect())
    }
}

fn rephased(f: &ControlLandscape, alpha: f64) -> ControlLandscape {
    let target = f.target().map(|z| z * Complex64::from_polar(1.0, alpha));
    ControlLandscape::new(f.system().clone(), f.shaper().clone(), *f.grid(), f.psi0().clone(), target).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn fidelity_is_bounded(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, eps) = common::random_instance(n, 2, 32, &mut rng);
        let j = f.eval_j(&eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&j));
    }

    #[test]
    fn global_phase_of_target_is_invisible(seed in any::<u64>(), alpha in 0.0..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, eps) = common::random_instance(3, 2, 32, &mut rng);
        let g = rephased(&f, alpha);
        prop_assert!((f.eval_j(&eps).unwrap() - g.eval_j(&eps).unwrap()).abs() < 1e-14);
        for (a, b) in f.grad_j(&eps).unwrap().iter().zip(g.grad_j(&eps).unwrap()) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn frozen_slice_is_bitwise_consistent(seed in any::<u64>(), which in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, eps) = common::random_instance(2, 2, 32, &mut rng);
        let sliced = f.freeze(&SliceSpec::single(which, eps[which])).unwrap();
        let free: Vec<f64> = eps.iter().enumerate().filter(|(i, _)| *i != which).map(|(_, v)| *v).collect();
        let merged = sliced.merge(&free).unwrap();
        prop_assert_eq!(&merged, &eps);
        prop_assert_eq!(sliced.eval_j(&free).unwrap().to_bits(), f.eval_j(&merged).unwrap().to_bits());
    }

    #[test]
    fn analytic_gradient_matches_differences(seed in any::<u64>(), n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, eps) = common::random_instance(n, 2, 40, &mut rng);
        let g = f.grad_j(&eps).unwrap();
        let fd = finite_difference_gradient(&f, &eps, GRADIENT_FD_STEP).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            if b.abs() > 1e-8 {
                prop_assert!((a - b).abs() <= 1e-6 * b.abs(), "{} vs {}", a, b);
            }
        }
    }
}

#[test]
fn evaluation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (f, eps) = common::random_instance(3, 4, 64, &mut rng);
    let a = f.eval_j(&eps).unwrap();
    let b = f.eval_j(&eps).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn scans_follow_the_rabi_formula() {
    let f = common::rabi(4.0, 1.5, 24);
    let axis = ScanAxis { index: 0, lo: 0.0, hi: 4.0, resolution: 33 };
    let scan = scan_grid(&f, &[0.0], &[axis]).unwrap();
    for (k, v) in scan.values.iter().enumerate() {
        assert!((v - (0.75 * axis.point(k)).sin().powi(2)).abs() < 1e-12);
    }
    assert_eq!(scan.to_csv().lines().count(), 34);
}

#[test]
fn two_axis_scan_is_row_major() {
    let ch = common::generous_qubit(2.0);
    let f = ch.landscape().unwrap();
    let base = vec![0.5; 12];
    let axes = [
        ScanAxis { index: 0, lo: 0.0, hi: 2.0, resolution: 4 },
        ScanAxis { index: 3, lo: 0.0, hi: 6.0, resolution: 5 },
    ];
    let scan = scan_grid(&f, &base, &axes).unwrap();
    assert_eq!(scan.values.len(), 20);
    let mut x = base.clone();
    x[0] = axes[0].point(2);
    x[3] = axes[1].point(1);
    assert_eq!(scan.values[2 * 5 + 1].to_bits(), f.eval_j(&x).unwrap().to_bits());
    assert!(scan.to_csv().starts_with("eps_i,eps_j,J\n"));
}

#[test]
fn classification_ignores_parameter_order() {
    let ch = common::generous_qubit(0.5);
    let f = ch.landscape().unwrap();
    let start = vec![0.3, 1.0, 0.2, 2.0, 0.4, 3.0, 0.1, 4.0, 0.25, 5.0, 0.35, 0.5];
    let top = ascend(&f, &start, &AscentConfig::default()).unwrap();
    assert!(top.converged);
    let cfg = ClassifyConfig::default();
    let base = classify(&f, &top.point, &cfg).unwrap();
    let perm = vec![5, 11, 0, 3, 8, 1, 10, 2, 7, 4, 9, 6];
    let p = Permuted { inner: &f, perm: perm.clone() };
    let xp: Vec<f64> = perm.iter().map(|&i| top.point[i]).collect();
    let other = classify(&p, &xp, &cfg).unwrap();
    assert_eq!(base.classification, other.classification);
    assert_eq!(base.hessian_eigs.len(), other.hessian_eigs.len());
    for (a, b) in base.hessian_eigs.iter().zip(&other.hessian_eigs) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
