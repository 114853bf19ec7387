//! Global controllability from the rank of the dynamical Lie algebra, and
//! local controllability from the rank of the end-point map's Jacobian.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::linalg::{
    commutator, expm_with_derivative, frobenius, hermitian_defect, real_vectorize, traceless, CMat, I,
};
use crate::model::{ensure_valid, ControlVector, PulseShaperSpec, QuantumSystem, TimeGrid};
use crate::propagate::{sample_fields, step_generator, step_unitaries};

pub const LIE_TOL: f64 = 1e-10;
pub const JACOBIAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieAlgebraReport {
    pub dimension: usize,
    /// N² − 1: the algebra is built from traceless generators.
    pub target_dimension: usize,
    pub controllable: bool,
    /// Orthonormal anti-Hermitian basis, each matrix row-major as [re, im] pairs.
    #[serde(with = "matrix_list")]
    pub basis_matrices: Vec<CMat>,
    /// Commutator nesting level after which no new direction appeared.
    pub closure_depth: usize,
    pub tolerance: f64,
}

mod matrix_list {
    use super::CMat;
    use crate::document::encode_matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        let enc: Vec<Vec<[f64; 2]>> = v.iter().map(encode_matrix).collect();
        enc.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let enc: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        enc.into_iter()
            .map(|m| {
                let n = (m.len() as f64).sqrt().round() as usize;
                if n * n != m.len() {
                    return Err(serde::de::Error::custom("basis matrix is not square"));
                }
                Ok(CMat::from_row_iterator(
                    n,
                    n,
                    m.into_iter().map(|[re, im]| crate::linalg::c(re, im)),
                ))
            })
            .collect()
    }
}

struct Basis {
    mats: Vec<CMat>,
    vecs: Vec<Vec<f64>>,
    tol: f64,
}

impl Basis {
    /// Orthogonalizes `m` against the basis (two passes of modified
    /// Gram-Schmidt) and keeps it if the residual norm exceeds `tol`.
    fn try_add(&mut self, m: &CMat) -> bool {
        let scale = frobenius(m);
        if scale <= self.tol {
            return false;
        }
        let mut v: Vec<f64> = real_vectorize(m).iter().map(|x| x / scale).collect();
        for _ in 0..2 {
            for b in &self.vecs {
                let p: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(y, x)| *y -= p * x);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= self.tol {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let dim = m.nrows();
        let mut mat = CMat::from_fn(dim, dim, |r, c| {
            let k = 2 * (c * dim + r);
            crate::linalg::c(v[k], v[k + 1])
        });
        // remove rounding drift away from the anti-Hermitian subspace
        mat = (&mat - mat.adjoint()).scale(0.5);
        self.vecs.push(real_vectorize(&mat));
        self.mats.push(mat);
        true
    }
}

/// Dimension of the real Lie algebra generated by i·(traceless part) of each
/// Hermitian generator, closed under commutators breadth-first.
pub fn lie_rank(generators: &[CMat], tol: f64) -> Result<LieAlgebraReport> {
    let first = generators
        .first()
        .ok_or_else(|| QclError::Argument("lie_rank needs at least one generator".into()))?;
    let n = first.nrows();
    if !(tol > 0.0) {
        return Err(QclError::Argument(format!("tolerance must be positive, got {tol}")));
    }
    for (k, g) in generators.iter().enumerate() {
        if g.nrows() != n || g.ncols() != n {
            return Err(QclError::Dimension { expected: n, got: g.nrows().max(g.ncols()) });
        }
        let defect = hermitian_defect(g);
        if defect > 1e-12 * frobenius(g).max(1.0) {
            return Err(QclError::Argument(format!(
                "generator {k} is not Hermitian (defect {defect:e})"
            )));
        }
    }
    let target = n * n - 1;
    let cap = n.pow(4);
    let mut basis = Basis { mats: Vec::new(), vecs: Vec::new(), tol };
    for g in generators {
        basis.try_add(&traceless(g).map(|z| I * z));
    }

    let mut frontier: Vec<usize> = (0..basis.mats.len()).collect();
    let mut depth = 0;
    while !frontier.is_empty() && basis.mats.len() < target {
        let mut added = Vec::new();
        let mut candidates = 0;
        'round: for &a in &frontier {
            for b in 0..basis.mats.len() {
                if a == b {
                    continue;
                }
                if candidates >= cap || basis.mats.len() >= target {
                    break 'round;
                }
                candidates += 1;
                let c = commutator(&basis.mats[a], &basis.mats[b]);
                if basis.try_add(&c) {
                    added.push(basis.mats.len() - 1);
                }
            }
        }
        if added.is_empty() {
            break;
        }
        depth += 1;
        frontier = added;
    }
    let dimension = basis.mats.len();
    Ok(LieAlgebraReport {
        dimension,
        target_dimension: target,
        controllable: dimension == target,
        basis_matrices: basis.mats,
        closure_depth: depth,
        tolerance: tol,
    })
}

/// Lie rank of the drift and control Hamiltonians {h0, dipole}.
pub fn system_lie_rank(sys: &QuantumSystem) -> Result<LieAlgebraReport> {
    lie_rank(&[sys.h0.clone(), sys.dipole.clone()], LIE_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub target_rank: usize,
    pub locally_surjective: bool,
    pub tolerance: f64,
    pub include_phase: bool,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianOptions {
    pub include_phase: bool,
    /// Relative singular-value threshold.
    pub tol: f64,
    /// Restrict to these parameter indices; all parameters when `None`.
    pub free: Option<Vec<usize>>,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        Self { include_phase: false, tol: JACOBIAN_TOL, free: None }
    }
}

pub fn endpoint_jacobian(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
    include_phase: bool,
) -> Result<JacobianReport> {
    endpoint_jacobian_with(sys, spec, eps, grid, &JacobianOptions { include_phase, ..Default::default() })
}

/// The generators T_i = (∂Û/∂ε_i)·Û† for every parameter.
pub fn endpoint_generators(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
) -> Result<Vec<CMat>> {
    ensure_valid(sys)?;
    spec.check_bounds(eps.as_slice())?;
    let x = eps.as_slice();
    let fields = sample_fields(spec, x, grid)?;
    let dt = grid.dt();
    let n = sys.dim;
    let steps = step_unitaries(sys, &fields, dt);
    let dx = sys.dipole.map(|z| I * z * dt);

    // per-step field generator D_s·U_s†, transported to the end as
    // L_s·(D_s U_s†)·L_s† with L_s the product of the later steps
    let local: Vec<CMat> = fields
        .par_iter()
        .zip(steps.par_iter())
        .map(|(&e, u)| {
            let xs = step_generator(sys, e).map(|z| -I * z * dt);
            expm_with_derivative(&xs, &dx).1 * u.adjoint()
        })
        .collect();
    let mut per_step = vec![CMat::zeros(n, n); steps.len()];
    let mut later = CMat::identity(n, n);
    for s in (0..steps.len()).rev() {
        per_step[s] = &later * &local[s] * later.adjoint();
        later = &later * &steps[s];
    }

    let mut out = vec![CMat::zeros(n, n); spec.n_params()];
    for (s, t) in grid.midpoints().enumerate() {
        for (k, comp) in spec.components.iter().enumerate() {
            let arg = comp.omega * t + x[2 * k + 1];
            out[2 * k] += per_step[s].scale(arg.cos());
            out[2 * k + 1] -= per_step[s].scale(x[2 * k] * arg.sin());
        }
    }
    for (i, t) in out.iter().enumerate() {
        let defect = frobenius(&(t + t.adjoint()));
        if defect > 1e-8 * frobenius(t).max(1.0) {
            return Err(QclError::Numeric(format!(
                "generator T_{i} is not anti-Hermitian (defect {defect:e})"
            )));
        }
    }
    Ok(out)
}

/// Rank of the linear map δε ↦ δÛ·Û† at `eps`.
pub fn endpoint_jacobian_with(
    sys: &QuantumSystem,
    spec: &PulseShaperSpec,
    eps: &ControlVector,
    grid: &TimeGrid,
    opts: &JacobianOptions,
) -> Result<JacobianReport> {
    if !(opts.tol > 0.0) {
        return Err(QclError::Argument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let gens = endpoint_generators(sys, spec, eps, grid)?;
    let free: Vec<usize> = match &opts.free {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&i| i >= gens.len()) {
                return Err(QclError::Argument(format!("parameter index {bad} out of range")));
            }
            f.clone()
        }
        None => (0..gens.len()).collect(),
    };
    let n = sys.dim;
    let target_rank = if opts.include_phase { n * n } else { n * n - 1 };
    let columns: Vec<Vec<f64>> = free
        .iter()
        .map(|&i| {
            let t = if opts.include_phase { gens[i].clone() } else { traceless(&gens[i]) };
            real_vectorize(&t)
        })
        .collect();
    let singular_values = if columns.is_empty() {
        Vec::new()
    } else {
        let rows = columns[0].len();
        let m = DMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    };
    let rank = count_rank(&singular_values, opts.tol);
    Ok(JacobianReport {
        singular_values,
        rank,
        target_rank,
        locally_surjective: rank == target_rank,
        tolerance: opts.tol,
        include_phase: opts.include_phase,
        n_params: free.len(),
    })
}

/// Number of singular values above tol·σ_max (zero if σ_max is zero).
pub fn count_rank(singular_values: &[f64], tol: f64) -> usize {
    let max = singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    if max == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, frobenius_dot_re};
    use crate::model::SpectralComponent;

    fn sx() -> CMat {
        CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }
    fn sz() -> CMat {
        CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    #[test]
    fn pauli_pair_is_controllable() {
        let r = lie_rank(&[sz(), sx()], LIE_TOL).unwrap();
        assert_eq!(r.dimension, 3);
        assert!(r.controllable);
        assert_eq!(r.closure_depth, 1);
    }

    #[test]
    fn commuting_diagonals_are_not() {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1., 0.), c(2., 0.)]));
        let r = lie_rank(&[sz(), d], LIE_TOL).unwrap();
        assert!(r.dimension <= 2);
        assert!(!r.controllable);
    }

    #[test]
    fn basis_is_orthonormal_and_anti_hermitian() {
        let h0 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0., 0.), c(1., 0.), c(2.5, 0.)]));
        let mut mu = CMat::zeros(3, 3);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            mu[(i, j)] = c(1., 0.);
        }
        let r = lie_rank(&[h0, mu], LIE_TOL).unwrap();
        assert_eq!(r.dimension, 8);
        for (a, ma) in r.basis_matrices.iter().enumerate() {
            assert!(frobenius(&(ma + ma.adjoint())) <= 1e-12);
            for (b, mb) in r.basis_matrices.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((frobenius_dot_re(ma, mb) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_hermitian_generator_rejected() {
        let mut bad = sx();
        bad[(0, 1)] = c(2., 0.);
        assert!(matches!(lie_rank(&[bad], LIE_TOL), Err(QclError::Argument(_))));
        assert!(lie_rank(&[], LIE_TOL).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let r = lie_rank(&[sz(), sx()], LIE_TOL).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: LieAlgebraReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.dimension, 3);
        assert_eq!(back.basis_matrices.len(), 3);
    }

    #[test]
    fn single_component_rank_bounded_by_two() {
        let sys = QuantumSystem::closed(sz().scale(0.5), sx()).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 1.0, a_max: 2.0 }]).unwrap();
        let grid = TimeGrid::new(3.0, 64).unwrap();
        let rep = endpoint_jacobian(&sys, &spec, &ControlVector::new(vec![0.7, 1.1], &spec).unwrap(), &grid, false).unwrap();
        assert!(rep.rank <= 2);
        assert!(!rep.locally_surjective);
        assert_eq!(rep.target_rank, 3);
    }

    #[test]
    fn zero_dipole_gives_rank_zero() {
        let sys = QuantumSystem::closed(sz(), CMat::zeros(2, 2)).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 1.0, a_max: 2.0 }; 3]).unwrap();
        let grid = TimeGrid::new(2.0, 32).unwrap();
        let eps = ControlVector::new(vec![0.5, 0.1, 1.0, 2.0, 1.5, 3.0], &spec).unwrap();
        let rep = endpoint_jacobian(&sys, &spec, &eps, &grid, true).unwrap();
        assert_eq!(rep.rank, 0);
        assert!(rep.singular_values.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn generators_match_finite_differences() {
        let sys = QuantumSystem::closed(sz().scale(0.5), sx().scale(0.5)).unwrap();
        let spec = PulseShaperSpec::new(vec![
            SpectralComponent { omega: 0.8, a_max: 2.0 },
            SpectralComponent { omega: 1.3, a_max: 2.0 },
        ])
        .unwrap();
        let grid = TimeGrid::new(4.0, 48).unwrap();
        let x = vec![0.9, 0.4, 1.2, 2.0];
        let gens = endpoint_generators(&sys, &spec, &ControlVector::new(x.clone(), &spec).unwrap(), &grid).unwrap();
        let u = |v: &[f64]| {
            crate::propagate::propagate_unitary(&sys, &spec, &ControlVector::new(v.to_vec(), &spec).unwrap(), &grid)
                .unwrap()
                .final_unitary
        };
        let u0 = u(&x);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (u(&p) - u(&m)).scale(0.5 / h) * u0.adjoint();
            assert!(frobenius(&(fd - &gens[i])) < 1e-7, "parameter {i}");
        }
    }

    #[test]
    fn rank_count_uses_relative_threshold() {
        assert_eq!(count_rank(&[1.0, 1e-3, 1e-9], 1e-8), 2);
        assert_eq!(count_rank(&[0.0, 0.0], 1e-8), 0);
        assert_eq!(count_rank(&[], 1e-8), 0);
    }
}
