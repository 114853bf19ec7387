//! Dense complex linear algebra used throughout the crate.
//!
//! Two exponential routines live here: [`exp_i_hermitian`] for unitary step
//! propagators (spectral, unitary to machine precision), and a general
//! scaling-and-squaring Padé [`expm`] for non-normal matrices such as the
//! augmented derivative blocks and Liouvillian superoperators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖M − M†‖_F.
pub fn hermitian_defect(m: &CMat) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// ‖U†U − I‖_F.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    frobenius(&(u.adjoint() * u - CMat::identity(n, n)))
}

/// Real part of the Frobenius inner product tr(A†B).
pub fn frobenius_dot_re(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Traceless part M − tr(M)/N · I.
pub fn traceless(m: &CMat) -> CMat {
    let n = m.nrows();
    let shift = m.trace() / n as f64;
    let mut out = m.clone();
    for k in 0..n {
        out[(k, k)] -= shift;
    }
    out
}

/// Column-stacked real/imaginary vectorization, length 2·rows·cols.
pub fn real_vectorize(m: &CMat) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m.len());
    for z in m.iter() {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

/// exp(−i·H·t) for Hermitian H via eigendecomposition.
///
/// Only the Hermitian part of `h` is used.
pub fn exp_i_hermitian(h: &CMat, t: f64) -> CMat {
    let n = h.nrows();
    if n == 1 {
        return CMat::from_element(1, 1, Complex64::from_polar(1.0, -h[(0, 0)].re * t));
    }
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CVec::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&lambda| Complex64::from_polar(1.0, -lambda * t)),
    );
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * v.adjoint()
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    let sym = (m + m.adjoint()).scale(0.5);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

fn one_norm(m: &CMat) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn pade_low(a: &CMat, coeffs: &[f64]) -> (CMat, CMat) {
    let n = a.nrows();
    let id = CMat::identity(n, n);
    let a2 = a * a;
    // powers of A² up to the needed order
    let mut pow = id.clone();
    let mut u_even = CMat::zeros(n, n);
    let mut v = CMat::zeros(n, n);
    for k in 0..coeffs.len() / 2 {
        if k > 0 {
            pow = &pow * &a2;
        }
        v += pow.map(|z| z * coeffs[2 * k]);
        u_even += pow.map(|z| z * coeffs[2 * k + 1]);
    }
    (a * u_even, v)
}

fn pade13(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let b = &PADE13;
    let id = CMat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let s = |m: &CMat, x: f64| m.map(|z| z * x);
    let inner_u = s(&a6, b[13]) + s(&a4, b[11]) + s(&a2, b[9]);
    let u = a * (&a6 * inner_u + s(&a6, b[7]) + s(&a4, b[5]) + s(&a2, b[3]) + s(&id, b[1]));
    let inner_v = s(&a6, b[12]) + s(&a4, b[10]) + s(&a2, b[8]);
    let v = &a6 * inner_v + s(&a6, b[6]) + s(&a4, b[4]) + s(&a2, b[2]) + s(&id, b[0]);
    (u, v)
}

/// Matrix exponential by scaling and squaring with Padé approximants.
///
/// Degree and scaling follow Higham's 2005 backward-error bounds, which keep
/// the relative error at unit-roundoff level for any square input.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return CMat::identity(n, n);
    }

    let mut picked = None;
    for &(m, theta) in THETA.iter() {
        if norm <= theta {
            picked = Some(m);
            break;
        }
    }

    let (u, v, squarings) = match picked {
        Some(3) => {
            let (u, v) = pade_low(a, &PADE3);
            (u, v, 0)
        }
        Some(5) => {
            let (u, v) = pade_low(a, &PADE5);
            (u, v, 0)
        }
        Some(7) => {
            let (u, v) = pade_low(a, &PADE7);
            (u, v, 0)
        }
        Some(_) => {
            let (u, v) = pade_low(a, &PADE9);
            (u, v, 0)
        }
        None => {
            let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
            let scaled = a.map(|z| z / 2f64.powi(s));
            let (u, v) = pade13(&scaled);
            (u, v, s)
        }
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular within the chosen degree bound");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Exponential of X together with its directional derivative along dX.
///
/// Evaluates exp of the block matrix [[X, dX], [0, X]]: the diagonal block
/// is exp(X) and the upper-right block is d/ds exp(X + s·dX) at s = 0.
pub fn expm_with_derivative(x: &CMat, dx: &CMat) -> (CMat, CMat) {
    let n = x.nrows();
    let mut block = CMat::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(x);
    block.view_mut((n, n), (n, n)).copy_from(x);
    block.view_mut((0, n), (n, n)).copy_from(dx);
    let e = expm(&block);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    )
}

/// ⟨a|b⟩ with the first argument conjugated.
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
