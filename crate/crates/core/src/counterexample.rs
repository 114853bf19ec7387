//! The two-parameter landscape
//!
//!   J(ε1, ε2) = (2/π)·(tan³ε1 − tan ε1·cos ε2 + tan(ε2/2))
//!
//! on the open box (−π/2, π/2)². The full function has no critical points
//! at all, yet every slice ε2 = c has an interior local maximum and minimum.
//!
//! The slice derivative is (2/π)·sec²ε1·(3tan²ε1 − cos c), vanishing at
//! tan ε1 = ±√(cos c/3); with t = √(cos c/3) the critical values are
//! (2/π)·(∓(2/3)·t·cos c + tan(c/2)), minimum at the positive root.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critpoints::{ascend, descend, AscentConfig};
use crate::error::{QclError, Result};
use crate::landscape::{Coordinate, Landscape};

/// Default distance kept from ±π/2 by scans and searches.
pub const CX_MARGIN: f64 = 1e-3;
pub const TRANSVERSALITY_RESOLUTION: usize = 10_000;
pub const RANGE_RESOLUTION: usize = 2001;
const BISECTION_TOL: f64 = 1e-10;

fn check_domain(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v.abs() >= FRAC_PI_2 {
        return Err(QclError::Domain(format!("{name} = {v} is outside (−π/2, π/2)")));
    }
    Ok(())
}

fn check_margin(margin: f64) -> Result<()> {
    if !(margin > 0.0 && margin < FRAC_PI_2) {
        return Err(QclError::Argument(format!("edge margin {margin} must lie in (0, π/2)")));
    }
    Ok(())
}

pub fn cx_eval(eps1: f64, eps2: f64) -> Result<f64> {
    check_domain("eps1", eps1)?;
    check_domain("eps2", eps2)?;
    let u = eps1.tan();
    Ok(2.0 / PI * (u * u * u - u * eps2.cos() + (0.5 * eps2).tan()))
}

pub fn cx_grad(eps1: f64, eps2: f64) -> Result<(f64, f64)> {
    check_domain("eps1", eps1)?;
    check_domain("eps2", eps2)?;
    let u = eps1.tan();
    let sec2 = 1.0 + u * u;
    let half = (0.5 * eps2).tan();
    Ok((
        2.0 / PI * sec2 * (3.0 * u * u - eps2.cos()),
        2.0 / PI * (u * eps2.sin() + 0.5 * (1.0 + half * half)),
    ))
}

/// Closed-form Hessian [[J11, J12], [J12, J22]].
pub fn cx_hessian(eps1: f64, eps2: f64) -> Result<[[f64; 2]; 2]> {
    check_domain("eps1", eps1)?;
    check_domain("eps2", eps2)?;
    let u = eps1.tan();
    let sec2 = 1.0 + u * u;
    let half = (0.5 * eps2).tan();
    let k = 2.0 / PI;
    let j11 = k * sec2 * 2.0 * u * (6.0 * u * u + 3.0 - eps2.cos());
    let j12 = k * sec2 * eps2.sin();
    let j22 = k * (u * eps2.cos() + 0.5 * (1.0 + half * half) * half);
    Ok([[j11, j12], [j12, j22]])
}

/// The full function as a landscape on the margin-shrunk box.
#[derive(Debug, Clone, Copy)]
pub struct CxLandscape {
    pub margin: f64,
}

impl CxLandscape {
    pub fn new(margin: f64) -> Result<Self> {
        check_margin(margin)?;
        Ok(Self { margin })
    }
}

impl Landscape for CxLandscape {
    fn n_free(&self) -> usize {
        2
    }
    fn coordinates(&self) -> Vec<Coordinate> {
        let b = FRAC_PI_2 - self.margin;
        vec![Coordinate::Interval { lo: -b, hi: b }; 2]
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        let [a, b] = two(x)?;
        cx_eval(a, b)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let [a, b] = two(x)?;
        let (g1, g2) = cx_grad(a, b)?;
        Ok(vec![g1, g2])
    }
    fn fingerprint(&self) -> String {
        format!("cx:margin={:e}", self.margin)
    }
}

fn two(x: &[f64]) -> Result<[f64; 2]> {
    match x {
        [a, b] => Ok([*a, *b]),
        _ => Err(QclError::Dimension { expected: 2, got: x.len() }),
    }
}

/// ε1 ↦ J(ε1, c) on the margin-shrunk interval.
#[derive(Debug, Clone, Copy)]
pub struct CxSlice {
    pub c: f64,
    pub margin: f64,
}

impl CxSlice {
    pub fn new(c: f64, margin: f64) -> Result<Self> {
        check_domain("c", c)?;
        check_margin(margin)?;
        Ok(Self { c, margin })
    }
}

impl Landscape for CxSlice {
    fn n_free(&self) -> usize {
        1
    }
    fn coordinates(&self) -> Vec<Coordinate> {
        let b = FRAC_PI_2 - self.margin;
        vec![Coordinate::Interval { lo: -b, hi: b }]
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        match x {
            [a] => cx_eval(*a, self.c),
            _ => Err(QclError::Dimension { expected: 1, got: x.len() }),
        }
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match x {
            [a] => Ok(vec![cx_grad(*a, self.c)?.0]),
            _ => Err(QclError::Dimension { expected: 1, got: x.len() }),
        }
    }
    fn fingerprint(&self) -> String {
        format!("cx-slice:c={:e},margin={:e}", self.c, self.margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceCritical {
    pub c: f64,
    pub eps1_at_min: f64,
    pub eps1_at_max: f64,
    #[serde(rename = "J_min")]
    pub j_min: f64,
    #[serde(rename = "J_max")]
    pub j_max: f64,
}

pub fn cx_slice_criticals(c: f64) -> Result<SliceCritical> {
    check_domain("c", c)?;
    let root = (c.cos() / 3.0).sqrt().atan();
    let (lo, hi) = (-root, root);
    // slice curvature (2/π)·sec²·6·tan at a root: positive at +root
    let curv = |e: f64| cx_hessian(e, c).map(|h| h[0][0]);
    if root > 0.0 && !(curv(hi)? > 0.0 && curv(lo)? < 0.0) {
        return Err(QclError::Numeric(format!("unexpected slice curvature at c = {c}")));
    }
    Ok(SliceCritical {
        c,
        eps1_at_min: hi,
        eps1_at_max: lo,
        j_min: cx_eval(hi, c)?,
        j_max: cx_eval(lo, c)?,
    })
}

fn curve_min(c: f64) -> f64 {
    let t = (c.cos() / 3.0).sqrt();
    2.0 / PI * (-(2.0 / 3.0) * t * c.cos() + (0.5 * c).tan())
}

fn curve_max(c: f64) -> f64 {
    let t = (c.cos() / 3.0).sqrt();
    2.0 / PI * ((2.0 / 3.0) * t * c.cos() + (0.5 * c).tan())
}

/// Which critical-value curve a level crossing lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCrossing {
    pub c: f64,
    pub branch: Branch,
}

/// Slices whose interior critical value equals `j0`, with the branch each
/// crossing belongs to; sorted by c.
pub fn cx_level_crossings(j0: f64, resolution: usize, margin: f64) -> Result<Vec<LevelCrossing>> {
    if !j0.is_finite() {
        return Err(QclError::Argument(format!("level {j0} is not finite")));
    }
    if resolution < 2 {
        return Err(QclError::Argument(format!("resolution {resolution} must be at least 2")));
    }
    check_margin(margin)?;
    let b = FRAC_PI_2 - margin;
    let grid: Vec<f64> = (0..resolution)
        .map(|k| -b + 2.0 * b * k as f64 / (resolution - 1) as f64)
        .collect();
    let mut out = Vec::new();
    for (branch, curve) in [(Branch::Min, curve_min as fn(f64) -> f64), (Branch::Max, curve_max)] {
        let g = |c: f64| curve(c) - j0;
        let vals: Vec<f64> = grid.iter().map(|&c| g(c)).collect();
        for k in 0..resolution {
            if vals[k] == 0.0 {
                out.push(LevelCrossing { c: grid[k], branch });
                continue;
            }
            if k + 1 < resolution && vals[k + 1] != 0.0 && (vals[k] < 0.0) != (vals[k + 1] < 0.0) {
                let (mut lo, mut hi) = (grid[k], grid[k + 1]);
                let lo_neg = vals[k] < 0.0;
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    let v = g(mid);
                    if v == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (v < 0.0) == lo_neg {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(LevelCrossing { c: 0.5 * (lo + hi), branch });
            }
        }
    }
    out.sort_by(|a, b| a.c.total_cmp(&b.c));
    Ok(out)
}

/// c values where a slice critical value equals `j0`, on a c-grid of
/// `resolution` points over the margin-shrunk interval.
pub fn cx_transversality_levels(j0: f64, resolution: usize) -> Result<Vec<f64>> {
    Ok(cx_level_crossings(j0, resolution, CX_MARGIN)?
        .into_iter()
        .map(|x| x.c)
        .collect())
}

/// Ranges of the two critical-value curves over a c-grid.
pub fn cx_curve_ranges(resolution: usize, margin: f64) -> Result<((f64, f64), (f64, f64))> {
    check_margin(margin)?;
    if resolution < 2 {
        return Err(QclError::Argument(format!("resolution {resolution} must be at least 2")));
    }
    let b = FRAC_PI_2 - margin;
    let mut rmin = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rmax = rmin;
    for k in 0..resolution {
        let c = -b + 2.0 * b * k as f64 / (resolution - 1) as f64;
        let (lo, hi) = (curve_min(c), curve_max(c));
        rmin = (rmin.0.min(lo), rmin.1.max(lo));
        rmax = (rmax.0.min(hi), rmax.1.max(hi));
    }
    Ok((rmin, rmax))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRange {
    pub c: f64,
    pub min: f64,
    pub max: f64,
    pub eps1_at_min: f64,
    pub eps1_at_max: f64,
    /// Extremum outside [−1, 1].
    pub outside_unit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScan {
    pub margin: f64,
    pub resolution: usize,
    pub slices: Vec<SliceRange>,
    pub global_min: f64,
    pub global_max: f64,
    pub n_outside_unit: usize,
}

/// Per-slice extrema of J over a resolution × resolution grid on the
/// margin-shrunk box. Slice rows are the ε2 = c grid values.
pub fn cx_range_scan(resolution: usize, margin: f64) -> Result<RangeScan> {
    check_margin(margin)?;
    if resolution < 2 {
        return Err(QclError::Argument(format!("resolution {resolution} must be at least 2")));
    }
    let b = FRAC_PI_2 - margin;
    let point = |k: usize| -b + 2.0 * b * k as f64 / (resolution - 1) as f64;
    let slices: Vec<SliceRange> = (0..resolution)
        .into_par_iter()
        .map(|row| {
            let c = point(row);
            let mut best = SliceRange {
                c,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                eps1_at_min: 0.0,
                eps1_at_max: 0.0,
                outside_unit: false,
            };
            for k in 0..resolution {
                let e = point(k);
                let v = cx_eval(e, c)?;
                if v < best.min {
                    best.min = v;
                    best.eps1_at_min = e;
                }
                if v > best.max {
                    best.max = v;
                    best.eps1_at_max = e;
                }
            }
            best.outside_unit = best.min < -1.0 || best.max > 1.0;
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let global_min = slices.iter().fold(f64::INFINITY, |m, s| m.min(s.min));
    let global_max = slices.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.max));
    let n_outside_unit = slices.iter().filter(|s| s.outside_unit).count();
    Ok(RangeScan {
        margin,
        resolution,
        slices,
        global_min,
        global_max,
        n_outside_unit,
    })
}

/// Result of searching the full 2D function for stationary points by
/// descending ‖∇J‖² from random starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySearch {
    pub n_starts: usize,
    pub seed: u64,
    /// Smallest ‖∇J‖ reached over all runs, and where.
    pub min_grad_norm: f64,
    pub at: [f64; 2],
    /// Terminals with ‖∇J‖ ≤ 1e-8 and the Hessian eigenvalues there.
    pub critical_points: Vec<([f64; 2], [f64; 2])>,
}

struct GradNormSq {
    margin: f64,
}

impl Landscape for GradNormSq {
    fn n_free(&self) -> usize {
        2
    }
    fn coordinates(&self) -> Vec<Coordinate> {
        CxLandscape { margin: self.margin }.coordinates()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        let (g1, g2) = cx_grad(x[0], x[1])?;
        Ok(g1 * g1 + g2 * g2)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (g1, g2) = cx_grad(x[0], x[1])?;
        let h = cx_hessian(x[0], x[1])?;
        Ok(vec![2.0 * (h[0][0] * g1 + h[0][1] * g2), 2.0 * (h[1][0] * g1 + h[1][1] * g2)])
    }
}

fn sym_eigs(h: [[f64; 2]; 2]) -> [f64; 2] {
    let mean = 0.5 * (h[0][0] + h[1][1]);
    let r = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[1][0]).sqrt();
    [mean - r, mean + r]
}

pub fn cx_stationary_search(n_starts: usize, seed: u64, box_half_width: f64) -> Result<StationarySearch> {
    if !(box_half_width > 0.0 && box_half_width < FRAC_PI_2) {
        return Err(QclError::Argument(format!("box half-width {box_half_width} must lie in (0, π/2)")));
    }
    let f = GradNormSq { margin: FRAC_PI_2 - box_half_width };
    let cfg = AscentConfig { tol_g: 1e-12, max_iters: 5000, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<[f64; 2]> = (0..n_starts)
        .map(|_| {
            [
                rng.random_range(-box_half_width..box_half_width),
                rng.random_range(-box_half_width..box_half_width),
            ]
        })
        .collect();
    let mut out = StationarySearch {
        n_starts,
        seed,
        min_grad_norm: f64::INFINITY,
        at: [0.0, 0.0],
        critical_points: Vec::new(),
    };
    for s in starts {
        let run = descend(&f, &s, &cfg)?;
        let g = run.value.max(0.0).sqrt();
        let p = [run.point[0], run.point[1]];
        if g < out.min_grad_norm {
            out.min_grad_norm = g;
            out.at = p;
        }
        if g <= 1e-8 {
            out.critical_points.push((p, sym_eigs(cx_hessian(p[0], p[1])?)));
        }
    }
    Ok(out)
}

/// Numeric slice extremum by 1D ascent (`maximize`) or descent.
pub fn cx_slice_extremum(c: f64, start: f64, maximize: bool) -> Result<f64> {
    let slice = CxSlice::new(c, CX_MARGIN)?;
    let cfg = AscentConfig::default();
    let run = if maximize { ascend(&slice, &[start], &cfg)? } else { descend(&slice, &[start], &cfg)? };
    if !run.converged {
        return Err(QclError::Numeric(format!("slice search at c = {c} did not converge")));
    }
    Ok(run.point[0])
}
