use serde::{Deserialize, Serialize};

use crate::error::{QclError, Result};
use crate::landscape::{norm, project_point, projected_gradient, Coordinate, Landscape, Negated};

/// Evaluation-noise band, in units of ε·max(|J|, 1), below which J
/// differences are not trusted.
pub const ROUNDING_ULPS: f64 = 256.0;
/// Required shrink of the projected-gradient norm for steps accepted in the
/// rounding regime.
pub const GRADIENT_CONTRACTION: f64 = 0.9;

/// Projected gradient ascent with backtracking (Armijo) line search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Smallest first trial step of every line search; after an accepted
    /// step t the next search starts from max(2t, initial_step).
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_increase: f64,
    /// Stop once the projected-gradient norm is at or below this.
    pub tol_g: f64,
    pub max_iters: usize,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            tol_g: 1e-8,
            max_iters: 10_000,
            max_step: 1e4,
            min_step: 1e-18,
        }
    }
}

impl AscentConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_step,
            self.sufficient_increase,
            self.tol_g,
            self.max_step,
            self.min_step,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(QclError::Argument(format!("invalid ascent configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    /// Projected-gradient norm at `point`.
    pub grad_norm: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    /// J at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn trial_point(coords: &[Coordinate], x: &[f64], g: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut raw: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi + t * gi).collect();
    // displacement before phase wrapping, so the Armijo test sees the true move
    let mut step = Vec::with_capacity(x.len());
    for (i, c) in coords.iter().enumerate() {
        let moved = match c {
            Coordinate::Interval { lo, hi } => raw[i].clamp(*lo, *hi),
            _ => raw[i],
        };
        step.push(moved - x[i]);
    }
    project_point(coords, &mut raw);
    (raw, step)
}

fn check_feasible(coords: &[Coordinate], x: &[f64]) -> Result<()> {
    for (i, (c, &v)) in coords.iter().zip(x).enumerate() {
        if !v.is_finite() {
            return Err(QclError::Numeric(format!("start coordinate {i} is not finite")));
        }
        if let Coordinate::Interval { lo, hi } = *c {
            if v < lo || v > hi {
                return Err(QclError::BoundsViolation { index: i, value: v, lo, hi });
            }
        }
    }
    Ok(())
}

/// Climbs `f` from `x0`, projecting every iterate onto the feasible box.
///
/// Accepted values never decrease by more than rounding. Near convergence,
/// where the predicted Armijo increase drops below rounding level
/// (ROUNDING_ULPS·ε·max(|J|, 1)), a step is accepted when J rises above
/// that level, or stays within it while either the directional derivative
/// along the move is still non-negative at the trial point or the
/// projected-gradient norm drops by the factor GRADIENT_CONTRACTION.
pub fn ascend<L: Landscape + ?Sized>(f: &L, x0: &[f64], cfg: &AscentConfig) -> Result<AscentOutcome> {
    cfg.validate()?;
    if x0.len() != f.n_free() {
        return Err(QclError::Dimension { expected: f.n_free(), got: x0.len() });
    }
    let coords = f.coordinates();
    check_feasible(&coords, x0)?;
    let mut x = x0.to_vec();
    project_point(&coords, &mut x);

    let mut value = f.value(&x)?;
    let mut grad = f.gradient(&x)?;
    let mut history = vec![value];
    let mut step = cfg.initial_step;
    let mut iterations = 0;

    loop {
        let pg = projected_gradient(&coords, &x, &grad);
        let grad_norm = norm(&pg);
        if grad_norm <= cfg.tol_g || iterations >= cfg.max_iters {
            return Ok(AscentOutcome {
                point: x,
                value,
                grad_norm,
                iterations,
                converged: grad_norm <= cfg.tol_g,
                history,
            });
        }

        let mut t = step.max(cfg.initial_step);
        let accepted = loop {
            if t < cfg.min_step {
                break None;
            }
            let (trial, disp) = trial_point(&coords, &x, &pg, t);
            let predicted: f64 = pg.iter().zip(&disp).map(|(a, b)| a * b).sum();
            let trial_value = f.value(&trial).map_err(|e| match e {
                QclError::Numeric(msg) => {
                    QclError::Numeric(format!("{msg} at iterate {iterations}: {trial:?}"))
                }
                other => other,
            })?;
            let rounding = ROUNDING_ULPS * f64::EPSILON * value.abs().max(1.0);
            let noisy = cfg.sufficient_increase * predicted <= rounding;
            if predicted > 0.0 && !noisy && trial_value >= value + cfg.sufficient_increase * predicted {
                break Some((trial, trial_value, None));
            }
            if predicted > 0.0 && noisy && trial_value >= value + rounding {
                break Some((trial, trial_value, None));
            }
            if predicted > 0.0 && noisy && trial_value >= value - rounding {
                let trial_grad = f.gradient(&trial)?;
                let trial_pg = projected_gradient(&coords, &trial, &trial_grad);
                // still climbing along the move at the trial point
                let slope: f64 = trial_grad.iter().zip(&disp).map(|(a, b)| a * b).sum();
                if slope >= 0.0 || norm(&trial_pg) <= GRADIENT_CONTRACTION * grad_norm {
                    break Some((trial, trial_value, Some(trial_grad)));
                }
            }
            t *= cfg.shrink;
        };

        match accepted {
            Some((trial, trial_value, trial_grad)) => {
                x = trial;
                value = trial_value;
                grad = match trial_grad {
                    Some(g) => g,
                    None => f.gradient(&x)?,
                };
                history.push(value);
                iterations += 1;
                step = (2.0 * t).min(cfg.max_step);
            }
            None => {
                return Ok(AscentOutcome {
                    point: x,
                    value,
                    grad_norm,
                    iterations,
                    converged: false,
                    history,
                });
            }
        }
    }
}

/// Descent on `f`, reported in the original sign convention.
pub fn descend<L: Landscape + ?Sized>(f: &L, x0: &[f64], cfg: &AscentConfig) -> Result<AscentOutcome> {
    let mut out = ascend(&Negated(f), x0, cfg)?;
    out.value = -out.value;
    out.history.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::basis_state;
    use crate::landscape::{AnalyticLandscape, ControlLandscape, SliceSpec};
    use crate::linalg::{c, CMat};
    use crate::model::{PulseShaperSpec, QuantumSystem, SpectralComponent, TimeGrid};
    use std::f64::consts::PI;

    fn rabi() -> ControlLandscape {
        let sx_half = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        let sys = QuantumSystem::closed(CMat::zeros(2, 2), sx_half).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 0.0, a_max: 4.0 }]).unwrap();
        ControlLandscape::new(sys, spec, TimeGrid::new(1.0, 8).unwrap(), basis_state(2, 0), basis_state(2, 1))
            .unwrap()
            .freeze(&SliceSpec::single(1, 0.0))
            .unwrap()
    }

    #[test]
    fn starting_at_maximum_takes_no_steps() {
        let out = ascend(&rabi(), &[PI], &AscentConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn rabi_ascent_reaches_full_transfer() {
        let out = ascend(&rabi(), &[2.0], &AscentConfig::default()).unwrap();
        assert!(out.converged, "{out:?}");
        assert!((out.value - 1.0).abs() < 1e-8);
        assert!((out.point[0] - PI).abs() < 1e-6);
        assert!(out.history.windows(2).all(|w| w[1] >= w[0] - ROUNDING_ULPS * f64::EPSILON));
    }

    #[test]
    fn quadratic_vertex() {
        let center = vec![0.4, -1.2, 3.0];
        let q = AnalyticLandscape::concave_quadratic(center.clone());
        let out = ascend(&q, &[5.0, 2.0, -7.0], &AscentConfig::default()).unwrap();
        assert!(out.converged);
        for (a, b) in out.point.iter().zip(&center) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn bounded_ascent_stops_on_the_bound() {
        // maximum of −(x − 2)² on [0, 1] is the pinned endpoint x = 1
        let f = AnalyticLandscape::new(
            vec![Coordinate::Interval { lo: 0.0, hi: 1.0 }],
            |x| -(x[0] - 2.0).powi(2),
            |x| vec![-2.0 * (x[0] - 2.0)],
        );
        let out = ascend(&f, &[0.2], &AscentConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.point, vec![1.0]);
    }

    #[test]
    fn descent_finds_minimum() {
        let f = AnalyticLandscape::new(
            vec![Coordinate::Unbounded],
            |x| (x[0] - 0.5).powi(2) + 1.0,
            |x| vec![2.0 * (x[0] - 0.5)],
        );
        let out = descend(&f, &[3.0], &AscentConfig::default()).unwrap();
        assert!(out.converged);
        assert!((out.point[0] - 0.5).abs() < 1e-8);
        assert!((out.value - 1.0).abs() < 1e-12);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0] + ROUNDING_ULPS * f64::EPSILON * 2.0));
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let f = AnalyticLandscape::new(
            vec![Coordinate::Unbounded],
            |x| if x[0] > 1.0 { f64::NAN } else { x[0] },
            |_| vec![1.0],
        );
        let err = ascend(&f, &[0.5], &AscentConfig::default()).unwrap_err();
        assert!(matches!(err, QclError::Numeric(_)));
    }

    #[test]
    fn infeasible_start_rejected() {
        let err = ascend(&rabi(), &[5.0], &AscentConfig::default()).unwrap_err();
        assert!(matches!(err, QclError::BoundsViolation { .. }));
    }
}
