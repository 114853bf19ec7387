//! Release acceptance criteria. Each test writes one PASS/FAIL line to
//! stderr (bypassing the test harness capture) before asserting.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcl_core::audit::{run_audit, verdict_from_runs, AuditConfig, ChallengeSpec, Verdict};
use qcl_core::controllability::{lie_rank, LIE_TOL};
use qcl_core::counterexample::{
    cx_slice_criticals, cx_transversality_levels, CxSlice, CX_MARGIN, TRANSVERSALITY_RESOLUTION,
};
use qcl_core::critpoints::{
    ascend, classify, descend, kinematic_second_variation, zero_overlap_instance, AscentConfig,
    Classification, ClassifyConfig, KinematicConfig,
};
use qcl_core::document::basis_state;
use qcl_core::landscape::{finite_difference_gradient, GRADIENT_FD_STEP};
use qcl_core::linalg::{c, commutator, real_vectorize, traceless, CMat, CVec, I};
use qcl_core::model::{ControlVector, DecayChannel, PulseShaperSpec, QuantumSystem, SpectralComponent, TimeGrid};
use qcl_core::propagate::{propagate_lindblad, pure_density};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance criterion {n} ({name}): {verdict} | {detail}");
}

#[test]
fn criterion_1_counterexample_slice_traps() {
    let t0 = Instant::now();
    let lo = -FRAC_PI_2 + 0.01;
    let hi = FRAC_PI_2 - 0.01;
    let cfg = AscentConfig::default();
    let ccfg = ClassifyConfig::default();
    let starts: Vec<f64> = (0..9).map(|k| -1.2 + 2.4 * k as f64 / 8.0).collect();
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..99 {
        let cval = lo + (hi - lo) * k as f64 / 98.0;
        let slice = CxSlice::new(cval, CX_MARGIN).unwrap();
        let edge = FRAC_PI_2 - CX_MARGIN;
        let mut found: Vec<(f64, Classification)> = Vec::new();
        for &s in &starts {
            for up in [true, false] {
                let run = if up { ascend(&slice, &[s], &cfg) } else { descend(&slice, &[s], &cfg) }.unwrap();
                let x = run.point[0];
                if !run.converged || x.abs() >= edge - 1e-9 {
                    continue;
                }
                if found.iter().any(|(y, _)| (x - y).abs() < 1e-4) {
                    continue;
                }
                let cp = classify(&slice, &[x], &ccfg).unwrap();
                found.push((x, cp.classification));
            }
        }
        let analytic = cx_slice_criticals(cval).unwrap();
        let maxes: Vec<f64> = found.iter().filter(|f| f.1 == Classification::LocalMax).map(|f| f.0).collect();
        let mins: Vec<f64> = found.iter().filter(|f| f.1 == Classification::LocalMin).map(|f| f.0).collect();
        let ok = found.len() == 2 && maxes.len() == 1 && mins.len() == 1 && {
            let e = (maxes[0] - analytic.eps1_at_max).abs().max((mins[0] - analytic.eps1_at_min).abs());
            worst = worst.max(e);
            e <= 1e-6
        };
        if !ok {
            bad.push((cval, found));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = bad.is_empty() && elapsed < 10.0;
    report(
        1,
        "counterexample slice traps",
        pass,
        format!("99 slices, failures={}, max location error={worst:.2e}, runtime={elapsed:.2}s", bad.len()),
    );
    assert!(pass, "{bad:?}");
}

#[test]
fn criterion_2_transversality_finiteness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_roots = 0;
    let mut failures = 0;
    for _ in 0..100 {
        let j0 = rng.random_range(-0.2..0.2);
        let roots = cx_transversality_levels(j0, TRANSVERSALITY_RESOLUTION).unwrap();
        max_roots = max_roots.max(roots.len());
        if roots.len() > 2 {
            failures += 1;
        }
    }
    let pass = failures == 0;
    report(2, "transversality finiteness", pass, format!("100 levels, max roots={max_roots}, failures={failures}"));
    assert!(pass);
}

#[test]
fn criterion_3_zero_overlap_first_variation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_first: f64 = 0.0;
    let mut negatives = 0;
    let mut plus = 0;
    for k in 0..20 {
        let n = 2 + k % 3;
        let (u, psi0, f) = zero_overlap_instance(n, &mut rng);
        let cfg = KinematicConfig { seed: k as u64, ..Default::default() };
        let rep = kinematic_second_variation(&u, &psi0, &f, &cfg).unwrap();
        max_first = max_first.max(rep.max_first_variation);
        negatives += rep.n_minus;
        plus += rep.n_plus;
    }
    let pass = max_first <= 1e-8 && negatives == 0;
    report(
        3,
        "zero-overlap first variation",
        pass,
        format!("20 unitaries, max |dJ/ds|={max_first:.2e}, n_minus total={negatives}, n_plus total={plus}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..20 {
        let n = 2 + k % 2;
        let m = if k % 4 < 2 { 2 } else { 4 };
        let (f, eps) = common::random_instance(n, m, 64, &mut rng);
        let g = f.grad_j(&eps).unwrap();
        let fd = finite_difference_gradient(&f, &eps, GRADIENT_FD_STEP).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            if b.abs() > 1e-8 {
                checked += 1;
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    let pass = worst <= 1e-6;
    report(
        4,
        "gradient correctness",
        pass,
        format!("20 instances, {checked} components, max relative error={worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_rabi_oracle() {
    let pairs = [(0.3, 1.0), (0.7, 2.0), (1.0, 1.0), (1.3, 2.5), (0.5, 5.0), (2.0, 0.8), (1.7, 3.3), (0.9, 4.1), (2.5, 1.9), (0.2, 7.0)];
    let mut worst: f64 = 0.0;
    for (omega, t) in pairs {
        let f = common::rabi(3.0, t, 32);
        let j = f.eval_j(&[omega]).unwrap();
        worst = worst.max((j - (0.5 * omega * t).sin().powi(2)).abs());
    }
    let f = common::rabi(4.0, 1.0, 32);
    let out = ascend(&f, &[2.0], &AscentConfig::default()).unwrap();
    let ascent_err = (out.value - 1.0).abs();
    let pass = worst <= 1e-8 && out.converged && ascent_err <= 1e-8;
    report(
        5,
        "Rabi oracle",
        pass,
        format!(
            "10 pairs, max |J − sin²(ΩT/2)|={worst:.2e}; ascent from ΩT=2 converged={} at ΩT={:.10}, |1 − J|={ascent_err:.2e}",
            out.converged, out.point[0]
        ),
    );
    assert!(pass);
}

/// Rank of all nested commutators of the generators up to `depth`,
/// enumerated word by word and ranked by SVD.
fn enumeration_oracle(gens: &[CMat], depth: usize) -> usize {
    let base: Vec<CMat> = gens.iter().map(|g| traceless(g).map(|z| I * z)).collect();
    let mut all = base.clone();
    let mut layer = base.clone();
    for _ in 1..depth {
        let mut next = Vec::new();
        for a in &base {
            for b in &layer {
                next.push(commutator(a, b));
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    let cols: Vec<Vec<f64>> = all.iter().map(real_vectorize).collect();
    let m = DMatrix::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r]);
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

#[test]
fn criterion_6_controllability() {
    let sx = common::sigma_x();
    let sz = common::sigma_z();
    let pauli = lie_rank(&[sz.clone(), sx.clone()], LIE_TOL).unwrap();
    let d = CMat::from_diagonal(&CVec::from_vec(vec![c(1., 0.), c(2., 0.)]));
    let diag = lie_rank(&[sz, d], LIE_TOL).unwrap();
    let h0 = CMat::from_diagonal(&CVec::from_vec(vec![c(0., 0.), c(1., 0.), c(2.5, 0.)]));
    let mut mu = CMat::zeros(3, 3);
    for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
        mu[(i, j)] = c(1., 0.);
    }
    let ladder = lie_rank(&[h0.clone(), mu.clone()], LIE_TOL).unwrap();
    let oracle = enumeration_oracle(&[h0, mu], 6);
    let pass = pauli.dimension == 3
        && pauli.controllable
        && diag.dimension <= 2
        && !diag.controllable
        && ladder.dimension == 8
        && oracle == 8;
    report(
        6,
        "controllability",
        pass,
        format!(
            "pauli dim={} ({}), diagonal dim={} ({}), ladder dim={} vs enumeration oracle {}",
            pauli.dimension, pauli.controllable, diag.dimension, diag.controllable, ladder.dimension, oracle
        ),
    );
    assert!(pass);
}

/// dp/dt = −γp by classical RK4 on a fine grid.
fn scalar_decay(gamma: f64, t: f64, n: usize) -> f64 {
    let h = t / n as f64;
    let mut p = 1.0;
    for _ in 0..n {
        let k1 = -gamma * p;
        let k2 = -gamma * (p + 0.5 * h * k1);
        let k3 = -gamma * (p + 0.5 * h * k2);
        let k4 = -gamma * (p + h * k3);
        p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    p
}

#[test]
fn criterion_7_lindblad_physicality() {
    let mut worst: f64 = 0.0;
    let mut trace_dev: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for (gamma, t) in [(0.1, 3.0), (0.5, 2.0), (1.3, 1.5)] {
        let mut lower = CMat::zeros(2, 2);
        lower[(0, 1)] = c(1., 0.);
        let h0 = CMat::from_diagonal(&CVec::from_vec(vec![c(0., 0.), c(1., 0.)]));
        let sys = QuantumSystem::new(h0, common::sigma_x(), vec![DecayChannel { operator: lower, rate: gamma }]).unwrap();
        let spec = PulseShaperSpec::new(vec![SpectralComponent { omega: 1.0, a_max: 1.0 }]).unwrap();
        let grid = TimeGrid::new(t, 40).unwrap();
        let rho0 = pure_density(&basis_state(2, 1));
        let traj = propagate_lindblad(&sys, &spec, &ControlVector::zeros(&spec), &grid, &rho0).unwrap();
        let rho11 = traj.final_state()[(1, 1)].re;
        let oracle = scalar_decay(gamma, t, 100_000);
        worst = worst.max((rho11 - oracle).abs()).max((rho11 - (-gamma * t).exp()).abs());
        trace_dev = trace_dev.max(traj.max_trace_deviation);
        min_eig = min_eig.min(traj.min_eigenvalue);
    }
    let pass = worst <= 1e-6 && trace_dev <= 1e-8 && min_eig >= -1e-8;
    report(
        7,
        "Lindblad physicality",
        pass,
        format!("3 damping rates, max |ρ11 − e^(−γT)|={worst:.2e}, max trace deviation={trace_dev:.2e}, min eigenvalue={min_eig:.2e}"),
    );
    assert!(pass);
}

/// Best J over a 3-level grid of the six amplitudes with phases at zero,
/// then polished by ascent from the best grid point.
fn coarse_grid_optimum(ch: &ChallengeSpec) -> (f64, f64) {
    let f = ch.landscape().unwrap();
    let levels: Vec<Vec<f64>> = ch.shaper.components.iter().map(|c| vec![0.0, 0.5 * c.a_max, c.a_max]).collect();
    let m = levels.len();
    let mut best = (f64::NEG_INFINITY, vec![0.0; 2 * m]);
    for code in 0..3usize.pow(m as u32) {
        let mut x = vec![0.0; 2 * m];
        let mut r = code;
        for k in 0..m {
            x[2 * k] = levels[k][r % 3];
            r /= 3;
        }
        let j = f.eval_j(&x).unwrap();
        if j > best.0 {
            best = (j, x);
        }
    }
    let polished = ascend(&f, &best.1, &AscentConfig::default()).unwrap();
    (best.0, polished.value)
}

#[test]
fn criterion_8_audit_determinism_and_sanity() {
    // determinism
    let ch = common::generous_qubit(2.0);
    let small = AuditConfig { n_starts: 24, seed: 11, ..Default::default() };
    let a = run_audit(&ch, &small).unwrap().to_json();
    let b = run_audit(&ch, &small).unwrap().to_json();
    let deterministic = a == b;

    // constant landscape
    let h0 = common::sigma_z().scale(0.5);
    let flat = ChallengeSpec::new(
        QuantumSystem::closed(h0, CMat::zeros(2, 2)).unwrap(),
        ch.shaper.clone(),
        ch.grid,
        basis_state(2, 0),
        basis_state(2, 1),
    )
    .unwrap();
    let flat_rep = run_audit(&flat, &AuditConfig { n_starts: 20, seed: 5, ..Default::default() }).unwrap();
    let flat_ok = flat_rep.success_fraction == 0.0
        && flat_rep.runs.iter().all(|r| r.converged && r.iterations == 0)
        && flat_rep.runs.iter().all(|r| r.classification == Some(Classification::Degenerate))
        && flat_rep.verdict == verdict_from_runs(&flat_rep.runs, flat_rep.j_success)
        && flat_rep.verdict == Verdict::Inconclusive;

    // generous qubit challenge, with the global optimum located independently
    let (grid_best, polished) = coarse_grid_optimum(&ch);
    let rep = run_audit(&ch, &AuditConfig { n_starts: 200, seed: 7, ..Default::default() }).unwrap();
    let best_run = rep.runs.iter().filter_map(|r| r.terminal_j).fold(f64::NEG_INFINITY, f64::max);
    let optimum_ok = polished >= rep.j_success && (best_run - polished).abs() <= 1e-6;
    let generous_ok = rep.success_fraction >= 0.95 && optimum_ok;

    let pass = deterministic && flat_ok && generous_ok;
    report(
        8,
        "audit determinism and sanity",
        pass,
        format!(
            "bitwise identical={deterministic}; flat verdict={:?}; generous success_fraction={:.3}, verdict={:?}, \
             grid best J={grid_best:.6} polished to {polished:.12}, best multistart J={best_run:.12}",
            flat_rep.verdict, rep.success_fraction, rep.verdict
        ),
    );
    assert!(pass);
}
