//! Multi-start trap audit: ascend from many random feasible starts, classify
//! where the runs stop, cluster the terminals and report an empirical
//! verdict together with controllability diagnostics.
//!
//! Start k draws from its own ChaCha8 stream (seed, k), so the report does
//! not depend on thread count or scheduling.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllability::{endpoint_jacobian, system_lie_rank, JacobianReport, LieAlgebraReport};
use crate::critpoints::{ascend, classify, AscentConfig, Classification, ClassifyConfig, CriticalPoint};
use crate::document::LoadedSpec;
use crate::error::{QclError, Result};
use crate::landscape::{coordinate_distance, fmt17, Coordinate, ControlLandscape, Landscape};
use crate::linalg::CVec;
use crate::model::{ensure_valid, ControlVector, PulseShaperSpec, QuantumSystem, TimeGrid};

pub const HISTOGRAM_BINS: usize = 100;
pub const HISTOGRAM_WIDTH: f64 = 0.01;

/// A complete control problem: system (decay included), shaper bounds,
/// control time and transfer |ψ0⟩ → |f⟩.
#[derive(Debug, Clone)]
pub struct ChallengeSpec {
    pub system: QuantumSystem,
    pub shaper: PulseShaperSpec,
    pub grid: TimeGrid,
    pub psi0: CVec,
    pub f: CVec,
}

impl ChallengeSpec {
    pub fn new(system: QuantumSystem, shaper: PulseShaperSpec, grid: TimeGrid, psi0: CVec, f: CVec) -> Result<Self> {
        ensure_valid(&system)?;
        Ok(Self { system, shaper, grid, psi0, f })
    }

    pub fn landscape(&self) -> Result<ControlLandscape> {
        ControlLandscape::new(
            self.system.clone(),
            self.shaper.clone(),
            self.grid,
            self.psi0.clone(),
            self.f.clone(),
        )
    }
}

impl TryFrom<LoadedSpec> for ChallengeSpec {
    type Error = QclError;

    fn try_from(s: LoadedSpec) -> Result<Self> {
        Self::new(s.system, s.shaper, s.grid, s.psi0, s.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub n_starts: usize,
    pub seed: u64,
    pub delta_success: f64,
    pub cluster_radius: f64,
    pub ascent: AscentConfig,
    pub classify: ClassifyConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            n_starts: 200,
            seed: 0,
            delta_success: 1e-3,
            cluster_radius: 1e-3,
            ascent: AscentConfig::default(),
            classify: ClassifyConfig { tol_j: 1e-3, ..Default::default() },
        }
    }
}

impl AuditConfig {
    pub fn j_success(&self) -> f64 {
        1.0 - self.delta_success
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub start_index: usize,
    pub start: Vec<f64>,
    pub terminal: Option<Vec<f64>>,
    pub converged: bool,
    #[serde(rename = "terminal_J")]
    pub terminal_j: Option<f64>,
    pub grad_norm: Option<f64>,
    pub iterations: usize,
    pub classification: Option<Classification>,
    pub cluster_id: Option<usize>,
    pub is_representative: bool,
    /// Propagation, classification or other failure, kept verbatim.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some() || !self.converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    pub representative_index: usize,
    pub member_count: usize,
    pub representative: Option<CriticalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Bin b counts J in [b·w, (b+1)·w); J = 1 lands in the last bin.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianSummary {
    pub target_rank: usize,
    pub evaluated: usize,
    pub min_rank: Option<usize>,
    pub max_rank: Option<usize>,
    /// Rank → number of representatives at that rank.
    pub rank_counts: BTreeMap<usize, usize>,
    pub locally_surjective: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    NoTrapsFound,
    TrapsFound,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_starts: usize,
    pub rng_seed: u64,
    pub delta_success: f64,
    #[serde(rename = "J_success")]
    pub j_success: f64,
    pub success_fraction: f64,
    pub n_converged: usize,
    pub n_failed: usize,
    pub open_system: bool,
    pub fingerprint: String,
    pub histogram: Histogram,
    pub clusters: Vec<Cluster>,
    pub lie_report: LieAlgebraReport,
    pub jacobian_summary: JacobianSummary,
    pub verdict: Verdict,
    pub config: AuditConfig,
    pub runs: Vec<RunRecord>,
}

/// Uniform feasible start number `index` of the stream `seed`.
pub fn draw_start(shaper: &PulseShaperSpec, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut out = Vec::with_capacity(shaper.n_params());
    for comp in &shaper.components {
        out.push(if comp.a_max > 0.0 { rng.random_range(0.0..=comp.a_max) } else { 0.0 });
        out.push(rng.random_range(0.0..TAU));
    }
    out
}

fn run_one<L: Landscape + ?Sized>(f: &L, index: usize, start: &[f64], cfg: &AuditConfig) -> RunRecord {
    let mut rec = RunRecord {
        start_index: index,
        start: start.to_vec(),
        terminal: None,
        converged: false,
        terminal_j: None,
        grad_norm: None,
        iterations: 0,
        classification: None,
        cluster_id: None,
        is_representative: false,
        error: None,
    };
    let out = match ascend(f, start, &cfg.ascent) {
        Ok(o) => o,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.terminal = Some(out.point.clone());
    rec.converged = out.converged;
    rec.terminal_j = Some(out.value);
    rec.grad_norm = Some(out.grad_norm);
    rec.iterations = out.iterations;
    if out.converged {
        let ccfg = ClassifyConfig { tol_g: cfg.ascent.tol_g, ..cfg.classify };
        match classify(f, &out.point, &ccfg) {
            Ok(cp) => rec.classification = Some(cp.classification),
            Err(e) => rec.error = Some(e.to_string()),
        }
    }
    rec
}

/// Ascends from the given starts in parallel; records come back in start order.
pub fn run_ascents_from<L: Landscape + ?Sized>(f: &L, starts: &[Vec<f64>], cfg: &AuditConfig) -> Vec<RunRecord> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_one(f, i, s, cfg))
        .collect()
}

/// Single-linkage clusters of `points` at `radius`; each cluster lists
/// member indices ascending, clusters ordered by their smallest member.
pub fn cluster_terminals(points: &[Vec<f64>], coords: &[Coordinate], radius: f64) -> Result<Vec<Vec<usize>>> {
    if !(radius > 0.0) {
        return Err(QclError::Argument(format!("cluster radius must be positive, got {radius}")));
    }
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if coordinate_distance(coords, &points[i], &points[j]) <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    Ok(groups.into_values().collect())
}

fn histogram(runs: &[RunRecord]) -> Histogram {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for r in runs {
        let j = r.terminal_j.unwrap_or(0.0);
        let b = ((j / HISTOGRAM_WIDTH).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    Histogram { bin_width: HISTOGRAM_WIDTH, counts }
}

/// The verdict recomputed from stored run records alone:
/// TRAPS_FOUND if a converged cluster representative is LOCAL_MAX below
/// `j_success`; NO_TRAPS_FOUND if every run converged without error and
/// reached `j_success`; INCONCLUSIVE otherwise.
pub fn verdict_from_runs(runs: &[RunRecord], j_success: f64) -> Verdict {
    let trap = runs.iter().any(|r| {
        r.is_representative
            && r.converged
            && r.error.is_none()
            && r.classification == Some(Classification::LocalMax)
            && r.terminal_j.is_some_and(|j| j < j_success)
    });
    if trap {
        return Verdict::TrapsFound;
    }
    let all_top = !runs.is_empty()
        && runs.iter().all(|r| !r.failed() && r.terminal_j.is_some_and(|j| j >= j_success));
    if all_top {
        Verdict::NoTrapsFound
    } else {
        Verdict::Inconclusive
    }
}

pub fn run_audit(challenge: &ChallengeSpec, cfg: &AuditConfig) -> Result<AuditReport> {
    if cfg.n_starts == 0 {
        return Err(QclError::Argument("audit needs at least one start".into()));
    }
    if !(cfg.delta_success > 0.0 && cfg.delta_success < 1.0) {
        return Err(QclError::Argument(format!(
            "delta_success must lie in (0, 1), got {}",
            cfg.delta_success
        )));
    }
    let f = challenge.landscape()?;
    let j_success = cfg.j_success();
    let starts: Vec<Vec<f64>> = (0..cfg.n_starts)
        .map(|k| draw_start(&challenge.shaper, cfg.seed, k))
        .collect();
    let mut runs = run_ascents_from(&f, &starts, cfg);

    // cluster converged, error-free terminals
    let coords = f.coordinates();
    let ok: Vec<usize> = (0..runs.len()).filter(|&i| !runs[i].failed()).collect();
    let points: Vec<Vec<f64>> = ok.iter().map(|&i| runs[i].terminal.clone().expect("converged run")).collect();
    let groups = cluster_terminals(&points, &coords, cfg.cluster_radius)?;

    let ccfg = ClassifyConfig { tol_g: cfg.ascent.tol_g, ..cfg.classify };
    let mut clusters = Vec::with_capacity(groups.len());
    for (id, members) in groups.iter().enumerate() {
        let rep_pos = members
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let (ja, jb) = (runs[ok[a]].terminal_j.unwrap(), runs[ok[b]].terminal_j.unwrap());
                ja.total_cmp(&jb).then(b.cmp(&a))
            })
            .expect("non-empty cluster");
        let rep = ok[rep_pos];
        for &m in members {
            runs[ok[m]].cluster_id = Some(id);
        }
        runs[rep].is_representative = true;
        let point = runs[rep].terminal.clone().expect("converged run");
        let representative = classify(&f, &point, &ccfg).ok();
        clusters.push(Cluster {
            cluster_id: id,
            representative_index: rep,
            member_count: members.len(),
            representative,
        });
    }

    let n_converged = runs.iter().filter(|r| r.converged).count();
    let n_failed = runs.iter().filter(|r| r.failed()).count();
    let successes = runs
        .iter()
        .filter(|r| r.terminal_j.is_some_and(|j| j >= j_success))
        .count();

    let jacobian_summary = jacobian_summary(challenge, &clusters, &runs);
    let lie_report = system_lie_rank(&challenge.system)?;
    let verdict = verdict_from_runs(&runs, j_success);
    Ok(AuditReport {
        n_starts: cfg.n_starts,
        rng_seed: cfg.seed,
        delta_success: cfg.delta_success,
        j_success,
        success_fraction: successes as f64 / cfg.n_starts as f64,
        n_converged,
        n_failed,
        open_system: f.is_open(),
        fingerprint: f.fingerprint(),
        histogram: histogram(&runs),
        clusters,
        lie_report,
        jacobian_summary,
        verdict,
        config: *cfg,
        runs,
    })
}

/// End-point Jacobian ranks at the cluster representatives (closed part of
/// the dynamics).
fn jacobian_summary(ch: &ChallengeSpec, clusters: &[Cluster], runs: &[RunRecord]) -> JacobianSummary {
    let n = ch.system.dim;
    let results: Vec<Result<JacobianReport>> = clusters
        .par_iter()
        .map(|c| {
            let x = runs[c.representative_index].terminal.clone().expect("representative converged");
            let eps = ControlVector::new(x, &ch.shaper)?;
            endpoint_jacobian(&ch.system, &ch.shaper, &eps, &ch.grid, false)
        })
        .collect();
    let mut s = JacobianSummary {
        target_rank: n * n - 1,
        evaluated: 0,
        min_rank: None,
        max_rank: None,
        rank_counts: BTreeMap::new(),
        locally_surjective: 0,
        errors: Vec::new(),
    };
    for r in results {
        match r {
            Ok(rep) => {
                s.evaluated += 1;
                s.min_rank = Some(s.min_rank.map_or(rep.rank, |m| m.min(rep.rank)));
                s.max_rank = Some(s.max_rank.map_or(rep.rank, |m| m.max(rep.rank)));
                *s.rank_counts.entry(rep.rank).or_default() += 1;
                s.locally_surjective += rep.locally_surjective as usize;
            }
            Err(e) => s.errors.push(e.to_string()),
        }
    }
    s
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-run CSV: start_index, converged, terminal_J, grad_norm,
    /// classification, cluster_id. Missing values are empty fields.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("start_index,converged,terminal_J,grad_norm,classification,cluster_id\n");
        for r in &self.runs {
            let class = r.classification.map(|c| {
                serde_json::to_value(c)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            });
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.start_index,
                r.converged,
                r.terminal_j.map(fmt17).unwrap_or_default(),
                r.grad_norm.map(fmt17).unwrap_or_default(),
                class.unwrap_or_default(),
                r.cluster_id.map(|c| c.to_string()).unwrap_or_default(),
            );
        }
        out
    }
}
