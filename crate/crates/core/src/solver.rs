//! Numerical design optimization over restricted candidate sets.
//!
//! The continuous design problem is convex in the information matrix, so a
//! vertex-direction (Fedorov–Wynn) method with away steps converges to the
//! optimum over the convex hull of the candidates. The stopping rule is the
//! relative equivalence-theorem gap: once no candidate has sensitivity above
//! the threshold by more than `tol`, the design is optimal up to that slack.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::analytic::{self, OptimalDesignResult};
use crate::criteria::{self, criterion_value, efficiency, Criterion};
use crate::error::{Error, Result};
use crate::fisher::{DesignMeasure, FisherMatrix, ModelPoint, SldFrame};
use crate::format;
use crate::linalg::{self, RMat};
use crate::par;
use crate::quantum::{pauli_pvm, HermitianMatrix, ParametricModel, Povm};

/// A restricted set of accessible measurements.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSet {
    /// Projective measurements of SLD combinations along a deterministic
    /// low-discrepancy set of whitened directions (qubit models only).
    SldSphereGrid(usize),
    /// The three Pauli measurements.
    PauliPvms,
    ExplicitList(Vec<Povm>),
    /// Haar-random orthonormal-basis measurements from a seeded stream.
    RandomProjective { count: usize, seed: u64 },
}

impl CandidateSet {
    /// Parses `sld-grid:N`, `pauli`, `random:COUNT:SEED`, or a path to a JSON
    /// list of POVMs.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |what: &str| Error::Parse(format!("bad candidate spec '{s}': {what}"));
        if s == "pauli" {
            return Ok(CandidateSet::PauliPvms);
        }
        if let Some(n) = s.strip_prefix("sld-grid:") {
            let n: usize = n.parse().map_err(|_| bad("grid size"))?;
            if n == 0 {
                return Err(bad("grid size must be positive"));
            }
            return Ok(CandidateSet::SldSphereGrid(n));
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let (count, seed) = rest.split_once(':').ok_or_else(|| bad("expected random:COUNT:SEED"))?;
            let count: usize = count.parse().map_err(|_| bad("count"))?;
            let seed: u64 = seed.parse().map_err(|_| bad("seed"))?;
            if count == 0 {
                return Err(bad("count must be positive"));
            }
            return Ok(CandidateSet::RandomProjective { count, seed });
        }
        let text = std::fs::read_to_string(Path::new(s))?;
        let povms: Vec<Povm> = serde_json::from_str(&text)?;
        if povms.is_empty() {
            return Err(bad("empty POVM list"));
        }
        Ok(CandidateSet::ExplicitList(povms))
    }
}

impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateSet::SldSphereGrid(n) => write!(f, "sld-grid:{n}"),
            CandidateSet::PauliPvms => write!(f, "pauli"),
            CandidateSet::ExplicitList(p) => write!(f, "explicit:{}", p.len()),
            CandidateSet::RandomProjective { count, seed } => write!(f, "random:{count}:{seed}"),
        }
    }
}

/// Unit directions covering the projective `(n−1)`-sphere: Fibonacci points
/// on the upper hemisphere for `n = 3`, evenly spaced half-circle angles for
/// `n = 2`.
pub fn sphere_grid(n: usize, points: usize) -> Result<Vec<Vec<f64>>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    match n {
        1 => Ok(vec![vec![1.0]]),
        2 => Ok((0..points)
            .map(|k| {
                let a = std::f64::consts::PI * (k as f64 + 0.5) / points as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()),
        3 => Ok((0..points)
            .map(|k| {
                let z = (k as f64 + 0.5) / points as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                vec![r * phi.cos(), r * phi.sin(), z]
            })
            .collect()),
        _ => Err(Error::UnsupportedParamCount(n)),
    }
}

/// Haar-random orthonormal bases of `C^d`, returned as rank-one PVMs.
pub fn random_projective(d: usize, count: usize, seed: u64) -> Vec<Povm> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let g = DMatrix::<Complex64>::from_fn(d, d, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            });
            let qr = g.qr();
            let (q, r) = (qr.q(), qr.r());
            let elements = (0..d)
                .map(|k| {
                    let rk = r[(k, k)];
                    let phase = if rk.norm() > 0.0 { rk / rk.norm() } else { Complex64::new(1.0, 0.0) };
                    let v: DVector<Complex64> = q.column(k).into_owned() * phase;
                    HermitianMatrix::projector(&v)
                })
                .collect();
            Povm::new_unchecked(elements, None)
        })
        .collect()
}

/// Candidate measurements with their information matrices at one point.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub povms: Vec<Povm>,
    pub fishers: Vec<FisherMatrix>,
}

impl CandidatePool {
    pub fn build(point: &ModelPoint, m: &ParametricModel, set: &CandidateSet, parallel: bool) -> Result<Self> {
        let qubit_only = |m: &ParametricModel| {
            if m.is_qubit() {
                Ok(())
            } else {
                Err(Error::WrongDimension { expected: 2, found: m.dim() })
            }
        };
        let povms = match set {
            CandidateSet::SldSphereGrid(k) => {
                qubit_only(m)?;
                let frame = SldFrame::new(point)?;
                let dirs = sphere_grid(m.n_params(), *k)?;
                par::map_slice(&dirs, parallel, |u| frame.pvm(u)).into_iter().collect::<Result<Vec<_>>>()?
            }
            CandidateSet::PauliPvms => {
                qubit_only(m)?;
                (1..=3).map(pauli_pvm).collect::<Result<Vec<_>>>()?
            }
            CandidateSet::ExplicitList(list) => {
                for p in list {
                    if p.dim() != m.dim() {
                        return Err(Error::WrongDimension { expected: m.dim(), found: p.dim() });
                    }
                }
                list.clone()
            }
            CandidateSet::RandomProjective { count, seed } => random_projective(m.dim(), *count, *seed),
        };
        let fishers = point.fisher_many(&povms, parallel)?;
        Ok(CandidatePool { povms, fishers })
    }

    pub fn len(&self) -> usize {
        self.povms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.povms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `α_k = 2/(k+2)` toward steps only.
    Harmonic,
    /// Exact one-dimensional minimization with away steps.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative certificate gap at which the solve stops.
    pub tol: f64,
    pub step_rule: StepRule,
    pub prune_tol: f64,
    /// Maximal support size after pruning; `None` means `n(n+1)/2 + 1`.
    pub support_cap: Option<usize>,
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 10_000,
            tol: 1e-6,
            step_rule: StepRule::LineSearch,
            prune_tol: 1e-8,
            support_cap: None,
            parallel: true,
        }
    }
}

impl SolveOptions {
    pub fn cap_for(&self, n: usize) -> usize {
        self.support_cap.unwrap_or(n * (n + 1) / 2 + 1)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.cap_for(n) < n {
            return Err(Error::InvalidInput(format!("support cap {} below n = {n}", self.cap_for(n))));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub result: OptimalDesignResult,
    /// Relative gap `(max sensitivity − threshold)/threshold` of the returned
    /// design over the candidates.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative gap against all measurements, for qubit models.
    pub exact_gap: Option<f64>,
    /// Objective value before each step and after the last one.
    pub trace: Vec<f64>,
}

impl SolveReport {
    pub fn to_json(&self) -> serde_json::Value {
        let mut design = serde_json::to_value(&self.result.design).expect("design serializes");
        let mut fisher = serde_json::to_value(&self.result.fisher).expect("fisher serializes");
        format::round_json(&mut design);
        format::round_json(&mut fisher);
        json!({
            "criterion": self.result.criterion.to_string(),
            "value": format::json_real(self.result.value),
            "gap": format::json_real(self.gap),
            "exact_gap": self.exact_gap.map(format::json_real),
            "iterations": self.iterations,
            "converged": self.converged,
            "fisher": fisher,
            "design": design,
        })
    }
}

/// Internal smooth objective driving the iterations.
#[derive(Debug, Clone)]
enum Objective {
    LogDet,
    Trace(Option<RMat>),
}

impl Objective {
    fn from_criterion(crit: &Criterion, n: usize) -> Result<Self> {
        match crit {
            Criterion::D | Criterion::LogD => Ok(Objective::LogDet),
            Criterion::A(w) => {
                if let Some(w) = w {
                    if w.nrows() != n {
                        return Err(Error::WrongDimension { expected: n, found: w.nrows() });
                    }
                }
                Ok(Objective::Trace(w.clone()))
            }
            other => Err(Error::UnsupportedCriterion(format!("vertex-direction solve for {other}"))),
        }
    }

    fn criterion(&self) -> Criterion {
        match self {
            Objective::LogDet => Criterion::LogD,
            Objective::Trace(w) => Criterion::A(w.clone()),
        }
    }

    fn value(&self, j: &RMat) -> f64 {
        let (vals, _) = linalg::sym_eigh(j);
        if vals[0] <= 0.0 {
            return f64::INFINITY;
        }
        match self {
            Objective::LogDet => -vals.iter().map(|l| l.ln()).sum::<f64>(),
            Objective::Trace(None) => vals.iter().map(|l| 1.0 / l).sum(),
            Objective::Trace(Some(w)) => (w * linalg::sym_inverse(j)).trace(),
        }
    }

    /// Matrix `T` with sensitivity `⟨T, J_e⟩`, and the threshold.
    fn sensitivity_kernel(&self, inv: &RMat) -> (RMat, f64) {
        match self {
            Objective::LogDet => (inv.clone(), inv.nrows() as f64),
            Objective::Trace(w) => {
                let wi = match w {
                    Some(w) => w * inv,
                    None => inv.clone(),
                };
                (linalg::symmetrize(&(inv * &wi)), wi.trace())
            }
        }
    }

    /// Minimizer over `α ∈ [lo, hi]` of the objective along
    /// `(1−α)J + αJ_e`, using the generalized eigenvalues of `(J_e, J)`.
    fn line_search(&self, j: &RMat, j_e: &RMat, lo: f64, hi: f64) -> Option<f64> {
        let half = linalg::sym_pow(j, -0.5);
        let g = linalg::symmetrize(&(&half * j_e * &half));
        let (mu, v) = linalg::sym_eigh(&g);
        let b: Vec<f64> = match self {
            Objective::LogDet => vec![1.0; mu.len()],
            Objective::Trace(w) => {
                let bm = match w {
                    Some(w) => &half * w * &half,
                    None => &half * &half,
                };
                let vb = v.transpose() * bm * &v;
                (0..mu.len()).map(|i| vb[(i, i)]).collect()
            }
        };
        let power = match self {
            Objective::LogDet => 1,
            Objective::Trace(_) => 2,
        };
        let slope = |a: f64, boundary: f64| -> f64 {
            let mut s = 0.0;
            for (m, bi) in mu.iter().zip(&b) {
                let d = 1.0 + a * (m - 1.0);
                if d <= 1e-300 {
                    return boundary;
                }
                s -= bi * (m - 1.0) / d.powi(power);
            }
            s
        };
        if slope(lo, f64::NEG_INFINITY) >= 0.0 {
            return Some(lo);
        }
        if slope(hi, f64::INFINITY) <= 0.0 {
            return Some(hi);
        }
        let (mut a, mut c) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + c);
            if mid <= a || mid >= c {
                break;
            }
            let s = slope(mid, f64::NAN);
            if s.is_nan() {
                return None;
            }
            if s > 0.0 {
                c = mid;
            } else {
                a = mid;
            }
        }
        let alpha = 0.5 * (a + c);
        alpha.is_finite().then_some(alpha)
    }
}

fn weighted_sum(support: &[(usize, f64)], fishers: &[FisherMatrix], n: usize) -> RMat {
    let mut j = RMat::zeros(n, n);
    for &(k, w) in support {
        j += fishers[k].as_matrix().scale(w);
    }
    j
}

fn frob(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Greedy seed: repeatedly add the candidate maximizing the regularized
/// log-determinant of the running sum until it is nonsingular.
fn greedy_seed(fishers: &[FisherMatrix], n: usize, parallel: bool) -> Result<Vec<usize>> {
    let scale = fishers.iter().map(|f| f.trace()).fold(0.0_f64, f64::max) / n as f64;
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::SingularSeed);
    }
    let eps = 1e-8 * scale;
    let mut chosen: Vec<usize> = Vec::new();
    let mut sum = RMat::zeros(n, n);
    for _ in 0..=n {
        let scores = par::map_range(fishers.len(), parallel, |k| {
            if chosen.contains(&k) {
                return f64::NEG_INFINITY;
            }
            let trial = &sum + fishers[k].as_matrix() + RMat::identity(n, n).scale(eps);
            linalg::sym_eigh(&trial).0.iter().map(|l| l.max(1e-300).ln()).sum()
        });
        let best = argmax(&scores);
        if scores[best] == f64::NEG_INFINITY {
            break;
        }
        chosen.push(best);
        sum += fishers[best].as_matrix();
        if !FisherMatrix::from_sym(sum.clone()).is_singular() {
            return Ok(chosen);
        }
    }
    Err(Error::SingularSeed)
}

/// Vertex-direction minimization of an A(W) or D/logD criterion over mixtures
/// of the candidate set.
///
/// D is optimized through `−log det` and reported as `Det{J⁻¹}`. Exceeding
/// `max_iters` is not an error: the report comes back with
/// `converged = false`.
pub fn fedorov_wynn(
    m: &ParametricModel,
    theta: &[f64],
    crit: &Criterion,
    candidates: &CandidateSet,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let point = ModelPoint::new(m, theta)?;
    let pool = CandidatePool::build(&point, m, candidates, opts.parallel)?;
    fedorov_wynn_pool(m, &point, crit, &pool, opts)
}

pub fn fedorov_wynn_pool(
    m: &ParametricModel,
    point: &ModelPoint,
    crit: &Criterion,
    pool: &CandidatePool,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let n = point.n_params();
    opts.validate(n)?;
    crit.validate()?;
    let objective = Objective::from_criterion(crit, n)?;
    if pool.is_empty() {
        return Err(Error::SingularSeed);
    }
    let fishers = &pool.fishers;
    let mut support: Vec<(usize, f64)> = {
        let seed = greedy_seed(fishers, n, opts.parallel)?;
        let w = 1.0 / seed.len() as f64;
        seed.into_iter().map(|k| (k, w)).collect()
    };
    let mut j = weighted_sum(&support, fishers, n);
    let mut value = objective.value(&j);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut gap;
    loop {
        let inv = linalg::sym_inverse(&j);
        let (kernel, threshold) = objective.sensitivity_kernel(&inv);
        let sens = par::map_slice(fishers, opts.parallel, |f| frob(&kernel, f.as_matrix()));
        let best = argmax(&sens);
        gap = (sens[best] - threshold) / threshold;
        if gap <= opts.tol || iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        // Wolfe's rule: move away from the worst support point when that gains more.
        let (away_pos, away_sens) = support
            .iter()
            .enumerate()
            .map(|(pos, &(k, _))| (pos, sens[k]))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let toward_gain = sens[best] - threshold;
        let away_gain = threshold - away_sens;
        let use_away = opts.step_rule == StepRule::LineSearch && support.len() > 1 && away_gain > toward_gain;

        let (target, alpha) = if use_away {
            let (k, w) = support[away_pos];
            let lo = -w / (1.0 - w);
            let alpha = objective.line_search(&j, fishers[k].as_matrix(), lo, 0.0).unwrap_or(lo);
            (k, alpha)
        } else {
            let alpha = match opts.step_rule {
                StepRule::Harmonic => 2.0 / (iterations as f64 + 2.0),
                StepRule::LineSearch => objective
                    .line_search(&j, fishers[best].as_matrix(), 0.0, 1.0)
                    .unwrap_or(2.0 / (iterations as f64 + 2.0)),
            };
            (best, alpha)
        };
        if alpha == 0.0 {
            // No descent possible along the chosen direction; the gap is then
            // pure round-off.
            break;
        }
        for entry in support.iter_mut() {
            entry.1 *= 1.0 - alpha;
        }
        match support.iter_mut().find(|(k, _)| *k == target) {
            Some(entry) => entry.1 += alpha,
            None => support.push((target, alpha)),
        }
        support.retain(|&(_, w)| w > 1e-15);
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        for entry in support.iter_mut() {
            entry.1 /= total;
        }
        j = weighted_sum(&support, fishers, n);
        let new_value = objective.value(&j);
        if opts.step_rule == StepRule::LineSearch && new_value > value + 1e-12 * value.abs().max(1.0) {
            log::warn!("line search increased the objective from {value} to {new_value}");
        }
        value = new_value;
        trace.push(value);
    }
    let converged = gap <= opts.tol;
    if !converged {
        log::warn!("no convergence after {iterations} iterations, gap {gap:e}");
    }

    let weights: Vec<f64> = support.iter().map(|(_, w)| *w).collect();
    let support_fishers: Vec<FisherMatrix> = support.iter().map(|(k, _)| fishers[*k].clone()).collect();
    let support_povms: Vec<Povm> = support.iter().map(|(k, _)| pool.povms[*k].clone()).collect();
    let (weights, povms) = prune_support(
        weights,
        support_povms,
        support_fishers,
        opts.prune_tol,
        opts.cap_for(n),
        &objective.criterion(),
    );
    let design = DesignMeasure::new(weights, povms)?;
    let fisher = point.design_fisher(&design)?;
    let report_crit = match crit {
        Criterion::D => Criterion::D,
        _ => objective.criterion(),
    };
    let value = criterion_value(&report_crit, &fisher)?;
    if let Some(inv) = fisher.inverse() {
        let (kernel, threshold) = objective.sensitivity_kernel(&inv);
        let sens = par::map_slice(fishers, opts.parallel, |f| frob(&kernel, f.as_matrix()));
        gap = (sens[argmax(&sens)] - threshold) / threshold;
    }
    let exact_gap = if m.is_qubit() {
        match (SldFrame::new(point), fisher.inverse()) {
            (Ok(frame), Some(inv)) => analytic::exact_sensitivity(&frame, &inv, &objective.criterion())
                .ok()
                .map(|(max, thr)| (max - thr) / thr),
            _ => None,
        }
    } else {
        None
    };
    Ok(SolveReport {
        result: OptimalDesignResult { design, fisher, value, criterion: report_crit },
        gap,
        iterations,
        converged,
        exact_gap,
        trace,
    })
}

/// Drops negligible weights, merges identical measurements and reduces the
/// support to at most `cap` points.
///
/// The reduction moves weight along null directions of the map from weights
/// to `(J, Σw)`, which leaves the information matrix unchanged, until one
/// weight vanishes. Below the dimension bound, the smallest weight is
/// dropped only while the criterion value stays within `10·prune_tol`
/// relative.
pub fn prune_design(
    m: &ParametricModel,
    theta: &[f64],
    xi: &DesignMeasure,
    prune_tol: f64,
    cap: usize,
    crit: &Criterion,
) -> Result<DesignMeasure> {
    let point = ModelPoint::new(m, theta)?;
    let fishers = point.fisher_many(xi.povms(), false)?;
    let (w, p) = prune_support(xi.weights().to_vec(), xi.povms().to_vec(), fishers, prune_tol, cap, crit);
    DesignMeasure::new(w, p)
}

fn prune_support(
    weights: Vec<f64>,
    povms: Vec<Povm>,
    fishers: Vec<FisherMatrix>,
    prune_tol: f64,
    cap: usize,
    crit: &Criterion,
) -> (Vec<f64>, Vec<Povm>) {
    let mut pts: Vec<(f64, Povm, FisherMatrix)> = Vec::new();
    for ((w, p), f) in weights.into_iter().zip(povms).zip(fishers) {
        if w < prune_tol {
            continue;
        }
        match pts.iter_mut().find(|(_, q, _)| q.max_abs_diff(&p).is_some_and(|d| d <= 1e-10)) {
            Some(entry) => entry.0 += w,
            None => pts.push((w, p, f)),
        }
    }
    normalize(&mut pts);
    if pts.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let n = pts[0].2.n();
    let rows = n * (n + 1) / 2 + 1;
    while pts.len() > cap.max(1) && pts.len() > rows {
        if !caratheodory_step(&mut pts, n) {
            break;
        }
    }
    let value_of = |pts: &[(f64, Povm, FisherMatrix)]| {
        let mut j = RMat::zeros(n, n);
        for (w, _, f) in pts {
            j += f.as_matrix().scale(*w);
        }
        criterion_value(crit, &FisherMatrix::from_sym(j)).unwrap_or(f64::INFINITY)
    };
    while pts.len() > cap.max(1) {
        let before = value_of(&pts);
        let drop = (0..pts.len()).fold(0, |b, k| if pts[k].0 < pts[b].0 { k } else { b });
        let mut trial = pts.clone();
        trial.remove(drop);
        normalize(&mut trial);
        let after = value_of(&trial);
        if after.is_finite() && (after - before).abs() <= 10.0 * prune_tol * before.abs() {
            pts = trial;
        } else {
            break;
        }
    }
    pts.into_iter().map(|(w, p, _)| (w, p)).unzip()
}

fn normalize(pts: &mut [(f64, Povm, FisherMatrix)]) {
    let total: f64 = pts.iter().map(|p| p.0).sum();
    if total > 0.0 {
        for p in pts.iter_mut() {
            p.0 /= total;
        }
    }
}

/// One exact support reduction; returns `false` if no null direction exists.
fn caratheodory_step(pts: &mut Vec<(f64, Povm, FisherMatrix)>, n: usize) -> bool {
    let s = pts.len();
    let rows = n * (n + 1) / 2 + 1;
    let mut a = RMat::zeros(rows, s);
    for (col, (_, _, f)) in pts.iter().enumerate() {
        let m = f.as_matrix();
        let mut r = 0;
        for i in 0..n {
            for k in i..n {
                a[(r, col)] = m[(i, k)];
                r += 1;
            }
        }
        a[(r, col)] = 1.0;
    }
    let (vals, vecs) = linalg::sym_eigh(&(a.transpose() * &a));
    let scale = vals[s - 1].max(1e-300);
    if vals[0] > 1e-12 * scale {
        return false;
    }
    let z: Vec<f64> = vecs.column(0).iter().copied().collect();
    // Step along +z or −z, whichever zeroes a weight first.
    let mut best: Option<(f64, usize, f64)> = None;
    for sign in [1.0, -1.0] {
        for (k, p) in pts.iter().enumerate() {
            let zk = sign * z[k];
            if zk > 1e-14 {
                let t = p.0 / zk;
                if best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, k, sign));
                }
            }
        }
    }
    let Some((t, hit, sign)) = best else { return false };
    for (k, p) in pts.iter_mut().enumerate() {
        p.0 -= t * sign * z[k];
    }
    pts.remove(hit);
    pts.retain(|p| p.0 > 1e-15);
    normalize(pts);
    true
}

/// Largest-remainder rounding of `N·w` to integers summing to `N`. Ties go to
/// the lowest index, and every weight of at least `1/(2N)` gets a trial.
pub fn apportion(weights: &[f64], total: usize) -> Result<Vec<usize>> {
    if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("weights must be a nonempty nonnegative vector".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("weights sum to {sum}, expected 1")));
    }
    let nf = total as f64;
    let required: Vec<bool> = weights.iter().map(|w| total > 0 && *w * 2.0 * nf >= 1.0 - 1e-12).collect();
    let needed = required.iter().filter(|r| **r).count();
    if total == 0 || total < needed {
        return Err(Error::InfeasibleApportionment { required: needed.max(1), available: total });
    }
    let exact: Vec<f64> = weights.iter().map(|w| w * nf).collect();
    let mut counts: Vec<usize> = exact
        .iter()
        .zip(&required)
        .map(|(x, r)| {
            let c = x.floor() as usize;
            if *r { c.max(1) } else { c }
        })
        .collect();
    let remainder = |k: usize, counts: &[usize]| exact[k] - counts[k] as f64;
    let mut assigned: usize = counts.iter().sum();
    while assigned < total {
        let k = (0..counts.len())
            .fold(0, |b, k| if remainder(k, &counts) > remainder(b, &counts) + 1e-12 { k } else { b });
        counts[k] += 1;
        assigned += 1;
    }
    while assigned > total {
        let floor = |k: usize| usize::from(required[k]);
        let k = (0..counts.len())
            .filter(|&k| counts[k] > floor(k))
            .fold(None, |b: Option<usize>, k| match b {
                Some(b) if remainder(k, &counts) >= remainder(b, &counts) - 1e-12 => Some(b),
                _ => Some(k),
            })
            .expect("some count above its floor");
        counts[k] -= 1;
        assigned -= 1;
    }
    Ok(counts)
}

/// Exhaustive search over candidate mixtures with weights on the grid
/// `{0, r, 2r, …, 1}`, for criteria without a vertex-direction solver.
pub fn simplex_grid_search(
    m: &ParametricModel,
    theta: &[f64],
    crit: &Criterion,
    candidates: &CandidateSet,
    resolution: f64,
    parallel: bool,
) -> Result<OptimalDesignResult> {
    crit.validate()?;
    let point = ModelPoint::new(m, theta)?;
    let pool = CandidatePool::build(&point, m, candidates, parallel)?;
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::InvalidInput(format!("resolution {resolution} not in (0, 1]")));
    }
    let steps = (1.0 / resolution).round() as usize;
    let k = pool.len();
    let count = binomial(steps + k - 1, k - 1);
    if count > 5_000_000 {
        return Err(Error::InvalidInput(format!(
            "simplex grid with {k} candidates at resolution {resolution} has {count} points"
        )));
    }
    let n = point.n_params();
    let fishers = &pool.fishers;
    // Split on the first coordinate, then enumerate the rest sequentially.
    let per_first = par::map_range(steps + 1, parallel, |first| {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut parts = vec![0usize; k];
        parts[0] = first;
        enumerate(&mut parts, 1, steps - first, &mut |parts| {
            let mut j = RMat::zeros(n, n);
            for (f, &c) in fishers.iter().zip(parts.iter()) {
                if c > 0 {
                    j += f.as_matrix().scale(c as f64 / steps as f64);
                }
            }
            let v = criterion_value(crit, &FisherMatrix::from_sym(j)).unwrap_or(f64::INFINITY);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, parts.to_vec()));
            }
        });
        best
    });
    let (value, parts) = per_first
        .into_iter()
        .flatten()
        .fold(None, |b: Option<(f64, Vec<usize>)>, x| match b {
            Some(b) if b.0 <= x.0 => Some(b),
            _ => Some(x),
        })
        .ok_or(Error::Infeasible)?;
    if !value.is_finite() {
        return Err(Error::SingularInformation);
    }
    let (weights, povms): (Vec<f64>, Vec<Povm>) = parts
        .iter()
        .zip(&pool.povms)
        .filter(|(c, _)| **c > 0)
        .map(|(c, p)| (*c as f64 / steps as f64, p.clone()))
        .unzip();
    let design = DesignMeasure::new(weights, povms)?;
    let fisher = point.design_fisher(&design)?;
    let value = criterion_value(crit, &fisher)?;
    Ok(OptimalDesignResult { design, fisher, value, criterion: crit.clone() })
}

fn enumerate(parts: &mut [usize], pos: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
    if pos + 1 == parts.len() {
        parts[pos] = left;
        visit(parts);
        return;
    }
    if pos == parts.len() {
        if left == 0 {
            visit(parts);
        }
        return;
    }
    for c in 0..=left {
        parts[pos] = c;
        enumerate(parts, pos + 1, left - c, visit);
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub design: String,
    pub criterion: Criterion,
    pub value: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EfficiencyReport {
    pub rows: Vec<EfficiencyRow>,
}

pub const EFFICIENCY_HEADER: &str = "design,criterion,value,efficiency";

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EfficiencyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EFFICIENCY_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_cell(&r.design),
                csv_cell(&r.criterion.to_string()),
                format::fmt_sig(r.value),
                format::fmt_sig(r.efficiency)
            ));
        }
        out
    }

    pub fn get(&self, design: &str, crit: &Criterion) -> Option<&EfficiencyRow> {
        self.rows.iter().find(|r| r.design == design && &r.criterion == crit)
    }
}

/// Reference optimum for `crit`: closed forms for qubits, the c-optimal
/// measurement in any dimension, the vertex-direction solver for A and D,
/// and a simplex grid over the candidates otherwise.
pub fn reference_optimum(
    m: &ParametricModel,
    theta: &[f64],
    crit: &Criterion,
    candidates: &CandidateSet,
    opts: &SolveOptions,
) -> Result<f64> {
    if m.is_qubit() {
        if let Ok(v) = analytic::analytic_optimum(m, theta, crit) {
            return Ok(v);
        }
    }
    match crit {
        Criterion::C(c) => Ok(analytic::c_optimal(m, theta, c)?.1),
        Criterion::A(_) | Criterion::D | Criterion::LogD => {
            let report = fedorov_wynn(m, theta, crit, candidates, opts)?;
            criterion_value(crit, &report.result.fisher)
        }
        _ => Ok(simplex_grid_search(m, theta, crit, candidates, 1e-2, opts.parallel)?.value),
    }
}

/// Values and efficiencies of named designs under several criteria; rows are
/// ordered by design, then criterion.
pub fn compare_designs(
    m: &ParametricModel,
    theta: &[f64],
    designs: &[(String, DesignMeasure)],
    criteria: &[Criterion],
    candidates: &CandidateSet,
    opts: &SolveOptions,
) -> Result<EfficiencyReport> {
    let point = ModelPoint::new(m, theta)?;
    let optima = criteria
        .iter()
        .map(|c| reference_optimum(m, theta, c, candidates, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (name, xi) in designs {
        let j = point.design_fisher(xi)?;
        for (crit, opt) in criteria.iter().zip(&optima) {
            let value = match criterion_value(crit, &j) {
                Ok(v) => v,
                Err(Error::Infeasible) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            rows.push(EfficiencyRow {
                design: name.clone(),
                criterion: crit.clone(),
                value,
                efficiency: efficiency(crit, value, *opt),
            });
        }
    }
    Ok(EfficiencyReport { rows })
}

impl FromStr for CandidateSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CandidateSet::parse(s)
    }
}

/// Whether `c` is estimable under the design: `c ∈ range J(ξ)`.
pub fn design_estimates(point: &ModelPoint, xi: &DesignMeasure, c: &[f64]) -> Result<bool> {
    let j = point.design_fisher(xi)?;
    Ok(criteria::feasibility_contains(&j, c, criteria::FEASIBILITY_TOL))
}
