//! Closed-form optimal designs for qubit models.
//!
//! For a qubit the Fisher information region is the image of the unit trace
//! PSD cone under `K ↦ √J^SLD K √J^SLD`, and every extreme point is the
//! information of a projective measurement of a linear combination of SLD
//! operators. Optimal designs are therefore mixtures of at most `n` such
//! measurements along an orthonormal frame of whitened directions.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde_json::json;

use crate::criteria::{criterion_value, efficiency, Criterion};
use crate::error::{Error, Result};
use crate::fisher::{combine_slds, observable_pvm, DesignMeasure, FisherMatrix, ModelPoint, SldFrame};
use crate::format;
use crate::linalg::{self, RMat};
use crate::par;
use crate::quantum::{pauli_pvm, ParametricModel, Povm};

/// An optimal design together with its information matrix and criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalDesignResult {
    pub design: DesignMeasure,
    pub fisher: FisherMatrix,
    pub value: f64,
    pub criterion: Criterion,
}

impl OptimalDesignResult {
    pub fn to_json(&self) -> serde_json::Value {
        let mut fisher = serde_json::to_value(&self.fisher).expect("fisher serializes");
        let mut design = serde_json::to_value(&self.design).expect("design serializes");
        format::round_json(&mut fisher);
        format::round_json(&mut design);
        json!({
            "criterion": self.criterion.to_string(),
            "value": format::json_real(self.value),
            "fisher": fisher,
            "design": design,
        })
    }
}

fn qubit_frame(m: &ParametricModel, theta: &[f64]) -> Result<(ModelPoint, SldFrame)> {
    if !m.is_qubit() {
        return Err(Error::WrongDimension { expected: 2, found: m.dim() });
    }
    let point = ModelPoint::new(m, theta)?;
    let frame = SldFrame::new(&point)?;
    Ok((point, frame))
}

fn frame_for_design(m: &ParametricModel, theta: &[f64]) -> Result<(ModelPoint, SldFrame)> {
    let n = m.n_params();
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedParamCount(n));
    }
    qubit_frame(m, theta)
}

/// Mixture of SLD-frame measurements along the columns of `dirs`.
fn frame_design(
    point: &ModelPoint,
    frame: &SldFrame,
    dirs: &RMat,
    weights: Vec<f64>,
    criterion: Criterion,
) -> Result<OptimalDesignResult> {
    let povms = (0..dirs.ncols())
        .map(|k| {
            let u: Vec<f64> = dirs.column(k).iter().copied().collect();
            frame.pvm(&u)
        })
        .collect::<Result<Vec<_>>>()?;
    let design = DesignMeasure::new(weights, povms)?;
    let fisher = point.design_fisher(&design)?;
    let value = criterion_value(&criterion, &fisher)?;
    Ok(OptimalDesignResult { design, fisher, value, criterion })
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn spectral_design(
    m: &ParametricModel,
    theta: &[f64],
    criterion: Criterion,
    weight_of: impl Fn(f64) -> f64,
) -> Result<OptimalDesignResult> {
    let (point, frame) = frame_for_design(m, theta)?;
    let (vals, vecs) = linalg::canonical_frame(frame.sld_fisher().as_matrix());
    let weights = normalized(vals.iter().map(|&l| weight_of(l)).collect());
    frame_design(&point, &frame, &vecs, weights, criterion)
}

/// γ-optimal design: weights `∝ λ_i^{−γ/(γ+1)}` along the eigenvectors of
/// `J^SLD`, giving `J = (J^SLD)^{1/(γ+1)} / Tr{(J^SLD)^{−γ/(γ+1)}}`.
pub fn gamma_optimal(m: &ParametricModel, theta: &[f64], gamma: f64) -> Result<OptimalDesignResult> {
    let crit = Criterion::gamma(gamma)?;
    let p = -gamma / (gamma + 1.0);
    spectral_design(m, theta, crit, |l| l.powf(p))
}

/// A-optimal design (`γ = 1`), valued by `Tr{J⁻¹}`.
pub fn a_optimal(m: &ParametricModel, theta: &[f64]) -> Result<OptimalDesignResult> {
    spectral_design(m, theta, Criterion::a(), |l| l.powf(-0.5))
}

/// Weighted A-optimal design for `Tr{W J⁻¹}`.
///
/// With `M = (J^SLD)^{−1/2} W (J^SLD)^{−1/2}` the optimum is
/// `K = √M / Tr√M` in whitened coordinates, with value `(Tr√M)²`.
pub fn a_optimal_weighted(m: &ParametricModel, theta: &[f64], w: &RMat) -> Result<OptimalDesignResult> {
    let crit = Criterion::a_weighted(w.clone())?;
    let (point, frame) = frame_for_design(m, theta)?;
    let n = frame.sld_fisher().n();
    if w.nrows() != n {
        return Err(Error::WrongDimension { expected: n, found: w.nrows() });
    }
    let inv_sqrt = linalg::sym_pow(frame.sld_fisher().as_matrix(), -0.5);
    let mmat = &inv_sqrt * w * &inv_sqrt;
    let (vals, vecs) = linalg::canonical_frame(&mmat);
    let weights = normalized(vals.iter().map(|&mu| mu.max(0.0).sqrt()).collect());
    frame_design(&point, &frame, &vecs, weights, crit)
}

/// D-optimal design: uniform weights over the eigenvectors of `J^SLD`, so
/// that `J = J^SLD / n`.
pub fn d_optimal(m: &ParametricModel, theta: &[f64]) -> Result<OptimalDesignResult> {
    spectral_design(m, theta, Criterion::D, |_| 1.0)
}

/// E-optimal design: weights `∝ 1/λ_i`, so that `J = I / Tr{(J^SLD)⁻¹}`.
pub fn e_optimal(m: &ParametricModel, theta: &[f64]) -> Result<OptimalDesignResult> {
    spectral_design(m, theta, Criterion::E, |l| 1.0 / l)
}

/// Optimal measurement for the linear combination `cᵗθ`: projectors of
/// `Σ_j (J^SLD⁻¹ c)_j L_j`, attaining `cᵗ (J^SLD)⁻¹ c`. Valid in any dimension.
pub fn c_optimal(m: &ParametricModel, theta: &[f64], c: &[f64]) -> Result<(Povm, f64)> {
    let n = m.n_params();
    if c.len() != n {
        return Err(Error::WrongDimension { expected: n, found: c.len() });
    }
    Criterion::c(c.to_vec())?;
    let point = ModelPoint::new(m, theta)?;
    let slds = point.sld_operators()?;
    let js = point.sld_fisher()?;
    let inv = js.inverse().ok_or(Error::SingularInformation)?;
    let cv = DVector::from_column_slice(c);
    let coeffs = inv * &cv;
    let pvm = observable_pvm(&combine_slds(&slds, coeffs.as_slice()))?;
    Ok((pvm, cv.dot(&coeffs)))
}

/// One-parameter models: the SLD eigenbasis measurement attains the SLD
/// Fisher information, which dominates every other measurement.
pub fn scalar_optimal(m: &ParametricModel, theta: f64) -> Result<(Povm, f64)> {
    let n = m.n_params();
    if n != 1 {
        return Err(Error::UnsupportedParamCount(n));
    }
    let point = ModelPoint::new(m, &[theta])?;
    let slds = point.sld_operators()?;
    let value = point.sld_fisher()?.as_matrix()[(0, 0)];
    Ok((observable_pvm(&slds[0])?, value))
}

fn max_trace_from_frame(frame: &SldFrame, t: &RMat) -> Result<f64> {
    let n = frame.sld_fisher().n();
    if t.nrows() != n || t.ncols() != n {
        return Err(Error::WrongDimension { expected: n, found: t.nrows() });
    }
    let s = frame.sqrt_sld();
    let (vals, _) = linalg::sym_eigh(&(s * t * s));
    Ok(vals[n - 1])
}

/// `max_e Tr{J[e] T}` over all measurements of a qubit model, equal to
/// `λ_max(√J^SLD T √J^SLD)`.
pub fn max_trace_over_measurements(m: &ParametricModel, theta: &[f64], t: &RMat) -> Result<f64> {
    let (_, frame) = qubit_frame(m, theta)?;
    max_trace_from_frame(&frame, t)
}

/// Exact maximal sensitivity over all qubit measurements and its threshold.
pub(crate) fn exact_sensitivity(frame: &SldFrame, inv: &RMat, crit: &Criterion) -> Result<(f64, f64)> {
    match crit {
        Criterion::D | Criterion::LogD => Ok((max_trace_from_frame(frame, inv)?, inv.nrows() as f64)),
        Criterion::A(w) => {
            let wi = match w {
                Some(w) => w * inv,
                None => inv.clone(),
            };
            let t = linalg::symmetrize(&(inv * &wi));
            Ok((max_trace_from_frame(frame, &t)?, wi.trace()))
        }
        other => Err(Error::UnsupportedCriterion(format!("equivalence certificate for {other}"))),
    }
}

/// Gap between the exact maximal sensitivity and its threshold. The gap is
/// never negative (up to round-off) and vanishes exactly at optimal designs,
/// including randomized ones.
pub fn equivalence_certificate(
    m: &ParametricModel,
    theta: &[f64],
    xi: &DesignMeasure,
    crit: &Criterion,
) -> Result<f64> {
    let (point, frame) = qubit_frame(m, theta)?;
    let j = point.design_fisher(xi)?;
    let inv = j.inverse().ok_or(Error::SingularInformation)?;
    let (max, threshold) = exact_sensitivity(&frame, &inv, crit)?;
    Ok(max - threshold)
}

/// The designs compared on the Bloch ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignTag {
    A,
    D,
    E,
    ST,
}

impl DesignTag {
    pub const ALL: [DesignTag; 4] = [DesignTag::A, DesignTag::D, DesignTag::E, DesignTag::ST];
}

impl fmt::Display for DesignTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DesignTag::A => "e_A",
            DesignTag::D => "e_D",
            DesignTag::E => "e_E",
            DesignTag::ST => "e_ST",
        };
        f.write_str(s)
    }
}

impl FromStr for DesignTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.strip_prefix("e_").unwrap_or(s);
        match key.to_ascii_uppercase().as_str() {
            "A" => Ok(DesignTag::A),
            "D" => Ok(DesignTag::D),
            "E" => Ok(DesignTag::E),
            "ST" => Ok(DesignTag::ST),
            _ => Err(Error::Parse(format!("unknown built-in design '{s}'"))),
        }
    }
}

/// Uniform mixture of the three Pauli measurements.
pub fn standard_tomography() -> DesignMeasure {
    let povms = (1..=3).map(|k| pauli_pvm(k).expect("valid axis")).collect();
    DesignMeasure::uniform(povms).expect("three qubit measurements")
}

/// The built-in design `tag` for a qubit model at `θ`.
pub fn named_design(tag: DesignTag, m: &ParametricModel, theta: &[f64]) -> Result<DesignMeasure> {
    match tag {
        DesignTag::A => Ok(a_optimal(m, theta)?.design),
        DesignTag::D => Ok(d_optimal(m, theta)?.design),
        DesignTag::E => Ok(e_optimal(m, theta)?.design),
        DesignTag::ST => {
            if !m.is_qubit() {
                return Err(Error::WrongDimension { expected: 2, found: m.dim() });
            }
            Ok(standard_tomography())
        }
    }
}

/// Analytic optimal value of `crit` for a qubit model.
pub fn analytic_optimum(m: &ParametricModel, theta: &[f64], crit: &Criterion) -> Result<f64> {
    match crit {
        Criterion::A(None) => Ok(a_optimal(m, theta)?.value),
        Criterion::A(Some(w)) => Ok(a_optimal_weighted(m, theta, w)?.value),
        Criterion::D => Ok(d_optimal(m, theta)?.value),
        Criterion::LogD => criterion_value(crit, &d_optimal(m, theta)?.fisher),
        Criterion::E => Ok(e_optimal(m, theta)?.value),
        Criterion::Gamma(g) => Ok(gamma_optimal(m, theta, *g)?.value),
        Criterion::C(c) => Ok(c_optimal(m, theta, c)?.1),
        Criterion::Compound(..) => Err(Error::UnsupportedCriterion(format!("no closed form for {crit}"))),
    }
}

fn bloch_domain(theta: &[f64]) -> Result<f64> {
    if theta.len() != 3 {
        return Err(Error::WrongDimension { expected: 3, found: theta.len() });
    }
    let r2: f64 = theta.iter().map(|x| x * x).sum();
    if r2.is_nan() || r2 >= 1.0 {
        return Err(Error::OutOfDomain(format!("|theta|^2 = {r2} must be < 1")));
    }
    Ok(r2)
}

/// Inverse Fisher matrices of `e_A`, `e_D`, `e_E` and `e_ST` on the Bloch ball.
pub fn closed_form_inverse_fisher(tag: DesignTag, theta: &[f64]) -> Result<RMat> {
    let r2 = bloch_domain(theta)?;
    let t = DVector::from_column_slice(theta);
    let id = RMat::identity(3, 3);
    let outer = &t * t.transpose();
    Ok(match tag {
        DesignTag::A => {
            let s = (1.0 - r2).sqrt();
            // (s − 1)/|θ|² rewritten as −1/(1 + s), regular at θ = 0.
            (id - outer.scale(1.0 / (1.0 + s))).scale(2.0 + s)
        }
        DesignTag::D => (id - outer).scale(3.0),
        DesignTag::E => id.scale(3.0 - r2),
        DesignTag::ST => RMat::from_diagonal(&DVector::from_iterator(3, theta.iter().map(|x| 3.0 * (1.0 - x * x)))),
    })
}

/// One row of an efficiency curve: `|θ|²` and the efficiencies of
/// `e_A`, `e_D`, `e_E`, `e_ST` in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub r2: f64,
    pub eta: [f64; 4],
}

pub const CURVES_HEADER: &str = "r2,eta_A,eta_D,eta_E,eta_ST";

/// Unit Bloch direction for polar angle `θ₀` and azimuth `φ₀`.
pub fn bloch_direction(polar: f64, azimuth: f64) -> [f64; 3] {
    [polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos()]
}

/// Efficiencies along the ray `√r2 · n(θ₀, φ₀)` with `r2` evenly spaced
/// between `1e-6` and `1 − 1e-6`.
pub fn efficiency_curves(direction: (f64, f64), crit: &Criterion, grid: usize) -> Result<Vec<CurveRow>> {
    efficiency_curves_with(direction, crit, grid, true)
}

pub fn efficiency_curves_with(
    direction: (f64, f64),
    crit: &Criterion,
    grid: usize,
    parallel: bool,
) -> Result<Vec<CurveRow>> {
    if grid < 2 {
        return Err(Error::InvalidInput(format!("grid must have at least 2 points, got {grid}")));
    }
    crit.validate()?;
    let dir = bloch_direction(direction.0, direction.1);
    let (lo, hi) = (1e-6, 1.0 - 1e-6);
    let rows = par::map_range(grid, parallel, |k| {
        let r2 = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
        let r = r2.sqrt();
        let theta = [r * dir[0], r * dir[1], r * dir[2]];
        curve_row(crit, r2, &theta)
    });
    rows.into_iter().collect()
}

fn curve_row(crit: &Criterion, r2: f64, theta: &[f64; 3]) -> Result<CurveRow> {
    let mut values = [0.0; 4];
    for (slot, tag) in values.iter_mut().zip(DesignTag::ALL) {
        let inv = closed_form_inverse_fisher(tag, theta)?;
        let j = FisherMatrix::new(linalg::symmetrize(&linalg::sym_inverse(&inv)))?;
        *slot = criterion_value(crit, &j)?;
    }
    let optimal = match crit {
        Criterion::A(None) => values[0],
        Criterion::D | Criterion::LogD => values[1],
        Criterion::E => values[2],
        _ => analytic_optimum(&ParametricModel::Bloch3, theta, crit)?,
    };
    let eta = values.map(|v| efficiency(crit, v, optimal));
    Ok(CurveRow { r2, eta })
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = std::iter::once(row.r2).chain(row.eta).map(format::fmt_sig).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
