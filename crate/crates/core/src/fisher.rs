//! Classical Fisher information of measurements and design measures, SLD
//! operators, SLD quantum Fisher information, and the qubit SLD-frame
//! construction of the Fisher information region.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::par;
use crate::quantum::{DensityMatrix, HermitianMatrix, ParametricModel, Povm, PSD_TOL};

/// Outcomes with probability below this are treated as impossible.
pub const ZERO_PROB: f64 = 1e-12;
/// ... provided every derivative component is below this.
pub const ZERO_DERIV: f64 = 1e-9;
/// Smallest weight kept in a design measure.
pub const MIN_WEIGHT: f64 = 1e-12;

/// A real symmetric positive-semidefinite information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FisherJson", into = "FisherJson")]
pub struct FisherMatrix(RMat);

/// Wire form: `{"n": n, "entries": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FisherJson {
    pub n: usize,
    pub entries: Vec<Vec<f64>>,
}

impl From<FisherMatrix> for FisherJson {
    fn from(f: FisherMatrix) -> Self {
        let n = f.n();
        FisherJson { n, entries: (0..n).map(|i| (0..n).map(|j| f.0[(i, j)]).collect()).collect() }
    }
}

impl TryFrom<FisherJson> for FisherMatrix {
    type Error = Error;
    fn try_from(j: FisherJson) -> Result<Self> {
        if j.entries.len() != j.n || j.entries.iter().any(|r| r.len() != j.n) {
            return Err(Error::InvalidInput(format!("entries are not {0}x{0}", j.n)));
        }
        FisherMatrix::new(RMat::from_fn(j.n, j.n, |i, k| j.entries[i][k]))
    }
}

impl FisherMatrix {
    /// Validates symmetry (1e-10) and positivity (eigenvalues ≥ −1e-8).
    pub fn new(m: RMat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidInput("information matrix must be square and non-empty".into()));
        }
        let asym = linalg::max_abs(&(&m - m.transpose()));
        if asym > 1e-10 {
            return Err(Error::InvalidInput(format!("information matrix not symmetric ({asym:e})")));
        }
        let f = FisherMatrix(linalg::symmetrize(&m));
        let min = f.eigenvalues()[0];
        if min < -1e-8 {
            return Err(Error::InvalidInput(format!("information matrix not PSD (min eigenvalue {min:e})")));
        }
        Ok(f)
    }

    pub(crate) fn from_sym(m: RMat) -> Self {
        FisherMatrix(linalg::symmetrize(&m))
    }

    pub fn zeros(n: usize) -> Self {
        FisherMatrix(RMat::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(RMat::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &RMat {
        &self.0
    }

    pub fn into_inner(self) -> RMat {
        self.0
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigh(&self.0).0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn max_abs_diff(&self, other: &FisherMatrix) -> f64 {
        linalg::max_abs(&(&self.0 - &other.0))
    }

    /// Whether the matrix is numerically singular relative to its scale.
    pub fn is_singular(&self) -> bool {
        let ev = self.eigenvalues();
        let top = *ev.last().unwrap();
        top <= 0.0 || ev[0] <= 1e-10 * top
    }

    /// Inverse, or `None` when singular.
    pub fn inverse(&self) -> Option<RMat> {
        (!self.is_singular()).then(|| linalg::sym_inverse(&self.0))
    }
}

/// A finitely supported probability measure over measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignJson", into = "DesignJson")]
pub struct DesignMeasure {
    weights: Vec<f64>,
    povms: Vec<Povm>,
}

/// Wire form: `{"weights": [..], "povms": [povm, ..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignJson {
    pub weights: Vec<f64>,
    pub povms: Vec<Povm>,
}

impl From<DesignMeasure> for DesignJson {
    fn from(d: DesignMeasure) -> Self {
        DesignJson { weights: d.weights, povms: d.povms }
    }
}

impl TryFrom<DesignJson> for DesignMeasure {
    type Error = Error;
    fn try_from(j: DesignJson) -> Result<Self> {
        DesignMeasure::new(j.weights, j.povms)
    }
}

impl DesignMeasure {
    /// Builds a design. Weights must be non-negative and sum to one within
    /// 1e-9; weights at or below 1e-12 are dropped and the rest renormalised.
    pub fn new(weights: Vec<f64>, povms: Vec<Povm>) -> Result<Self> {
        if weights.len() != povms.len() || weights.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} measurements",
                weights.len(),
                povms.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        let d = povms[0].dim();
        if let Some(bad) = povms.iter().find(|p| p.dim() != d) {
            return Err(Error::WrongDimension { expected: d, found: bad.dim() });
        }
        let (weights, povms): (Vec<f64>, Vec<Povm>) =
            weights.into_iter().zip(povms).filter(|(w, _)| *w > MIN_WEIGHT).unzip();
        if weights.is_empty() {
            return Err(Error::InvalidInput("design has no positive weight".into()));
        }
        let kept: f64 = weights.iter().sum();
        Ok(DesignMeasure { weights: weights.iter().map(|w| w / kept).collect(), povms })
    }

    /// A design with all mass on a single measurement.
    pub fn single(p: Povm) -> Self {
        DesignMeasure { weights: vec![1.0], povms: vec![p] }
    }

    /// Uniform weights over `povms`.
    pub fn uniform(povms: Vec<Povm>) -> Result<Self> {
        let w = 1.0 / povms.len() as f64;
        Self::new(vec![w; povms.len()], povms)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.povms[0].dim()
    }

    /// `λ·self + (1−λ)·other` as a measure (supports concatenated).
    pub fn mix(&self, other: &DesignMeasure, lambda: f64) -> Result<DesignMeasure> {
        let weights = self
            .weights
            .iter()
            .map(|w| w * lambda)
            .chain(other.weights.iter().map(|w| w * (1.0 - lambda)))
            .collect();
        let povms = self.povms.iter().chain(&other.povms).cloned().collect();
        DesignMeasure::new(weights, povms)
    }
}

/// A model evaluated at a fixed parameter: the state and its derivatives.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    rho: DensityMatrix,
    derivs: Vec<HermitianMatrix>,
}

impl ModelPoint {
    pub fn new(m: &ParametricModel, theta: &[f64]) -> Result<Self> {
        let rho = m.state_at(theta)?;
        let derivs = m.state_derivatives(theta)?;
        Ok(ModelPoint { rho, derivs })
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn derivatives(&self) -> &[HermitianMatrix] {
        &self.derivs
    }

    pub fn n_params(&self) -> usize {
        self.derivs.len()
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    fn check_dim(&self, p: &Povm) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::WrongDimension { expected: self.dim(), found: p.dim() });
        }
        Ok(())
    }

    /// Born-rule outcome probabilities, negative round-off clipped to zero.
    pub fn probabilities(&self, p: &Povm) -> Result<Vec<f64>> {
        self.check_dim(p)?;
        Ok(p.elements().iter().map(|e| self.rho.expectation(e).max(0.0)).collect())
    }

    /// Classical Fisher information `Σ_x ∂_i p_x ∂_j p_x / p_x`.
    pub fn fisher(&self, p: &Povm) -> Result<FisherMatrix> {
        self.check_dim(p)?;
        let n = self.n_params();
        let mut j = RMat::zeros(n, n);
        let mut grad = vec![0.0; n];
        for (outcome, e) in p.elements().iter().enumerate() {
            let px = self.rho.expectation(e).max(0.0);
            for (g, d) in grad.iter_mut().zip(&self.derivs) {
                *g = d.trace_product(e);
            }
            if px < ZERO_PROB {
                if grad.iter().all(|g| g.abs() < ZERO_DERIV) {
                    continue;
                }
                return Err(Error::SingularProbability { outcome });
            }
            for a in 0..n {
                for b in a..n {
                    let v = grad[a] * grad[b] / px;
                    j[(a, b)] += v;
                    if a != b {
                        j[(b, a)] += v;
                    }
                }
            }
        }
        Ok(FisherMatrix(j))
    }

    /// Weighted sum of per-measurement information, in support order.
    pub fn design_fisher(&self, xi: &DesignMeasure) -> Result<FisherMatrix> {
        let n = self.n_params();
        let mut j = RMat::zeros(n, n);
        for (w, p) in xi.weights.iter().zip(&xi.povms) {
            j += self.fisher(p)?.0.scale(*w);
        }
        Ok(FisherMatrix(j))
    }

    /// Fisher matrices of many measurements, optionally in parallel.
    pub fn fisher_many(&self, povms: &[Povm], parallel: bool) -> Result<Vec<FisherMatrix>> {
        par::map_slice(povms, parallel, |p| self.fisher(p)).into_iter().collect()
    }

    /// SLD operators solved in the eigenbasis of `ρ`.
    pub fn sld_operators(&self) -> Result<Vec<HermitianMatrix>> {
        let (vals, vecs) = linalg::herm_eigh(self.rho.matrix().as_matrix());
        if vals[0] <= PSD_TOL {
            return Err(Error::RankDeficientState { min_eigenvalue: vals[0] });
        }
        let d = vals.len();
        Ok(self
            .derivs
            .iter()
            .map(|deriv| {
                let local = vecs.adjoint() * deriv.as_matrix() * &vecs;
                let solved = CMat::from_fn(d, d, |a, b| local[(a, b)] * (2.0 / (vals[a] + vals[b])));
                HermitianMatrix::hermitize(&vecs * solved * vecs.adjoint())
            })
            .collect())
    }

    /// SLD quantum Fisher information `Re tr(ρ L_i L_j)`.
    pub fn sld_fisher(&self) -> Result<FisherMatrix> {
        let ls = self.sld_operators()?;
        Ok(sld_gram(&self.rho, &ls))
    }
}

fn sld_gram(rho: &DensityMatrix, ls: &[HermitianMatrix]) -> FisherMatrix {
    let n = ls.len();
    let r = rho.matrix().as_matrix();
    let mut j = RMat::zeros(n, n);
    for a in 0..n {
        let rl = r * ls[a].as_matrix();
        for b in a..n {
            let v = linalg::re_trace_prod(&rl, ls[b].as_matrix());
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    FisherMatrix(j)
}

pub fn born_probabilities(m: &ParametricModel, theta: &[f64], p: &Povm) -> Result<Vec<f64>> {
    ModelPoint::new(m, theta)?.probabilities(p)
}

pub fn fisher_matrix_povm(m: &ParametricModel, theta: &[f64], p: &Povm) -> Result<FisherMatrix> {
    ModelPoint::new(m, theta)?.fisher(p)
}

pub fn fisher_matrix_design(m: &ParametricModel, theta: &[f64], xi: &DesignMeasure) -> Result<FisherMatrix> {
    ModelPoint::new(m, theta)?.design_fisher(xi)
}

/// Collapses a design measure into one POVM `⋃_k p_k Π^{(k)}` with the same
/// information matrix.
pub fn flatten_design(xi: &DesignMeasure) -> Povm {
    if xi.len() == 1 {
        return xi.povms[0].clone();
    }
    let mut elements = Vec::new();
    let mut labels = Vec::new();
    for (k, (w, p)) in xi.weights.iter().zip(&xi.povms).enumerate() {
        for (x, e) in p.elements().iter().enumerate() {
            elements.push(e.scaled(*w));
            let base = p.labels().map(|l| l[x].clone()).unwrap_or_else(|| x.to_string());
            labels.push(format!("{k}:{base}"));
        }
    }
    Povm::new_unchecked(elements, Some(labels))
}

pub fn sld_operators(m: &ParametricModel, theta: &[f64]) -> Result<Vec<HermitianMatrix>> {
    ModelPoint::new(m, theta)?.sld_operators()
}

pub fn sld_fisher(m: &ParametricModel, theta: &[f64]) -> Result<FisherMatrix> {
    ModelPoint::new(m, theta)?.sld_fisher()
}

/// Spectral projectors of a Hermitian observable, ordered by descending
/// eigenvalue. Eigenvalues closer than `1e-9` times the spectral scale share
/// one projector.
pub fn observable_pvm(obs: &HermitianMatrix) -> Result<Povm> {
    let (vals, vecs) = linalg::herm_eigh(obs.as_matrix());
    let d = vals.len();
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    if (vals[d - 1] - vals[0]) <= 1e-9 * scale {
        return Err(Error::DegenerateObservable);
    }
    let mut elements: Vec<HermitianMatrix> = Vec::new();
    let mut last = f64::NAN;
    for k in (0..d).rev() {
        let v: DVector<Complex64> = vecs.column(k).into_owned();
        let proj = &v * v.adjoint();
        if (last - vals[k]).abs() <= 1e-9 * scale {
            let prev = elements.pop().expect("cluster has a first member");
            elements.push(HermitianMatrix::hermitize(prev.into_inner() + proj));
        } else {
            elements.push(HermitianMatrix::hermitize(proj));
        }
        last = vals[k];
    }
    Ok(Povm::new_unchecked(elements, None))
}

fn require_qubit(m: &ParametricModel) -> Result<()> {
    if !m.is_qubit() {
        return Err(Error::WrongDimension { expected: 2, found: m.dim() });
    }
    Ok(())
}

/// `Σ_j v_j L_j` for real coefficients `v`.
pub(crate) fn combine_slds(ls: &[HermitianMatrix], v: &[f64]) -> HermitianMatrix {
    let d = ls[0].dim();
    let mut m = CMat::zeros(d, d);
    for (l, &c) in ls.iter().zip(v) {
        m += l.as_matrix().scale(c);
    }
    HermitianMatrix::hermitize(m)
}

fn check_unit(u: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::WrongDimension { expected: n, found: u.len() });
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotUnitVector { norm });
    }
    Ok(())
}

/// Projective measurement of `L_u = Σ u_i (J^SLD)^{-1/2}_{ij} L_j`, whose
/// information is the rank-one `√J^SLD u uᵗ √J^SLD`.
pub fn sld_frame_pvm(m: &ParametricModel, theta: &[f64], u: &[f64]) -> Result<Povm> {
    require_qubit(m)?;
    let point = ModelPoint::new(m, theta)?;
    let frame = SldFrame::new(&point)?;
    frame.pvm(u)
}

/// Cached SLD data at a model point for building many frame measurements.
#[derive(Debug, Clone)]
pub struct SldFrame {
    slds: Vec<HermitianMatrix>,
    sld_fisher: FisherMatrix,
    inv_sqrt: RMat,
    sqrt: RMat,
}

impl SldFrame {
    pub fn new(point: &ModelPoint) -> Result<Self> {
        let slds = point.sld_operators()?;
        let sld_fisher = sld_gram(point.state(), &slds);
        let inv_sqrt = linalg::sym_pow(sld_fisher.as_matrix(), -0.5);
        let sqrt = linalg::sym_sqrt(sld_fisher.as_matrix());
        Ok(SldFrame { slds, sld_fisher, inv_sqrt, sqrt })
    }

    pub fn sld_fisher(&self) -> &FisherMatrix {
        &self.sld_fisher
    }

    pub fn slds(&self) -> &[HermitianMatrix] {
        &self.slds
    }

    /// `√J^SLD`.
    pub fn sqrt_sld(&self) -> &RMat {
        &self.sqrt
    }

    pub fn pvm(&self, u: &[f64]) -> Result<Povm> {
        let n = self.slds.len();
        check_unit(u, n)?;
        let uv = DVector::from_column_slice(u);
        let coeffs = self.inv_sqrt.transpose() * uv;
        observable_pvm(&combine_slds(&self.slds, coeffs.as_slice()))
    }

    /// `√J^SLD u uᵗ √J^SLD` without building the measurement.
    pub fn rank_one_fisher(&self, u: &[f64]) -> FisherMatrix {
        let v = &self.sqrt * DVector::from_column_slice(u);
        FisherMatrix::from_sym(&v * v.transpose())
    }
}

/// `Σ p_i √J^SLD u_i u_iᵗ √J^SLD` for a weighted frame of unit vectors.
pub fn fisher_region_point(
    m: &ParametricModel,
    theta: &[f64],
    weights: &[f64],
    frame: &[Vec<f64>],
) -> Result<FisherMatrix> {
    require_qubit(m)?;
    if weights.len() != frame.len() {
        return Err(Error::InvalidInput(format!("{} weights for {} directions", weights.len(), frame.len())));
    }
    let point = ModelPoint::new(m, theta)?;
    let sld = SldFrame::new(&point)?;
    let n = m.n_params();
    let mut j = RMat::zeros(n, n);
    for (w, u) in weights.iter().zip(frame) {
        check_unit(u, n)?;
        j += sld.rank_one_fisher(u).0.scale(*w);
    }
    Ok(FisherMatrix(j))
}
