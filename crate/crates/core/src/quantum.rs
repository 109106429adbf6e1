//! Hermitian matrices, density matrices, POVMs and parametric state models.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Entry-wise tolerance for the Hermitian check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on eigenvalue positivity and on trace / identity sums.
pub const PSD_TOL: f64 = 1e-10;

/// A dense complex Hermitian matrix of dimension at least 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct HermitianMatrix(CMat);

/// Wire form: `{"dim": d, "re": [[..]], "im": [[..]]}`, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl HermitianMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::WrongDimension { expected: m.nrows(), found: m.ncols() });
        }
        if m.nrows() < 2 {
            return Err(Error::InvalidInput(format!("matrix dimension {} < 2", m.nrows())));
        }
        let dev = linalg::max_abs_c(&(&m - m.adjoint()));
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!("matrix is not Hermitian (deviation {dev:e})")));
        }
        Ok(Self::hermitize(m))
    }

    /// Builds from row-major real and imaginary parts.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let d = re.len();
        if im.len() != d || re.iter().chain(im.iter()).any(|row| row.len() != d) {
            return Err(Error::InvalidInput("re/im grids must be square and of equal shape".into()));
        }
        let m = CMat::from_fn(d, d, |i, j| Complex64::new(re[i][j], im[i][j]));
        Self::new(m)
    }

    pub fn from_real_rows(d: usize, rows: &[f64]) -> Result<Self> {
        let m = CMat::from_row_slice(d, d, &rows.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>());
        Self::new(m)
    }

    /// Averages with the adjoint; used for results of exact Hermitian arithmetic.
    pub(crate) fn hermitize(m: CMat) -> Self {
        HermitianMatrix((&m + m.adjoint()).scale(0.5))
    }

    pub fn zeros(d: usize) -> Self {
        HermitianMatrix(CMat::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        HermitianMatrix(CMat::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_c(&self.0).re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::herm_eigh(&self.0).0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn scaled(&self, a: f64) -> Self {
        HermitianMatrix(self.0.scale(a))
    }

    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        linalg::max_abs_c(&(&self.0 - &other.0))
    }

    /// `Re tr(self · other)`.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        linalg::re_trace_prod(&self.0, &other.0)
    }

    /// Rank-one projector onto the (normalised) vector `v`.
    pub fn projector(v: &DVector<Complex64>) -> Self {
        let v = v.normalize();
        Self::hermitize(&v * v.adjoint())
    }
}

impl From<HermitianMatrix> for MatrixJson {
    fn from(m: HermitianMatrix) -> Self {
        let d = m.dim();
        let re = (0..d).map(|i| (0..d).map(|j| m.0[(i, j)].re).collect()).collect();
        let im = (0..d).map(|i| (0..d).map(|j| m.0[(i, j)].im).collect()).collect();
        MatrixJson { dim: d, re, im }
    }
}

impl TryFrom<MatrixJson> for HermitianMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.re.len() != j.dim {
            return Err(Error::WrongDimension { expected: j.dim, found: j.re.len() });
        }
        HermitianMatrix::from_parts(&j.re, &j.im)
    }
}

/// Pauli matrix `σ_k` for `k ∈ {1, 2, 3}`.
pub fn pauli(k: usize) -> CMat {
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::i();
    match k {
        1 => CMat::from_row_slice(2, 2, &[o, one, one, o]),
        2 => CMat::from_row_slice(2, 2, &[o, -i, i, o]),
        3 => CMat::from_row_slice(2, 2, &[one, o, o, -one]),
        _ => panic!("Pauli index must be 1, 2 or 3"),
    }
}

/// A positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub fn new(m: HermitianMatrix) -> Result<Self> {
        let tr = m.trace();
        if (tr - 1.0).abs() > PSD_TOL {
            return Err(Error::OutOfDomain(format!("trace {tr} differs from 1")));
        }
        let min = m.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::OutOfDomain(format!("state has negative eigenvalue {min:e}")));
        }
        Ok(DensityMatrix(m))
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Expectation `tr(ρ A)` for Hermitian `A`.
    pub fn expectation(&self, a: &HermitianMatrix) -> f64 {
        self.0.trace_product(a)
    }
}

/// Bloch vector `s_j = tr(ρ σ_j)` of a qubit state.
pub fn bloch_vector(rho: &DensityMatrix) -> Result<[f64; 3]> {
    if rho.dim() != 2 {
        return Err(Error::WrongDimension { expected: 2, found: rho.dim() });
    }
    let m = rho.matrix().as_matrix();
    let s = [1, 2, 3].map(|k| linalg::re_trace_prod(m, &pauli(k)));
    Ok(s)
}

/// A finite-outcome measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PovmJson", into = "PovmJson")]
pub struct Povm {
    elements: Vec<HermitianMatrix>,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmJson {
    pub elements: Vec<HermitianMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl From<Povm> for PovmJson {
    fn from(p: Povm) -> Self {
        PovmJson { elements: p.elements, labels: p.labels }
    }
}

impl TryFrom<PovmJson> for Povm {
    type Error = Error;
    fn try_from(j: PovmJson) -> Result<Self> {
        Povm::with_labels(j.elements, j.labels)
    }
}

impl Povm {
    pub fn new(elements: Vec<HermitianMatrix>) -> Result<Self> {
        Self::with_labels(elements, None)
    }

    pub fn with_labels(elements: Vec<HermitianMatrix>, labels: Option<Vec<String>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInput("POVM has no elements".into()));
        }
        let d = elements[0].dim();
        if let Some(bad) = elements.iter().find(|e| e.dim() != d) {
            return Err(Error::WrongDimension { expected: d, found: bad.dim() });
        }
        if let Some(l) = &labels {
            if l.len() != elements.len() {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {} elements",
                    l.len(),
                    elements.len()
                )));
            }
        }
        let p = Povm { elements, labels };
        validate_povm(&p)?;
        Ok(p)
    }

    pub(crate) fn new_unchecked(elements: Vec<HermitianMatrix>, labels: Option<Vec<String>>) -> Self {
        Povm { elements, labels }
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// The trivial one-outcome measurement `{I}`.
    pub fn trivial(d: usize) -> Self {
        Povm { elements: vec![HermitianMatrix::identity(d)], labels: None }
    }

    /// Largest entry-wise deviation from `other`, or `None` if the shapes differ.
    pub fn max_abs_diff(&self, other: &Povm) -> Option<f64> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return None;
        }
        Some(
            self.elements
                .iter()
                .zip(&other.elements)
                .map(|(a, b)| a.max_abs_diff(b))
                .fold(0.0, f64::max),
        )
    }
}

/// Checks positivity of every element and that the elements resolve the identity.
pub fn validate_povm(p: &Povm) -> Result<()> {
    let d = p.dim();
    for (index, e) in p.elements.iter().enumerate() {
        let min = e.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NonPsdElement { index, min_eigenvalue: min });
        }
    }
    let mut sum = CMat::zeros(d, d);
    for e in &p.elements {
        sum += e.as_matrix();
    }
    let deviation = linalg::max_abs_c(&(sum - linalg::identity_c(d)));
    if deviation > PSD_TOL {
        return Err(Error::NotResolutionOfIdentity { deviation });
    }
    Ok(())
}

/// Projective measurement onto the ±1 eigenvectors of `σ_k`, `+1` first.
pub fn pauli_pvm(k: usize) -> Result<Povm> {
    let (plus, minus): (Vec<Complex64>, Vec<Complex64>) = match k {
        1 => (
            vec![FRAC_1_SQRT_2.into(), FRAC_1_SQRT_2.into()],
            vec![FRAC_1_SQRT_2.into(), (-FRAC_1_SQRT_2).into()],
        ),
        2 => (
            vec![FRAC_1_SQRT_2.into(), Complex64::new(0.0, FRAC_1_SQRT_2)],
            vec![FRAC_1_SQRT_2.into(), Complex64::new(0.0, -FRAC_1_SQRT_2)],
        ),
        3 => (vec![1.0.into(), 0.0.into()], vec![0.0.into(), 1.0.into()]),
        _ => return Err(Error::InvalidInput(format!("Pauli axis {k} not in 1..=3"))),
    };
    let labels = vec![format!("sigma{k}+"), format!("sigma{k}-")];
    Ok(Povm::new_unchecked(
        vec![
            HermitianMatrix::projector(&DVector::from_vec(plus)),
            HermitianMatrix::projector(&DVector::from_vec(minus)),
        ],
        Some(labels),
    ))
}

/// Outcome-concatenating convex mixture `λΠ ∪ (1−λ)Π'`.
pub fn mix_povms(p1: &Povm, p2: &Povm, lambda: f64) -> Result<Povm> {
    if p1.dim() != p2.dim() {
        return Err(Error::WrongDimension { expected: p1.dim(), found: p2.dim() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("mixing weight {lambda} not in [0, 1]")));
    }
    let elements = p1
        .elements
        .iter()
        .map(|e| e.scaled(lambda))
        .chain(p2.elements.iter().map(|e| e.scaled(1.0 - lambda)))
        .collect();
    let labels = match (&p1.labels, &p2.labels) {
        (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).cloned().collect()),
        _ => None,
    };
    let out = Povm::new_unchecked(elements, labels);
    validate_povm(&out)?;
    Ok(out)
}

/// Sums mutually proportional elements and drops elements of trace below `tol`.
///
/// Two elements are proportional when their trace-normalised forms agree
/// entry-wise within `tol`. The merged element sits at the position of the
/// first member of its group.
pub fn merge_proportional(p: &Povm, tol: f64) -> Povm {
    let mut groups: Vec<(CMat, CMat, Option<String>)> = Vec::new();
    for (idx, e) in p.elements.iter().enumerate() {
        let tr = e.trace();
        if tr < tol {
            continue;
        }
        let normalized = e.as_matrix().unscale(tr);
        let label = p.labels.as_ref().map(|l| l[idx].clone());
        match groups
            .iter_mut()
            .find(|(rep, _, _)| linalg::max_abs_c(&(rep - &normalized)) < tol)
        {
            Some(group) => group.1 += e.as_matrix(),
            None => groups.push((normalized, e.as_matrix().clone(), label)),
        }
    }
    let has_labels = p.labels.is_some();
    let (elements, labels): (Vec<_>, Vec<_>) = groups
        .into_iter()
        .map(|(_, sum, label)| (HermitianMatrix::hermitize(sum), label.unwrap_or_default()))
        .unzip();
    Povm::new_unchecked(elements, has_labels.then_some(labels))
}

/// A smooth family `θ ↦ ρ_θ` with analytic parameter derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub enum ParametricModel {
    /// Full Bloch-ball qubit, `ρ = (I + θ·σ)/2`.
    Bloch3,
    /// Bloch model restricted to the listed axes (1-based, ascending); the
    /// other coordinates are fixed at zero.
    BlochSub { axes: Vec<usize> },
    /// `ρ = ½[[1, θ₂e^{−iθ₁}], [θ₂e^{iθ₁}, 1]]`.
    PhaseAmplitude,
    /// `ρ = A₀ + Σ θ_i G_i` with traceless Hermitian generators.
    Affine { a0: HermitianMatrix, generators: Vec<HermitianMatrix> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelJson {
    Bloch3,
    BlochSub { axes: Vec<usize> },
    PhaseAmplitude,
    Affine { a0: HermitianMatrix, generators: Vec<HermitianMatrix> },
}

impl From<ParametricModel> for ModelJson {
    fn from(m: ParametricModel) -> Self {
        match m {
            ParametricModel::Bloch3 => ModelJson::Bloch3,
            ParametricModel::BlochSub { axes } => ModelJson::BlochSub { axes },
            ParametricModel::PhaseAmplitude => ModelJson::PhaseAmplitude,
            ParametricModel::Affine { a0, generators } => ModelJson::Affine { a0, generators },
        }
    }
}

impl TryFrom<ModelJson> for ParametricModel {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        match j {
            ModelJson::Bloch3 => Ok(ParametricModel::Bloch3),
            ModelJson::BlochSub { axes } => ParametricModel::bloch_sub(&axes),
            ModelJson::PhaseAmplitude => Ok(ParametricModel::PhaseAmplitude),
            ModelJson::Affine { a0, generators } => ParametricModel::affine(a0, generators),
        }
    }
}

impl ParametricModel {
    pub fn bloch_sub(axes: &[usize]) -> Result<Self> {
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.is_empty() || axes.iter().any(|&a| !(1..=3).contains(&a)) {
            return Err(Error::InvalidInput(format!("Bloch axes {axes:?} must be a non-empty subset of 1..=3")));
        }
        Ok(ParametricModel::BlochSub { axes })
    }

    pub fn affine(a0: HermitianMatrix, generators: Vec<HermitianMatrix>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidInput("affine model needs at least one generator".into()));
        }
        if (a0.trace() - 1.0).abs() > PSD_TOL {
            return Err(Error::InvalidInput("affine offset must have unit trace".into()));
        }
        for g in &generators {
            if g.dim() != a0.dim() {
                return Err(Error::WrongDimension { expected: a0.dim(), found: g.dim() });
            }
            if g.trace().abs() > PSD_TOL {
                return Err(Error::InvalidInput("affine generators must be traceless".into()));
            }
        }
        Ok(ParametricModel::Affine { a0, generators })
    }

    pub fn n_params(&self) -> usize {
        match self {
            ParametricModel::Bloch3 => 3,
            ParametricModel::BlochSub { axes } => axes.len(),
            ParametricModel::PhaseAmplitude => 2,
            ParametricModel::Affine { generators, .. } => generators.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParametricModel::Affine { a0, .. } => a0.dim(),
            _ => 2,
        }
    }

    pub fn is_qubit(&self) -> bool {
        self.dim() == 2
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::WrongDimension { expected: self.n_params(), found: theta.len() });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfDomain("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Bloch coordinates of the Bloch-type models.
    fn bloch_coords(&self, theta: &[f64]) -> Option<[f64; 3]> {
        match self {
            ParametricModel::Bloch3 => Some([theta[0], theta[1], theta[2]]),
            ParametricModel::BlochSub { axes } => {
                let mut s = [0.0; 3];
                for (&a, &t) in axes.iter().zip(theta) {
                    s[a - 1] = t;
                }
                Some(s)
            }
            ParametricModel::PhaseAmplitude => {
                Some([theta[1] * theta[0].cos(), theta[1] * theta[0].sin(), 0.0])
            }
            ParametricModel::Affine { .. } => None,
        }
    }

    /// Checks that `θ` lies in the (open) parameter domain.
    pub fn check_domain(&self, theta: &[f64]) -> Result<()> {
        self.check_len(theta)?;
        match self {
            ParametricModel::Bloch3 | ParametricModel::BlochSub { .. } => {
                let r2: f64 = theta.iter().map(|t| t * t).sum();
                if r2 >= 1.0 {
                    return Err(Error::OutOfDomain(format!("Bloch norm² {r2} must be < 1")));
                }
            }
            ParametricModel::PhaseAmplitude => {
                if !(theta[1] > 0.0 && theta[1] < 1.0) {
                    return Err(Error::OutOfDomain(format!("amplitude {} not in (0, 1)", theta[1])));
                }
            }
            ParametricModel::Affine { .. } => {
                let m = self.raw_state(theta);
                let min = m.min_eigenvalue();
                if min < -PSD_TOL {
                    return Err(Error::OutOfDomain(format!("affine state not PSD (min eigenvalue {min:e})")));
                }
            }
        }
        Ok(())
    }

    fn raw_state(&self, theta: &[f64]) -> HermitianMatrix {
        match self {
            ParametricModel::Affine { a0, generators } => {
                let mut m = a0.as_matrix().clone();
                for (g, &t) in generators.iter().zip(theta) {
                    m += g.as_matrix().scale(t);
                }
                HermitianMatrix::hermitize(m)
            }
            _ => {
                let s = self.bloch_coords(theta).expect("Bloch-type model");
                let mut m = CMat::identity(2, 2);
                for (k, &sk) in s.iter().enumerate() {
                    m += pauli(k + 1).scale(sk);
                }
                HermitianMatrix::hermitize(m.scale(0.5))
            }
        }
    }

    /// The state `ρ_θ`.
    pub fn state_at(&self, theta: &[f64]) -> Result<DensityMatrix> {
        self.check_domain(theta)?;
        DensityMatrix::new(self.raw_state(theta))
    }

    /// Analytic partial derivative `∂ρ_θ/∂θ_i` (0-based `i`).
    pub fn state_derivative(&self, theta: &[f64], i: usize) -> Result<HermitianMatrix> {
        self.check_domain(theta)?;
        if i >= self.n_params() {
            return Err(Error::InvalidInput(format!("parameter index {i} out of range")));
        }
        let m = match self {
            ParametricModel::Bloch3 => pauli(i + 1).scale(0.5),
            ParametricModel::BlochSub { axes } => pauli(axes[i]).scale(0.5),
            ParametricModel::PhaseAmplitude => {
                let (phase, amp) = (theta[0], theta[1]);
                let e = Complex64::from_polar(1.0, phase);
                let (upper, lower) = if i == 0 {
                    (Complex64::new(0.0, -amp) * e.conj(), Complex64::new(0.0, amp) * e)
                } else {
                    (e.conj(), e)
                };
                CMat::from_row_slice(2, 2, &[0.0.into(), upper * 0.5, lower * 0.5, 0.0.into()])
            }
            ParametricModel::Affine { generators, .. } => generators[i].as_matrix().clone(),
        };
        Ok(HermitianMatrix::hermitize(m))
    }

    /// All partial derivatives at `θ`.
    pub fn state_derivatives(&self, theta: &[f64]) -> Result<Vec<HermitianMatrix>> {
        (0..self.n_params()).map(|i| self.state_derivative(theta, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> HermitianMatrix {
        HermitianMatrix::from_real_rows(2, &[a, 0.0, 0.0, b]).unwrap()
    }

    #[test]
    fn validate_accepts_and_rejects() {
        assert!(Povm::new(vec![diag(1.0, 0.0), diag(0.0, 1.0)]).is_ok());
        let bad = Povm::new(vec![diag(1.0, 0.0), diag(1.0, 0.0)]);
        assert!(matches!(bad, Err(Error::NotResolutionOfIdentity { .. })));
        let with_zero = Povm::new(vec![diag(0.5, 0.5), diag(0.5, 0.5), diag(0.0, 0.0)]);
        assert!(with_zero.is_ok());
        let neg = Povm::new(vec![diag(1.5, 0.5), diag(-0.5, 0.5)]);
        assert!(matches!(neg, Err(Error::NonPsdElement { index: 1, .. })));
    }

    #[test]
    fn bloch_states() {
        let m = ParametricModel::Bloch3;
        let rho = m.state_at(&[0.0, 0.0, 0.0]).unwrap();
        assert!(rho.matrix().max_abs_diff(&diag(0.5, 0.5)) < 1e-15);
        let rho = m.state_at(&[0.0, 0.0, 0.5]).unwrap();
        assert!(rho.matrix().max_abs_diff(&diag(0.75, 0.25)) < 1e-15);
        assert!(matches!(m.state_at(&[0.6, 0.6, 0.6]), Err(Error::OutOfDomain(_))));
        assert!(matches!(m.state_at(&[0.0, 0.0]), Err(Error::WrongDimension { .. })));
    }

    #[test]
    fn phase_amplitude_state() {
        let m = ParametricModel::PhaseAmplitude;
        let rho = m.state_at(&[std::f64::consts::FRAC_PI_2, 0.5]).unwrap();
        let i = Complex64::i();
        let expected = CMat::from_row_slice(2, 2, &[1.0.into(), -0.5 * i, 0.5 * i, 1.0.into()]).scale(0.5);
        assert!(linalg::max_abs_c(&(rho.matrix().as_matrix() - expected)) < 1e-15);
        assert!(m.state_at(&[0.0, 1.0]).is_err());
        assert!(m.state_at(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn derivatives() {
        let d = ParametricModel::Bloch3.state_derivative(&[0.1, 0.2, 0.3], 2).unwrap();
        assert!(d.max_abs_diff(&diag(0.5, -0.5)) < 1e-15);
        let d = ParametricModel::PhaseAmplitude.state_derivative(&[0.0, 0.5], 0).unwrap();
        let i = Complex64::i();
        let expected = CMat::from_row_slice(2, 2, &[0.0.into(), -0.5 * i, 0.5 * i, 0.0.into()]).scale(0.5);
        assert!(linalg::max_abs_c(&(d.as_matrix() - expected)) < 1e-15);
        assert!(ParametricModel::Bloch3.state_derivative(&[0.0; 3], 3).is_err());
    }

    #[test]
    fn affine_model() {
        let g = HermitianMatrix::new(pauli(1).scale(0.5)).unwrap();
        let m = ParametricModel::affine(diag(0.5, 0.5), vec![g.clone()]).unwrap();
        assert_eq!(m.state_derivative(&[0.3], 0).unwrap(), g);
        assert!(m.state_at(&[1.5]).is_err());
        assert!(ParametricModel::affine(diag(0.5, 0.5), vec![diag(1.0, 0.0)]).is_err());
    }

    #[test]
    fn bloch_vectors() {
        let s = bloch_vector(&ParametricModel::Bloch3.state_at(&[0.0, 0.0, 0.5]).unwrap()).unwrap();
        assert!((s[2] - 0.5).abs() < 1e-15 && s[0].abs() < 1e-15);
        let rho = DensityMatrix::new(HermitianMatrix::from_real_rows(2, &[0.5, 0.25, 0.25, 0.5]).unwrap()).unwrap();
        let s = bloch_vector(&rho).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && s[1].abs() < 1e-15 && s[2].abs() < 1e-15);
    }

    #[test]
    fn pauli_measurements() {
        let z = pauli_pvm(3).unwrap();
        assert!(z.elements()[0].max_abs_diff(&diag(1.0, 0.0)) < 1e-15);
        let x = pauli_pvm(1).unwrap();
        let xp = HermitianMatrix::from_real_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(x.elements()[0].max_abs_diff(&xp) < 1e-15);
        let y = pauli_pvm(2).unwrap();
        let i = Complex64::i();
        let yp = CMat::from_row_slice(2, 2, &[1.0.into(), -i, i, 1.0.into()]).scale(0.5);
        assert!(linalg::max_abs_c(&(y.elements()[0].as_matrix() - yp)) < 1e-15);
        assert!(pauli_pvm(4).is_err());
    }

    #[test]
    fn mixing_and_merging() {
        let z = pauli_pvm(3).unwrap();
        let x = pauli_pvm(1).unwrap();
        let half = mix_povms(&z, &x, 0.5).unwrap();
        assert_eq!(half.len(), 4);
        assert!(half.elements().iter().all(|e| (e.trace() - 0.5).abs() < 1e-15));
        let one = mix_povms(&z, &x, 1.0).unwrap();
        assert_eq!(one.len(), 4);
        assert!(one.elements()[3].trace().abs() < 1e-15);
        let merged = merge_proportional(&one, 1e-9);
        assert_eq!(merged.max_abs_diff(&z), Some(0.0));
        let zz = merge_proportional(&mix_povms(&z, &z, 0.5).unwrap(), 1e-9);
        assert!(zz.max_abs_diff(&z).unwrap() < 1e-15);
        let halves = Povm::new(vec![diag(0.5, 0.0), diag(0.5, 0.0), diag(0.0, 1.0)]).unwrap();
        let merged = merge_proportional(&halves, 1e-9);
        assert_eq!(merged.len(), 2);
        assert!(merged.elements()[0].max_abs_diff(&diag(1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let p = pauli_pvm(2).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: Povm = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let m: ParametricModel = serde_json::from_str(r#"{"variant":"bloch_sub","axes":[3,1]}"#).unwrap();
        assert_eq!(m, ParametricModel::BlochSub { axes: vec![1, 3] });
        assert_eq!(serde_json::to_string(&ParametricModel::Bloch3).unwrap(), r#"{"variant":"bloch3"}"#);
        let bad = r#"{"elements":[{"dim":2,"re":[[1,0],[0,0]],"im":[[0,0],[0,0]]}]}"#;
        assert!(serde_json::from_str::<Povm>(bad).is_err());
    }
}
