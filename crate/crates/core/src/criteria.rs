//! Optimality criteria, efficiencies, sensitivity functions and the
//! generalized-inverse machinery used for singular designs.
//!
//! All criteria are antitone in the information matrix: more information
//! gives a smaller value. A, D, E and the power-mean family map singular
//! information to `+∞`; the c-criterion falls back to a generalized inverse
//! when the direction is estimable.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fisher::FisherMatrix;
use crate::linalg::{self, RMat};

/// Null-space tolerance used when a criterion has to decide estimability.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Eigenvalues at or below this are zeroed by the Moore–Penrose inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// `Tr{W J⁻¹}`; `None` means `W = I`.
    A(Option<RMat>),
    /// `Det{J⁻¹}`.
    D,
    /// `−log Det{J}`.
    LogD,
    /// `λ_max(J⁻¹)`.
    E,
    /// `cᵗ J⁻ c`.
    C(Vec<f64>),
    /// `((1/n) Tr{J^{−γ}})^{1/γ}`, `γ > 0`.
    Gamma(f64),
    /// `ν Ψ₁ + (1−ν) Ψ₂`.
    Compound(f64, Box<Criterion>, Box<Criterion>),
}

impl Criterion {
    pub fn a() -> Self {
        Criterion::A(None)
    }

    /// Weighted A-criterion; `w` must be symmetric positive definite.
    pub fn a_weighted(w: RMat) -> Result<Self> {
        let c = Criterion::A(Some(w));
        c.validate()?;
        Ok(c)
    }

    pub fn c(c: Vec<f64>) -> Result<Self> {
        let crit = Criterion::C(c);
        crit.validate()?;
        Ok(crit)
    }

    pub fn gamma(g: f64) -> Result<Self> {
        let crit = Criterion::Gamma(g);
        crit.validate()?;
        Ok(crit)
    }

    pub fn compound(nu: f64, first: Criterion, second: Criterion) -> Result<Self> {
        let crit = Criterion::Compound(nu, Box::new(first), Box::new(second));
        crit.validate()?;
        Ok(crit)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Criterion::A(Some(w)) => {
                if w.nrows() != w.ncols() || linalg::max_abs(&(w - w.transpose())) > 1e-10 {
                    return Err(Error::InvalidInput("A-weight must be symmetric".into()));
                }
                if linalg::sym_eigh(w).0[0] <= 0.0 {
                    return Err(Error::InvalidInput("A-weight must be positive definite".into()));
                }
            }
            Criterion::C(c) => {
                if c.is_empty() || c.iter().all(|x| *x == 0.0) || c.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput("c-vector must be finite and nonzero".into()));
                }
            }
            Criterion::Gamma(g) => {
                if !(g.is_finite() && *g > 0.0) {
                    return Err(Error::InvalidInput(format!("gamma exponent {g} must be > 0")));
                }
            }
            Criterion::Compound(nu, a, b) => {
                if !(0.0..=1.0).contains(nu) {
                    return Err(Error::InvalidInput(format!("compound weight {nu} not in [0, 1]")));
                }
                a.validate()?;
                b.validate()?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Parses the command-line syntax (`A`, `A:W.json`, `D`, `logD`, `E`,
    /// `c:1,0,0`, `gamma:0.5`, `compound:0.5,A,D`). A weight may also be
    /// given inline as a JSON nested array.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h.trim(), Some(r.trim())),
            None => (s, None),
        };
        let crit = match (head.to_ascii_lowercase().as_str(), rest) {
            ("a", None) => Criterion::A(None),
            ("a", Some(w)) => Criterion::A(Some(parse_weight(w)?)),
            ("d", None) => Criterion::D,
            ("logd", None) => Criterion::LogD,
            ("e", None) => Criterion::E,
            ("c", Some(v)) => Criterion::C(parse_reals(v)?),
            ("gamma", Some(g)) => Criterion::Gamma(
                g.parse().map_err(|_| Error::Parse(format!("bad gamma exponent '{g}'")))?,
            ),
            ("compound", Some(body)) => parse_compound(body)?,
            _ => return Err(Error::Parse(format!("unknown criterion '{s}'"))),
        };
        crit.validate()?;
        Ok(crit)
    }

    /// Short tag used in report headers.
    pub fn tag(&self) -> &'static str {
        match self {
            Criterion::A(_) => "A",
            Criterion::D => "D",
            Criterion::LogD => "logD",
            Criterion::E => "E",
            Criterion::C(_) => "c",
            Criterion::Gamma(_) => "gamma",
            Criterion::Compound(..) => "compound",
        }
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}'"))))
        .collect()
}

fn parse_weight(w: &str) -> Result<RMat> {
    let text = if w.starts_with('[') || w.starts_with('{') {
        w.to_string()
    } else {
        std::fs::read_to_string(Path::new(w))?
    };
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let rows: Vec<Vec<f64>> = if value.is_object() {
        serde_json::from_value::<FisherMatrix>(value).map(|f| {
            let m = f.into_inner();
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        })?
    } else {
        serde_json::from_value(value)?
    };
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse("weight matrix must be square".into()));
    }
    Ok(RMat::from_fn(n, n, |i, j| rows[i][j]))
}

fn parse_compound(body: &str) -> Result<Criterion> {
    let (nu, rest) = body
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("compound needs 'nu,first,second', got '{body}'")))?;
    let nu: f64 = nu.trim().parse().map_err(|_| Error::Parse(format!("bad compound weight '{nu}'")))?;
    // Sub-criteria may contain commas themselves; take the first split where both halves parse.
    for (idx, _) in rest.match_indices(',') {
        let (a, b) = (&rest[..idx], &rest[idx + 1..]);
        if let (Ok(first), Ok(second)) = (Criterion::parse(a), Criterion::parse(b)) {
            return Ok(Criterion::Compound(nu, Box::new(first), Box::new(second)));
        }
    }
    Err(Error::Parse(format!("cannot split compound criteria '{rest}'")))
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Criterion::parse(s)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::A(None) => write!(f, "A"),
            Criterion::A(Some(w)) => {
                let rows: Vec<Vec<f64>> = (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect();
                write!(f, "A:{}", serde_json::to_string(&rows).map_err(|_| fmt::Error)?)
            }
            Criterion::D => write!(f, "D"),
            Criterion::LogD => write!(f, "logD"),
            Criterion::E => write!(f, "E"),
            Criterion::C(c) => {
                let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                write!(f, "c:{}", parts.join(","))
            }
            Criterion::Gamma(g) => write!(f, "gamma:{g}"),
            Criterion::Compound(nu, a, b) => write!(f, "compound:{nu},{a},{b}"),
        }
    }
}

fn check_len(n: usize, got: usize) -> Result<()> {
    if n != got {
        return Err(Error::WrongDimension { expected: n, found: got });
    }
    Ok(())
}

/// Evaluates `Ψ(J)`, returning `+∞` for singular information where the
/// criterion needs a genuine inverse.
pub fn criterion_value(crit: &Criterion, j: &FisherMatrix) -> Result<f64> {
    let n = j.n();
    let (vals, vecs) = linalg::sym_eigh(j.as_matrix());
    let top = vals[n - 1];
    let singular = top <= 0.0 || vals[0] <= 1e-10 * top;
    match crit {
        Criterion::C(c) => {
            check_len(n, c.len())?;
            if singular {
                return generalized_inverse_quadratic(j, c);
            }
            let cv = vecs.transpose() * DVector::from_column_slice(c);
            Ok(cv.iter().zip(&vals).map(|(x, l)| x * x / l).sum())
        }
        Criterion::Compound(nu, a, b) => {
            let mut total = 0.0;
            if *nu > 0.0 {
                total += nu * criterion_value(a, j)?;
            }
            if *nu < 1.0 {
                total += (1.0 - nu) * criterion_value(b, j)?;
            }
            Ok(total)
        }
        _ if singular => {
            if let Criterion::A(Some(w)) = crit {
                check_len(n, w.nrows())?;
            }
            Ok(f64::INFINITY)
        }
        Criterion::A(None) => Ok(vals.iter().map(|l| 1.0 / l).sum()),
        Criterion::A(Some(w)) => {
            check_len(n, w.nrows())?;
            let inv = linalg::sym_inverse(j.as_matrix());
            Ok((w * inv).trace())
        }
        Criterion::D => Ok(vals.iter().map(|l| 1.0 / l).product()),
        Criterion::LogD => Ok(-vals.iter().map(|l| l.ln()).sum::<f64>()),
        Criterion::E => Ok(1.0 / vals[0]),
        Criterion::Gamma(g) => {
            // Factor out λ_max(J⁻¹) so large exponents neither overflow nor underflow.
            let lmin = vals[0];
            let mean = vals.iter().map(|l| (lmin / l).powf(*g)).sum::<f64>() / n as f64;
            Ok(mean.powf(1.0 / g) / lmin)
        }
    }
}

/// Ratio `optimal / value`, and `0` when the design is useless (`value = +∞`).
/// For `logD` the ratio is taken on the exponentiated scale, i.e. between
/// the underlying determinant values.
pub fn efficiency(crit: &Criterion, value: f64, optimal_value: f64) -> f64 {
    if value.is_infinite() {
        return 0.0;
    }
    let eta = match crit {
        Criterion::LogD => (optimal_value - value).exp(),
        _ if value == 0.0 => {
            if optimal_value == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        }
        _ => optimal_value / value,
    };
    if eta > 1.0 + 1e-9 {
        log::warn!("efficiency {eta} exceeds 1 for {crit}: reference value is not optimal");
    }
    eta
}

/// A sensitivity value paired with the threshold it is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub value: f64,
    pub threshold: f64,
}

impl Sensitivity {
    /// `(value − threshold) / threshold`.
    pub fn relative_excess(&self) -> f64 {
        (self.value - self.threshold) / self.threshold
    }
}

/// Sensitivity of the single design `J_e` at the design with information `J_ξ`.
///
/// A(W): `Tr{W J_ξ⁻¹ J_e J_ξ⁻¹}` against `Tr{W J_ξ⁻¹}`.
/// D / logD: `Tr{J_ξ⁻¹ J_e}` against `n`.
pub fn sensitivity(crit: &Criterion, j_e: &FisherMatrix, j_xi: &FisherMatrix) -> Result<Sensitivity> {
    let inv = j_xi.inverse().ok_or(Error::SingularInformation)?;
    check_len(j_xi.n(), j_e.n())?;
    sensitivity_with_inverse(crit, j_e.as_matrix(), &inv)
}

pub(crate) fn sensitivity_with_inverse(crit: &Criterion, j_e: &RMat, inv: &RMat) -> Result<Sensitivity> {
    let n = inv.nrows();
    match crit {
        Criterion::A(w) => {
            let wi = match w {
                Some(w) => {
                    check_len(n, w.nrows())?;
                    w * inv
                }
                None => inv.clone(),
            };
            Ok(Sensitivity { value: (&wi * j_e * inv).trace(), threshold: wi.trace() })
        }
        Criterion::D | Criterion::LogD => Ok(Sensitivity { value: (inv * j_e).trace(), threshold: n as f64 }),
        other => Err(Error::UnsupportedCriterion(format!("sensitivity for {other}"))),
    }
}

/// `Tr{(J^SLD)⁻¹ J}`, at most one for qubit models.
pub fn gill_massar_value(j: &FisherMatrix, j_sld: &FisherMatrix) -> Result<f64> {
    check_len(j_sld.n(), j.n())?;
    let inv = j_sld.inverse().ok_or(Error::SingularInformation)?;
    Ok((inv * j.as_matrix()).trace())
}

/// Whether `c` lies in the range of `J`: the component of `c` along
/// eigenvectors with eigenvalue below `tol` must be shorter than `tol·|c|`.
pub fn feasibility_contains(j: &FisherMatrix, c: &[f64], tol: f64) -> bool {
    if c.len() != j.n() {
        return false;
    }
    let (vals, vecs) = linalg::sym_eigh(j.as_matrix());
    let cv = DVector::from_column_slice(c);
    let null_sq: f64 = vals
        .iter()
        .enumerate()
        .filter(|(_, l)| **l < tol)
        .map(|(k, _)| vecs.column(k).dot(&cv).powi(2))
        .sum();
    null_sq.sqrt() < tol * cv.norm()
}

/// `cᵗ J⁺ c` with the Moore–Penrose inverse, without checking estimability.
pub fn moore_penrose_quadratic(j: &FisherMatrix, c: &[f64]) -> Result<f64> {
    check_len(j.n(), c.len())?;
    let cv = DVector::from_column_slice(c);
    let pinv = linalg::sym_pinv(j.as_matrix(), PINV_CUTOFF);
    Ok(cv.dot(&(pinv * &cv)))
}

/// `cᵗ J⁻ c` for an estimable direction; the value does not depend on which
/// generalized inverse is used.
pub fn generalized_inverse_quadratic(j: &FisherMatrix, c: &[f64]) -> Result<f64> {
    check_len(j.n(), c.len())?;
    if !feasibility_contains(j, c, FEASIBILITY_TOL) {
        return Err(Error::Infeasible);
    }
    moore_penrose_quadratic(j, c)
}

/// Loewner order check `J1 ⪰ J2` up to `tol`.
pub fn lowner_dominates(j1: &FisherMatrix, j2: &FisherMatrix, tol: f64) -> bool {
    if j1.n() != j2.n() {
        return false;
    }
    let diff = j1.as_matrix() - j2.as_matrix();
    linalg::sym_eigh(&diff).0[0] >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> FisherMatrix {
        FisherMatrix::from_diagonal(d).unwrap()
    }

    #[test]
    fn values_on_diagonal_matrices() {
        let j = diag(&[1.0, 1.0, 25.0 / 9.0]);
        assert!((criterion_value(&Criterion::a(), &j).unwrap() - 2.36).abs() < 1e-12);
        let jd = diag(&[1.0 / 3.0, 1.0 / 3.0, 25.0 / 27.0]);
        assert!((criterion_value(&Criterion::D, &jd).unwrap() - 9.72).abs() < 1e-12);
        assert!((criterion_value(&Criterion::E, &jd).unwrap() - 3.0).abs() < 1e-12);
        let g1 = criterion_value(&Criterion::Gamma(1.0), &j).unwrap();
        assert!((g1 * 3.0 - 2.36).abs() < 1e-12);
        let logd = criterion_value(&Criterion::LogD, &jd).unwrap();
        assert!((logd - 9.72f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_information() {
        let j = diag(&[1.0, 0.0]);
        for c in [Criterion::a(), Criterion::D, Criterion::E, Criterion::LogD, Criterion::Gamma(0.5)] {
            assert_eq!(criterion_value(&c, &j).unwrap(), f64::INFINITY);
        }
        assert!((criterion_value(&Criterion::C(vec![2.0, 0.0]), &j).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(criterion_value(&Criterion::C(vec![0.0, 1.0]), &j), Err(Error::Infeasible)));
    }

    #[test]
    fn compound_mixes() {
        let j = diag(&[2.0, 4.0]);
        let c = Criterion::compound(0.25, Criterion::a(), Criterion::E).unwrap();
        let expected = 0.25 * 0.75 + 0.75 * 0.5;
        assert!((criterion_value(&c, &j).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn efficiency_edges() {
        assert_eq!(efficiency(&Criterion::a(), 2.0, 2.0), 1.0);
        assert_eq!(efficiency(&Criterion::a(), f64::INFINITY, 2.0), 0.0);
        let r2: f64 = 0.64;
        let s = (1.0 - r2).sqrt();
        let eta = efficiency(&Criterion::a(), 3.0 * (3.0 - r2), (2.0 + s).powi(2));
        assert!((eta - 6.76 / 7.08).abs() < 1e-12);
        assert!((efficiency(&Criterion::LogD, 2.0f64.ln(), 1.0f64.ln()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_at_itself() {
        let j = FisherMatrix::new(RMat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let s = sensitivity(&Criterion::D, &j, &j).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12 && s.threshold == 2.0);
        let w = RMat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let s = sensitivity(&Criterion::a_weighted(w).unwrap(), &j, &j).unwrap();
        assert!((s.value - s.threshold).abs() < 1e-12);
        assert!(matches!(
            sensitivity(&Criterion::D, &j, &diag(&[1.0, 0.0])),
            Err(Error::SingularInformation)
        ));
        assert!(sensitivity(&Criterion::E, &j, &j).is_err());
    }

    #[test]
    fn gill_massar_basic() {
        let sld = diag(&[1.0, 2.0, 3.0]);
        let j = FisherMatrix::from_sym(sld.as_matrix().scale(1.0 / 3.0));
        assert!((gill_massar_value(&j, &sld).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(gill_massar_value(&FisherMatrix::zeros(3), &sld).unwrap(), 0.0);
    }

    #[test]
    fn feasibility_cone() {
        let t2: f64 = 0.5;
        let j = diag(&[t2 * t2, 0.0]);
        assert!(feasibility_contains(&j, &[1.0, 0.0], 1e-9));
        assert!(!feasibility_contains(&j, &[0.0, 1.0], 1e-9));
        assert!(feasibility_contains(&diag(&[1.0, 2.0]), &[0.3, -0.7], 1e-9));
        assert!((generalized_inverse_quadratic(&j, &[1.0, 0.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(generalized_inverse_quadratic(&j, &[0.0, 1.0]), Err(Error::Infeasible)));
        let id = diag(&[1.0, 1.0, 1.0]);
        assert!((generalized_inverse_quadratic(&id, &[0.0, 1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lowner() {
        let a = diag(&[1.0, 0.0, 0.0]);
        let b = diag(&[0.0, 0.0, 1.0]);
        assert!(lowner_dominates(&a, &a, 1e-12));
        assert!(!lowner_dominates(&a, &b, 1e-12));
        assert!(!lowner_dominates(&b, &a, 1e-12));
    }

    #[test]
    fn parse_and_display() {
        for s in ["A", "D", "logD", "E", "c:1,0,0", "gamma:0.5", "compound:0.5,A,D", "compound:0.3,c:1,0,E"] {
            let c = Criterion::parse(s).unwrap();
            assert_eq!(Criterion::parse(&c.to_string()).unwrap(), c, "{s}");
        }
        assert_eq!(Criterion::parse("compound:0.5,A,D").unwrap().to_string(), "compound:0.5,A,D");
        let w = Criterion::parse("A:[[1,0],[0,2]]").unwrap();
        assert!(matches!(w, Criterion::A(Some(_))));
        assert!(Criterion::parse("gamma:-1").is_err());
        assert!(Criterion::parse("c:0,0").is_err());
        assert!(Criterion::parse("A:[[1,0],[0,-2]]").is_err());
        assert!(Criterion::parse("Q").is_err());
    }
}
