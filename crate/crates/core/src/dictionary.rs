//! Observable dictionaries `Ψ` and the feature-space representation of
//! group elements.
//!
//! The representation `R(g)` of a state-space element `γ_g` is defined by
//! `Ψ(γ_g x) = R(g) Ψ(x)`. It exists only when the span of the dictionary is
//! invariant under the group action; otherwise construction fails with
//! [`Error::DictionaryNotClosed`].

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SnapshotPairs, State};
use crate::error::{Error, Result};
use crate::groups::{act_on_function, GroupElement, Observable};
use crate::linalg;

pub const DEFAULT_CLOSURE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DictionaryKind {
    Identity,
    Monomial { max_degree: u32, include_constant: bool },
    /// Explicit list of monomial exponents.
    Polynomial,
    Custom,
}

#[derive(Clone)]
enum Terms {
    Exponents(Vec<Vec<u32>>),
    Observables(Vec<Observable>),
}

/// An ordered list of observables `ψ_1 … ψ_K` on `R^dim`.
#[derive(Clone)]
pub struct Dictionary {
    dim: usize,
    kind: DictionaryKind,
    terms: Terms,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("size", &self.size())
            .finish()
    }
}

/// Multi-indices of total degree `degree` in `dim` variables, in
/// lexicographically descending order (`x² , xy, y²` for two variables).
fn exponents_of_degree(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    if dim == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in exponents_of_degree(dim - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl Dictionary {
    /// `Ψ(x) = x`.
    pub fn identity(dim: usize) -> Self {
        let exps = (0..dim)
            .map(|i| (0..dim).map(|j| u32::from(i == j)).collect())
            .collect();
        Self {
            dim,
            kind: DictionaryKind::Identity,
            terms: Terms::Exponents(exps),
        }
    }

    /// All monomials of degree 1..=max_degree (0..=max_degree with the
    /// constant), graded, lexicographic within each degree.
    pub fn monomial(dim: usize, max_degree: u32, include_constant: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dictionary dimension must be positive"));
        }
        if max_degree == 0 {
            return Err(Error::config("monomial max_degree must be at least 1"));
        }
        let start = if include_constant { 0 } else { 1 };
        let exps = (start..=max_degree)
            .flat_map(|d| exponents_of_degree(dim, d))
            .collect();
        Ok(Self {
            dim,
            kind: DictionaryKind::Monomial {
                max_degree,
                include_constant,
            },
            terms: Terms::Exponents(exps),
        })
    }

    /// Monomials given by an explicit exponent list, kept in the given order.
    pub fn polynomial(dim: usize, exponents: Vec<Vec<u32>>) -> Result<Self> {
        if dim == 0 || exponents.is_empty() {
            return Err(Error::config("polynomial dictionary needs dim > 0 and at least one term"));
        }
        if exponents.iter().any(|e| e.len() != dim) {
            return Err(Error::config("every exponent vector must have length dim"));
        }
        for (i, e) in exponents.iter().enumerate() {
            if exponents[..i].contains(e) {
                return Err(Error::config(format!("duplicate monomial {e:?}")));
            }
        }
        Ok(Self {
            dim,
            kind: DictionaryKind::Polynomial,
            terms: Terms::Exponents(exponents),
        })
    }

    pub fn custom(dim: usize, observables: Vec<Observable>) -> Result<Self> {
        if observables.is_empty() {
            return Err(Error::config("custom dictionary needs at least one observable"));
        }
        if observables.iter().any(|o| o.dim() != dim) {
            return Err(Error::config("observable dimension does not match dictionary"));
        }
        Ok(Self {
            dim,
            kind: DictionaryKind::Custom,
            terms: Terms::Observables(observables),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DictionaryKind {
        &self.kind
    }

    pub fn size(&self) -> usize {
        match &self.terms {
            Terms::Exponents(e) => e.len(),
            Terms::Observables(o) => o.len(),
        }
    }

    /// Exponent multi-indices, for monomial-backed dictionaries.
    pub fn exponents(&self) -> Option<&[Vec<u32>]> {
        match &self.terms {
            Terms::Exponents(e) => Some(e),
            Terms::Observables(_) => None,
        }
    }

    /// The `k`-th observable as a standalone function.
    pub fn observable(&self, k: usize) -> Observable {
        match &self.terms {
            Terms::Exponents(e) => {
                let exp = e[k].clone();
                Observable::new(self.dim, move |x| monomial_value(&exp, x))
            }
            Terms::Observables(o) => o[k].clone(),
        }
    }

    fn check_dim(&self, x: &State) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "state has length {} but dictionary expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `Ψ(x)`.
    pub fn evaluate(&self, x: &State) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    fn evaluate_unchecked(&self, x: &State) -> DVector<f64> {
        match (&self.kind, &self.terms) {
            (DictionaryKind::Identity, _) => x.clone(),
            (_, Terms::Exponents(e)) => DVector::from_iterator(e.len(), e.iter().map(|a| monomial_value(a, x))),
            (_, Terms::Observables(o)) => DVector::from_iterator(
                o.len(),
                o.iter().map(|f| f.eval(x).expect("dimension checked")),
            ),
        }
    }

    /// Lifts every column of a `dim × M` matrix into feature space.
    pub fn evaluate_columns(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if states.nrows() != self.dim {
            return Err(Error::input(format!(
                "states have {} rows but dictionary expects {}",
                states.nrows(),
                self.dim
            )));
        }
        let mut out = DMatrix::zeros(self.size(), states.ncols());
        for (k, col) in states.column_iter().enumerate() {
            out.set_column(k, &self.evaluate_unchecked(&col.into_owned()));
        }
        Ok(out)
    }

    /// The dictionary `g ⋆ Ψ`, whose observables are `x ↦ ψ_k(γ_g⁻¹ x)`.
    pub fn transformed(&self, g: &GroupElement) -> Result<Dictionary> {
        if g.dim() != self.dim {
            return Err(Error::input("element dimension does not match dictionary"));
        }
        let obs = (0..self.size())
            .map(|k| act_on_function(g, &self.observable(k)))
            .collect();
        Dictionary::custom(self.dim, obs)
    }

    /// Serializable description, when the dictionary has one.
    pub fn spec(&self) -> Option<DictionarySpec> {
        match (&self.kind, &self.terms) {
            (DictionaryKind::Identity, _) => Some(DictionarySpec::Identity),
            (
                DictionaryKind::Monomial {
                    max_degree,
                    include_constant,
                },
                _,
            ) => Some(DictionarySpec::Monomial {
                max_degree: *max_degree,
                include_constant: *include_constant,
            }),
            (DictionaryKind::Polynomial, Terms::Exponents(e)) => {
                Some(DictionarySpec::Polynomial { exponents: e.clone() })
            }
            _ => None,
        }
    }
}

fn monomial_value(exponents: &[u32], x: &State) -> f64 {
    exponents
        .iter()
        .zip(x.iter())
        .filter(|(a, _)| **a > 0)
        .fold(1.0, |acc, (a, v)| acc * v.powi(*a as i32))
}

/// Config-file form of a dictionary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DictionarySpec {
    Identity,
    Monomial {
        max_degree: u32,
        #[serde(default = "default_true")]
        include_constant: bool,
    },
    Polynomial {
        exponents: Vec<Vec<u32>>,
    },
}

fn default_true() -> bool {
    true
}

impl DictionarySpec {
    pub fn build(&self, dim: usize) -> Result<Dictionary> {
        match self {
            DictionarySpec::Identity => Ok(Dictionary::identity(dim)),
            DictionarySpec::Monomial {
                max_degree,
                include_constant,
            } => Dictionary::monomial(dim, *max_degree, *include_constant),
            DictionarySpec::Polynomial { exponents } => Dictionary::polynomial(dim, exponents.clone()),
        }
    }
}

/// Lifted snapshot matrices `(Yp, Yf)`.
pub fn lift(dict: &Dictionary, pairs: &SnapshotPairs) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((dict.evaluate_columns(pairs.xp())?, dict.evaluate_columns(pairs.xf())?))
}

/// Matrix `R(g)` with `Ψ(γ_g x) = R(g) Ψ(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRepresentation {
    label: String,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    residual: f64,
    exact: bool,
}

impl FeatureRepresentation {
    fn new(label: String, matrix: DMatrix<f64>, residual: f64, exact: bool) -> Result<Self> {
        let inverse = if exact {
            // Signed permutations are orthogonal.
            matrix.transpose()
        } else {
            matrix
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical(format!("representation of '{label}' is singular")))?
        };
        Ok(Self {
            label,
            matrix,
            inverse,
            residual,
            exact,
        })
    }

    /// Wraps a known invertible matrix (residual 0).
    pub fn from_matrix(label: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let label = label.into();
        if !matrix.is_square() {
            return Err(Error::input("representation must be square"));
        }
        Self::new(label, matrix, 0.0, false)
    }

    pub fn identity(size: usize) -> Self {
        Self {
            label: crate::groups::IDENTITY_LABEL.into(),
            matrix: DMatrix::identity(size, size),
            inverse: DMatrix::identity(size, size),
            residual: 0.0,
            exact: true,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Representation of the inverse element.
    pub fn inverse(&self) -> Self {
        Self {
            label: format!("{}^-1", self.label),
            matrix: self.inverse.clone(),
            inverse: self.matrix.clone(),
            residual: self.residual,
            exact: self.exact,
        }
    }

    /// Representation of the product `self ⊙ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            label: format!("{}*{}", self.label, other.label),
            matrix: &self.matrix * &other.matrix,
            inverse: &other.inverse * &self.inverse,
            residual: self.residual + other.residual,
            exact: self.exact && other.exact,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RepresentationFile {
    label: String,
    #[serde(rename = "K")]
    size: usize,
    matrix: Vec<Vec<f64>>,
    residual: f64,
}

impl Serialize for FeatureRepresentation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RepresentationFile {
            label: self.label.clone(),
            size: self.size(),
            matrix: crate::io::matrix_rows(&self.matrix),
            residual: self.residual,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureRepresentation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = RepresentationFile::deserialize(d)?;
        let m = crate::io::matrix_from_rows(&f.matrix).map_err(D::Error::custom)?;
        if m.nrows() != f.size {
            return Err(D::Error::custom("representation size does not match K"));
        }
        let exact = m.iter().all(|v| *v == 0.0 || v.abs() == 1.0)
            && (m.transpose() * &m - DMatrix::<f64>::identity(f.size, f.size)).amax() == 0.0;
        FeatureRepresentation::new(f.label, m, f.residual, exact).map_err(D::Error::custom)
    }
}

/// `Some((perm, sign))` with `(γx)_i = sign_i · x_{perm_i}` when `γ` is a
/// signed permutation matrix.
fn signed_permutation(m: &DMatrix<f64>) -> Option<(Vec<usize>, Vec<f64>)> {
    let n = m.nrows();
    let mut perm = Vec::with_capacity(n);
    let mut sign = Vec::with_capacity(n);
    for i in 0..n {
        let nz: Vec<usize> = (0..n).filter(|&j| m[(i, j)] != 0.0).collect();
        if nz.len() != 1 || m[(i, nz[0])].abs() != 1.0 {
            return None;
        }
        perm.push(nz[0]);
        sign.push(m[(i, nz[0])]);
    }
    let mut seen = vec![false; n];
    for &p in &perm {
        if std::mem::replace(&mut seen[p], true) {
            return None;
        }
    }
    Some((perm, sign))
}

/// Exact `R` for a monomial-backed dictionary and a signed permutation.
///
/// With `y = γx`, `y_i = s_i x_{π(i)}`, the monomial `Π y_i^{a_i}` equals
/// `Π s_i^{a_i} · Π x_{π(i)}^{a_i}`, i.e. a signed copy of another monomial.
fn exact_monomial_representation(exps: &[Vec<u32>], perm: &[usize], sign: &[f64]) -> Option<DMatrix<f64>> {
    let k = exps.len();
    let mut r = DMatrix::zeros(k, k);
    for (row, a) in exps.iter().enumerate() {
        let mut b = vec![0u32; a.len()];
        let mut s = 1.0;
        for (i, &ai) in a.iter().enumerate() {
            b[perm[i]] += ai;
            if ai % 2 == 1 {
                s *= sign[i];
            }
        }
        let col = exps.iter().position(|e| *e == b)?;
        r[(row, col)] = s;
    }
    Some(r)
}

fn probe_cloud(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, count, |_, _| rng.random_range(-1.0..=1.0))
}

/// Feature-space representation of `g` on `dict`.
///
/// Identity dictionaries and signed-permutation elements on monomial
/// dictionaries take an exact path with zero residual. Otherwise `R` is
/// identified by least squares on `probe_count` seeded probes in
/// `[-1, 1]^dim` and validated on `10·K` fresh probes.
pub fn induced_representation(
    dict: &Dictionary,
    g: &GroupElement,
    probe_count: usize,
    tol: f64,
    seed: u64,
) -> Result<FeatureRepresentation> {
    if g.dim() != dict.dim() {
        return Err(Error::input(format!(
            "element '{}' acts on dimension {} but dictionary has dimension {}",
            g.label(),
            g.dim(),
            dict.dim()
        )));
    }
    let k = dict.size();
    if probe_count < k {
        return Err(Error::input(format!(
            "probe_count {probe_count} is smaller than dictionary size {k}"
        )));
    }
    let label = g.label().to_string();

    if *dict.kind() == DictionaryKind::Identity {
        let exact = signed_permutation(g.matrix()).is_some();
        return FeatureRepresentation::new(label, g.matrix().clone(), 0.0, exact);
    }
    if let (Some(exps), Some((perm, sign))) = (dict.exponents(), signed_permutation(g.matrix())) {
        if let Some(r) = exact_monomial_representation(exps, &perm, &sign) {
            return FeatureRepresentation::new(label, r, 0.0, true);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = probe_cloud(&mut rng, dict.dim(), probe_count);
    let a = dict.evaluate_columns(&probes)?;
    let b = dict.evaluate_columns(&(g.matrix() * &probes))?;
    let pinv = linalg::pseudo_inverse(&a, 1e-12)?;
    let r = &b * &pinv.matrix;

    let fresh = probe_cloud(&mut rng, dict.dim(), 10 * k);
    let a = dict.evaluate_columns(&fresh)?;
    let b = dict.evaluate_columns(&(g.matrix() * &fresh))?;
    let scale = b.amax().max(1.0);
    let residual = (&b - &r * &a).amax() / scale;
    if !(residual <= tol) {
        return Err(Error::DictionaryNotClosed { label, residual, tol });
    }
    FeatureRepresentation::new(label, r, residual, false)
}

/// [`induced_representation`] with `4·K` probes.
pub fn induced_representation_default(
    dict: &Dictionary,
    g: &GroupElement,
    seed: u64,
) -> Result<FeatureRepresentation> {
    induced_representation(dict, g, 4 * dict.size(), DEFAULT_CLOSURE_TOL, seed)
}
