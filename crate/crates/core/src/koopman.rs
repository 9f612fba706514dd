//! Least-squares (EDMD) Koopman approximations and their spectra.
//!
//! Convention: `K` advances feature vectors, `Ψ(x_{k+1}) ≈ K Ψ(x_k)`. An
//! eigenfunction `φ(x) = wᵀ Ψ(x)` therefore comes from a *left* eigenvector
//! `wᵀ K = λ wᵀ`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::{lift, Dictionary, DictionarySpec};
use crate::dynamics::{SnapshotPairs, State};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_RANK_TOL: f64 = 1e-12;
pub const DEFAULT_LABEL: &str = "base";

/// Where an operator's matrix came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Fitted,
    /// Conjugated from a fitted operator (same dictionary).
    Transported {
        base_label: String,
        element: String,
        representation_residual: f64,
    },
    /// Same matrix, dictionary replaced by `g ⋆ Ψ`.
    TransformedDictionary { base_label: String, element: String },
}

/// Finite-dimensional Koopman approximation on one invariant set.
#[derive(Clone, Debug)]
pub struct KoopmanApprox {
    matrix: DMatrix<f64>,
    dictionary: Dictionary,
    set_label: String,
    fit_residual: f64,
    rank_used: usize,
    provenance: Provenance,
}

impl KoopmanApprox {
    /// Assembles an operator from parts, checking the square-matrix invariant.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        dictionary: Dictionary,
        set_label: impl Into<String>,
        fit_residual: f64,
        rank_used: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let k = dictionary.size();
        if matrix.shape() != (k, k) {
            return Err(Error::input(format!(
                "operator is {:?} but dictionary has {k} observables",
                matrix.shape()
            )));
        }
        if !(fit_residual >= 0.0) {
            return Err(Error::input("fit residual must be nonnegative"));
        }
        if rank_used > k {
            return Err(Error::input("rank_used exceeds dictionary size"));
        }
        Ok(Self {
            matrix,
            dictionary,
            set_label: set_label.into(),
            fit_residual,
            rank_used,
            provenance,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn set_label(&self) -> &str {
        &self.set_label
    }

    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    pub fn rank_used(&self) -> usize {
        self.rank_used
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.set_label = label.into();
        self
    }

    pub(crate) fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub(crate) fn with_matrix(mut self, matrix: DMatrix<f64>) -> Self {
        self.matrix = matrix;
        self
    }

    pub(crate) fn with_dictionary(mut self, dictionary: Dictionary) -> Self {
        self.dictionary = dictionary;
        self
    }
}

/// `K = Yf Yp†`, the minimum-norm minimizer of `‖K Yp − Yf‖_F`.
pub fn fit_edmd(
    dictionary: &Dictionary,
    yp: &DMatrix<f64>,
    yf: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<KoopmanApprox> {
    if yp.shape() != yf.shape() {
        return Err(Error::input(format!(
            "Yp is {:?} but Yf is {:?}",
            yp.shape(),
            yf.shape()
        )));
    }
    if yp.ncols() == 0 {
        return Err(Error::input("need at least one snapshot pair"));
    }
    if yp.nrows() != dictionary.size() {
        return Err(Error::input(format!(
            "lifted data has {} rows but dictionary has {} observables",
            yp.nrows(),
            dictionary.size()
        )));
    }
    if yp.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("Yp is identically zero".into()));
    }
    let pinv = linalg::pseudo_inverse(yp, rank_tol)?;
    let k = yf * &pinv.matrix;
    let defect = (&k * yp - yf).norm();
    let scale = yf.norm();
    let fit_residual = if scale > 0.0 { defect / scale } else { defect };
    KoopmanApprox::from_parts(k, dictionary.clone(), DEFAULT_LABEL, fit_residual, pinv.rank, Provenance::Fitted)
}

/// Lifts snapshot pairs and fits, labeling the result.
pub fn fit_pairs(
    dictionary: &Dictionary,
    pairs: &SnapshotPairs,
    rank_tol: f64,
    label: &str,
) -> Result<KoopmanApprox> {
    let (yp, yf) = lift(dictionary, pairs)?;
    Ok(fit_edmd(dictionary, &yp, &yf, rank_tol)?.with_label(label))
}

/// `K^s ψ` for `s = 0..=steps`.
pub fn iterate(matrix: &DMatrix<f64>, psi0: DVector<f64>, steps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(psi0);
    for _ in 0..steps {
        let next = matrix * out.last().expect("non-empty");
        out.push(next);
    }
    out
}

/// `Ψ(x0), KΨ(x0), …, K^steps Ψ(x0)`.
pub fn predict(op: &KoopmanApprox, x0: &State, steps: usize) -> Result<Vec<DVector<f64>>> {
    let psi0 = op.dictionary.evaluate(x0)?;
    Ok(iterate(&op.matrix, psi0, steps))
}

/// Eigenvalues and left eigenvectors of a Koopman matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
    coefficients: Vec<DVector<Complex64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    pub re: f64,
    pub im: f64,
    pub w_re: Vec<f64>,
    pub w_im: Vec<f64>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Left eigenvector `w` for each eigenvalue (`wᵀK = λwᵀ`).
    pub fn coefficients(&self) -> &[DVector<Complex64>] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    pub fn records(&self) -> Vec<EigenRecord> {
        self.eigenvalues
            .iter()
            .zip(&self.coefficients)
            .map(|(l, w)| EigenRecord {
                re: l.re,
                im: l.im,
                w_re: w.iter().map(|c| c.re).collect(),
                w_im: w.iter().map(|c| c.im).collect(),
            })
            .collect()
    }

    pub fn from_records(records: &[EigenRecord]) -> Result<Self> {
        let mut eigenvalues = Vec::with_capacity(records.len());
        let mut coefficients = Vec::with_capacity(records.len());
        for r in records {
            if r.w_re.len() != r.w_im.len() {
                return Err(Error::input("eigenvector real/imaginary parts differ in length"));
            }
            eigenvalues.push(Complex64::new(r.re, r.im));
            coefficients.push(DVector::from_iterator(
                r.w_re.len(),
                r.w_re.iter().zip(&r.w_im).map(|(a, b)| Complex64::new(*a, *b)),
            ));
        }
        Ok(Self {
            eigenvalues,
            coefficients,
        })
    }

    /// Largest `‖wᵀK − λwᵀ‖` over all pairs.
    pub fn max_defect(&self, k: &DMatrix<f64>) -> f64 {
        let kc = k.map(|v| Complex64::new(v, 0.0));
        self.eigenvalues
            .iter()
            .zip(&self.coefficients)
            .map(|(l, w)| (kc.transpose() * w - w * *l).norm())
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues ordered by descending modulus, then descending real part,
/// then ascending imaginary part.
pub fn eigenvalues(k: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !k.is_square() {
        return Err(Error::input("eigenvalues need a square matrix"));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    if k.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(k.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let mut vals: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    let scale = vals.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let tie = 1e-12 * scale;
    vals.sort_by(|a, b| order_eigenvalues(a, b, tie));
    Ok(vals)
}

fn order_eigenvalues(a: &Complex64, b: &Complex64, tie: f64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > tie {
        return mb.total_cmp(&ma);
    }
    if (a.re - b.re).abs() > tie {
        return b.re.total_cmp(&a.re);
    }
    a.im.total_cmp(&b.im)
}

/// Dense eigendecomposition of the operator's matrix.
pub fn spectrum(op: &KoopmanApprox) -> Result<Spectrum> {
    spectrum_of(&op.matrix)
}

pub fn spectrum_of(k: &DMatrix<f64>) -> Result<Spectrum> {
    let eigenvalues = eigenvalues(k)?;
    let n = k.nrows();
    let scale = k.norm().max(1.0);
    let cluster_tol = 1e-9 * scale;
    let kt = k.transpose().map(|v| Complex64::new(v, 0.0));

    let mut coefficients = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eigenvalues[end] - eigenvalues[start]).norm() <= cluster_tol {
            end += 1;
        }
        let m = end - start;
        let mean = eigenvalues[start..end].iter().sum::<Complex64>() / m as f64;
        let shifted = &kt - DMatrix::<Complex64>::identity(n, n) * mean;
        let svd = SVD::try_new(shifted, false, true, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("eigenvector SVD did not converge".into()))?;
        let v_t = svd.v_t.as_ref().expect("requested V^H");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &idx in order.iter().take(m) {
            let w = v_t.row(idx).adjoint();
            coefficients.push(normalize_phase(w));
        }
        start = end;
    }
    Ok(Spectrum {
        eigenvalues,
        coefficients,
    })
}

/// Unit 2-norm with the first significant entry real and positive.
fn normalize_phase(mut w: DVector<Complex64>) -> DVector<Complex64> {
    let norm = w.norm();
    if norm > 0.0 {
        w /= Complex64::new(norm, 0.0);
    }
    if let Some(lead) = w.iter().find(|c| c.norm() > 1e-10).copied() {
        let phase = lead.conj() / lead.norm();
        w *= phase;
    }
    w
}

/// `φ(x) = wᵀ Ψ(x)` for the eigenfunction at `index`.
pub fn eigenfunction_eval(spec: &Spectrum, index: usize, dict: &Dictionary, x: &State) -> Result<Complex64> {
    let w = spec.coefficients.get(index).ok_or_else(|| {
        Error::input(format!("eigenfunction index {index} out of range (K = {})", spec.len()))
    })?;
    if w.len() != dict.size() {
        return Err(Error::input("spectrum and dictionary sizes differ"));
    }
    let psi = dict.evaluate(x)?;
    Ok(w.iter().zip(psi.iter()).map(|(c, p)| c * p).sum())
}

/// Operator interchange form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorFile {
    pub set_label: String,
    pub dim: usize,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub dictionary: DictionarySpec,
    pub fit_residual: f64,
    pub rank_used: usize,
    #[serde(default = "fitted")]
    pub provenance: Provenance,
}

fn fitted() -> Provenance {
    Provenance::Fitted
}

impl OperatorFile {
    pub fn from_operator(op: &KoopmanApprox) -> Result<Self> {
        let dictionary = op.dictionary.spec().ok_or_else(|| {
            Error::config("operator dictionary has no serializable form (transformed or custom)")
        })?;
        Ok(Self {
            set_label: op.set_label.clone(),
            dim: op.dictionary.dim(),
            k: crate::io::matrix_rows(&op.matrix),
            dictionary,
            fit_residual: op.fit_residual,
            rank_used: op.rank_used,
            provenance: op.provenance.clone(),
        })
    }

    pub fn into_operator(self) -> Result<KoopmanApprox> {
        let dictionary = self.dictionary.build(self.dim)?;
        let matrix = crate::io::matrix_from_rows(&self.k)?;
        KoopmanApprox::from_parts(
            matrix,
            dictionary,
            self.set_label,
            self.fit_residual,
            self.rank_used,
            self.provenance,
        )
    }
}
