//! Transport of local Koopman operators across symmetry-related invariant
//! sets, block-diagonal global assembly, and verification.
//!
//! If `Ψ(γx) = R Ψ(x)` and a local operator `K_i` satisfies
//! `Ψ(x_{k+1}) ≈ K_i Ψ(x_k)` on `M_i`, then on the image set `g·M_i` the same
//! dictionary evolves under `K_j = R K_i R⁻¹`. Alternatively the matrix can be
//! kept and the dictionary replaced by `g ⋆ Ψ`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, FeatureRepresentation};
use crate::dynamics::{State, SystemDef};
use crate::error::{Error, Result};
use crate::groups::{FiniteMatrixGroup, GroupElement};
use crate::koopman::{self, iterate, KoopmanApprox, OperatorFile, Provenance};
use crate::linalg;

/// Case I: `K_j = R K_i R⁻¹` with the dictionary unchanged.
pub fn transport_case1(
    k_i: &KoopmanApprox,
    rep: &FeatureRepresentation,
    target_label: &str,
) -> Result<KoopmanApprox> {
    if rep.size() != k_i.size() {
        return Err(Error::input(format!(
            "representation has size {} but operator has size {}",
            rep.size(),
            k_i.size()
        )));
    }
    if rep.inverse_matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal(format!("representation '{}' is singular", rep.label())));
    }
    let conj = linalg::conjugate(rep.matrix(), k_i.matrix(), rep.inverse_matrix());
    Ok(k_i
        .clone()
        .with_matrix(conj)
        .with_label(target_label)
        .with_provenance(Provenance::Transported {
            base_label: k_i.set_label().to_string(),
            element: rep.label().to_string(),
            representation_residual: rep.residual(),
        }))
}

/// Case II: same matrix, dictionary `g ⋆ Ψ` (observables `x ↦ ψ_k(γ⁻¹x)`).
pub fn transport_case2(
    k_i: &KoopmanApprox,
    g: &GroupElement,
    target_label: &str,
) -> Result<(KoopmanApprox, Dictionary)> {
    if g.is_identity() {
        let op = k_i.clone().with_label(target_label);
        let dict = op.dictionary().clone();
        return Ok((op, dict));
    }
    let dict = k_i.dictionary().transformed(g)?;
    let op = k_i
        .clone()
        .with_dictionary(dict.clone())
        .with_label(target_label)
        .with_provenance(Provenance::TransformedDictionary {
            base_label: k_i.set_label().to_string(),
            element: g.label().to_string(),
        });
    Ok((op, dict))
}

/// Invariant sets `M_1 … M_m`, the base set, and an element mapping the base
/// set into each of the others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegistryFile", into = "RegistryFile")]
pub struct InvariantSetRegistry {
    labels: Vec<String>,
    base: String,
    mapping: BTreeMap<String, String>,
    samples: BTreeMap<String, Vec<State>>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    labels: Vec<String>,
    #[serde(default)]
    base: Option<String>,
    #[serde(default)]
    mapping: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    samples: BTreeMap<String, Vec<Vec<f64>>>,
}

impl TryFrom<RegistryFile> for InvariantSetRegistry {
    type Error = Error;

    fn try_from(f: RegistryFile) -> Result<Self> {
        let base = match f.base {
            Some(b) => b,
            None => f
                .labels
                .first()
                .cloned()
                .ok_or_else(|| Error::config("registry needs at least one label"))?,
        };
        let mut reg = Self::new(f.labels, &base, f.mapping)?;
        for (label, states) in f.samples {
            reg = reg.with_samples(&label, states.into_iter().map(DVector::from_vec).collect())?;
        }
        Ok(reg)
    }
}

impl From<InvariantSetRegistry> for RegistryFile {
    fn from(r: InvariantSetRegistry) -> Self {
        RegistryFile {
            labels: r.labels,
            base: Some(r.base),
            mapping: r.mapping,
            samples: r
                .samples
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(|s| s.iter().copied().collect()).collect()))
                .collect(),
        }
    }
}

impl InvariantSetRegistry {
    /// `mapping` sends each non-base label to the label of its group element.
    pub fn new(labels: Vec<String>, base: &str, mapping: BTreeMap<String, String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("registry needs at least one label"));
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::config("registry labels must be distinct"));
        }
        if !labels.iter().any(|l| l == base) {
            return Err(Error::config(format!("base '{base}' is not a registry label")));
        }
        if mapping.contains_key(base) {
            return Err(Error::config("the base set must not have a mapping element"));
        }
        for key in mapping.keys() {
            if !labels.contains(key) {
                return Err(Error::config(format!("mapping names unknown label '{key}'")));
            }
        }
        if let Some(missing) = labels.iter().find(|l| *l != base && !mapping.contains_key(*l)) {
            return Err(Error::config(format!("label '{missing}' has no mapping element")));
        }
        Ok(Self {
            labels,
            base: base.to_string(),
            mapping,
            samples: BTreeMap::new(),
        })
    }

    pub fn with_samples(mut self, label: &str, states: Vec<State>) -> Result<Self> {
        if !self.labels.iter().any(|l| l == label) {
            return Err(Error::config(format!("samples for unknown label '{label}'")));
        }
        self.samples.insert(label.to_string(), states);
        Ok(self)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn mapping(&self) -> &BTreeMap<String, String> {
        &self.mapping
    }

    pub fn element_for(&self, label: &str) -> Option<&str> {
        self.mapping.get(label).map(String::as_str)
    }

    pub fn samples(&self, label: &str) -> Option<&[State]> {
        self.samples.get(label).map(Vec::as_slice)
    }

    /// Every mapping element exists in `group`.
    pub fn check_against(&self, group: &FiniteMatrixGroup) -> Result<()> {
        for (label, element) in &self.mapping {
            if group.index_of_label(element).is_none() {
                return Err(Error::config(format!(
                    "label '{label}' maps through '{element}', which the group does not contain"
                )));
            }
        }
        Ok(())
    }
}

/// `diag(K_1, …, K_m)` over the disjoint union of the local dictionaries.
#[derive(Clone, Debug)]
pub struct GlobalKoopman {
    blocks: Vec<(String, KoopmanApprox)>,
}

impl GlobalKoopman {
    pub fn from_blocks(blocks: Vec<(String, KoopmanApprox)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::input("global operator needs at least one block"));
        }
        let distinct: BTreeSet<&String> = blocks.iter().map(|(l, _)| l).collect();
        if distinct.len() != blocks.len() {
            return Err(Error::input("block labels must be distinct"));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[(String, KoopmanApprox)] {
        &self.blocks
    }

    pub fn block(&self, label: &str) -> Option<&KoopmanApprox> {
        self.blocks.iter().find(|(l, _)| l == label).map(|(_, k)| k)
    }

    pub fn total_size(&self) -> usize {
        self.blocks.iter().map(|(_, k)| k.size()).sum()
    }

    /// Offset of a block inside the stacked feature vector.
    pub fn offset(&self, label: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for (l, k) in &self.blocks {
            if l == label {
                return Some((off, k.size()));
            }
            off += k.size();
        }
        None
    }

    /// The dense block-diagonal matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.total_size();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for (_, k) in &self.blocks {
            let s = k.size();
            m.view_mut((off, off), (s, s)).copy_from(k.matrix());
            off += s;
        }
        m
    }

    /// Applies the global operator blockwise to a stacked feature vector.
    pub fn apply(&self, stacked: &DVector<f64>) -> Result<DVector<f64>> {
        if stacked.len() != self.total_size() {
            return Err(Error::input("stacked vector has the wrong length"));
        }
        let mut out = DVector::zeros(stacked.len());
        let mut off = 0;
        for (_, k) in &self.blocks {
            let s = k.size();
            let slice = stacked.rows(off, s).into_owned();
            out.rows_mut(off, s).copy_from(&(k.matrix() * slice));
            off += s;
        }
        Ok(out)
    }
}

/// Builds every non-base block by Case I transport and assembles them in
/// registry order.
pub fn assemble_global(
    registry: &InvariantSetRegistry,
    base: &KoopmanApprox,
    reps: &BTreeMap<String, FeatureRepresentation>,
) -> Result<GlobalKoopman> {
    if base.set_label() != registry.base() {
        return Err(Error::input(format!(
            "base operator is labeled '{}' but the registry base is '{}'",
            base.set_label(),
            registry.base()
        )));
    }
    let mut blocks = Vec::with_capacity(registry.labels().len());
    for label in registry.labels() {
        if label == registry.base() {
            blocks.push((label.clone(), base.clone()));
            continue;
        }
        let rep = reps
            .get(label)
            .ok_or_else(|| Error::input(format!("no feature representation supplied for '{label}'")))?;
        blocks.push((label.clone(), transport_case1(base, rep, label)?));
    }
    GlobalKoopman::from_blocks(blocks)
}

/// One predicted step of the global operator restricted to a block.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPrediction {
    /// Full stacked vectors at each step.
    pub stacked: Vec<DVector<f64>>,
    /// The label's block slice at each step.
    pub block: Vec<DVector<f64>>,
}

/// Embeds `Ψ_label(x0)` into the stacked feature vector and iterates the
/// global operator.
pub fn global_predict(gk: &GlobalKoopman, label: &str, x0: &State, steps: usize) -> Result<GlobalPrediction> {
    let (off, size) = gk
        .offset(label)
        .ok_or_else(|| Error::input(format!("global operator has no block '{label}'")))?;
    let op = gk.block(label).expect("offset found");
    let psi0 = op.dictionary().evaluate(x0)?;
    let mut current = DVector::zeros(gk.total_size());
    current.rows_mut(off, size).copy_from(&psi0);
    let mut stacked = Vec::with_capacity(steps + 1);
    stacked.push(current.clone());
    for _ in 0..steps {
        current = gk.apply(&current)?;
        stacked.push(current.clone());
    }
    let block = stacked.iter().map(|v| v.rows(off, size).into_owned()).collect();
    Ok(GlobalPrediction { stacked, block })
}

/// Tolerances for [`verify_conjugation`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugationTolerance {
    pub frobenius: f64,
    pub hausdorff: f64,
}

impl ConjugationTolerance {
    pub const EXACT: Self = Self {
        frobenius: 1e-10,
        hausdorff: 1e-8,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugationReport {
    pub frobenius_error: f64,
    pub eigenvalue_hausdorff: f64,
    pub frobenius_pass: bool,
    pub hausdorff_pass: bool,
}

impl ConjugationReport {
    pub fn passed(&self) -> bool {
        self.frobenius_pass && self.hausdorff_pass
    }
}

/// Compares an independently fitted `K_j` with `R K_i R⁻¹`.
pub fn verify_conjugation(
    k_i: &KoopmanApprox,
    k_j: &KoopmanApprox,
    rep: &FeatureRepresentation,
    tol: ConjugationTolerance,
) -> Result<ConjugationReport> {
    if k_i.size() != k_j.size() || rep.size() != k_i.size() {
        return Err(Error::input("operator and representation sizes differ"));
    }
    let predicted = linalg::conjugate(rep.matrix(), k_i.matrix(), rep.inverse_matrix());
    let denom = k_j.matrix().norm();
    let diff = (k_j.matrix() - &predicted).norm();
    let frobenius_error = if denom > 0.0 { diff / denom } else { diff };
    let eigenvalue_hausdorff = linalg::hausdorff(
        &koopman::eigenvalues(k_j.matrix())?,
        &koopman::eigenvalues(&predicted)?,
    );
    Ok(ConjugationReport {
        frobenius_error,
        eigenvalue_hausdorff,
        frobenius_pass: frobenius_error <= tol.frobenius,
        hausdorff_pass: eigenvalue_hausdorff <= tol.hausdorff,
    })
}

/// `‖KR − RK‖_F / ‖K‖_F` with no precondition.
pub fn commutator_norm(k: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    let denom = k.norm();
    let c = (k * r - r * k).norm();
    if denom > 0.0 {
        c / denom
    } else {
        c
    }
}

/// Commutator of `K` with `R(g)`, for `g` mapping the fitted set to itself.
///
/// `stabilizer` lists the labels of elements known to preserve the data set
/// (see [`crate::groups::set_stabilizer`] and [`crate::groups::isotropy_set`]).
pub fn verify_commutation(op: &KoopmanApprox, rep: &FeatureRepresentation, stabilizer: &[&str]) -> Result<f64> {
    if !stabilizer.contains(&rep.label()) {
        return Err(Error::IsotropyRequired {
            label: rep.label().to_string(),
        });
    }
    if rep.size() != op.size() {
        return Err(Error::input("representation and operator sizes differ"));
    }
    Ok(commutator_norm(op.matrix(), rep.matrix()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantImageReport {
    pub element: String,
    pub samples: usize,
    pub inside: usize,
    pub fraction: f64,
}

/// Fraction of image samples `γ_g x` whose sampled forward orbit stays in
/// the target set over `horizon` steps.
pub fn verify_invariant_set_image(
    system: &SystemDef,
    g: &GroupElement,
    samples: &[State],
    dt: f64,
    horizon: usize,
    in_target: &dyn Fn(&State) -> bool,
) -> Result<InvariantImageReport> {
    let mut inside = 0;
    for x in samples {
        let start = g.matrix() * x;
        let traj = system.simulate(&start, dt, horizon, 0)?;
        if traj.states().iter().all(in_target) {
            inside += 1;
        }
    }
    let fraction = if samples.is_empty() {
        1.0
    } else {
        inside as f64 / samples.len() as f64
    };
    Ok(InvariantImageReport {
        element: g.label().to_string(),
        samples: samples.len(),
        inside,
        fraction,
    })
}

/// Global operator interchange form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalFile {
    pub total_size: usize,
    pub blocks: Vec<OperatorFile>,
}

impl GlobalFile {
    pub fn from_global(gk: &GlobalKoopman) -> Result<Self> {
        Ok(Self {
            total_size: gk.total_size(),
            blocks: gk
                .blocks()
                .iter()
                .map(|(_, k)| OperatorFile::from_operator(k))
                .collect::<Result<_>>()?,
        })
    }

    pub fn into_global(self) -> Result<GlobalKoopman> {
        let blocks = self
            .blocks
            .into_iter()
            .map(|f| {
                let op = f.into_operator()?;
                Ok((op.set_label().to_string(), op))
            })
            .collect::<Result<Vec<_>>>()?;
        let gk = GlobalKoopman::from_blocks(blocks)?;
        if gk.total_size() != self.total_size {
            return Err(Error::input("total_size does not match the blocks"));
        }
        Ok(gk)
    }
}

/// Predictions of a block-local operator, used to cross-check the global path.
pub fn local_predict(op: &KoopmanApprox, x0: &State, steps: usize) -> Result<Vec<DVector<f64>>> {
    let psi0 = op.dictionary().evaluate(x0)?;
    Ok(iterate(op.matrix(), psi0, steps))
}
