//! Finite groups realized as orthogonal matrices acting on state space.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{State, SystemDef, Trajectory, HAMILTONIAN, LORENZ, TOGGLE_SWITCH};
use crate::error::{Error, Result};

/// Max-norm tolerance for matching group elements during closure.
pub const MATCH_TOL: f64 = 1e-10;
/// Max-norm tolerance on `γᵀγ − I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
pub const IDENTITY_LABEL: &str = "e";

/// A labeled orthogonal matrix `γ_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementFile", into = "ElementFile")]
pub struct GroupElement {
    label: String,
    matrix: DMatrix<f64>,
}

impl GroupElement {
    pub fn new(label: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let label = label.into();
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::input(format!(
                "element '{label}' must be a non-empty square matrix"
            )));
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::input(format!("element '{label}' has non-finite entries")));
        }
        let n = matrix.nrows();
        let defect = (matrix.transpose() * &matrix - DMatrix::<f64>::identity(n, n)).amax();
        if defect > ORTHOGONALITY_TOL {
            return Err(Error::input(format!(
                "element '{label}' is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(Self { label, matrix })
    }

    pub fn from_rows(label: impl Into<String>, rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("element matrix must be square"));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(label, DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            label: IDENTITY_LABEL.into(),
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Inverse element; the matrix is `γᵀ`.
    pub fn inverse(&self) -> Self {
        Self {
            label: format!("{}^-1", self.label),
            matrix: self.matrix.transpose(),
        }
    }

    pub fn relabeled(&self, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            matrix: self.matrix.clone(),
        }
    }

    pub fn approx_eq(&self, other: &DMatrix<f64>) -> bool {
        self.matrix.shape() == other.shape() && (&self.matrix - other).amax() <= MATCH_TOL
    }

    pub fn is_identity(&self) -> bool {
        self.approx_eq(&DMatrix::identity(self.dim(), self.dim()))
    }
}

#[derive(Serialize, Deserialize)]
struct ElementFile {
    label: String,
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<ElementFile> for GroupElement {
    type Error = Error;

    fn try_from(f: ElementFile) -> Result<Self> {
        let rows: Vec<&[f64]> = f.matrix.iter().map(Vec::as_slice).collect();
        Self::from_rows(f.label, &rows)
    }
}

impl From<GroupElement> for ElementFile {
    fn from(g: GroupElement) -> Self {
        ElementFile {
            label: g.label,
            matrix: crate::io::matrix_rows(&g.matrix),
        }
    }
}

/// `γ_g · x`.
pub fn act_on_state(g: &GroupElement, x: &State) -> Result<State> {
    if x.len() != g.dim() {
        return Err(Error::input(format!(
            "state has length {} but element '{}' acts on dimension {}",
            x.len(),
            g.label,
            g.dim()
        )));
    }
    Ok(&g.matrix * x)
}

/// A scalar observable on state space.
#[derive(Clone)]
pub struct Observable {
    dim: usize,
    f: Arc<dyn Fn(&State) -> f64 + Send + Sync>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable(dim={})", self.dim)
    }
}

impl Observable {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&State) -> f64 + Send + Sync + 'static,
    {
        Self { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &State) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "observable expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok((self.f)(x))
    }
}

/// `(g ⋆ f)(x) = f(γ_g⁻¹ x)`.
pub fn act_on_function(g: &GroupElement, f: &Observable) -> Observable {
    let inv = g.matrix.transpose();
    let inner = f.f.clone();
    Observable {
        dim: f.dim,
        f: Arc::new(move |x: &State| inner(&(&inv * x))),
    }
}

/// A finite matrix group with its Cayley table; element 0 is the identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteMatrixGroup {
    dim: usize,
    elements: Vec<GroupElement>,
    cayley: Vec<Vec<usize>>,
}

/// Closes `generators` under matrix multiplication.
///
/// Generators keep their labels; newly discovered products are labeled
/// `g{i}*g{j}` after the indices of the first pair found to produce them.
pub fn generate_group(
    dim: usize,
    generators: &[GroupElement],
    max_order: usize,
) -> Result<FiniteMatrixGroup> {
    if dim == 0 {
        return Err(Error::input("group dimension must be positive"));
    }
    let mut elements = vec![GroupElement::identity(dim)];
    for g in generators {
        if g.dim() != dim {
            return Err(Error::input(format!(
                "generator '{}' has dimension {} but the group acts on {dim}",
                g.label,
                g.dim()
            )));
        }
        // Re-validate in case the element was built without the constructor.
        GroupElement::new(g.label.clone(), g.matrix.clone())?;
        match find_index(&elements, &g.matrix) {
            Some(0) => elements[0].label = g.label.clone(),
            Some(_) => {}
            None => elements.push(g.clone()),
        }
    }
    if elements.len() > max_order {
        return Err(Error::NonFiniteGroup { max_order });
    }

    loop {
        let n = elements.len();
        let mut discovered = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let prod = &elements[i].matrix * &elements[j].matrix;
                let known = find_index(&elements, &prod).is_some()
                    || discovered.iter().any(|d: &GroupElement| d.approx_eq(&prod));
                if !known {
                    discovered.push(GroupElement {
                        label: format!("g{i}*g{j}"),
                        matrix: prod,
                    });
                    if n + discovered.len() > max_order {
                        return Err(Error::NonFiniteGroup { max_order });
                    }
                }
            }
        }
        if discovered.is_empty() {
            break;
        }
        elements.extend(discovered);
    }

    let n = elements.len();
    let mut cayley = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let prod = &elements[i].matrix * &elements[j].matrix;
            cayley[i][j] = find_index(&elements, &prod)
                .ok_or_else(|| Error::Internal("closure left a product unmatched".into()))?;
        }
    }
    Ok(FiniteMatrixGroup {
        dim,
        elements,
        cayley,
    })
}

fn find_index(elements: &[GroupElement], m: &DMatrix<f64>) -> Option<usize> {
    elements.iter().position(|e| e.approx_eq(m))
}

/// Outcome of the exhaustive group-axiom check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub order: usize,
    pub closure: bool,
    pub identity: bool,
    pub inverses: bool,
    pub associativity: bool,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.closure && self.identity && self.inverses && self.associativity
    }
}

impl FiniteMatrixGroup {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &GroupElement {
        &self.elements[index]
    }

    pub fn cayley(&self) -> &[Vec<usize>] {
        &self.cayley
    }

    pub fn product(&self, a: usize, b: usize) -> usize {
        self.cayley[a][b]
    }

    pub fn index_of_label(&self, label: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.label == label)
    }

    pub fn index_of_matrix(&self, m: &DMatrix<f64>) -> Option<usize> {
        find_index(&self.elements, m)
    }

    /// Resolves an element by label first, then by matrix.
    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index_of_label(&g.label)
            .filter(|&i| self.elements[i].approx_eq(&g.matrix))
            .or_else(|| self.index_of_matrix(&g.matrix))
    }

    pub fn by_label(&self, label: &str) -> Result<&GroupElement> {
        self.index_of_label(label)
            .map(|i| &self.elements[i])
            .ok_or_else(|| Error::input(format!("group has no element labeled '{label}'")))
    }

    pub fn inverse_index(&self, k: usize) -> Option<usize> {
        self.cayley[k].iter().position(|&p| p == 0)
    }

    pub fn is_abelian(&self) -> bool {
        let n = self.order();
        (0..n).all(|i| (0..n).all(|j| self.cayley[i][j] == self.cayley[j][i]))
    }

    /// Checks closure, identity, inverses and associativity over the whole table.
    pub fn verify_axioms(&self) -> AxiomReport {
        let n = self.order();
        let closure = self.cayley.len() == n
            && self.cayley.iter().all(|row| row.len() == n && row.iter().all(|&k| k < n));
        let identity = closure && (0..n).all(|k| self.cayley[0][k] == k && self.cayley[k][0] == k);
        let inverses = closure
            && (0..n).all(|k| {
                (0..n).any(|j| self.cayley[k][j] == 0 && self.cayley[j][k] == 0)
            });
        let associativity = closure
            && (0..n).all(|a| {
                (0..n).all(|b| {
                    (0..n).all(|c| {
                        self.cayley[self.cayley[a][b]][c] == self.cayley[a][self.cayley[b][c]]
                    })
                })
            });
        AxiomReport {
            order: n,
            closure,
            identity,
            inverses,
            associativity,
        }
    }

    /// True when `members` is closed under products and inverses in this group.
    pub fn is_subgroup(&self, members: &[usize]) -> bool {
        if !members.contains(&0) {
            return false;
        }
        members.iter().all(|&a| {
            self.inverse_index(a).is_some_and(|inv| members.contains(&inv))
                && members.iter().all(|&b| members.contains(&self.cayley[a][b]))
        })
    }
}

/// State-space symmetry generators of a built-in system.
pub fn builtin_generators(system: &str) -> Result<Vec<GroupElement>> {
    let gens = match system {
        LORENZ => vec![GroupElement::from_rows(
            "rot_z",
            &[&[-1.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 1.0]],
        )?],
        TOGGLE_SWITCH | "toggle" => {
            vec![GroupElement::from_rows("swap", &[&[0.0, 1.0], &[1.0, 0.0]])?]
        }
        HAMILTONIAN => vec![
            GroupElement::from_rows("gamma1", &[&[0.0, 1.0], &[1.0, 0.0]])?,
            GroupElement::from_rows("gamma2", &[&[-1.0, 0.0], &[0.0, -1.0]])?,
        ],
        other => return Err(Error::config(format!("no built-in symmetry group for '{other}'"))),
    };
    Ok(gens)
}

/// Declared symmetry group of a built-in system.
///
/// For the Hamiltonian system the product `gamma1*gamma2` is relabeled `gamma3`.
pub fn builtin_group(system: &str) -> Result<FiniteMatrixGroup> {
    let gens = builtin_generators(system)?;
    let dim = gens[0].dim();
    let mut group = generate_group(dim, &gens, 64)?;
    if system == HAMILTONIAN {
        let g3 = &group.elements[1].matrix * &group.elements[2].matrix;
        if let Some(i) = group.index_of_matrix(&g3) {
            group.elements[i].label = "gamma3".into();
        }
    }
    Ok(group)
}

/// Group file schema: `{ "dim": n, "generators": [ { "label", "matrix" } ] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub dim: usize,
    pub generators: Vec<GroupElement>,
}

impl GroupSpec {
    pub fn generate(&self, max_order: usize) -> Result<FiniteMatrixGroup> {
        generate_group(self.dim, &self.generators, max_order)
    }
}

/// Per-element equivariance defect of the discrete map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementCheck {
    pub label: String,
    pub max_defect: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivarianceReport {
    pub system: String,
    pub tol: f64,
    pub samples: usize,
    pub elements: Vec<ElementCheck>,
}

impl EquivarianceReport {
    pub fn passed(&self) -> bool {
        self.elements.iter().all(|e| e.passed)
    }
}

/// Measures `‖T(γx) − γT(x)‖ / (1 + ‖T(x)‖)` for every non-identity element.
pub fn check_equivariance(
    system: &SystemDef,
    group: &FiniteMatrixGroup,
    dt: f64,
    samples: &[State],
    tol: f64,
) -> Result<EquivarianceReport> {
    if group.dim() != system.dim() {
        return Err(Error::input(format!(
            "group acts on dimension {} but system has dimension {}",
            group.dim(),
            system.dim()
        )));
    }
    let base: Vec<State> = samples
        .iter()
        .map(|x| system.step(x, dt))
        .collect::<Result<_>>()?;
    let mut elements = Vec::new();
    for g in group.elements().iter().skip(1) {
        let mut max_defect = 0.0f64;
        for (x, tx) in samples.iter().zip(&base) {
            let lhs = system.step(&(g.matrix() * x), dt)?;
            let rhs = g.matrix() * tx;
            let defect = (lhs - rhs).norm() / (1.0 + tx.norm());
            max_defect = max_defect.max(defect);
        }
        elements.push(ElementCheck {
            label: g.label().to_string(),
            max_defect,
            passed: max_defect <= tol,
        });
    }
    Ok(EquivarianceReport {
        system: system.name().to_string(),
        tol,
        samples: samples.len(),
        elements,
    })
}

/// Elements fixing a sampled trajectory pointwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub member_indices: Vec<usize>,
    pub is_subgroup: bool,
    pub tol: f64,
}

pub const DEFAULT_ISOTROPY_TOL: f64 = 1e-8;

/// `Σ = { g : γ_g x_t = x_t for every sample t }`, decided with relative tolerance `tol`.
pub fn isotropy_set(group: &FiniteMatrixGroup, traj: &Trajectory, tol: f64) -> Result<IsotropyReport> {
    if traj.dim() != group.dim() {
        return Err(Error::input("trajectory and group dimensions differ"));
    }
    let member_indices: Vec<usize> = (0..group.order())
        .filter(|&k| {
            let m = group.element(k).matrix();
            traj.states()
                .iter()
                .all(|x| (m * x - x).norm() <= tol * (1.0 + x.norm()))
        })
        .collect();
    Ok(IsotropyReport {
        is_subgroup: group.is_subgroup(&member_indices),
        member_indices,
        tol,
    })
}

/// Isotropy of `g · x(t)` obtained as `g Σ g⁻¹`.
pub fn conjugate_isotropy(
    group: &FiniteMatrixGroup,
    report: &IsotropyReport,
    g: &GroupElement,
) -> Result<IsotropyReport> {
    let gi = group
        .index_of(g)
        .ok_or_else(|| Error::input(format!("element '{}' is not in the group", g.label())))?;
    let g_inv = group
        .inverse_index(gi)
        .ok_or_else(|| Error::Internal("group element without inverse".into()))?;
    let mut members: Vec<usize> = report
        .member_indices
        .iter()
        .map(|&theta| group.product(group.product(gi, theta), g_inv))
        .collect();
    members.sort_unstable();
    members.dedup();
    Ok(IsotropyReport {
        is_subgroup: group.is_subgroup(&members),
        member_indices: members,
        tol: report.tol,
    })
}

/// Indices of elements mapping a finite point set onto itself (each image
/// matches some point within relative tolerance `tol`).
pub fn set_stabilizer(group: &FiniteMatrixGroup, points: &[State], tol: f64) -> Vec<usize> {
    (0..group.order())
        .filter(|&k| {
            let m = group.element(k).matrix();
            points.iter().all(|x| {
                let y = m * x;
                points
                    .iter()
                    .any(|z| (&y - z).norm() <= tol * (1.0 + z.norm()))
            })
        })
        .collect()
}
