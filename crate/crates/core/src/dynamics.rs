//! Benchmark dynamical systems, fixed-step integration and snapshot extraction.
//!
//! Three built-in equivariant systems are provided: the Lorenz system, a
//! symmetric bistable toggle switch, and a quartic Hamiltonian system with a
//! Klein four-group symmetry. Continuous-time fields are discretized with
//! classical fourth-order Runge–Kutta at a fixed step so that snapshot pairs
//! are uniformly spaced.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type State = DVector<f64>;

type FieldFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsKind {
    Continuous,
    Discrete,
}

#[derive(Clone)]
enum Rule {
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    ToggleSwitch {
        alpha1: f64,
        alpha2: f64,
        kappa1: f64,
        kappa2: f64,
        beta: f64,
        theta: f64,
    },
    Hamiltonian,
    Linear(DMatrix<f64>),
    Custom(Arc<FieldFn>),
}

/// A named dynamical system: either a vector field `x ↦ f(x)` or a map `x ↦ T(x)`.
#[derive(Clone)]
pub struct SystemDef {
    name: String,
    dim: usize,
    params: BTreeMap<String, f64>,
    kind: DynamicsKind,
    rule: Rule,
}

impl fmt::Debug for SystemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDef")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .field("kind", &self.kind)
            .finish()
    }
}

pub const LORENZ: &str = "lorenz";
pub const TOGGLE_SWITCH: &str = "toggle_switch";
pub const HAMILTONIAN: &str = "hamiltonian";

pub const BUILTIN_SYSTEMS: [&str; 3] = [LORENZ, TOGGLE_SWITCH, HAMILTONIAN];

fn default_params(name: &str) -> Option<Vec<(&'static str, f64)>> {
    match name {
        LORENZ => Some(vec![("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)]),
        TOGGLE_SWITCH => Some(vec![
            ("alpha1", 3.0),
            ("alpha2", 3.0),
            ("kappa1", 1.0),
            ("kappa2", 1.0),
            ("beta", 2.0),
            ("theta", 2.0),
        ]),
        HAMILTONIAN => Some(vec![]),
        _ => None,
    }
}

/// Default sampling interval for a built-in system.
pub fn default_dt(name: &str) -> f64 {
    match name {
        HAMILTONIAN => 1e-3,
        _ => 1e-2,
    }
}

impl SystemDef {
    /// Builds one of the built-in systems, applying parameter overrides.
    ///
    /// `"toggle"` is accepted as an alias for `"toggle_switch"`.
    pub fn builtin(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let name = if name == "toggle" { TOGGLE_SWITCH } else { name };
        let defaults = default_params(name)
            .ok_or_else(|| Error::config(format!("unknown system '{name}'")))?;
        let mut params: BTreeMap<String, f64> =
            defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (key, value) in overrides {
            match params.get_mut(key) {
                Some(slot) => *slot = *value,
                None => {
                    return Err(Error::config(format!(
                        "system '{name}' has no parameter '{key}'"
                    )))
                }
            }
        }
        if let Some((k, _)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::config(format!("parameter '{k}' is not finite")));
        }
        let p = |k: &str| params[k];
        let (dim, rule) = match name {
            LORENZ => (
                3,
                Rule::Lorenz {
                    sigma: p("sigma"),
                    rho: p("rho"),
                    beta: p("beta"),
                },
            ),
            TOGGLE_SWITCH => (
                2,
                Rule::ToggleSwitch {
                    alpha1: p("alpha1"),
                    alpha2: p("alpha2"),
                    kappa1: p("kappa1"),
                    kappa2: p("kappa2"),
                    beta: p("beta"),
                    theta: p("theta"),
                },
            ),
            HAMILTONIAN => (2, Rule::Hamiltonian),
            _ => unreachable!("default_params covers every built-in"),
        };
        Ok(Self {
            name: name.to_string(),
            dim,
            params,
            kind: DynamicsKind::Continuous,
            rule,
        })
    }

    pub fn lorenz() -> Self {
        Self::builtin(LORENZ, &BTreeMap::new()).expect("built-in")
    }

    pub fn toggle_switch() -> Self {
        Self::builtin(TOGGLE_SWITCH, &BTreeMap::new()).expect("built-in")
    }

    pub fn hamiltonian() -> Self {
        Self::builtin(HAMILTONIAN, &BTreeMap::new()).expect("built-in")
    }

    /// Discrete linear map `x ↦ A x`.
    pub fn linear_map(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::input("linear map must be a non-empty square matrix"));
        }
        Ok(Self {
            name: "linear".into(),
            dim: a.nrows(),
            params: BTreeMap::new(),
            kind: DynamicsKind::Discrete,
            rule: Rule::Linear(a),
        })
    }

    /// User-supplied continuous-time vector field.
    pub fn continuous<F>(name: &str, dim: usize, field: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            params: BTreeMap::new(),
            kind: DynamicsKind::Continuous,
            rule: Rule::Custom(Arc::new(field)),
        }
    }

    /// User-supplied discrete map.
    pub fn discrete<F>(name: &str, dim: usize, map: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            params: BTreeMap::new(),
            kind: DynamicsKind::Discrete,
            rule: Rule::Custom(Arc::new(map)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    fn check_dim(&self, x: &State) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "state has length {} but system '{}' has dimension {}",
                x.len(),
                self.name,
                self.dim
            )));
        }
        Ok(())
    }

    /// Evaluates the rule (field or map) without any kind check.
    fn apply_rule(&self, x: &State) -> Result<State> {
        let out = match &self.rule {
            Rule::Lorenz { sigma, rho, beta } => {
                let (a, b, c) = (x[0], x[1], x[2]);
                DVector::from_vec(vec![sigma * (b - a), a * (rho - c) - b, a * b - beta * c])
            }
            Rule::ToggleSwitch {
                alpha1,
                alpha2,
                kappa1,
                kappa2,
                beta,
                theta,
            } => {
                let (x1, x2) = (x[0], x[1]);
                DVector::from_vec(vec![
                    alpha1 / (1.0 + hill_power(x2, *beta)) - kappa1 * x1,
                    alpha2 / (1.0 + hill_power(x1, *theta)) - kappa2 * x2,
                ])
            }
            Rule::Hamiltonian => {
                let (q, p) = (x[0], x[1]);
                DVector::from_vec(vec![p * p * p - 9.0 * p, q * q * q - 9.0 * q])
            }
            Rule::Linear(a) => a * x,
            Rule::Custom(f) => {
                let v = f(x.as_slice());
                if v.len() != self.dim {
                    return Err(Error::input(format!(
                        "field of '{}' returned {} components, expected {}",
                        self.name,
                        v.len(),
                        self.dim
                    )));
                }
                DVector::from_vec(v)
            }
        };
        Ok(out)
    }

    /// Continuous-time vector field `f(x)`.
    pub fn vector_field(&self, x: &State) -> Result<State> {
        if self.kind != DynamicsKind::Continuous {
            return Err(Error::input(format!(
                "system '{}' is a discrete map and has no vector field",
                self.name
            )));
        }
        self.check_dim(x)?;
        self.apply_rule(x)
    }

    /// One step of the discrete-time map: an RK4 step for continuous systems,
    /// `T(x)` for discrete ones (`dt` is ignored).
    pub fn step(&self, x: &State, dt: f64) -> Result<State> {
        self.check_dim(x)?;
        let next = match self.kind {
            DynamicsKind::Discrete => self.apply_rule(x)?,
            DynamicsKind::Continuous => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(Error::input(format!("dt must be positive, got {dt}")));
                }
                self.rk4(x, dt)?
            }
        };
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::Divergence { step: 0 })
        }
    }

    fn rk4(&self, x: &State, dt: f64) -> Result<State> {
        let half = 0.5 * dt;
        let k1 = self.apply_rule(x)?;
        let k2 = self.apply_rule(&(x + &k1 * half))?;
        let k3 = self.apply_rule(&(x + &k2 * half))?;
        let k4 = self.apply_rule(&(x + &k3 * dt))?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
    }

    /// Integrates `n_steps + discard` steps and keeps the states after the
    /// first `discard` of them.
    pub fn simulate(
        &self,
        x0: &State,
        dt: f64,
        n_steps: usize,
        discard: usize,
    ) -> Result<Trajectory> {
        self.check_dim(x0)?;
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(Error::input("initial state is not finite"));
        }
        let total = n_steps + discard;
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut x = x0.clone();
        if discard == 0 {
            states.push(x.clone());
        }
        for k in 0..total {
            x = match self.step(&x, dt) {
                Ok(next) => next,
                Err(Error::Divergence { .. }) => return Err(Error::Divergence { step: k + 1 }),
                Err(e) => return Err(e),
            };
            if k + 1 >= discard {
                states.push(x.clone());
            }
        }
        Trajectory::new(self.dim, dt, states)
    }
}

fn hill_power(x: f64, n: f64) -> f64 {
    if n.fract() == 0.0 && n.abs() <= i32::MAX as f64 {
        x.powi(n as i32)
    } else {
        x.powf(n)
    }
}

/// `H(q, p) = p⁴/4 − 9p²/2 − q⁴/4 + 9q²/2`, conserved by the built-in Hamiltonian flow.
pub fn hamiltonian_energy(q: f64, p: f64) -> f64 {
    0.25 * p.powi(4) - 4.5 * p * p - 0.25 * q.powi(4) + 4.5 * q * q
}

/// Uniformly sampled solution `x₀, x₁, …, x_N` with spacing `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    dt: f64,
    states: Vec<State>,
}

impl Trajectory {
    pub fn new(dim: usize, dt: f64, states: Vec<State>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("trajectory dimension must be positive"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::input(format!("dt must be positive, got {dt}")));
        }
        if let Some((i, s)) = states.iter().enumerate().find(|(_, s)| s.len() != dim) {
            return Err(Error::input(format!(
                "state {i} has length {} but trajectory dimension is {dim}",
                s.len()
            )));
        }
        Ok(Self { dim, dt, states })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    /// Image of the trajectory under the linear map `matrix`.
    pub fn mapped(&self, matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != self.dim || matrix.ncols() != self.dim {
            return Err(Error::input("matrix dimension does not match trajectory"));
        }
        Ok(Self {
            dim: self.dim,
            dt: self.dt,
            states: self.states.iter().map(|s| matrix * s).collect(),
        })
    }
}

/// Paired snapshot matrices with `Xf[:, k] = T(Xp[:, k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotPairs {
    xp: DMatrix<f64>,
    xf: DMatrix<f64>,
}

impl SnapshotPairs {
    pub fn new(xp: DMatrix<f64>, xf: DMatrix<f64>) -> Result<Self> {
        if xp.shape() != xf.shape() {
            return Err(Error::input(format!(
                "Xp is {:?} but Xf is {:?}",
                xp.shape(),
                xf.shape()
            )));
        }
        if xp.nrows() == 0 || xp.ncols() == 0 {
            return Err(Error::input("snapshot matrices must be non-empty"));
        }
        Ok(Self { xp, xf })
    }

    pub fn dim(&self) -> usize {
        self.xp.nrows()
    }

    pub fn count(&self) -> usize {
        self.xp.ncols()
    }

    pub fn xp(&self) -> &DMatrix<f64> {
        &self.xp
    }

    pub fn xf(&self) -> &DMatrix<f64> {
        &self.xf
    }

    /// Applies `matrix` to every column of both snapshot matrices.
    pub fn mapped(&self, matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() != self.dim() {
            return Err(Error::input("matrix dimension does not match snapshots"));
        }
        Self::new(matrix * &self.xp, matrix * &self.xf)
    }

    /// Column-wise union of two snapshot sets.
    pub fn concat(&self, other: &SnapshotPairs) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::input("cannot concatenate snapshots of different dimension"));
        }
        let join = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
            m.columns_mut(0, a.ncols()).copy_from(a);
            m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
            m
        };
        Self::new(join(&self.xp, &other.xp), join(&self.xf, &other.xf))
    }
}

/// Consecutive-state snapshot pairs of a trajectory.
pub fn snapshots(traj: &Trajectory) -> Result<SnapshotPairs> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::input(format!(
            "snapshot pairs need at least 2 states, trajectory has {n}"
        )));
    }
    let dim = traj.dim();
    let xp = DMatrix::from_fn(dim, n - 1, |i, k| traj.states[k][i]);
    let xf = DMatrix::from_fn(dim, n - 1, |i, k| traj.states[k + 1][i]);
    SnapshotPairs::new(xp, xf)
}
