//! Koopman operator approximation for equivariant dynamical systems.
//!
//! A local operator is fitted by EDMD on one invariant set; operators on the
//! symmetry-related sets are obtained by conjugation with the induced
//! feature-space representation of the symmetry group, and the global
//! operator is the block-diagonal composite of the local ones.
//!
//! ```
//! use equikoop::prelude::*;
//! use nalgebra::dvector;
//!
//! let sys = SystemDef::toggle_switch();
//! let traj = sys.simulate(&dvector![2.5, 0.2], 0.01, 500, 0).unwrap();
//! let dict = Dictionary::identity(2);
//! let right = fit_pairs(&dict, &snapshots(&traj).unwrap(), 1e-12, "right").unwrap();
//!
//! let swap = builtin_group("toggle_switch").unwrap().by_label("swap").unwrap().clone();
//! let rep = induced_representation_default(&dict, &swap, 0).unwrap();
//! let left = transport_case1(&right, &rep, "left").unwrap();
//! assert_eq!(left.matrix()[(0, 0)], right.matrix()[(1, 1)]);
//! ```

pub mod dictionary;
pub mod dynamics;
pub mod equivariant;
pub mod error;
pub mod groups;
pub mod io;
pub mod koopman;
pub mod linalg;
pub mod scenario;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::dictionary::{
        induced_representation, induced_representation_default, lift, Dictionary, DictionarySpec,
        FeatureRepresentation,
    };
    pub use crate::dynamics::{hamiltonian_energy, snapshots, SnapshotPairs, State, SystemDef, Trajectory};
    pub use crate::equivariant::{
        assemble_global, commutator_norm, global_predict, transport_case1, transport_case2,
        verify_commutation, verify_conjugation, verify_invariant_set_image, ConjugationTolerance,
        GlobalKoopman, InvariantSetRegistry,
    };
    pub use crate::error::{Error, Result};
    pub use crate::groups::{
        act_on_function, act_on_state, builtin_group, check_equivariance, conjugate_isotropy,
        generate_group, isotropy_set, FiniteMatrixGroup, GroupElement, IsotropyReport, Observable,
    };
    pub use crate::koopman::{
        eigenfunction_eval, fit_edmd, fit_pairs, predict, spectrum, KoopmanApprox, Spectrum,
    };
}
