pub mod algebra;
pub mod error;
pub mod ode;
pub mod scalar;
pub mod sparse;
pub mod state;
pub mod lindblad;
pub mod observables;
pub mod product;
pub mod meanfield;
pub mod mcwf;
pub mod experiments;

pub use error::{Error, Result};

pub type Complex64 = scalar::C<f64>;
pub type Operator = algebra::OperatorMatrix<f64>;
pub type Density = state::DensityOperator<f64>;
pub type Wavefunction = state::StateVector<f64>;
pub type Problem = lindblad::LindbladProblem<f64>;
pub type Hamiltonian = lindblad::HamiltonianSpec<f64>;
pub type MeanField = meanfield::MeanFieldState<f64>;
