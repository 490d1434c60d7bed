//! Work statistics of quantum systems measured by a continuously coupled
//! pointer, with an analytic engine for commuting Hamiltonians, a numeric
//! engine for the driven qubit, energetics bookkeeping and reference oracles.

pub mod analytic;
pub mod apparatus;
pub mod distribution;
pub mod error;
pub mod linalg;
pub mod numeric;
pub mod oracle;
pub mod ode;
pub mod quadrature;
pub mod schedule;
pub mod state;
pub mod system;
pub mod thermo;

pub use apparatus::ApparatusSpec;
pub use distribution::{Engine, WorkDistribution, WorkGrid};
pub use error::{Error, Result};
pub use schedule::ProtocolSchedule;
pub use state::SystemState;
pub use system::{DrivenQubit, EnergyLevel, Hamiltonian, Polynomial, SpectralSystem};
