pub mod continuity;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lyapunov;
pub mod measure;
pub mod rng;
pub mod structure;
pub mod walk;

pub use error::{Error, Result};
pub use linalg::{Matrix, MatrixElement, ProjectivePoint};
pub use measure::{FiniteMeasure, TransportPlan};
pub use lyapunov::{LyapunovEstimate, ParticleCloud};
pub use structure::{BlockDecomposition, FactoredMeasure, GeneratorFactorization, PermutationWalk};
pub use walk::{DecayFit, Occupancy, Region, RegionPartition};
