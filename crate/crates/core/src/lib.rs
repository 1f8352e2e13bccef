//! Multivariate Hawkes representations of univariate marked Hawkes processes.
//!
//! A marked target with intensity `λ_HP(t, M)` on a mark space `M` is
//! approximated by a K-component unmarked multivariate Hawkes process, one
//! component per cell `A_i` of a partition of `M`:
//!
//! ```text
//! λ_θ(t, M) = Σ_i χ_{A_i}(M) (λ0_i + Σ_j Σ_{t_{l,j} < t} α_ij g_ij(t − t_{l,j}; β_ij))
//! ```
//!
//! The crate covers simulation ([`simulate`]), the constructive ansatz and
//! intensity comparisons ([`represent`]), likelihood-based fitting
//! ([`infer`]), branching-ratio analysis ([`stability`]) and the simulation
//! study harness ([`study`]).

pub mod error;
pub mod events;
pub mod infer;
pub mod kernel;
pub mod params;
pub mod partition;
pub mod quadrature;
pub mod represent;
pub mod simulate;
pub mod space;
pub mod stability;
pub mod stats;
pub mod study;
pub mod target;

pub use error::{Error, Result};
pub use events::{Event, EventStream, StreamDescriptor};
pub use kernel::KernelConvention;
pub use params::{MvParams, SquareMatrix};
pub use partition::{select_bin_count, Cell, MarkPartition};
pub use simulate::SimConfig;
pub use space::MarkSpace;
pub use stability::{BranchingMatrix, Stationarity};
pub use target::{MarkFunction, TargetSpec};
