//! Efficiency spectra and multimode capacity of Λ-type atomic-ensemble
//! quantum memories with transverse (Bessel-mode) resolution.

pub mod basis;
pub mod cache;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod memory_map;
pub mod oracle;
pub mod params;
pub mod propagator;
pub mod special;
pub mod spectrum;
pub mod sweep;

pub use basis::{build_basis, coupling_block, BlockBasis, CouplingBlock};
pub use cache::{cache_key, Cache, SCHEMA_VERSION};
pub use engine::{block_spectra, capacity_reports, EngineSettings, PointResult};
pub use error::{Error, Result};
pub use params::{AxialRule, FrequencyRule, ModelCoefficients, ModelParams, PhysicalEnsemble, Resolution};
pub use propagator::{kernel_slice, system_matrix, KernelSlice, SystemMatrix};
pub use memory_map::{backward_map, forward_map, memory_map, storage_map, Direction, MemoryMap, QuadratureGrid};
pub use special::bessel_zeros;
pub use spectrum::{block_spectrum, capacity_report, quantum_capacity, BlockSpectrum, CapacityReport};

pub use faer::c64;
pub use sweep::{
    converge, fit_power_law, optimize_drive, sweep_depth, sweep_fresnel, ConvergeOptions, DriveMetric, DriveOptimum, DrivePolicy,
    PowerLawFit, SweepOptions, SweepPoint, SweepQuantity,
};
