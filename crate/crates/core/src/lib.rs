//! Non-local shrinkage reconstruction of undersampled Fourier data.
//!
//! The solver minimizes `‖Af − b‖² + λ Σ_x Σ_q φ(‖P_x f − P_{x+q} f‖)` over
//! complex images `f` on a periodic grid, where `P_x` extracts the patch at
//! `x` and `φ` is one of the robust metrics in [`penalty`].

pub mod cg;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod irw;
pub mod metrics;
pub mod model;
pub mod nls;
pub mod penalty;
pub mod phantom;
pub mod sampling;

pub use error::{Error, Result};
pub use experiment::{run_experiment, Algorithm, CellResult, ExperimentSpec};
pub use irw::{run_irw, IrwConfig};
pub use grid::{ComplexImage, Offset, OffsetSet, PatchGeometry, RealImage};
pub use metrics::{psnr_db, snr_db};
pub use model::{measure, IdentityOperator, LinearOperator, MaskedFourier, MeasurementModel};
pub use nls::{run_nls, run_nls_with_operator, SolverConfig, SolverTrace, TraceRecord};
pub use phantom::{make_phantom, Phantom, PhantomKind};
pub use penalty::{PenaltyKind, PenaltySpec, Shrinkage};
pub use sampling::{gen_mask, MaskKind, MaskParams, SamplingMask};
