//! Numerical geometry of space-like graphs in Lorentz products `Mⁿ × ℝ`.
//!
//! The crate covers warped-product bases, extrinsic geometry of graphs,
//! radial translating solitons, the stability quadratic form of the weighted
//! area and a graphical mean curvature flow.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod manifold;
pub mod soliton;
pub mod stability;

pub use error::{Error, Result};
pub use geometry::{GraphGeometry, SpacelikeGraph};
pub use flow::{DiagnosticsRow, FlowConfig, FlowRun, FlowState};
pub use grid::{Axis, AxisKind, Grid};
pub use io::Metadata;
pub use manifold::{BaseChart, Christoffel, NodeMetric, ProfileKind, WarpedProfile};
pub use soliton::{SolitonProfile, TerminatedReason};
pub use stability::{Calibration, TestFunction, VariationReport};
