//! Rank distortions between unobserved regression errors and least-squares
//! residuals in the Gaussian linear model `Y = D theta + eps`.
//!
//! For each observation `i`, let `R_i` be the rank of the error `eps_i` and
//! `R^_i` the rank of the residual. This crate computes
//! `E[(R^_i - R_i)(R^_j - R_j)]` exactly from the hat matrix (an `O(n^2)` sum
//! of arcsines per entry), approximately for small leverages, and empirically
//! with a seeded Monte Carlo oracle.
//!
//! ```
//! use rank_distortion::{design, exact, projection};
//!
//! let x = design::equispaced(10, 0.0, 1.0).unwrap();
//! let d = design::polynomial_design(&x, 1).unwrap();
//! let h = projection::compute_hat_matrix(&d).unwrap();
//! let m = exact::exact_matrix(&h).unwrap();
//! assert!(m.rms().iter().all(|&r| r > 0.0));
//! ```

pub mod approx;
pub mod design;
pub mod error;
pub mod exact;
pub mod oracle;
pub mod projection;
pub mod sum;

pub use approx::{ApproxReport, RmsLines};
pub use design::DesignMatrix;
pub use error::{Error, Result};
pub use exact::{ClampStats, DistortionMatrix};
pub use oracle::{RankVector, SimulationConfig, SimulationResult};
pub use projection::{HatMatrix, TieReport};
