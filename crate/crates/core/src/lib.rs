//! Unrolled sparse recovery for multi-baseline SAR tomography.
//!
//! A pixel observed by `N` acquisitions gives a complex vector
//! `g = R γ + ε`, where the columns of the steering matrix `R` are complex
//! exponentials over an elevation grid of `L` nodes and `γ` holds the
//! reflectivity profile, nonzero at one or two scatterers. The crate covers
//! the whole chain:
//!
//! - [`geometry`]: baselines, elevation grid, steering matrix.
//! - [`simulation`]: seeded scenes, noisy measurements and datasets.
//! - [`solvers`]: ISTA, FISTA and a ridge baseline for the LASSO problem.
//! - [`network`]: the unrolled network with weight coupling, support
//!   selection and soft or piecewise-linear shrinkage.
//! - [`training`]: hand-derived gradients, Adam and the training loop.
//! - [`estimation`]: profile cleaning, least-squares refit, order selection
//!   and the Cramér–Rao bound.
//! - [`evaluation`]: Monte Carlo detection-rate suites.
//! - [`config`], [`formats`], [`cli`]: run configuration, file formats and
//!   the `tomonet` command line.
//!
//! ```
//! use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
//! use tomonet::network::{init_network, NetworkConfig};
//! use tomonet::simulation::{Scatterer, Scene};
//!
//! let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
//! let scene = Scene::single(Scatterer::new(60.0, 1.0, 0.0));
//! let g = r.apply(&tomonet::simulation::scene_to_profile(&scene, r.grid())?);
//! let net = init_network(&r, NetworkConfig::default(), 0.1)?;
//! let profile = net.forward(&g)?;
//! assert_eq!(profile.len(), r.cols());
//! # Ok::<(), tomonet::Error>(())
//! ```

// Negated comparisons such as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod network;
pub mod simulation;
pub mod solvers;
pub mod training;

pub use error::{Error, Result};
