//! Layout generation under user constraints, solved by searching the latent
//! space of a pretrained layout generator.
//!
//! The crate is organized bottom-up:
//!
//! - [`layout`] and [`io`]: boxes, labeled elements, layouts and their file format.
//! - [`metrics`]: Alignment, Overlap, Maximum IoU, FID and violation rate.
//! - [`constraints`]: beautification and relational constraints as hinge costs.
//! - [`net`]: transformer generator/discriminator forward passes, the weight
//!   container, and a seeded analytic generator for desk-scale runs.
//! - [`optim`]: the augmented-Lagrangian outer loop over latent codes with
//!   CMA-ES or Adam as the inner optimizer.

pub mod constraints;
pub mod error;
pub mod io;
pub mod layout;
pub mod metrics;
pub mod net;
pub mod optim;

pub use error::{Error, Result};
