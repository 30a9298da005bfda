//! Contact-centric hand-object interaction denoising.
//!
//! The crate is organised bottom-up:
//!
//! - [`scene`]: kinematic hand, analytic objects, synthetic clips, noise.
//! - [`rep`]: the contact-centric representation (canonical hand trajectory,
//!   spatial relations, temporal relations) and its inverses.
//! - [`diffusion`]: the DDPM core and a small time-conditioned denoiser.
//! - [`pipeline`]: the three-stage progressive denoiser and hand fitting.
//! - [`metrics`]: evaluation metrics.
//! - [`io`]: atomic file writes.

pub mod diffusion;
pub mod error;
pub mod io;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod rep;
pub mod scene;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    struct Overview;
    #[doc = include_str!("../../../book/src/scenes.md")]
    struct Scenes;
    #[doc = include_str!("../../../book/src/representation.md")]
    struct Representation;
    #[doc = include_str!("../../../book/src/diffusion.md")]
    struct Diffusion;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
