//! Asymmetric conditional GAN for fine-grained portrait editing.
//!
//! The generator sees user-editable conditions (noisy edges, a color palette,
//! light and shadow masks) while the discriminators see their informative
//! counterparts (clean edges and a positional color map), plus a
//! region-weighted discriminator fed face and eye crops.

pub mod classes;
pub mod conditioning;
pub mod dataset;
pub mod editing;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod net;
pub mod noising;
pub mod objectives;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
