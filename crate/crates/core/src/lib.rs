pub(crate) mod binio;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod features;
pub mod imgproc;
pub mod phantom;
pub mod pipeline;
pub mod pseudolabel;
pub mod segnet;
pub mod wallgeom;

pub use error::{Error, Result};
