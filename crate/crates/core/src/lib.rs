pub mod classify;
pub mod drivers;
pub mod error;
pub mod fixture;
pub mod geoservice;
pub mod geodesy;
pub mod inundation;
pub mod landchange;
pub mod pipeline;
pub mod raster;

pub use error::{Error, ErrorKind, Result};
