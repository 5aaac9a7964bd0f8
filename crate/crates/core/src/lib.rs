pub mod dataset;
pub mod raster;
pub mod reward;
pub mod service;
pub mod synthesis;
pub mod taskgen;
pub mod tools;
pub mod trajectory;
