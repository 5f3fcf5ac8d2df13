//! Grayscale tumour-detection pipeline: preprocessing, Otsu thresholding,
//! marker-based watershed and seeded region growing, and a Mamdani fuzzy
//! inference system that turns region size and global threshold into a
//! tumour/normal verdict.
//!
//! The crate is organised around plain value types ([`raster::GrayImage`],
//! [`raster::BinaryMask`], [`raster::LabelMap`]) and pure functions over
//! them, so every stage can be tested in isolation and images can be
//! processed concurrently without shared state.

pub mod dataset;
pub mod eval;
pub mod fuzzy;
pub mod morphology;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod segmentation;
pub mod threshold;

pub use raster::{BinaryMask, GrayImage, LabelMap};
