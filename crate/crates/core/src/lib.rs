//! Interest-point patch features with Delaunay edge pairing, three
//! classifiers, and a repeated-split evaluation harness.
//!
//! Pipeline: [`image_io`] loads and resizes grayscale images,
//! [`corner_detect`] finds Shi-Tomasi corners, [`patch_descriptor`] turns
//! the 40x40 patch around each corner into a vector (or imports vectors from
//! a PFV1 file), [`triangulation`] connects the corners, [`pairing`] adds one
//! averaged row per edge, and [`classifiers`] and [`evaluation`] score the
//! resulting feature maps.

pub mod classifiers;
pub mod corner_detect;
pub mod evaluation;
pub mod image_io;
pub mod pairing;
pub mod patch_descriptor;
pub mod pfv;
pub mod pipeline;
pub mod synthetic;
pub mod triangulation;
