//! Decomposition of mixed-mode oscillation return maps.
//!
//! The crate computes singular-limit flow maps of the Koper model, fits them
//! with affine and quadratic pieces, analyses the composed global return map,
//! and simulates local-global hybrid models in which small oscillations come
//! from a folded-node or singular-Hopf normal form and large excursions are
//! replaced by an explicit return map.

pub mod integrator;
pub mod koper;
pub mod singular_maps;
pub mod map_fit;
pub mod mmo_analysis;
pub mod hybrid;
pub mod io;
