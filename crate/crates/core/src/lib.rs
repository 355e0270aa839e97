//! Parametric finite elements for geometric flows of triangulated surfaces.
//!
//! Mean curvature flow, surface diffusion and solid-state dewetting with the
//! Dziuk, BGN, MDR and dual-MDR schemes. The dual-MDR schemes are
//! unconditionally energy stable and keep meshes well shaped through large
//! deformations.

pub mod assembly;
pub mod cli;
pub mod diagnostics;
pub mod mesh;
pub mod schemes;
pub mod solver;
pub mod verify;
