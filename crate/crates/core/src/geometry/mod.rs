//! Voxel execution of CAD trees, surface sampling and per-token geometric
//! descriptors.

mod descriptors;
mod execute;
pub mod export;
mod sample;
mod voxel;

use thiserror::Error;

use crate::cad::CadError;

pub use descriptors::{
    descriptors, descriptors_from_origins, token_features, tree_context, GeomDescriptors, TreeContext,
    COLLINEAR_RADIUS, MAX_SIBLING, PARENT_CLASSES,
};
pub use execute::{combine, execute, rotation, MAX_RESOLUTION, MIN_RESOLUTION};
pub use sample::{sample_points, PointCloud};
pub use voxel::{Aabb, VoxelGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("resolution {0} outside [16, 256]")]
    Resolution(usize),
    #[error("program executes to an empty (non-watertight) solid")]
    EmptySolid,
    #[error("grid has no occupied cells")]
    EmptyGrid,
    #[error("tree and sequence disagree: {0}")]
    Mismatch(String),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Cad(#[from] CadError),
}
