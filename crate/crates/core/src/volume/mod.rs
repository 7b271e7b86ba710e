//! Lattice types: intensity volumes, label maps, masks, structure catalogs,
//! connected components and front-view projections.

pub mod case;
pub mod catalog;
pub mod components;
pub mod grid;
pub mod io;
pub mod projection;

pub use case::{CaseMeta, CaseRecord, Phase, Sex, StructuredReport, TumorType};
pub use catalog::{StructureCatalog, StructureEntry, StructureKind};
pub use components::{
    connected_components, count_components_2d, largest_component, ComponentLabeling, Connectivity,
};
pub use grid::{
    extract_structure_mask, BinaryMask, Dims, Label, LabelMap, Spacing, VoxelGrid, BACKGROUND,
};
pub use projection::{front_view_projection, project_overlay, Overlay, Projection2D};
