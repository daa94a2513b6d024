//! Procedural multi-level structures, scattered initial scenes, partial
//! observations and dataset files.

pub mod dataset;
pub mod generate;
pub mod observe;
pub mod scene;

pub use dataset::{generate_dataset, load_dataset, save_dataset, DatasetEntry, Manifest};
pub use generate::{generate_structure, scatter_initial, GenSpec};
pub use observe::{observe, Observation, ObservationConfig};
pub use scene::{Bounds, Scene, SceneObject};
