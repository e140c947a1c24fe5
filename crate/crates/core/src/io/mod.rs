//! Configuration, persistence, and plot emission.

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod rundir;
pub mod svg;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ExperimentConfig, GridConfig, InitialState, SystemConfig};
pub use csvio::CsvTable;
pub use rundir::{create_run_dir, file_sha256, tool_version, write_metadata, RunMetadata};
pub use svg::{render_line_plot, Series};
