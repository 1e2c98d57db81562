//! File formats: netpbm images, CSV tables, image manifests and SVG plots.

pub mod manifest;
pub mod pnm;
pub mod svg;
pub mod tables;

pub use manifest::{Manifest, ManifestRow};
pub use pnm::{decode_pnm, encode_pnm, read_image, read_pnm, write_image, write_pnm, ImageFile, PnmError};
pub use svg::{line_chart, PlotOptions};
pub use tables::{read_rows, write_rows, ScoreRow, TableError};
