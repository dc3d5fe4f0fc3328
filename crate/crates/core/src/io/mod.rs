//! File formats: binary volumes, JSON manifests, key=value configs and
//! comma-separated result tables.

pub mod kv;
pub mod manifest;
pub mod table;
pub mod volume_file;

pub use kv::{profile_from_kv, profile_to_kv, synth_config_from_kv, synth_config_to_kv, KeyValues};
pub use manifest::{DatasetManifest, ManifestEntry, MANIFEST_VERSION};
pub use table::{load_results, read_results, save_results, write_results, ResultRow, RESULTS_HEADER};
pub use volume_file::{decode_volume, encode_volume, read_volume, write_volume, VOLUME_MAGIC, VOLUME_VERSION};
