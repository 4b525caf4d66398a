//! File formats: scene containers, view directories, PFM, manifests, mask
//! text and PNG previews.

mod container;
mod manifest;
mod mask_text;
mod pfm;
mod png;
mod views;

pub use container::{load_scene, save_scene, DISPARITY_KEY, LIGHTFIELD_KEY};
pub(crate) use container::{has_attr, read_str_attr, write_str_attr};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use mask_text::{format_mask_text, parse_mask_text};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, read_pfm_gray, write_pfm_gray, Pfm};
pub use png::{read_image, write_gray16, write_gray8, write_rgb8};
pub use views::{load_views_dir, save_views_dir, view_file_name, DISPARITY_FILE};
