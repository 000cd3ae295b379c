//! Dataset ingestion: layouts, the RGB ground-truth codec, preprocessing,
//! resizing and padding rules.

mod gt_codec;
pub mod image_io;
mod layout;
mod mask;
mod preprocess;
mod resize;
mod roi;

pub use gt_codec::{decode_gt_image, decode_gt_rgb, encode_gt_rgb, encode_masks, GtMaps, GT_THRESHOLD};
pub use layout::{
    load_dataset, parse_key_values, Dataset, DatasetKind, DatasetLayout, FundusSample, LoadOptions, Partition,
    SplitRule, MANIFEST_NAME,
};
pub use mask::Mask;
pub use preprocess::{preprocess, PreprocessConfig};
pub use resize::{
    crop, pad_mask, pad_mask_with_false, pad_to_multiple, resize_bilinear, resize_nearest, resize_policy,
    width_preserving_aspect, CropSpec, ResizeSpec, HRF_WIDTH, LES_AV_WIDTH,
};
pub use roi::{fill_holes, largest_component, synthesize_roi};
