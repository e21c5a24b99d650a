//! Synthetic scenes, portable-anymap I/O, resampling and label rendering.

mod pnm;
mod render;
mod resize;
mod scene;

pub use pnm::{
    decode_labels, decode_pnm, encode_labels, encode_pnm, read_labels, read_pnm, write_labels,
    write_pnm, BitDepth, ABSTAIN_CODE,
};
pub use render::{render_segmentation, Palette};
pub use resize::{resize, resize_labels_to, resize_to, ResizeMethod};
pub use scene::{gen_scene, LabeledImage, Layout, SceneSpec};
