//! Files on disk: weight files, datasets, raster maps and run configuration.

mod config;
mod dataset;
mod raster;
mod weightfile;

pub use config::RunConfig;
pub use dataset::{list_pngs, load_dataset, scan_dataset, DatasetEntry, DatasetMode, Sample};
pub use raster::{
    decode_raw_f32, encode_raw_f32, read_gray_png, read_mask_png, read_raw_f32, write_mask_png, write_png16,
    write_raw_f32,
};
pub use weightfile::{decode, encode, load_weights, save_weights, DTYPE_F32, MAGIC, VERSION};
