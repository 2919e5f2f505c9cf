//! Slide rasters, tissue masking, tiling, color normalization and the
//! blue-ratio baseline scorer.

mod blue_ratio;
mod image;
mod mask;
mod reinhard;
mod resample;
mod tiling;

pub use self::blue_ratio::{blue_ratio, blue_ratio_pixel, mean_blue_ratio, rank_by_blue_ratio, top_n_by_blue_ratio, write_blue_ratio_csv};
pub use self::image::RgbImage;
pub use self::mask::{rgb_to_hue, tissue_mask, TissueMask};
pub use self::reinhard::{lab_to_rgb, reinhard_normalize, reinhard_transfer, rgb_to_lab, ColorStats};
pub use self::resample::downsample;
pub use self::tiling::{extract_tile_grid, filter_tiles, Scale, TileGrid, TileRef};
