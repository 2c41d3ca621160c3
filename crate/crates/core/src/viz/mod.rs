//! PNG rendering of traces, grids and analysis figures.

mod figures;
pub mod font;
mod image;
mod montage;

pub use figures::{confusion_heatmap, contact_sheet, dream_strip, filter_mosaic};
pub use image::{gray, Rgb, RgbImage, BLACK, WHITE};
pub use montage::{
    grid_tile_origin, normalize, render_rollout_grid, render_trace_frame, render_trace_frames, ActivationRanges, GridPane,
    MontageLayout,
};
