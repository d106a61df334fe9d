pub mod anchors;
pub mod eikonal;
pub mod error;
pub mod forward_model;
pub mod graph;
pub mod grid;
pub mod io;
pub mod maxcut;
pub mod pipeline;
pub mod reconstruct;
pub mod scenes;
pub mod singular;

pub use error::{Result, SfsError};
pub use forward_model::{
    gradient, make_surface, quantize_8bit, render_lambertian, GradientField, HeightField,
    IrradianceImage, SurfaceKind,
};
pub use grid::{Field, GridSpec, Pixel};
