//! Rays, sampling, gear-driven point splitting and volume compositing.

mod camera;
mod composite;
mod layers;
mod march;
mod sampling;

pub use camera::{project_camera_point, Camera, Ray};
pub use composite::{composite, composite_sigma_grad, estimate_depth, Composite};
pub use layers::{gear_color, render_layers, render_pixel, Layer, LayerSet, PixelRender, RenderedLayers, GEAR_PALETTE};
pub use march::{MarchSettings, RayOutput, RayWorkspace};
pub use sampling::{gear_split, gear_split_into, sample_uniform, sample_uniform_into, SampleSet};
