//! Scene representation: shared spatial planes, per-gear spatio-temporal
//! planes, the continuous gear field and the MLP heads.

mod config;
mod model;

pub use config::{temporal_resolution, ModelConfig, SplitStrategy};
pub use model::{
    encode_direction, encode_direction_into, project_gear, FeatureScratch, FieldSample, GearedModel, ParamGroup, SpaceTimePoint, BRANCH_AXES,
};
