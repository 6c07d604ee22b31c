//! Learning a linear projection of noisy 3-D point clouds so that the 2-D
//! scatterplot reveals whether the cloud is an `X` or an `O`.

mod data;
mod experiment;
mod model;
mod oracle;

pub use data::{
    canonical_point, canonical_shape, generate_dataset, generate_with_rotation, random_rotation,
    Label, PointCloud, PointCloudDataset, NOISE_VARIANCE,
};
pub use experiment::{
    expected_accuracy, run_simulated_session, PhiInit, PointcloudConfig, PointcloudData,
    PointcloudSession, ShownQuery, SimulationReport,
};
pub use model::{
    orthogonality_penalty, project, project_cloud, soft_histogram, HistogramProxy,
    ProjectionEmbedding,
};
pub use oracle::{Oracle, REFERENCE_SHAPES};
