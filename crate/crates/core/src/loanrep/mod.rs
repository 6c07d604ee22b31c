//! Loan applications rendered as avatars whose expressions steer a loan
//! officer towards the right decision.

mod analysis;
mod data;
mod experiment;
mod model;
mod pretrain;
mod respondent;

pub use analysis::{
    knee_index, ridge_analysis, shuffle_within_predictions, RidgeReport, RIDGE_LAMBDAS,
};
pub use data::{
    ingest_loans, ingest_reader, parse_numeric, prepare, resolve_status, synth_loans, IngestReport,
    LoanMatrix, LoanRecord, LoanSplit, LoanTable, CATEGORICAL_COLUMNS, NUMERIC, NUMERIC_COLUMNS,
};
pub use experiment::{
    alpha_sweep, export_x, export_z, fit_logistic, train_loans, AlphaChoice, AlphaPoint,
    EmbedderConfig, LoanConfig, LoanReport, LoanRun, LoanSource, XRecord, ZRecord, ALPHA_GRID,
};
pub use model::{
    avatar_proxy, channel_index, constraint_penalty, distinct_representations, reconstruction_loss,
    AvatarEmbedding, Channel, ChannelRange, CHANNELS, HAPPINESS, HAPPY_SURPRISE, INCOMPATIBLE,
    SADNESS, SAD_SURPRISE, Z_DIM,
};
pub use pretrain::{
    default_marginals, levels, pretrain_embedding, Marginal, PretrainConfig, PretrainReport,
    TANH_MARGIN,
};
pub use respondent::SimulatedRespondent;
