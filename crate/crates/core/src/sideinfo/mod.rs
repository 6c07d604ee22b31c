//! Learning linear advice for a decision maker who holds side information
//! the model never sees.

mod baseline;
mod data;
mod experiment;
mod model;

pub use baseline::{
    assisted_response, evaluate_policy, fit_machine_baseline, LinearModel, OLS_RIDGE,
};
pub use data::{generate_dataset, human_respond, switch, HumanKind, Sample, FEATURES};
pub use experiment::{
    run_table, train_mom, MomFit, SideInfoConfig, SideInfoTable, TableConfig, TableRow,
};
pub use model::{input_rows, AdviceEmbedding, SwitchProxy, INPUT_WIDTH, Z_WIDTH};
