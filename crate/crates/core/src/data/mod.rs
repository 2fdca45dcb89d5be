//! Data handling: schema configs, CSV tables, synthetic generation, and
//! baseline predictors.

pub mod baseline;
pub mod schema;
pub mod synth;
pub mod table;

pub use baseline::{train_baseline, BaselineKind, BaselineModel};
pub use schema::{DatasetSchema, GroupRole};
pub use synth::{generate_synth, SynthGroup, SynthOutput, SynthSpec};
pub use table::{load_csv, load_table, resolve, save_table, LoadedCsv, TabularData};
