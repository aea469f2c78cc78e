//! Configuration-driven end-to-end runs.

mod config;
pub mod figures;
mod run;
pub mod synthetic;

pub use config::{
    load_config, parse_config, validate_config, AutoKeyword, BackendKind, BackendSection, CompositeSection,
    CorpusSection, DataSection, EntityMode, EstimatorChoice, Finding, LoadedConfig, MaskingSection, NwLagSetting,
    RegressionSection, RunConfig, VarSection,
};
pub use run::{
    config_hash, estimate, make_backend, mask_corpus, run_pipeline, sales_column, score_column_name,
    write_mask_reports, Clock, NamedResult, RunError, RunManifest, RunOptions, RunReport, Stage, StageRecord,
    StageStatus, MANIFEST_FILE,
};

use sha2::{Digest, Sha256};

/// Independent seed for a named stage, derived from the run seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let d = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(stage.as_bytes()).finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
