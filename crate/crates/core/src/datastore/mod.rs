//! Case bundles on disk, the release table, split files and campaign
//! orchestration.
//!
//! A campaign root holds one directory per passing case (`sim_XXXXX/` with
//! `manifest.json`, `history.csv` and `fields.ccf`), a `failed/` subtree for
//! screened-out cases, and `master.csv`.

mod bundle;
mod campaign;
mod ccf;
mod splits;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use bundle::{
    case_dir, decode_history, encode_history, read_bundle, read_manifest, write_bundle, write_failed_manifest,
    CaseBundle, CaseStatus, Manifest, MeshInfo, PartInfo, Seeds, FAILED_DIR, FIELDS_FILE, HISTORY_FILE,
    HISTORY_HEADER, MANIFEST_FILE,
};
pub use campaign::{
    collisions, run_campaign, AssemblyFactory, BumperFactory, CampaignOptions, CampaignReport, CaseFailure,
    PROGRESS_FILE,
};
pub use ccf::{ccf_size, decode_ccf, encode_ccf, read_ccf, write_ccf, CCF_HEADER_BYTES, CCF_MAGIC, CCF_VERSION};
pub use splits::{make_splits, SplitSet, SPLITS_FILE};
pub use table::{master_table, parse_master, read_master_csv, render_master, MasterRow, MASTER_FILE, MASTER_HEADER};

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("corrupt container at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("format: {0}")]
    Format(String),
    #[error("{} already exists", .0.display())]
    Exists(PathBuf),
    #[error("splits: {0}")]
    Splits(String),
    #[error("config: {0}")]
    Config(String),
}
