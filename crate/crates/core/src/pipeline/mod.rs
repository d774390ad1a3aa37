//! Config-driven stages: trace, build, evaluate and export, with a
//! manifest chaining every artifact to its inputs.

mod config;
mod export;
mod manifest;
mod stages;

pub use config::{
    sha256_hex, BlocksConfig, CorpusConfig, EvalConfig, ExportConfig, FieldConfig, FieldSource,
    NetworkSpec, NetworksConfig, RunConfig, SweepConfig,
};
pub use export::{decimate, label_streamline, ui_bundle, UiBundle, UiEdge, UiNode, UiStreamline};
pub use manifest::{
    hash_file, CorpusEntry, FileEntry, Manifest, NetworkEntry, ReportEntry, MANIFEST_FILE,
};
pub use stages::{Corpus, Pipeline, SweepSummary};
