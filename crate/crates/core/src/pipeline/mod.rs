//! File-level workflows built on the core modules: synthetic fixtures, JSON
//! interchange, the viewer bundle, error reports and the end-to-end demo.

pub mod bundle;
pub mod demo;
pub mod io;
pub mod preview;
pub mod report;
pub mod synth;

pub use bundle::{export_bundle, import_bundle, BundleManifest, BundleTextures, LoadedBundle};
pub use demo::{run_demo, DemoOptions, DemoSummary, OutputLock};
pub use io::{load_scans, load_texture_pack, load_weights, save_fit, save_scans, save_texture_pack, save_weights};
pub use report::{report_csv, write_report_csv, ReportRow};
pub use synth::{default_facs, procedural_template, synth_fixture, SyntheticSubject, SyntheticSubjectSpec, TemplateSpec};
