//! Debris segmentation toolkit for post-storm aerial RGB imagery.
//!
//! The crate covers the full workflow from raw georeferenced rasters to
//! regional multi-class debris maps:
//!
//! * [`geotile`] — constant-ground-resolution tiling of georeferenced rasters
//!   and seamless mosaicking of per-tile predictions.
//! * [`annotation`] — multi-annotator dense labels, ceiling-of-mean consensus
//!   aggregation, and event-held-out dataset manifests.
//! * [`promptcraft`] — engineered visual prompts (background blur + darken)
//!   and the per-density prompt pools used during fine-tuning.
//! * [`segmodel`] — the frozen encoder interface, the trainable transformer
//!   decoder, conditional-embedding interpolation, and multi-class assembly.
//! * [`trainer`] — the fine-tuning harness: batch sampling, binary
//!   cross-entropy, cosine learning-rate schedule, checkpoint selection.
//! * [`evalsuite`] — confusion counts, Dice/IoU/precision/recall, and
//!   subset-stratified reports.
//! * [`cli`] — the pipeline subcommands (`tile`, `aggregate`, `engineer`,
//!   `train`, `infer`, `mosaic`, `evaluate`) behind a single config file.
//!
//! Runnable walkthroughs for each capability live under `examples/`; start
//! with `cargo run --example tiles_and_mosaics`.

pub mod annotation;
pub mod autodiff;
pub mod cli;
pub mod evalsuite;
pub mod geotile;
pub mod promptcraft;
pub mod segmodel;
pub mod synthetic;
pub mod trainer;
