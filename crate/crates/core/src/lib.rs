//! Missing-data-aware multilabel classification of irregular clinical time
//! series.
//!
//! Pipeline: [`ingest`] discretizes irregular observation streams into hourly
//! grids with observation masks, [`impute`] fills gaps and appends
//! missingness indicators, [`features`] builds fixed-width inputs for the
//! feed-forward baselines, [`nn`] holds the LSTM / MLP / logistic models and
//! their trainer, [`metrics`] scores multilabel predictions, [`synth`]
//! generates episodes with label-dependent missingness, and [`experiment`]
//! wires the pieces into reproducible train/evaluate runs.

pub mod experiment;
pub mod features;
pub mod impute;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod synth;
