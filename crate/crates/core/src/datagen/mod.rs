//! Synthetic data: the noisy Lorenz system, receptive-field spike trains and toy sequences.

pub mod dataset;
pub mod lorenz;
pub mod spikes;
pub mod toy;

pub use dataset::{derive_seed, make_lorenz_dataset, DatasetManifest, LorenzDataset, LorenzDatasetConfig};
pub use lorenz::{column_range, normalize_minmax, simulate_lorenz, simulate_lorenz_from, LorenzParams, NoiseMode};
pub use spikes::{
    draw_receptive_fields, intensity, simulate_spikes, spike_probability, HistoryMode, ReceptiveField,
    SpikeSimConfig, WidthPrior,
};
