//! Measured and synthetic datasets, multi-user sample construction, and splits.

mod measurements;
mod samples;
mod split;
mod synthetic;

pub use measurements::{
    load_measurements, load_measurements_with, sidecar_path, write_measurements, LoadOptions, MeasurementMeta,
    MeasurementSet, CSI_HEADER,
};
pub use samples::{
    binomial, build_four_user_samples, build_two_user_pairs, materialize, sample_combinations, select_top_by_strength,
    SampleSet,
};
pub use split::{split, SplitManifest, DEFAULT_FRACTIONS};
pub use synthetic::{
    generate_synthetic_dataset, load_channel_set, mean_entry_power, rescale, write_channel_set, ChannelSetMeta,
    SyntheticConfig, CHANNEL_SET_HEADER,
};
