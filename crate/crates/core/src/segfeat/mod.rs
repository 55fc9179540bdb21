//! Segment-level features: channel probabilities summarized over seven scalp
//! regions plus frontal correlation features, 74 values per segment.

mod features;
mod regions;
mod stats;

pub use features::{
    assemble_features, build_feature_vector, feature_names, FeatureRow, FeatureTable,
    SegmentFeatureVector, SegmentLabels, CORRELATION_NAMES, N_FEATURES, N_REGION_FEATURES,
    SEGMENT_POSITIVE_COVERAGE,
};
pub use regions::{map_channels_to_regions, normalize_channel_name, Region, RegionMap};
pub use stats::{
    correlation_features, lagged_correlation, max_autocorrelation, max_cross_correlation,
    region_statistics, AUTO_LAGS, CROSS_MAX_LAG, N_STATS, STAT_NAMES,
};
