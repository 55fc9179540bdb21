//! Recording and annotation formats, the synthetic corpus generator, and the
//! versioned model bundle.

mod annotations;
mod bundle;
mod recording;
mod synth;

pub use annotations::{
    covered_time, load_annotations, parse_annotations, write_annotations, ArtifactEvent,
    ArtifactType, ALL_CHANNELS,
};
pub use bundle::{
    load_model, save_model, BundleKind, ModelBundle, NamedTensor, BUNDLE_MAGIC, BUNDLE_VERSION,
};
pub use recording::{
    decode_binary, encode_binary, load_recording, parse_csv, save_recording_binary,
    save_recording_csv, EegRecording, SampleWidth, RECORDING_MAGIC, RECORDING_VERSION,
};
pub use synth::{
    generate_synthetic_corpus, synthesize_recording, CorpusEntry, EventCounts, SynthSpec,
    STANDARD_MONTAGE,
};
