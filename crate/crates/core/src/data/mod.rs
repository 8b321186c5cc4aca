//! Motion corpora: file format, windowing, and synthetic generators.

mod motion;
mod synth;
mod windows;

pub use motion::{
    decimate, load_sequences, motion_files, preprocess, ColumnMask, MotionFormat, MotionSequence,
    Preprocess, Representation, MASK_MAGIC, MOTION_EXTENSION, MOTION_MAGIC, MOTION_VERSION,
};
pub use synth::{synth_corpus, synth_motion, SynthKind, SynthOptions};
pub use windows::{make_windows, split_sequences, Split, Window, WindowedDataset};
