//! Ingestion, standardization, splitting, windowing and synthetic scenarios.

mod csv_io;
mod frame;
mod split;
mod standardize;
mod synthetic;
mod window;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvSchema, LabelVocabulary};
pub use frame::{Label, SeriesFrame};
pub use split::{split, split_lengths, SplitFractions, Splits};
pub use standardize::{standardize, StandardizationStats, STD_FLOOR};
pub use synthetic::{
    generate_synthetic, AttackKind, AttackScript, ChannelArchetype, SyntheticSpec,
};
pub use window::{make_windows, WindowedDataset};
