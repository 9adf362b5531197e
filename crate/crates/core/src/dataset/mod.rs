//! NSL-KDD ingestion: parsing, 5-class label mapping, one-hot encoding and
//! standardization, plus the portable matrix file.

mod encoding;
mod matrix;
mod records;
mod schema;
mod stats;

pub use encoding::{fit_encoding, transform, CategoricalVocab, ColumnStats, Encoding, UnseenReport};
pub use matrix::{stratified_split, stratified_subsample, FeatureGroup, FeatureMatrix, GroupKind};
pub use records::{load_nslkdd, load_nslkdd_with, parse_nslkdd, AttackMap, Record, RecordSet, SplitTag};
pub use schema::{numeric_feature_names, TrafficClass, BINARY_CLASS_NAMES, CATEGORICAL_FIELDS, FEATURE_NAMES, NUMERIC_COUNT};
pub use stats::{class_stats, ClassStats};
