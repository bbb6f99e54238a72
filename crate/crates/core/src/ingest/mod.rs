//! Loss-record ingestion: CSV parsing with deduplication, geographic
//! normalization, and a seeded synthetic record generator.

mod geo;
mod parse;
mod record;
mod synth;

pub use geo::{normalize_geo, GeoIndex, UnmatchedPolicy};
pub use parse::{
    parse_date, parse_records, parse_records_with, write_records, CorrectionTable, IngestReport,
    ParseOptions, Schema, UnparsableRow, DATE_FORMATS, RECORD_COLUMNS,
};
pub use record::{
    normalize_key, Category, LossRecord, RecordId, Status, COVERAGE_END, COVERAGE_START,
};
pub use synth::{generate_synthetic, Profile, Regime, SYNTHETIC_LOCATIONS};
