//! Time-tag ingestion: PTAG/CSV parsing and reduction of click records to
//! counts tables through sync-referenced detection windows.

mod format;
mod reduce;

pub use format::{
    create_ptag, read_csv_tags, write_csv_tags, TagFileHeader, TagReader, TagSource, TagWriter,
    HEADER_LEN, MAGIC, RECORD_LEN, VERSION,
};
pub use reduce::{
    g2_from_counts, g2_from_table, window_reduce, ReduceReport, SyncMode, WindowReducer,
    WindowSpec,
};
