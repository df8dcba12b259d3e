//! Antibody–antigen assay datasets: domain types, ingestion, binarization
//! and descriptive statistics.

mod binarize;
mod io;
mod summary;
mod types;

pub use binarize::{
    binarize, binarize_elisa, binarize_hai, ELISA_RANGE, ELISA_THRESHOLD, HAI_RANGE, HAI_THRESHOLD,
};
pub use io::{
    load_dataset, parse_assay_csv, parse_fasta, read_antibody_fasta, read_antigen_fasta, save_dataset,
    write_antibody_fasta, write_antigen_fasta, write_assay_csv, DatasetFormat, FastaRecord, ANTIBODY_FASTA,
    ANTIGEN_FASTA, ASSAY_CSV,
};
pub use summary::{characteristic_value, summarize, CHARACTERISTICS, CategoryRow, CharacteristicSummary, MeanStd, SummaryTable};
pub use types::*;
