//! Data ingestion, embedded reference data, run configuration, reports and
//! the command-line workflows.

mod agency;
mod config;
mod embedded;
mod report;
mod reproduce;
mod runs;
mod tabular;

pub use agency::{synthetic_agency, Agency, AgencyDesign, AgencyState};
pub use config::{
    ChainSection, DataSection, EstimatorSection, EvaluationSection, Method, ModelKind, PriorSection,
    ProposalChoice, PsiChoice, RunConfig, SimulationSection,
};
pub use embedded::{
    newcomb, phones, verify_embedded, EmbeddedDataset, Phones, BELGIAN_PHONES, EMBEDDED, NEWCOMB,
    PHONES_YEAR_CENTRE,
};
pub use report::{
    emit_report, group_label, kl_summary, tlm_rows, write_report_csv, Report, ReportFormat, ReportRow, RunStamp,
};
pub use reproduce::{newcomb_prior, phones_prior, reproduce, PHONES_PRIOR_ROWS, REPRODUCTIONS};
pub use runs::{evaluate, fit, selftest, selftest_passed, simulate, ModelSpec, RunOutput, TLM_METHODS};
pub use tabular::{load_csv, read_csv, write_dataset, CsvSchema, LoadedData};
