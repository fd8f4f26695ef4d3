//! Grid case data model, case-file and phasor-file ingestion.

mod case;
mod phasor;

pub use case::{load_case, partition_indices, save_case, Branch, Bus, BusRole, GeneratorData, GridCase};
pub(crate) use phasor::format_phasor_csv;
pub use phasor::{load_phasor_csv, save_phasor_csv, PhasorKind, PhasorSeries};
