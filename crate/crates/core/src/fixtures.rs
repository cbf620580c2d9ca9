//! Bundled datasets.
//!
//! `temp_table` and `updated_table_smp` are the small worked-example
//! relations. `hospital` and `census` are deterministic synthetic fragments:
//! the hospital table groups patients so that every combination of
//! `(dob, gender, city, marital_status, status)` occurs at least twice, with
//! Cork and Limerick holding ten groups of exactly two that the hospital
//! scenario mutates. The census fragment has 995 rows shaped like the Adult
//! dataset and none of the five planted attack records.

use crate::engine::Table;

pub const TEMP_TABLE_CSV: &str = include_str!("../fixtures/temp_table.csv");
pub const UPDATED_TABLE_SMP_CSV: &str = include_str!("../fixtures/updated_table_smp.csv");
pub const HOSPITAL_CSV: &str = include_str!("../fixtures/hospital.csv");
pub const CENSUS_CSV: &str = include_str!("../fixtures/census.csv");

fn bundled(csv: &str, name: &str) -> Table {
    Table::from_csv_reader(csv.as_bytes(), name).expect("bundled fixture is well-formed")
}

pub fn temp_table() -> Table {
    bundled(TEMP_TABLE_CSV, "temp_table")
}

pub fn updated_table_smp() -> Table {
    bundled(UPDATED_TABLE_SMP_CSV, "updated_table_smp")
}

/// Hospital fragment including the `country` column that the scenario
/// splits off and later re-adds as a new attribute.
pub fn hospital() -> Table {
    bundled(HOSPITAL_CSV, "hospitaldb")
}

pub fn census() -> Table {
    bundled(CENSUS_CSV, "census")
}
