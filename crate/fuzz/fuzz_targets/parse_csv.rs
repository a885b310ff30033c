#![no_main]

use idr_core::data::{parse_csv, IngestSchema};
use idr_core::domain::{default_appliance_table, TimeGrid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let table = default_appliance_table();
    if let Ok(ds) = parse_csv(data, &IngestSchema::default(), &table, TimeGrid::default()) {
        ds.validate().expect("parsed dataset validates");
    }
});
