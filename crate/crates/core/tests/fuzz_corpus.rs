//! Replays the checked-in fuzz corpus through the same properties the fuzz
//! targets assert, so regressions show up without a fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use idr_core::config::RunConfig;
use idr_core::data::{parse_csv, IngestSchema};
use idr_core::domain::{default_appliance_table, TimeGrid};
use idr_core::dqn::AgentCheckpoint;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn csv_corpus() {
    let table = default_appliance_table();
    for (name, bytes) in corpus("parse_csv") {
        let parsed = parse_csv(&bytes[..], &IngestSchema::default(), &table, TimeGrid::default());
        match parsed {
            Ok(ds) => {
                assert!(name.starts_with("valid"), "{name} unexpectedly parsed");
                ds.validate().unwrap();
            }
            Err(e) => assert!(!name.starts_with("valid"), "{name}: {e}"),
        }
    }
}

#[test]
fn config_corpus() {
    for (name, bytes) in corpus("config_toml") {
        let text = String::from_utf8(bytes).unwrap();
        match RunConfig::from_toml(&text) {
            Ok(config) => {
                let again = RunConfig::from_toml(&config.to_toml()).unwrap();
                assert_eq!(again.hash(), config.hash(), "{name}");
            }
            Err(e) => assert!(
                ["unknown_key.toml", "bad_value.toml", "appliances.toml"].contains(&name.as_str()),
                "{name}: {e}"
            ),
        }
    }
}

#[test]
fn checkpoint_corpus() {
    for (name, bytes) in corpus("checkpoint_decode") {
        match AgentCheckpoint::decode(&bytes) {
            Ok(ck) => {
                assert!(name.starts_with("valid"), "{name} unexpectedly decoded");
                assert_eq!(ck.encode(), bytes);
            }
            Err(e) => assert!(!name.starts_with("valid"), "{name}: {e}"),
        }
    }
}
