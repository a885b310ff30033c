#![no_main]

use idr_core::dqn::AgentCheckpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = AgentCheckpoint::decode(data) {
        assert_eq!(ck.encode(), data);
    }
});
