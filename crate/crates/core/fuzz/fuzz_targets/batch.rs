#![no_main]

use libfuzzer_sys::fuzz_target;
use rotpeh::scenario::{load_batch_str, load_scenario_str};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(batch) = load_batch_str(text, false) else {
        return;
    };
    for s in &batch.value.scenarios {
        let again = load_scenario_str(&s.to_toml(), true)
            .expect("canonical text reloads")
            .value;
        assert_eq!(&again, s);
    }
});
