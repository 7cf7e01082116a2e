#![no_main]

use libfuzzer_sys::fuzz_target;
use rotpeh::scenario::load_scenario_str;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(loaded) = load_scenario_str(text, false) else {
        return;
    };
    let canonical = loaded.value.to_toml();
    let again = load_scenario_str(&canonical, true)
        .expect("canonical text reloads")
        .value;
    assert_eq!(again, loaded.value);
    assert_eq!(again.to_toml(), canonical);
});
