#![no_main]

use libfuzzer_sys::fuzz_target;
use timegraphs::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = RunConfig::from_json(text) {
        let full = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&full).expect("filled-in config reparses"), c);
    }
});
