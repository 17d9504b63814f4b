#![no_main]

use libfuzzer_sys::fuzz_target;
use timegraphs::datasets::parse_labels;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let categories = ["converge".to_string(), "disperse".to_string(), "pass".to_string()];
    if let Ok(rows) = parse_labels(text, &categories, &[4, 0, 9]) {
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().flatten().flatten().all(|&y| y == 0.0 || y == 1.0));
    }
});
