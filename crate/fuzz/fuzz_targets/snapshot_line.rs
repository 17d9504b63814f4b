#![no_main]

use libfuzzer_sys::fuzz_target;
use timegraphs::graph::wire::{parse_sequences, parse_snapshot_line, snapshot_to_line};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = parse_snapshot_line(text, 1) {
        // whatever parses must survive a write/read cycle unchanged
        let line = snapshot_to_line(&s).expect("serializable");
        assert_eq!(parse_snapshot_line(&line, 1).expect("reparse"), s);
    }
    let _ = parse_sequences(text);
});
