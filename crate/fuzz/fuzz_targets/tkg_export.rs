#![no_main]

use libfuzzer_sys::fuzz_target;
use timegraphs::graph::TemporalKnowledgeGraph;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = TemporalKnowledgeGraph::from_json(text) {
        let again = g.to_json().expect("accepted graphs export");
        assert_eq!(TemporalKnowledgeGraph::from_json(&again).expect("re-import").to_json().unwrap(), again);
    }
});
