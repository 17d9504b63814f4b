#![no_main]

use libfuzzer_sys::fuzz_target;
use timegraphs::classifier::Classifier;
use timegraphs::event_model::EventModel;
use timegraphs::model::ModelBundle;
use timegraphs::numerics::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(ck) = Checkpoint::from_json(text) else {
        return;
    };
    let _ = ModelBundle::from_checkpoint(&ck);
    let _ = EventModel::from_checkpoint(&ck);
    let _ = Classifier::from_checkpoint(&ck);
});
