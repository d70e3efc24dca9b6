#![no_main]

use dualloop::agents::text::{parse_digest, parse_tags, strip_tags};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    for line in parse_digest(text) {
        let _ = line.fixture();
        let _ = line.inputs();
    }
    for tag in parse_tags(text) {
        assert_eq!(parse_tags(&tag.to_string()), vec![tag]);
    }
    let _ = strip_tags(text);
});
