#![no_main]

use dualloop::agents::text::{format_decomposition, parse_decomposition};
use libfuzzer_sys::fuzz_target;

const ROLES: [&str; 5] = [
    "Video-Agent",
    "Keyframe-Agent",
    "Meteorology-Agent",
    "Map-Agent",
    "Report-Agent",
];

fuzz_target!(|text: &str| {
    if let Ok(lines) = parse_decomposition(text, &ROLES) {
        let again = parse_decomposition(&format_decomposition(&lines), &ROLES).expect("formatted text parses");
        assert_eq!(again, lines);
    }
});
