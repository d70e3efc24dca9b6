#![no_main]

use dualloop::plan::parse_call;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = parse_call(text);
});
