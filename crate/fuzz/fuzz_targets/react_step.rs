#![no_main]

use dualloop::agents::text::ReactStep;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = ReactStep::parse(text);
});
