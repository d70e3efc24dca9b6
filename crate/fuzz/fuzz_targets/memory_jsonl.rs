#![no_main]

use dualloop::agents::parse_jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_jsonl(text) {
        let lines: String = records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect();
        assert_eq!(parse_jsonl(&lines).unwrap(), records);
    }
});
