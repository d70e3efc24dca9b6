#![no_main]

use std::sync::OnceLock;

use dualloop::plan::{format_plan, parse_plan};
use dualloop::task::Catalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    let registry = CATALOG.get_or_init(Catalog::standard).registry();
    if let Ok(dag) = parse_plan(text, registry) {
        let again = parse_plan(&format_plan(&dag), registry).expect("canonical text parses");
        assert_eq!(again, dag);
    }
});
