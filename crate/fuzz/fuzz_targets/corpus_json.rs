#![no_main]

use std::sync::OnceLock;

use dualloop::task::{Catalog, Corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    let catalog = CATALOG.get_or_init(Catalog::standard);
    if let Ok(corpus) = Corpus::from_json(text, catalog) {
        assert_eq!(Corpus::from_json(&corpus.to_json(), catalog).expect("re-parses"), corpus);
    }
});
