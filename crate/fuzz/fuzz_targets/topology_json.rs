#![no_main]

use dualloop::scheduler::DeviceTopology;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(topo) = DeviceTopology::from_json(text) {
        assert_eq!(DeviceTopology::from_json(&topo.to_json()).expect("re-parses"), topo);
    }
});
