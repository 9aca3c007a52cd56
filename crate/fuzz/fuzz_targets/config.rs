#![no_main]

use libfuzzer_sys::fuzz_target;
use sumprobe_cli::config::{FileConfig, Overrides, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = toml::from_str::<FileConfig>(text) else { return };
    let _ = RunConfig::merge(file, Overrides::default());
});
