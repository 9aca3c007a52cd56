#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use sumprobe::corpus::parse_run;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_run(text, Path::new("fuzz.jsonl"));
});
