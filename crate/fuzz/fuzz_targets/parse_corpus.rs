#![no_main]

use libfuzzer_sys::fuzz_target;
use sumprobe::corpus::{filter_example, parse_corpus, FilterConfig};

fuzz_target!(|data: &[u8]| {
    let load = parse_corpus(data, "fuzz");
    for ex in &load.examples {
        let _ = filter_example(ex, &FilterConfig::default());
        // Written lines must read back as the same example.
        let again = parse_corpus(ex.to_json_line().as_bytes(), "fuzz");
        assert_eq!(again.examples.as_slice(), std::slice::from_ref(ex));
    }
});
