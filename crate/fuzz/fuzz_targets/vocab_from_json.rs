#![no_main]

use libfuzzer_sys::fuzz_target;
use sumprobe::subtok::SubwordVocab;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(vocab) = SubwordVocab::from_json(text) else { return };
    for sample in ["def get_value(self):", "return x + 1", "héllo wörld", ""] {
        let seq = vocab.encode(sample);
        let _ = vocab.detokenize(&seq);
    }
});
