#![no_main]

use libfuzzer_sys::fuzz_target;
use sumprobe::llmgen::{parse_chat_response, postprocess};

fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else { return };
    if let Ok(c) = parse_chat_response(body) {
        let _ = postprocess(&c.text);
    }
    let _ = postprocess(body);
});
