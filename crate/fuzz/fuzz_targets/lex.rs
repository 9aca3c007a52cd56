#![no_main]

use libfuzzer_sys::fuzz_target;
use sumprobe::pylex::{classify_roles, lex, signature_span};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(tokens) = lex(src) else { return };
    assert_eq!(tokens.text(), src);
    let roles = classify_roles(&tokens);
    assert_eq!(roles.len(), tokens.len());
    if let Ok(span) = signature_span(&tokens) {
        assert!(span.start <= span.end && span.end <= src.len());
        let _ = span.text(src);
    }
});
