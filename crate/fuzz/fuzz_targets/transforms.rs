#![no_main]

use libfuzzer_sys::fuzz_target;
use sumprobe::corpus::Example;
use sumprobe::pylex::lex;
use sumprobe::transform::{apply_variant, deobfuscate_function_names, strip_comments, Variant};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(tokens) = lex(src) else { return };
    let stripped = strip_comments(&tokens).text();
    let ex = Example::new("fuzz", src, "fuzz");
    for v in Variant::ALL {
        let Ok(out) = apply_variant(&ex, v, Some("fuzz_donor")) else { continue };
        let relexed = lex(&out.code).expect("transformed code must lex");
        if v == Variant::ObfuscatedNames {
            assert_eq!(deobfuscate_function_names(&relexed).unwrap().text(), stripped);
        }
    }
});
