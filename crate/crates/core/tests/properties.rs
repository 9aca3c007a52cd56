use std::collections::HashSet;
use std::path::Path;

use proptest::prelude::*;
use sumprobe::analysis::{bucket_index, bucketize, derangement, BUCKET_LABELS};
use sumprobe::corpus::{parse_corpus, parse_run, save_run, load_run, Example, RunRecord, FilterConfig, filter_example};
use sumprobe::metrics::{bertscore, p_copy, pearson, spearman, EmbeddingSeq, PCopy};
use sumprobe::pylex::{lex, Category};
use sumprobe::subtok::{fallback_split, SubwordSeq, SubwordVocab};
use sumprobe::transform::{
    deobfuscate_function_names, obfuscate_function_names, remove_code_structure, shift_name, strip_comments,
    unshift_name, TransformError, Variant,
};

const FRAGMENTS: &[&str] = &[
    "def", " ", "f", "(", ")", ":", "\n", "    ", "return", "x", "+", "1", "0x1F", "1.5e-3", "'s'", "\"t\"", "'''a\nb'''",
    "# c", "\\\n", "\r\n", "[", "]", "{", "}", ",", ".", "lambda", "@", "->", "**=", "rb'\\x00'", "f\"{x}\"", "é", "\t",
    "if", "else", "_a1", "CamelCase", "\"", "'", "j", "...",
];

fn python_soup() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(FRAGMENTS), 0..60).prop_map(|v| v.concat())
}

fn seq(v: &[&str]) -> SubwordSeq {
    v.iter().map(|s| s.to_string()).collect()
}

fn small_words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e]{1,2}", 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lex_round_trips_python_soup(src in python_soup()) {
        if let Ok(tokens) = lex(&src) {
            prop_assert_eq!(tokens.text(), src);
        }
    }

    #[test]
    fn lex_round_trips_arbitrary_text(src in any::<String>()) {
        if let Ok(tokens) = lex(&src) {
            prop_assert_eq!(tokens.text(), src);
            prop_assert!(tokens.iter().all(|t| !t.lexeme.is_empty()));
        }
    }

    #[test]
    fn strip_comments_is_a_fixpoint(src in python_soup()) {
        if let Ok(tokens) = lex(&src) {
            let once = strip_comments(&tokens);
            let twice = strip_comments(&lex(&once.text()).unwrap());
            prop_assert_eq!(once.text(), twice.text());
            prop_assert!(once.iter().all(|t| t.category != Category::Comment));
        }
    }

    #[test]
    fn no_code_structure_keeps_no_syntax(src in python_soup()) {
        if let Ok(tokens) = lex(&src) {
            let out = remove_code_structure(&strip_comments(&tokens)).text();
            let relexed = lex(&out).unwrap();
            prop_assert!(relexed.iter().all(|t| !matches!(
                t.category,
                Category::Keyword | Category::Operator | Category::Delimiter
            )), "{:?}", out);
        }
    }

    #[test]
    fn shift_is_inverted(name in "[A-Za-z_][A-Za-z0-9_]{0,20}") {
        prop_assert_eq!(unshift_name(&shift_name(&name)), name.clone());
        prop_assert_eq!(shift_name(&name).len(), name.len());
    }

    #[test]
    fn obfuscation_round_trips(name in "[a-z_][a-z0-9_]{0,12}", arg in "[a-z]{1,6}") {
        let src = format!("def {name}({arg}):\n    return {name}({arg})\n");
        match obfuscate_function_names(&lex(&src).unwrap()) {
            Ok(obfuscated) => {
                let back = deobfuscate_function_names(&lex(&obfuscated.text()).unwrap()).unwrap();
                prop_assert_eq!(back.text(), src);
            }
            Err(e) => prop_assert!(matches!(e, TransformError::ShiftCollision(_)), "{}", e),
        }
    }

    #[test]
    fn fallback_pieces_are_lowercase_and_nonempty(text in any::<String>()) {
        for piece in fallback_split(&text).into_inner() {
            prop_assert!(!piece.is_empty());
            prop_assert!(!piece.chars().any(char::is_whitespace));
            prop_assert_eq!(piece.to_lowercase(), piece);
        }
    }

    #[test]
    fn bpe_detokenize_restores_words(words in prop::collection::vec("[a-d]{1,8}", 0..8)) {
        let vocab = SubwordVocab::from_json(
            r#"{"merges": ["a b", "ab c", "d d", "▁ a"], "vocab": ["a","b","c","d","ab","abc","dd","▁","▁a"], "word_prefix": "▁"}"#,
        ).unwrap();
        let text = words.join(" ");
        let encoded = vocab.encode(&text);
        prop_assert_eq!(vocab.detokenize(&encoded), words.concat());
    }

    #[test]
    fn p_copy_permutation_invariant(code in small_words(), desc in small_words(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (mut c2, mut d2) = (code.clone(), desc.clone());
        c2.shuffle(&mut rng);
        d2.shuffle(&mut rng);
        let a = p_copy(&code.into(), &desc.into(), "t").unwrap();
        let b = p_copy(&c2.into(), &d2.into(), "t").unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn p_copy_monotone_in_code(code in small_words(), extra in small_words(), desc in small_words()) {
        let before = p_copy(&code.clone().into(), &desc.clone().into(), "t").unwrap();
        let mut more = code;
        more.extend(extra);
        let after = p_copy(&more.into(), &desc.into(), "t").unwrap();
        prop_assert!(after.value >= before.value);
        prop_assert!((0.0..=1.0).contains(&after.value));
    }

    #[test]
    fn p_copy_boundaries(desc in small_words()) {
        let all = p_copy(&desc.clone().into(), &desc.clone().into(), "t").unwrap();
        prop_assert_eq!(all.value, 1.0);
        let none = p_copy(&seq(&["zz", "yy"]), &desc.into(), "t").unwrap();
        prop_assert_eq!(none.value, 0.0);
    }

    #[test]
    fn every_copy_rate_has_one_bucket(total in 1usize..200, frac in 0.0f64..=1.0) {
        let matched = ((total as f64) * frac).floor() as usize;
        let p = PCopy { value: matched as f64 / total as f64, tokenizer: "t".into(), matched, total };
        let buckets = bucketize([("x", &p)]);
        let hits: Vec<_> = buckets.iter().filter(|b| !b.members.is_empty()).collect();
        prop_assert_eq!(hits.len(), 1);
        prop_assert_eq!(hits[0].label == "=0", matched == 0);
        let i = bucket_index(matched, total);
        if i > 0 {
            let rate = matched as f64 / total as f64;
            prop_assert!(rate > (i - 1) as f64 / 10.0 - 1e-12 && rate <= i as f64 / 10.0 + 1e-12);
        }
    }

    #[test]
    fn bertscore_orthogonal_invariance(
        xs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..5),
        ys in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..5),
        householders in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..4),
    ) {
        let unit = |v: &Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        prop_assume!(xs.iter().chain(&ys).all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
        prop_assume!(householders.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
        let reflect = |v: &Vec<f64>| {
            let mut out = v.clone();
            for h in &householders {
                let h = unit(h);
                let d: f64 = out.iter().zip(&h).map(|(a, b)| a * b).sum();
                out = out.iter().zip(&h).map(|(a, b)| a - 2.0 * d * b).collect();
            }
            out
        };
        let x: Vec<_> = xs.iter().map(unit).collect();
        let y: Vec<_> = ys.iter().map(unit).collect();
        let before = bertscore(&EmbeddingSeq::new(x.clone()).unwrap(), &EmbeddingSeq::new(y.clone()).unwrap()).unwrap();
        let rx = EmbeddingSeq::new(x.iter().map(reflect).map(|v| unit(&v)).collect()).unwrap();
        let ry = EmbeddingSeq::new(y.iter().map(reflect).map(|v| unit(&v)).collect()).unwrap();
        let after = bertscore(&rx, &ry).unwrap();
        prop_assert!((before.precision - after.precision).abs() < 1e-9);
        prop_assert!((before.recall - after.recall).abs() < 1e-9);
        // F1 is ill-conditioned when P + R is near 0, so compare relatively.
        prop_assert!((before.f1 - after.f1).abs() <= 1e-9 * before.f1.abs().max(1.0), "{:?} vs {:?}", before, after);
    }

    #[test]
    fn correlation_invariances(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in 0.1f64..10.0, b in -50.0f64..50.0,
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if let Ok(r) = pearson(&xs, &ys) {
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&scaled, &ys).unwrap() - r).abs() < 1e-9);
            let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson(&flipped, &ys).unwrap() + r).abs() < 1e-9);
        }
        if let Ok(s) = spearman(&xs, &ys) {
            let mono: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            prop_assert!((spearman(&mono, &ys).unwrap() - s).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn corpus_parsing_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let load = parse_corpus(&bytes, "fuzz");
        let lines = if bytes.is_empty() { 0 } else { bytes.split(|&b| b == b'\n').count() - usize::from(bytes.ends_with(b"\n")) };
        prop_assert_eq!(load.examples.len() + load.errors.len(), lines);
    }

    #[test]
    fn run_file_round_trips(items in prop::collection::vec(("[a-z0-9:._]{1,10}", ".*", ".*"), 0..10)) {
        let mut seen = HashSet::new();
        let records: Vec<RunRecord> = items
            .into_iter()
            .filter(|(id, _, _)| seen.insert(id.clone()))
            .map(|(id, reference, generated)| RunRecord {
                example_id: id,
                variant: Variant::NoCodeStructure,
                model_id: "m".into(),
                reference,
                generated,
                metrics: None,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        save_run(&records, &path).unwrap();
        prop_assert_eq!(load_run(&path).unwrap(), records);
    }

    #[test]
    fn filtering_is_idempotent(code in python_soup(), reference in "[a-z ]{0,40}") {
        let ex = Example::new("x", code, reference);
        let cfg = FilterConfig::default();
        if filter_example(&ex, &cfg).accepted {
            prop_assert!(filter_example(&ex, &cfg).accepted);
        }
    }
}

#[test]
fn derangement_is_uniform_over_small_n() {
    // n = 4 has 9 derangements; each should turn up about 1/9 of the time.
    let mut counts = std::collections::HashMap::new();
    for seed in 0..9000 {
        *counts.entry(derangement(4, seed).unwrap()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 9);
    assert!(counts.values().all(|&c| (800..1200).contains(&c)), "{counts:?}");
}

#[test]
fn bucket_labels_cover_unit_interval() {
    assert_eq!(BUCKET_LABELS.len(), 11);
    assert_eq!(bucket_index(0, 7), 0);
    assert_eq!(bucket_index(7, 7), 10);
}

#[test]
fn malformed_run_lines_name_the_line() {
    let err = parse_run("{\"example_id\": 1}\n", Path::new("r.jsonl")).unwrap_err();
    assert!(err.to_string().starts_with("r.jsonl:1:"), "{err}");
}
