use std::collections::BTreeMap;
use std::path::PathBuf;

use ael_core::llm::{parse_individual, CandidateProgram};
use ael_core::prompt::TaskSpec;
use serde::Deserialize;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/responses")
}

#[derive(Deserialize)]
struct Expected {
    program: String,
    description: Option<String>,
}

#[test]
fn well_formed_responses_parse() {
    let dir = corpus_dir();
    let expected: BTreeMap<String, Expected> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("well_formed.json")).unwrap())
            .unwrap();
    let on_disk = std::fs::read_dir(dir.join("well_formed")).unwrap().count();
    assert_eq!(
        on_disk,
        expected.len(),
        "every corpus file needs an expectation"
    );
    assert!(expected.len() >= 10);
    let task = TaskSpec::tsp_next_node();
    for (file, want) in &expected {
        let raw = std::fs::read_to_string(dir.join("well_formed").join(file)).unwrap();
        let (description, program) =
            parse_individual(&raw, &task).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert!(!description.is_empty(), "{file}");
        match want.program.as_str() {
            "guest" => {
                let CandidateProgram::GuestSource(src) = &program else {
                    panic!("{file}: expected guest source, got {program:?}")
                };
                assert!(src.contains("def select_next_node"), "{file}");
                assert!(!src.contains("```"), "{file}");
                assert!(!src.contains("print("), "{file}: second block leaked in");
            }
            canonical => assert_eq!(program.canonical_text(), canonical, "{file}"),
        }
        if let Some(d) = &want.description {
            assert_eq!(&description, d, "{file}");
        }
    }
}

#[test]
fn corrupted_responses_yield_their_errors() {
    let dir = corpus_dir();
    let expected: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("corrupted.json")).unwrap())
            .unwrap();
    assert!(expected.len() >= 3);
    let task = TaskSpec::tsp_next_node();
    for (file, kind) in &expected {
        let raw = std::fs::read_to_string(dir.join("corrupted").join(file)).unwrap();
        let err = parse_individual(&raw, &task).expect_err(file);
        assert_eq!(err.kind(), kind, "{file}: {err}");
    }
}
