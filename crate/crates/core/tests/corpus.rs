use std::path::PathBuf;

use appl::logic::{check_program, CheckOptions};
use appl::surface::{parse, validate};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[test]
fn every_corpus_program_parses_validates_and_checks() {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("appl") {
            continue;
        }
        let src = std::fs::read_to_string(&path).unwrap();
        let file = path.display().to_string();
        let (p, ann) = parse(&src).unwrap_or_else(|e| panic!("{}", e.render(&file)));
        assert!(validate(&p, &ann, true).is_empty(), "{file}");
        let r = check_program(&p, &ann, &CheckOptions::default());
        assert!(r.is_accepted(), "{file}: {}", r.verdict);
        names.push(path.file_stem().unwrap().to_string_lossy().to_string());
    }
    assert!(names.len() >= 11, "{names:?}");
}
