use std::fs;
use std::path::Path;

use super::McqInstance;
use crate::error::{Error, Result};

/// Parses JSONL text; blank lines are skipped, line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<McqInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst: McqInstance = serde_json::from_str(line)
            .map_err(|e| Error::Jsonl { line: line_no, message: e.to_string() })?;
        inst.validate().map_err(|e| Error::Jsonl { line: line_no, message: e.to_string() })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn to_jsonl(instances: &[McqInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
        out.push('\n');
    }
    out
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<McqInstance>> {
    parse_jsonl(&fs::read_to_string(path)?)
}

pub fn save_jsonl(instances: &[McqInstance], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_jsonl(instances))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(gold: usize) -> McqInstance {
        McqInstance {
            context: String::new(),
            question: "where is a \"quoted\" thing?".into(),
            choices: vec!["here".into(), "there".into(), "üñí".into()],
            gold,
            source_id: "t-1".into(),
        }
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let items = vec![inst(0), inst(2)];
        save_jsonl(&items, &path).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), items);
    }

    #[test]
    fn missing_choices_reported_at_line() {
        let err = parse_jsonl(r#"{"context":"","question":"q","gold":0}"#).unwrap_err();
        match err {
            Error::Jsonl { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("choices"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_middle_line_names_line_two() {
        let good = serde_json::to_string(&inst(1)).unwrap();
        let text = format!("{good}\n{{not json\n{good}\n");
        let msg = parse_jsonl(&text).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn gold_out_of_range_rejected() {
        let text = serde_json::to_string(&inst(3)).unwrap();
        let msg = parse_jsonl(&text).unwrap_err().to_string();
        assert!(msg.contains("line 1") && msg.contains("gold"), "{msg}");
    }

    #[test]
    fn choice_count_bounds() {
        let mut one = inst(0);
        one.choices.truncate(1);
        assert!(one.validate().is_err());
        let mut six = inst(0);
        six.choices = (0..6).map(|i| i.to_string()).collect();
        assert!(six.validate().is_err());
    }
}
