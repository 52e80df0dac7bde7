use std::path::Path;

use rumi_core::{Error, Result};

const QUESTION: &str = "{question}";

/// Instruction line followed by `Input:`/`Knowledge:` demonstrations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotTemplate {
    pub task: String,
    pub instruction: String,
    pub demonstrations: Vec<(String, String)>,
}

impl FewShotTemplate {
    pub const BUILTIN: [&'static str; 3] = ["csqa", "obqa", "socialiqa"];

    /// Shipped templates for `csqa`, `obqa` and `socialiqa`.
    pub fn builtin(task: &str) -> Result<Self> {
        let text = match task.to_lowercase().as_str() {
            "csqa" => include_str!("../templates/csqa.txt"),
            "obqa" => include_str!("../templates/obqa.txt"),
            "socialiqa" | "siqa" => include_str!("../templates/socialiqa.txt"),
            _ => return Err(Error::Config(format!("no built-in template for task {task:?}"))),
        };
        Self::parse(task, text)
    }

    pub fn load(task: &str, path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(task, &std::fs::read_to_string(path)?)
    }

    /// Parses the rendered form: instruction, blank line, blocks separated by
    /// blank lines, and a final `Input: {question}` / `Knowledge:` block.
    pub fn parse(task: &str, text: &str) -> Result<Self> {
        let text = text.replace("\r\n", "\n");
        let mut blocks = text.trim_end_matches('\n').split("\n\n");
        let bad = |m: &str| Error::Config(format!("template {task}: {m}"));
        let instruction = blocks.next().filter(|l| !l.contains('\n')).ok_or_else(|| bad("missing instruction line"))?;
        let blocks: Vec<&str> = blocks.collect();
        let (last, demos) = blocks.split_last().ok_or_else(|| bad("missing question block"))?;
        if *last != format!("Input: {QUESTION}\nKnowledge:") {
            return Err(bad("last block must be \"Input: {question}\" then \"Knowledge:\""));
        }
        let demonstrations = demos
            .iter()
            .map(|b| {
                let (input, knowledge) = b.split_once('\n').ok_or_else(|| bad("demonstration needs two lines"))?;
                let input = input.strip_prefix("Input: ").ok_or_else(|| bad("demonstration without Input:"))?;
                let knowledge =
                    knowledge.strip_prefix("Knowledge: ").ok_or_else(|| bad("demonstration without Knowledge:"))?;
                if knowledge.contains('\n') {
                    return Err(bad("demonstration has more than two lines"));
                }
                Ok((input.to_string(), knowledge.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { task: task.to_string(), instruction: instruction.to_string(), demonstrations })
    }

    pub fn render(&self, question: &str) -> Result<String> {
        if question.trim().is_empty() {
            return Err(Error::Generation("question is unset".into()));
        }
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        for (input, knowledge) in &self.demonstrations {
            out.push_str(&format!("Input: {input}\nKnowledge: {knowledge}\n\n"));
        }
        out.push_str(&format!("Input: {question}\nKnowledge:"));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_round_trip() {
        for task in FewShotTemplate::BUILTIN {
            let t = FewShotTemplate::builtin(task).unwrap();
            assert_eq!(t.demonstrations.len(), 5);
            let file = match task {
                "csqa" => include_str!("../templates/csqa.txt"),
                "obqa" => include_str!("../templates/obqa.txt"),
                _ => include_str!("../templates/socialiqa.txt"),
            };
            assert_eq!(t.render(QUESTION).unwrap(), file.trim_end_matches('\n'));
        }
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(FewShotTemplate::parse("x", "Only a line").is_err());
        assert!(FewShotTemplate::parse("x", "Head\n\nInput: a\nKnowledge: b\n\nInput: q\nKnowledge:").is_err());
        assert!(FewShotTemplate::builtin("nope").is_err());
        assert!(FewShotTemplate::builtin("csqa").unwrap().render("  ").is_err());
    }
}
