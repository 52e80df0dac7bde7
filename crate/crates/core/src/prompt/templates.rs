use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TEMPLATES: &str = include_str!("../../templates/probe_prompts.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Background,
    Mention,
    Task,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub text: String,
    pub mask_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention: Option<String>,
}

impl PromptSpec {
    pub fn mask_count(&self) -> usize {
        self.text.matches("[MASK]").count()
    }
}

/// Parsed template file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    background: String,
    mention: String,
    task: String,
    per_task: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("shipped templates parse")
    }
}

impl PromptTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("template line {}: expected `key = template`", i + 1))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut take = |k: &str| {
            entries
                .remove(k)
                .ok_or_else(|| Error::Config(format!("template file is missing `{k}`")))
        };
        let background = take("background")?;
        let mention = take("mention")?;
        let task = take("task")?;
        entries.remove("version");
        let mut per_task = BTreeMap::new();
        for (k, v) in entries {
            match k.strip_prefix("task.") {
                Some(name) => {
                    per_task.insert(name.to_string(), v);
                }
                None => return Err(Error::Config(format!("unknown template key `{k}`"))),
            }
        }
        for t in [&background, &mention, &task].into_iter().chain(per_task.values()) {
            if !t.contains("{masks}") {
                return Err(Error::Config(format!("template {t:?} has no {{masks}} slot")));
            }
        }
        Ok(Self { background, mention, task, per_task })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every word the templates can emit, for vocabulary construction.
    pub fn words(&self) -> Vec<String> {
        let mut all = vec![&self.background, &self.mention, &self.task];
        all.extend(self.per_task.values());
        all.iter()
            .flat_map(|t| {
                let stripped = t.replace("{masks}", " ").replace("{mention}", " ").replace("{task}", " ");
                crate::data::words(&stripped)
            })
            .collect()
    }

    fn render(template: &str, masks: &str, mention: Option<&str>, task: Option<&str>) -> String {
        let mut s = template.replace("{masks}", masks);
        if let Some(m) = mention {
            s = s.replace("{mention}", m);
        }
        if let Some(t) = task {
            s = s.replace("{task}", t);
        }
        s
    }

    pub fn background(&self, mask_length: usize) -> String {
        Self::render(&self.background, &render_masks(mask_length), None, None)
    }

    pub fn mention(&self, mention: &str, mask_length: usize) -> String {
        Self::render(&self.mention, &render_masks(mask_length), Some(mention), None)
    }

    pub fn task(&self, task: &str, mask_length: usize) -> String {
        let template = self.per_task.get(task).unwrap_or(&self.task);
        Self::render(template, &render_masks(mask_length), None, Some(task))
    }
}

/// `n` space-separated `[MASK]` tokens.
pub fn render_masks(n: usize) -> String {
    vec!["[MASK]"; n].join(" ")
}

/// One prompt per selected mention, then the task prompt when a task is
/// named, otherwise the background prompt.
pub fn build_prompts(
    templates: &PromptTemplates,
    _question: &str,
    mentions: &[String],
    task: Option<&str>,
    mask_length: usize,
) -> Result<Vec<PromptSpec>> {
    if mask_length < 1 {
        return Err(Error::Config("mask_length must be >= 1".into()));
    }
    let mut out: Vec<PromptSpec> = mentions
        .iter()
        .map(|m| PromptSpec {
            kind: PromptKind::Mention,
            text: templates.mention(m, mask_length),
            mask_length,
            mention: Some(m.clone()),
        })
        .collect();
    out.push(match task {
        Some(t) => PromptSpec { kind: PromptKind::Task, text: templates.task(t, mask_length), mask_length, mention: None },
        None => PromptSpec {
            kind: PromptKind::Background,
            text: templates.background(mask_length),
            mask_length,
            mention: None,
        },
    });
    Ok(out)
}
