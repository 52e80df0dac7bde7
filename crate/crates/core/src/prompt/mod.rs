//! Task-guided probe prompts and mention selection.

mod mentions;
mod relevance;
mod templates;

pub use mentions::{extract_mentions, STOPWORDS};
pub use relevance::{score_mentions, top_k_by_score, MentionScores, RelevanceMode, RelevanceScore, RelevanceScorer};
pub use templates::{build_prompts, render_masks, PromptKind, PromptSpec, PromptTemplates};
