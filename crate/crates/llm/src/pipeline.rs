use serde::{Deserialize, Serialize};

use crate::client::{GenerationClient, GenerationRequest};
use crate::template::FewShotTemplate;
use rumi_core::data::McqInstance;
use rumi_core::{Error, Result};

const MAX_KNOWLEDGE_TOKENS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knowledge {
    pub text: String,
    pub logprob: f64,
}

/// Samples `n_samples` knowledge statements in one call, drops empty ones and
/// orders the rest by log-probability, highest first.
pub fn ruminate_text<C: GenerationClient + ?Sized>(
    client: &C,
    template: &FewShotTemplate,
    question: &str,
    n_samples: usize,
) -> Result<Vec<Knowledge>> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let prompt = template.render(question)?;
    let resp = client.complete(&GenerationRequest::generate(prompt, MAX_KNOWLEDGE_TOKENS, n_samples))?;
    let mut out: Vec<Knowledge> = resp
        .outputs
        .into_iter()
        .map(|o| Knowledge { text: o.text.trim().to_string(), logprob: o.logprob })
        .filter(|k| !k.text.is_empty())
        .collect();
    out.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
    Ok(out)
}

fn question_text(inst: &McqInstance) -> String {
    if inst.context.trim().is_empty() {
        inst.question.clone()
    } else {
        format!("{} {}", inst.context, inst.question)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmDecision {
    pub prompt: String,
    pub scores: Vec<f64>,
    pub predicted: usize,
}

/// Scores every choice as a continuation of `knowledge + "\n" + question`
/// (just the question when `knowledge` is empty); lowest index wins ties.
pub fn answer_with_knowledge<C: GenerationClient + ?Sized>(
    client: &C,
    inst: &McqInstance,
    knowledge: &str,
) -> Result<LlmDecision> {
    inst.validate()?;
    let q = question_text(inst);
    let prompt = if knowledge.trim().is_empty() { q } else { format!("{knowledge}\n{q}") };
    let resp = client.complete(&GenerationRequest::score(prompt.clone(), inst.choices.clone()))?;
    if resp.outputs.len() != inst.choices.len() {
        return Err(Error::Generation(format!(
            "scoring returned {} outputs for {} choices",
            resp.outputs.len(),
            inst.choices.len()
        )));
    }
    let scores: Vec<f64> = resp.outputs.iter().map(|o| o.logprob).collect();
    let mut predicted = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[predicted] {
            predicted = i;
        }
    }
    Ok(LlmDecision { prompt, scores, predicted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmAnswer {
    pub source_id: String,
    pub knowledge: Vec<Knowledge>,
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub gold: usize,
}

/// Generates knowledge for each instance, keeps the highest-likelihood
/// statement and answers with it. Instances are split over `threads` scoped
/// workers; results keep input order.
pub fn run_llm<C: GenerationClient + ?Sized>(
    client: &C,
    template: &FewShotTemplate,
    instances: &[McqInstance],
    n_samples: usize,
    threads: usize,
) -> Result<Vec<LlmAnswer>> {
    let one = |inst: &McqInstance| -> Result<LlmAnswer> {
        let knowledge = ruminate_text(client, template, &inst.question, n_samples)?;
        let best = knowledge.first().map_or("", |k| k.text.as_str());
        let d = answer_with_knowledge(client, inst, best)?;
        Ok(LlmAnswer {
            source_id: inst.source_id.clone(),
            knowledge,
            scores: d.scores,
            predicted: d.predicted,
            gold: inst.gold,
        })
    };
    let threads = threads.max(1).min(instances.len().max(1));
    if threads == 1 {
        return instances.iter().map(one).collect();
    }
    let chunk = instances.len().div_ceil(threads);
    let parts: Vec<Result<Vec<LlmAnswer>>> = std::thread::scope(|s| {
        let handles: Vec<_> = instances
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(instances.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
