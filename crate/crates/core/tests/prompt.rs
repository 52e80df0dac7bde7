mod common;

use rumi_core::backbone::EncoderParams;
use rumi_core::prompt::{
    build_prompts, extract_mentions, score_mentions, PromptKind, PromptTemplates, RelevanceMode, RelevanceScorer,
};
use rumi_core::Lcg64;

fn brute_force_top2(scores: &[f64]) -> Vec<usize> {
    let mut best: Option<(usize, usize)> = None;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if i == j || scores[i] < scores[j] {
                continue;
            }
            let better = match best {
                None => true,
                Some((a, b)) => (scores[i], scores[j]) > (scores[a], scores[b]),
            };
            if better {
                best = Some((i, j));
            }
        }
    }
    match (scores.len(), best) {
        (0, _) => vec![],
        (1, _) => vec![0],
        (_, Some((a, b))) => vec![a, b],
        _ => unreachable!(),
    }
}

#[test]
fn top2_matches_exhaustive_search_on_random_sets() {
    let world = common::tiny_world(0);
    let vocab = common::vocab_for(&world);
    let enc = common::encoder::<f64>(&vocab, 0);
    let scorer = RelevanceScorer::new(&enc, &vocab, 0);
    let mut rng = Lcg64::new(11);
    for trial in 0..100 {
        let q = &world.questions().nth(trial % 20).unwrap().question;
        let n = 1 + rng.below(6);
        let mut pool = world.entities.clone();
        rng.shuffle(&mut pool);
        let mentions: Vec<String> = pool[..n].to_vec();
        let mode = if trial % 2 == 0 { RelevanceMode::Cosine } else { RelevanceMode::Cls };
        let out = score_mentions(&scorer, q, &mentions, mode).unwrap();
        let raw: Vec<f64> = mentions.iter().map(|m| scorer.score(q, m, mode).unwrap()).collect();
        assert_eq!(out.scores.iter().map(|s| s.score).collect::<Vec<_>>(), raw);
        let expected: Vec<String> = brute_force_top2(&raw).into_iter().map(|i| mentions[i].clone()).collect();
        assert_eq!(out.top2, expected, "trial {trial}");
        assert!(raw.iter().all(|s| (-1.0..=1.0).contains(s)));
    }
}

#[test]
fn singleton_and_empty_sets() {
    let world = common::tiny_world(0);
    let vocab = common::vocab_for(&world);
    let enc = common::encoder::<f64>(&vocab, 0);
    let scorer = RelevanceScorer::new(&enc, &vocab, 0);
    let q = &world.train[0].question;
    let one = vec![world.entities[3].clone()];
    assert_eq!(score_mentions(&scorer, q, &one, RelevanceMode::Cosine).unwrap().top2, one);
    let none = score_mentions(&scorer, q, &[], RelevanceMode::Cosine).unwrap();
    assert!(none.scores.is_empty() && none.top2.is_empty());
}

#[test]
fn identical_text_has_unit_cosine() {
    let world = common::tiny_world(0);
    let vocab = common::vocab_for(&world);
    let enc = EncoderParams::<f32>::init(common::tiny_config(vocab.len(), 0)).unwrap();
    let scorer = RelevanceScorer::new(&enc, &vocab, 0);
    for q in world.train.iter().take(10) {
        let s = scorer.score(&q.question, &q.question, RelevanceMode::Cosine).unwrap();
        assert!((s - 1.0).abs() <= 1e-6, "{s}");
    }
}

#[test]
fn scoring_is_permutation_equivariant() {
    let world = common::tiny_world(1);
    let vocab = common::vocab_for(&world);
    let enc = common::encoder::<f64>(&vocab, 1);
    let scorer = RelevanceScorer::new(&enc, &vocab, 1);
    let q = &world.train[0].question;
    let mentions: Vec<String> = world.entities[..5].to_vec();
    let a = score_mentions(&scorer, q, &mentions, RelevanceMode::Cosine).unwrap();
    let perm = [3, 0, 4, 1, 2];
    let permuted: Vec<String> = perm.iter().map(|&i| mentions[i].clone()).collect();
    let b = score_mentions(&scorer, q, &permuted, RelevanceMode::Cosine).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(b.scores[k], a.scores[i]);
    }
    let mut x = a.top2.clone();
    let mut y = b.top2.clone();
    x.sort();
    y.sort();
    assert_eq!(x, y);
}

#[test]
fn shipped_templates_render_verbatim() {
    let t = PromptTemplates::default();
    assert_eq!(t.background(1), "As far as I know [MASK].");
    assert_eq!(t.mention("bird", 1), "About bird, I know [MASK].");
    assert_eq!(t.task("sentiment analysis", 1), "About sentiment analysis, I know [MASK].");
    let p = build_prompts(&t, "q", &["bird".into(), "carnivore".into()], None, 3).unwrap();
    let kinds: Vec<PromptKind> = p.iter().map(|p| p.kind).collect();
    assert_eq!(kinds, [PromptKind::Mention, PromptKind::Mention, PromptKind::Background]);
    assert_eq!(p[1].text, "About carnivore, I know [MASK] [MASK] [MASK].");
    assert!(p.iter().all(|p| p.mask_count() == 3));
}

#[test]
fn template_file_on_disk_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    std::fs::write(&path, "version = 2\nbackground = Known: {masks}\nmention = On {mention}: {masks}\ntask = For {task}: {masks}\n").unwrap();
    let t = PromptTemplates::load(&path).unwrap();
    assert_eq!(t.mention("x", 2), "On x: [MASK] [MASK]");
}

#[test]
fn mentions_of_world_questions_include_the_entity() {
    let world = common::tiny_world(2);
    let vocab = common::vocab_for(&world);
    for (q, &fi) in world.train.iter().zip(world.gold_facts_of(rumi_core::data::Split::Train)) {
        let head = &world.entities[world.facts[fi].head];
        assert_eq!(extract_mentions(&q.question, Some(&vocab)), vec![head.clone()]);
    }
}
