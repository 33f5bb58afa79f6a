//! Property tests for the metric, reward, parsing, and advantage
//! invariants.

use proptest::prelude::*;

use revex_core::corpus::{
    inject_noise, render_prompt, Passage, PromptTemplate, QAInstance, Split, TemplateName,
};
use revex_core::grpo::{clipped_surrogate, group_advantages, kl_penalty};
use revex_core::metrics::{answer_recall, exact_match, normalize, unigram_f1};
use revex_core::response::{check_format, parse_response};
use revex_core::reward::{
    evidence_length_reward, final_reward, rationale_length_reward, RewardConfig,
};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn phrase(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..=max_words).prop_map(|ws| ws.join(" "))
}

/// Random case flips, article insertions, and punctuation sprinkled
/// around the words of a phrase.
fn perturb(phrase: &str, seed: u64) -> String {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut out: Vec<String> = Vec::new();
    for w in phrase.split_whitespace() {
        if next() % 3 == 0 {
            out.push(["the", "a", "an"][(next() % 3) as usize].to_string());
        }
        let mut token = String::new();
        for c in w.chars() {
            if next() % 4 == 0 {
                token.extend(c.to_uppercase());
            } else {
                token.push(c);
            }
        }
        if next() % 3 == 0 {
            token.push([',', '.', '!', ';'][(next() % 4) as usize]);
        }
        out.push(token);
    }
    out.join(" ")
}

proptest! {
    #[test]
    fn metrics_invariant_under_surface_noise(p in phrase(6), g in phrase(4), seed in any::<u64>()) {
        let golds = vec![g.clone()];
        let noisy = perturb(&p, seed);
        prop_assert_eq!(unigram_f1(&p, &golds).unwrap(), unigram_f1(&noisy, &golds).unwrap());
        prop_assert_eq!(exact_match(&p, &golds).unwrap(), exact_match(&noisy, &golds).unwrap());
        prop_assert_eq!(answer_recall(&p, &golds).unwrap(), answer_recall(&noisy, &golds).unwrap());
        // perturbing the gold side must not move the metrics either
        let noisy_gold = vec![perturb(&g, seed ^ 0xabcd)];
        prop_assert_eq!(unigram_f1(&p, &golds).unwrap(), unigram_f1(&p, &noisy_gold).unwrap());
    }

    #[test]
    fn f1_bounded_and_symmetric_for_single_gold(a in phrase(6), b in phrase(6)) {
        let ab = unigram_f1(&a, std::slice::from_ref(&b)).unwrap();
        let ba = unigram_f1(&b, std::slice::from_ref(&a)).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn em_implies_perfect_f1(p in phrase(5), alias in phrase(3)) {
        let golds = vec![alias, p.clone()];
        if exact_match(&p, &golds).unwrap() == 1 {
            prop_assert_eq!(unigram_f1(&p, &golds).unwrap(), 1.0);
        }
    }

    #[test]
    fn recall_implies_positive_f1(ev in phrase(10), g in phrase(3)) {
        let golds = vec![g];
        if answer_recall(&ev, &golds).unwrap() == 1 {
            prop_assert!(unigram_f1(&ev, &golds).unwrap() > 0.0);
        }
    }

    #[test]
    fn normalization_is_idempotent(t in "\\PC{0,40}") {
        let once = normalize(&t);
        let twice = normalize(&once.joined());
        prop_assert_eq!(once.tokens, twice.tokens);
    }

    #[test]
    fn parse_is_idempotent_and_format_consistent(
        pre in "[a-z <>/]{0,12}",
        r in "[a-z ]{0,8}",
        e in "[a-z ]{0,8}",
        a in "[a-z ]{0,8}",
        shuffle in 0usize..6,
    ) {
        // assemble tag pairs in one of six orders
        let blocks = [
            format!("<reason>{r}</reason>"),
            format!("<extract>{e}</extract>"),
            format!("<answer>{a}</answer>"),
        ];
        let order = match shuffle {
            0 => [0, 1, 2],
            1 => [0, 2, 1],
            2 => [1, 0, 2],
            3 => [1, 2, 0],
            4 => [2, 0, 1],
            _ => [2, 1, 0],
        };
        let raw = format!("{pre}{}{}{}", blocks[order[0]], blocks[order[1]], blocks[order[2]]);
        let parsed = parse_response(&raw);
        // parsing the raw again gives the same decomposition
        let again = parse_response(&parsed.raw);
        prop_assert_eq!(&parsed, &again);
        // well-formed iff assembled in canonical order and the stray
        // prefix does not contain tag-like text
        let tag_chars = pre.contains('<') || pre.contains('>');
        if parsed.well_formed {
            prop_assert_eq!(order, [0, 1, 2]);
            prop_assert_eq!(parsed.rationale_text(), r.as_str());
            prop_assert_eq!(parsed.evidence_text(), e.as_str());
            prop_assert_eq!(parsed.answer_text(), a.as_str());
        } else if order == [0, 1, 2] && !tag_chars {
            prop_assert!(false, "canonical order with clean prefix must be well-formed");
        }
        prop_assert_eq!(check_format(&raw), parsed.well_formed);
    }

    #[test]
    fn rationale_reward_continuous_and_monotone(len in 1usize..200, tau_idx in 0usize..4) {
        let tau = RewardConfig::TAU_GRID[tau_idx];
        // continuity at the branch point
        prop_assert!((rationale_length_reward(len, len, tau) - 0.5).abs() < 1e-12);
        // monotone non-decreasing in len_r
        let mut prev = 0.0;
        for len_r in 0..=60 {
            let v = rationale_length_reward(len_r, len, tau);
            prop_assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn evidence_reward_plateau_and_decrease(len_p in 1usize..400, gamma_idx in 0usize..5) {
        let gamma = RewardConfig::GAMMA_GRID[gamma_idx];
        let omega = 0.9;
        let mut prev = 1.0;
        for len_e in 0..=len_p + 10 {
            let v = evidence_length_reward(len_e, len_p, gamma, omega).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev + 1e-15, "increased at len_e={len_e}");
            let x = 1.0 - len_e as f64 / len_p as f64;
            if x >= omega {
                prop_assert_eq!(v, 1.0);
            }
            prev = v;
        }
    }

    #[test]
    fn final_reward_linear_and_bounded(
        ans in 0.0f64..=1.0,
        len in 0.0f64..=1.0,
        fmt in prop::bool::ANY,
    ) {
        let cfg = RewardConfig::default();
        let fmt = if fmt { 1.0 } else { 0.0 };
        let r = final_reward(ans, len, fmt, &cfg);
        prop_assert!(r >= 0.0 && r <= cfg.alpha_ans + cfg.alpha_len + cfg.alpha_fmt + 1e-12);
        // linearity in the answer component
        let bumped = final_reward((ans * 0.5).min(1.0), len, fmt, &cfg);
        let expected_delta = cfg.alpha_ans * (ans - ans * 0.5);
        prop_assert!((r - bumped - expected_delta).abs() < 1e-12);
    }

    #[test]
    fn advantages_shift_invariant_and_zero_sum(
        mut rewards in prop::collection::vec(0.0f64..=1.0, 2..12),
        shift in -5.0f64..5.0,
        eps in prop::sample::select(vec![0.05, 0.1, 0.5]),
    ) {
        let adv = group_advantages(&rewards, eps).unwrap();
        prop_assert!(adv.iter().sum::<f64>().abs() < 1e-9);
        let max = rewards.iter().cloned().fold(f64::MIN, f64::max);
        let min = rewards.iter().cloned().fold(f64::MAX, f64::min);
        for a in &adv {
            prop_assert!(a.abs() <= (max - min) / eps + 1e-12);
        }
        for r in rewards.iter_mut() {
            *r += shift;
        }
        let shifted = group_advantages(&rewards, eps).unwrap();
        for (a, b) in adv.iter().zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-6, "shift changed advantage {a} -> {b}");
        }
    }

    #[test]
    fn advantages_scale_invariant_when_clip_inactive(
        rewards in prop::collection::vec(0.0f64..=1.0, 3..10),
        scale in 1.0f64..4.0,
    ) {
        let eps = 0.1;
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / rewards.len() as f64)
            .sqrt();
        prop_assume!(std >= eps); // clip inactive before and after scaling
        let base = group_advantages(&rewards, eps).unwrap();
        let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
        let scaled_adv = group_advantages(&scaled, eps).unwrap();
        for (a, b) in base.iter().zip(&scaled_adv) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn surrogate_is_pessimistic(ratio in 0.01f64..5.0, adv in -3.0f64..3.0) {
        let s = clipped_surrogate(ratio, adv, 0.2);
        prop_assert!(s <= ratio * adv + 1e-12);
        if (0.8..=1.2).contains(&ratio) {
            prop_assert!((s - ratio * adv).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_estimator_non_negative(d in -3.0f64..3.0) {
        prop_assert!(kl_penalty(-1.0 + d, -1.0).unwrap() >= -1e-15);
    }
}

fn passage(doc: &str, body: &str, rank: usize) -> Passage {
    Passage {
        doc_id: doc.to_string(),
        title: format!("t {rank}"),
        body: body.to_string(),
        rank,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_injection_is_pure(
        n_noise in prop::sample::select(vec![0usize, 2, 4, 6, 8]),
        seed in any::<u64>(),
        pool_extra in 0usize..10,
    ) {
        let inst = QAInstance {
            id: "i".to_string(),
            question: "who".to_string(),
            gold_answers: vec!["x".to_string()],
            passages: (1..=5).map(|r| passage(&format!("d{r}"), &format!("body {r}"), r)).collect(),
            split: Split::Test,
        };
        let pool: Vec<Passage> = (0..8 + pool_extra)
            .map(|i| passage(&format!("n{i}"), &format!("noise {i}"), 1))
            .collect();
        let a = inject_noise(&inst, n_noise, &pool, seed).unwrap();
        let b = inject_noise(&inst, n_noise, &pool, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.passages.len(), 5 + n_noise);
        let ranks: Vec<usize> = a.passages.iter().map(|p| p.rank).collect();
        prop_assert_eq!(ranks, (1..=5 + n_noise).collect::<Vec<_>>());
        // the source instance is untouched
        prop_assert_eq!(inst.passages.len(), 5);
    }

    #[test]
    fn prompt_grows_with_passage_count(k in 1usize..8, extra_body in phrase(6)) {
        let template = PromptTemplate::builtin(TemplateName::RationalExtraction);
        let mut prev = 0usize;
        for n in 1..=k {
            let inst = QAInstance {
                id: "i".to_string(),
                question: "who".to_string(),
                gold_answers: vec!["x".to_string()],
                passages: (1..=n)
                    .map(|r| passage(&format!("d{r}"), &format!("{extra_body} {r}"), r))
                    .collect(),
                split: Split::Test,
            };
            let len = render_prompt(&template, &inst, None).unwrap().len();
            prop_assert!(len > prev);
            prev = len;
        }
    }
}
