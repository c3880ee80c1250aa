use delirium_core::report::{SectionSpan, TokenizedReport, CLS_ID, MASK_ID, SEP_ID};
use delirium_explain::{
    explain_many, mask_sections, shapley_sections, ExplainError, FnValue, Mode, ModePolicy,
    ValueFunction,
};
use delirium_model::{EncoderModel, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `[CLS] b0 [SEP] b1 ...` with section labels `f0, f1, ...`.
fn report(id: &str, bodies: &[Vec<u32>]) -> TokenizedReport {
    let mut token_ids = vec![CLS_ID];
    let mut section_spans = Vec::new();
    for (i, b) in bodies.iter().enumerate() {
        if i > 0 {
            token_ids.push(SEP_ID);
        }
        let start = token_ids.len();
        token_ids.extend(b);
        section_spans.push(SectionSpan {
            label: format!("f{i}"),
            start,
            end: token_ids.len(),
        });
    }
    TokenizedReport {
        stay_id: id.into(),
        token_ids,
        section_spans,
        dropped: vec![],
    }
}

fn random_bodies(rng: &mut ChaCha8Rng, n: usize, vocab: u32) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            (0..rng.random_range(1..5))
                .map(|_| rng.random_range(5..vocab))
                .collect()
        })
        .collect()
}

/// Which sections of `r` are unmasked in `ids`.
fn present(r: &TokenizedReport, ids: &[u32]) -> Vec<bool> {
    r.section_spans
        .iter()
        .map(|s| ids[s.start] != MASK_ID)
        .collect()
}

fn encoder_config() -> ModelConfig {
    ModelConfig {
        max_seq_len: 64,
        ..ModelConfig::toy()
    }
}

const EXACT: ModePolicy = ModePolicy::Exact;
const MC200: ModePolicy = ModePolicy::MonteCarlo { permutations: 200 };

#[test]
fn masking_examples() {
    let r = report("s", &[vec![5, 6], vec![7], vec![8, 9, 10]]);
    assert_eq!(mask_sections(&r, &[0, 1, 2]).unwrap(), r.token_ids);
    let none = mask_sections(&r, &[]).unwrap();
    assert_eq!(
        none,
        vec![CLS_ID, MASK_ID, MASK_ID, SEP_ID, MASK_ID, SEP_ID, MASK_ID, MASK_ID, MASK_ID]
    );
    assert_eq!(mask_sections(&r, &[1]).unwrap()[4], 7);
    assert!(matches!(
        mask_sections(&r, &[3]),
        Err(ExplainError::SectionOutOfRange {
            index: 3,
            sections: 3
        })
    ));
}

proptest! {
    #[test]
    fn masking_is_idempotent_and_length_preserving(seed in any::<u64>(), keep in proptest::collection::vec(any::<bool>(), 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = report("s", &random_bodies(&mut rng, 6, 50));
        let set: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
        let once = mask_sections(&r, &set).unwrap();
        prop_assert_eq!(once.len(), r.token_ids.len());
        let again = mask_sections(&TokenizedReport { token_ids: once.clone(), ..r.clone() }, &set).unwrap();
        prop_assert_eq!(&again, &once);
        for (a, b) in once.iter().zip(&r.token_ids) {
            if [CLS_ID, SEP_ID].contains(b) {
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn additive_game_recovers_coefficients() {
    let c = [0.3, -1.25, 0.0, 2.5, 0.125];
    let r = report("s", &[vec![5], vec![6, 7], vec![8], vec![9], vec![10, 11]]);
    let r2 = r.clone();
    let model = FnValue(move |ids: &[u32]| {
        present(&r2, ids)
            .iter()
            .zip(&c)
            .map(|(&p, c)| if p { *c } else { 0.0 })
            .sum()
    });
    for policy in [EXACT, MC200] {
        let a = shapley_sections(&model, &r, policy, 1).unwrap();
        for ((_, phi), c) in a.per_section.iter().zip(c) {
            assert!((phi - c).abs() < 1e-12, "{phi} vs {c}");
        }
    }
}

/// Non-additive stub: a squashed, interacting function of the present sections.
fn interacting(r: &TokenizedReport) -> impl Fn(&[u32]) -> f64 + Sync + 'static {
    let r = r.clone();
    move |ids: &[u32]| {
        let p = present(&r, ids);
        let tok = |i: usize| {
            if p[i] {
                ids[r.section_spans[i].start] as f64 / 20.0
            } else {
                0.0
            }
        };
        let n = p.len();
        let z: f64 = (0..n)
            .map(|i| tok(i) * (1.0 + 0.5 * tok((i + 1) % n)))
            .sum::<f64>()
            - 1.0;
        1.0 / (1.0 + (-z).exp())
    }
}

#[test]
fn symmetric_sections_share_credit() {
    let r = report("s", &[vec![9, 5], vec![12], vec![9, 5], vec![7]]);
    let r2 = r.clone();
    // depends on the multiset of present bodies only
    let model = FnValue(move |ids: &[u32]| {
        let p = present(&r2, ids);
        let z: f64 = r2
            .section_spans
            .iter()
            .zip(&p)
            .filter(|(_, &k)| k)
            .map(|(s, _)| r2.token_ids[s.start..s.end].iter().sum::<u32>() as f64 / 10.0)
            .sum();
        z.tanh() * z
    });
    let a = shapley_sections(&model, &r, EXACT, 0).unwrap();
    assert!((a.per_section[0].1 - a.per_section[2].1).abs() <= 1e-9);
    assert!(a.per_section[0].1 != a.per_section[1].1);
}

fn efficiency_gap(a: &delirium_explain::SectionAttribution) -> f64 {
    (a.per_section.iter().map(|(_, p)| p).sum::<f64>() - (a.full_value - a.base_value)).abs()
}

#[test]
fn efficiency_holds_in_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = encoder_config();
    let enc = EncoderModel::init(config.clone(), 2).unwrap();
    for trial in 0..5 {
        let r = report("s", &random_bodies(&mut rng, 8, config.vocab_size as u32));
        let stub = FnValue(interacting(&r));
        let models: [&dyn ValueFunction; 2] = [&stub, &enc];
        for model in models {
            for policy in [EXACT, MC200, ModePolicy::MonteCarlo { permutations: 7 }] {
                let a = shapley_sections(model, &r, policy, trial).unwrap();
                assert!(
                    efficiency_gap(&a) <= 1e-9,
                    "{policy:?}: {}",
                    efficiency_gap(&a)
                );
            }
        }
    }
    // above the exact threshold the default policy switches to Monte Carlo
    let r = report("big", &random_bodies(&mut rng, 30, 40));
    let a = shapley_sections(&FnValue(interacting(&r)), &r, ModePolicy::default(), 3).unwrap();
    assert_eq!((a.mode, a.permutations_used), (Mode::MonteCarlo, Some(200)));
    assert!(efficiency_gap(&a) <= 1e-9);
}

#[test]
fn dummy_sections_get_exactly_zero() {
    let r = report(
        "s",
        &[vec![5], vec![6], vec![7], vec![8], vec![9], vec![10]],
    );
    let constant = FnValue(|_: &[u32]| 0.37);
    for policy in [EXACT, MC200] {
        let a = shapley_sections(&constant, &r, policy, 2).unwrap();
        assert!(a.per_section.iter().all(|(_, p)| *p == 0.0));
    }
    // section 2 is ignored by an otherwise interacting model
    let r2 = r.clone();
    let inner = interacting(&r);
    let model = FnValue(move |ids: &[u32]| {
        let mut ids = ids.to_vec();
        ids[r2.section_spans[2].start] = 13;
        inner(&ids)
    });
    for policy in [EXACT, MC200] {
        let a = shapley_sections(&model, &r, policy, 5).unwrap();
        assert_eq!(a.per_section[2].1, 0.0);
        assert!(a.per_section[0].1 != 0.0);
    }
}

#[test]
fn monte_carlo_tracks_exact_on_eight_sections() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = encoder_config();
    let enc = EncoderModel::init(config.clone(), 5).unwrap();
    for trial in 0..4 {
        let r = report("s", &random_bodies(&mut rng, 8, config.vocab_size as u32));
        let stub = FnValue(interacting(&r));
        let models: [&dyn ValueFunction; 2] = [&stub, &enc];
        for model in models {
            let exact = shapley_sections(model, &r, EXACT, 0).unwrap();
            let mc = shapley_sections(model, &r, MC200, 100 + trial).unwrap();
            let mad = exact
                .per_section
                .iter()
                .zip(&mc.per_section)
                .map(|(a, b)| (a.1 - b.1).abs())
                .sum::<f64>()
                / 8.0;
            assert!(mad <= 0.02, "mean absolute difference {mad}");
        }
    }
}

#[test]
fn more_permutations_reduce_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r = report("s", &random_bodies(&mut rng, 10, 40));
    let model = FnValue(interacting(&r));
    let spread = |m: usize| {
        let est: Vec<f64> = (0..40)
            .map(|s| {
                shapley_sections(&model, &r, ModePolicy::MonteCarlo { permutations: m }, s)
                    .unwrap()
                    .per_section[0]
                    .1
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
    };
    let (small, large) = (spread(25), spread(400));
    assert!(small / large > 2.0, "sd ratio {}", small / large);
}

#[test]
fn attribution_is_deterministic_and_order_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let config = encoder_config();
    let enc = EncoderModel::init(config.clone(), 6).unwrap();
    let reports: Vec<TokenizedReport> = (0..6)
        .map(|i| {
            report(
                &format!("stay{i}"),
                &random_bodies(&mut rng, 5 + i, config.vocab_size as u32),
            )
        })
        .collect();
    let policy = ModePolicy::Auto {
        exact_threshold: 6,
        permutations: 30,
    };
    let a = explain_many(&enc, &reports, policy, 42).unwrap();
    assert_eq!(a, explain_many(&enc, &reports, policy, 42).unwrap());
    let reversed: Vec<_> = reports.iter().rev().cloned().collect();
    let mut b = explain_many(&enc, &reversed, policy, 42).unwrap();
    b.reverse();
    assert_eq!(a, b);
    assert_ne!(a, explain_many(&enc, &reports, policy, 43).unwrap());
    assert_eq!(a[0].mode, Mode::Exact);
    assert_eq!(a[5].mode, Mode::MonteCarlo);
}

#[test]
fn invalid_inputs_are_fatal() {
    let r = report("s", &[vec![5], vec![6]]);
    let nan = FnValue(|ids: &[u32]| if ids[1] == MASK_ID { f64::NAN } else { 1.0 });
    assert!(matches!(
        shapley_sections(&nan, &r, EXACT, 0),
        Err(ExplainError::NonFinite(_))
    ));
    let empty = report("e", &[]);
    assert!(matches!(
        shapley_sections(&FnValue(|_: &[u32]| 0.0), &empty, EXACT, 0),
        Err(ExplainError::NoSections(_))
    ));
    let zero = ModePolicy::MonteCarlo { permutations: 0 };
    assert!(matches!(
        shapley_sections(&FnValue(|_: &[u32]| 0.0), &r, zero, 0),
        Err(ExplainError::NoPermutations)
    ));
    let big = report("b", &vec![vec![5]; 21]);
    assert!(matches!(
        shapley_sections(&FnValue(|_: &[u32]| 0.0), &big, EXACT, 0),
        Err(ExplainError::TooManySections(21))
    ));
}
