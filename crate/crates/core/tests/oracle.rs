//! Model checks against an exact rational-arithmetic Bayes computation that
//! recounts everything from the raw training examples.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use cultural_har::{
    ActivityModel, Error, PriorMode, Tag, TagSet, TrainingConfig, TrainingExample,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    examples: Vec<TrainingExample>,
    tests: Vec<TagSet>,
    config: TrainingConfig,
    /// Twice the smoothing constant, so it stays an integer.
    alpha2: i64,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n_classes = rng.gen_range(1..=4);
    let n_tags = rng.gen_range(1..=12);
    let alpha2 = [1, 2, 4][rng.gen_range(0..3)];
    let tag = |i: usize| format!("t{i:02}");
    let rates: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..n_tags).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut examples = Vec::new();
    for (c, rates) in rates.iter().enumerate() {
        for k in 0..rng.gen_range(1..=6) {
            let id = format!("c{c}-{k}");
            let texts: Vec<String> = (0..n_tags)
                .filter(|&t| rng.gen::<f64>() < rates[t])
                .map(tag)
                .collect();
            examples.push(TrainingExample::new(
                TagSet::from_texts(id, &texts).unwrap(),
                format!("c{c}"),
                None,
            ));
        }
    }
    let tests = (0..5)
        .map(|k| {
            let mut texts: Vec<String> = (0..n_tags).filter(|_| rng.gen_bool(0.5)).map(tag).collect();
            if rng.gen_bool(0.3) {
                texts.push("never-seen".into());
            }
            TagSet::from_texts(format!("test-{k}"), &texts).unwrap()
        })
        .collect();
    let config = TrainingConfig {
        smoothing_alpha: alpha2 as f64 / 2.0,
        prior_mode: if rng.gen_bool(0.5) {
            PriorMode::Uniform
        } else {
            PriorMode::Empirical
        },
        ..TrainingConfig::default()
    };
    Case {
        examples,
        tests,
        config,
        alpha2,
    }
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact posteriors and the first maximising class index.
fn oracle(case: &Case, test: &TagSet) -> (Vec<String>, Vec<BigRational>, usize) {
    let mut by_class: BTreeMap<&str, Vec<&TagSet>> = BTreeMap::new();
    for ex in &case.examples {
        by_class.entry(&ex.class_label).or_default().push(&ex.tags);
    }
    let vocab: BTreeSet<&Tag> = case.examples.iter().flat_map(|e| e.tags.tags()).collect();
    let total = case.examples.len() as i64;
    let n_classes = by_class.len() as i64;

    let mut joints = Vec::new();
    for members in by_class.values() {
        let n_c = members.len() as i64;
        let mut joint = match case.config.prior_mode {
            PriorMode::Uniform => ratio(1, n_classes),
            PriorMode::Empirical => ratio(n_c, total),
        };
        for tag in &vocab {
            let count = members.iter().filter(|s| s.contains(tag)).count() as i64;
            // (count + a) / (n_c + 2a) with a = alpha2 / 2
            let p = ratio(2 * count + case.alpha2, 2 * n_c + 2 * case.alpha2);
            joint *= if test.contains(tag) {
                p
            } else {
                BigRational::one() - p
            };
        }
        joints.push(joint);
    }
    let evidence = joints.iter().fold(BigRational::zero(), |acc, j| acc + j);
    let posteriors: Vec<BigRational> = joints.iter().map(|j| j / &evidence).collect();
    let mut best = 0;
    for (i, p) in posteriors.iter().enumerate() {
        if *p > posteriors[best] {
            best = i;
        }
    }
    (by_class.keys().map(|c| c.to_string()).collect(), posteriors, best)
}

#[test]
fn posteriors_match_exact_bayes_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut compared = 0;
    for _ in 0..1200 {
        let case = random_case(&mut rng);
        let model = ActivityModel::train(&case.examples, &case.config).unwrap();
        for test in &case.tests {
            let got = model.classify(test).unwrap();
            let (classes, exact, best) = oracle(&case, test);
            assert_eq!(got.classes, classes);
            for (g, e) in got.posteriors.iter().zip(&exact) {
                let e = e.to_f64().unwrap();
                assert!((g - e).abs() <= 1e-12, "posterior {g} vs exact {e}");
            }
            assert_eq!(got.predicted_class, classes[best]);
            compared += 1;
        }
    }
    assert!(compared >= 5000);
}

#[test]
fn posteriors_are_normalized_and_confidence_is_the_predicted_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let case = random_case(&mut rng);
        let model = ActivityModel::train(&case.examples, &case.config).unwrap();
        for test in &case.tests {
            let c = model.classify(test).unwrap();
            let sum: f64 = c.posteriors.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(c.posteriors.iter().all(|p| (0.0..=1.0).contains(p)));
            assert_eq!(Some(c.confidence), c.posterior(&c.predicted_class));
        }
    }
}

#[test]
fn smoothed_probabilities_stay_inside_their_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let case = random_case(&mut rng);
        let model = ActivityModel::train(&case.examples, &case.config).unwrap();
        let a = case.config.smoothing_alpha;
        for class in model.classes() {
            let n = case.examples.iter().filter(|e| &e.class_label == class).count() as f64;
            for tag in model.vocabulary().entries() {
                let p = model.p_present(class, tag).unwrap();
                assert!(p >= a / (n + 2.0 * a) - 1e-15 && p <= (n + a) / (n + 2.0 * a) + 1e-15);
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }
}

#[test]
fn renaming_classes_permutes_posteriors() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let case = random_case(&mut rng);
        // c0..c3 become z3..z0, reversing the sorted order
        let rename = |c: &str| format!("z{}", 3 - c[1..].parse::<u32>().unwrap());
        let renamed: Vec<TrainingExample> = case
            .examples
            .iter()
            .map(|e| TrainingExample::new(e.tags.clone(), rename(&e.class_label), None))
            .collect();
        let a = ActivityModel::train(&case.examples, &case.config).unwrap();
        let b = ActivityModel::train(&renamed, &case.config).unwrap();
        for test in &case.tests {
            let ca = a.classify(test).unwrap();
            let cb = b.classify(test).unwrap();
            for class in &ca.classes {
                let pa = ca.posterior(class).unwrap();
                let pb = cb.posterior(&rename(class)).unwrap();
                assert!((pa - pb).abs() <= 1e-12);
            }
            let top = ca.confidence;
            let tied = ca.posteriors.iter().filter(|p| (top - **p).abs() <= 1e-12).count();
            if tied == 1 {
                assert_eq!(cb.predicted_class, rename(&ca.predicted_class));
            }
        }
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let case = random_case(&mut rng);
        let mut shuffled = case.examples.clone();
        shuffled.reverse();
        let a = ActivityModel::train(&case.examples, &case.config).unwrap();
        let b = ActivityModel::train(&case.examples, &case.config).unwrap();
        let c = ActivityModel::train(&shuffled, &case.config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_json().unwrap(), c.to_json().unwrap());
    }
}

fn table_one_examples(rng: &mut ChaCha8Rng) -> Vec<TrainingExample> {
    let pool = ["person", "lying", "floor", "mat", "pillow", "blanket", "bed", "futon"];
    let mut examples = Vec::new();
    let classes = [
        ("sleeping-bed", ["european"; 4]),
        ("sleeping-futon", ["japanese"; 4]),
        ("lying-on-floor", ["european", "european", "japanese", "japanese"]),
    ];
    for (class, cultures) in classes {
        for (k, culture) in cultures.iter().enumerate() {
            let texts: Vec<&str> = pool.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            examples.push(TrainingExample::new(
                TagSet::from_texts(format!("{class}-{k}"), &texts).unwrap(),
                class,
                Some(culture.to_string()),
            ));
        }
    }
    examples
}

#[test]
fn cultural_tag_vetoes_the_other_cultures_subclass() {
    let registry = common::registry();
    let config = TrainingConfig {
        cultural_injection: true,
        culture_registry: registry.clone(),
        ..TrainingConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..100 {
        let model = ActivityModel::train(&table_one_examples(&mut rng), &config).unwrap();
        for k in 0..20 {
            let texts: Vec<&str> = ["floor", "mat", "futon", "bed", "pillow"]
                .into_iter()
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            let set = TagSet::from_texts(format!("t{k}"), &texts).unwrap();
            let jp = model.classify(&set.inject_cultural_tag("japanese", &registry).unwrap()).unwrap();
            assert_ne!(jp.predicted_class, "sleeping-bed");
            assert_eq!(jp.posterior("sleeping-bed"), Some(0.0));
            let eu = model.classify(&set.inject_cultural_tag("european", &registry).unwrap()).unwrap();
            assert_ne!(eu.predicted_class, "sleeping-futon");
            assert_eq!(eu.posterior("sleeping-futon"), Some(0.0));
        }
    }
}

#[test]
fn all_classes_vetoed_is_an_error() {
    let registry = common::registry();
    let config = TrainingConfig {
        cultural_injection: true,
        culture_registry: registry.clone(),
        ..TrainingConfig::default()
    };
    let examples = vec![
        TrainingExample::new(TagSet::from_texts("a", &["bed"]).unwrap(), "sleeping-bed", Some("european".into())),
        TrainingExample::new(TagSet::from_texts("b", &["futon"]).unwrap(), "sleeping-bed", Some("european".into())),
    ];
    let model = ActivityModel::train(&examples, &config).unwrap();
    let set = TagSet::from_texts("x", &["bed"]).unwrap();
    let err = model
        .classify(&set.inject_cultural_tag("japanese", &registry).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::NoAdmissibleClass));
}
