//! Acceptance suite. Each test prints one `PASS`/`FAIL` line with its
//! measurements and the runtime bound it was held to, then asserts.
//!
//! cargo test -p cultural-har-cli --test acceptance -- --nocapture --test-threads 1

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cultural_har::evaluation::{
    compare_logs, enumerate_folds, partition_subsets, run_experiment, ExperimentResult,
    PartitionProtocol, TagTable,
};
use cultural_har::providers::{
    build_provider, extract_tags, ImageRef, Locator, NetworkCounter, ProviderDescriptor,
};
use cultural_har::synthetic::{generate, GeneratorSpec};
use cultural_har::{
    ActivityModel, ConfusionMatrix, DatasetManifest, Error, PriorMode, Regime, TagSet,
    TrainingConfig, TrainingExample,
};
use cultural_har_cli::{cmd_evaluate, CliConfig, Context, EvaluateArgs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 25;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration, limit: Duration) {
    let within = elapsed <= limit;
    println!(
        "criterion {id} [{name}]: {} ({detail}; {:.3}s, limit {}s)",
        if pass && within { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} exceeded its {}s budget", limit.as_secs());
}

fn load_spec(name: &str) -> GeneratorSpec {
    GeneratorSpec::from_json(&std::fs::read_to_string(fixtures().join(name)).unwrap()).unwrap()
}

/// Writes the synthetic dataset to disk and reads every tag set back
/// through a fixture provider, counting network requests.
fn tags_via_fixtures(spec: &GeneratorSpec, network: &NetworkCounter) -> (DatasetManifest, TagTable) {
    let data = generate(spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.write_to(dir.path()).unwrap();
    let providers = vec![build_provider(&ProviderDescriptor::fixture("fixture"), network).unwrap()];
    let mut table = TagTable::new();
    for record in data.manifest.records() {
        let image = ImageRef::new(&record.image_id, Locator::parse(&record.path_or_uri, dir.path()));
        let extraction = extract_tags(&image, &providers, None).unwrap();
        table.insert(record.image_id.clone(), extraction.tagset);
    }
    let texts = |t: &TagTable| -> Vec<Vec<String>> {
        t.values().map(|s| s.tags().map(|x| x.text().to_string()).collect()).collect()
    };
    assert_eq!(texts(&table), texts(&data.tag_table().unwrap()));
    (data.manifest, table)
}

fn run(manifest: &DatasetManifest, regime: Regime, seed: u64, tags: &TagTable) -> ExperimentResult {
    let parts = partition_subsets(manifest, regime, PartitionProtocol::REPLICA, seed).unwrap();
    let plan = enumerate_folds(parts).unwrap();
    run_experiment(manifest, regime, &TrainingConfig::default(), &plan, tags).unwrap()
}

#[test]
fn criterion_1_fold_combinatorics() {
    let start = Instant::now();
    let text = std::fs::read_to_string(fixtures().join("replica/manifest.json")).unwrap();
    let manifest = DatasetManifest::from_json(&text).unwrap();
    let mut ok = true;
    let mut found = Vec::new();
    for (regime, folds, tests, trains) in [
        (Regime::CultureUnaware, 9, 3, 6),
        (Regime::CultureAwareTraining, 27, 9, 18),
        (Regime::CultureAwareTrainingTesting, 27, 9, 18),
    ] {
        let plan = enumerate_folds(
            partition_subsets(&manifest, regime, PartitionProtocol::REPLICA, 0).unwrap(),
        )
        .unwrap();
        // count appearances directly from the fold list
        let classes = plan.partitions.len();
        let mut in_test = vec![vec![0; 3]; classes];
        let mut in_train = vec![vec![0; 3]; classes];
        for fold in &plan.folds {
            for c in 0..classes {
                in_test[c][fold.test[c]] += 1;
                for &s in &fold.train[c] {
                    in_train[c][s] += 1;
                }
            }
        }
        let distinct: BTreeSet<&Vec<usize>> = plan.folds.iter().map(|f| &f.test).collect();
        ok &= plan.folds.len() == folds
            && distinct.len() == folds
            && in_test.iter().flatten().all(|&n| n == tests)
            && in_train.iter().flatten().all(|&n| n == trains);
        found.push(format!("{} {} folds", regime.code(), plan.folds.len()));
    }
    report(1, "fold combinatorics", ok, found.join(", "), start.elapsed(), Duration::from_secs(1));
}

struct Case {
    examples: Vec<TrainingExample>,
    tests: Vec<TagSet>,
    config: TrainingConfig,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n_classes = rng.gen_range(1..=4);
    let n_tags = rng.gen_range(1..=12);
    let tag = |i: usize| format!("tag{i}");
    let mut examples = Vec::new();
    for c in 0..n_classes {
        let rates: Vec<f64> = (0..n_tags).map(|_| rng.gen()).collect();
        for k in 0..rng.gen_range(1..=5) {
            let texts: Vec<String> = (0..n_tags).filter(|&t| rng.gen::<f64>() < rates[t]).map(tag).collect();
            examples.push(TrainingExample::new(
                TagSet::from_texts(format!("c{c}-{k}"), &texts).unwrap(),
                format!("class{c}"),
                None,
            ));
        }
    }
    let tests = (0..5)
        .map(|k| {
            let texts: Vec<String> = (0..n_tags + 1).filter(|_| rng.gen_bool(0.5)).map(tag).collect();
            TagSet::from_texts(format!("t{k}"), &texts).unwrap()
        })
        .collect();
    let config = TrainingConfig {
        smoothing_alpha: [0.5, 1.0, 2.0][rng.gen_range(0..3)],
        prior_mode: if rng.gen_bool(0.5) { PriorMode::Uniform } else { PriorMode::Empirical },
        ..TrainingConfig::default()
    };
    Case { examples, tests, config }
}

/// Linear-space Bayes recounted from the raw examples: posteriors and the
/// first class (in sorted order) holding the maximum.
fn brute_force(case: &Case, test: &TagSet) -> (Vec<String>, Vec<f64>, usize) {
    let mut by_class: BTreeMap<&str, Vec<&TagSet>> = BTreeMap::new();
    for e in &case.examples {
        by_class.entry(e.class_label.as_str()).or_default().push(&e.tags);
    }
    let vocab: BTreeSet<String> = case
        .examples
        .iter()
        .flat_map(|e| e.tags.tags().map(|t| t.text().to_string()))
        .collect();
    let test_texts: BTreeSet<&str> = test.tags().map(|t| t.text()).collect();
    let a = case.config.smoothing_alpha;
    let mut joint = Vec::new();
    for members in by_class.values() {
        let n = members.len() as f64;
        let mut p = match case.config.prior_mode {
            PriorMode::Uniform => 1.0 / by_class.len() as f64,
            PriorMode::Empirical => n / case.examples.len() as f64,
        };
        for word in &vocab {
            let k = members
                .iter()
                .filter(|s| s.tags().any(|t| t.text() == word))
                .count() as f64;
            let present = (k + a) / (n + 2.0 * a);
            p *= if test_texts.contains(word.as_str()) { present } else { 1.0 - present };
        }
        joint.push(p);
    }
    let z: f64 = joint.iter().sum();
    let post: Vec<f64> = joint.iter().map(|j| j / z).collect();
    let mut best = 0;
    for (i, p) in post.iter().enumerate() {
        if *p > post[best] + 1e-12 {
            best = i;
        }
    }
    (by_class.keys().map(|s| s.to_string()).collect(), post, best)
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut models, mut checks, mut worst, mut argmax_ok) = (0, 0, 0.0f64, true);
    for _ in 0..1000 {
        let case = random_case(&mut rng);
        let model = ActivityModel::train(&case.examples, &case.config).unwrap();
        models += 1;
        for test in &case.tests {
            let got = model.classify(test).unwrap();
            let (classes, post, best) = brute_force(&case, test);
            assert_eq!(got.classes, classes);
            for (g, e) in got.posteriors.iter().zip(&post) {
                worst = worst.max((g - e).abs());
            }
            argmax_ok &= got.predicted_class == classes[best];
            checks += 1;
        }
    }
    report(
        2,
        "oracle equivalence",
        worst <= 1e-12 && argmax_ok,
        format!("{models} models, {checks} classifications, max |error| {worst:.2e}, argmax agrees: {argmax_ok}"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

/// Recall and precision of the merged `members` block, summed by hand.
fn merged(counts: &[Vec<u64>], members: &[usize]) -> (Option<f64>, Option<f64>) {
    let inside = |i: usize| members.contains(&i);
    let (mut tp, mut actual, mut predicted) = (0u64, 0u64, 0u64);
    for (p, row) in counts.iter().enumerate() {
        for (a, &v) in row.iter().enumerate() {
            if inside(p) && inside(a) {
                tp += v;
            }
            if inside(a) {
                actual += v;
            }
            if inside(p) {
                predicted += v;
            }
        }
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    (ratio(tp, actual), ratio(tp, predicted))
}

#[test]
fn criterion_3_superclass_aggregation() {
    let start = Instant::now();
    let names = |n: usize| (0..n).map(|i| format!("c{i}")).collect::<Vec<_>>();
    let m = vec![vec![10, 2, 0], vec![1, 9, 1], vec![1, 1, 11]];
    let fixture = ConfusionMatrix::from_counts(names(3), m).unwrap();
    let (recall, precision) = fixture.aggregate_superclass(&[0, 1]).unwrap();
    let mut ok = recall == Some(22.0 / 24.0) && precision == Some(22.0 / 23.0);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(3..=5);
        let counts: Vec<Vec<u64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0..25)).collect()).collect();
        let k = rng.gen_range(2..n);
        let mut members: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            members.swap(i, rng.gen_range(0..=i));
        }
        members.truncate(k);
        let matrix = ConfusionMatrix::from_counts(names(n), counts.clone()).unwrap();
        let got = matrix.aggregate_superclass(&members).unwrap();
        let want = merged(&counts, &members);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-15,
            (None, None) => true,
            _ => false,
        };
        ok &= close(got.0, want.0) && close(got.1, want.1);
    }
    report(
        3,
        "superclass aggregation",
        ok,
        format!("fixture recall {:?} precision {:?}, 200 random matrices", recall, precision),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_4_cultural_veto() {
    let start = Instant::now();
    let registry = vec!["european".to_string(), "japanese".to_string()];
    let config = TrainingConfig {
        cultural_injection: true,
        culture_registry: registry.clone(),
        ..TrainingConfig::default()
    };
    let pool = ["person", "lying", "floor", "mat", "pillow", "blanket", "bed", "futon", "tatami"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut violations) = (0, 0);
    for _ in 0..200 {
        let mut examples = Vec::new();
        for (class, cultures) in [
            ("sleeping-bed", ["european"; 4]),
            ("sleeping-futon", ["japanese"; 4]),
            ("lying-on-floor", ["european", "european", "japanese", "japanese"]),
        ] {
            for (k, culture) in cultures.into_iter().enumerate() {
                let texts: Vec<&str> = pool.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
                examples.push(TrainingExample::new(
                    TagSet::from_texts(format!("{class}-{k}"), &texts).unwrap(),
                    class,
                    Some(culture.into()),
                ));
            }
        }
        let model = ActivityModel::train(&examples, &config).unwrap();
        for k in 0..10 {
            let texts: Vec<&str> = pool.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            let set = TagSet::from_texts(format!("x{k}"), &texts).unwrap();
            for (culture, banned) in [("japanese", "sleeping-bed"), ("european", "sleeping-futon")] {
                let c = model.classify_with_profile(&set, Some(culture)).unwrap();
                if c.predicted_class == banned || c.posterior(banned) != Some(0.0) {
                    violations += 1;
                }
                checked += 1;
            }
        }
    }
    report(
        4,
        "cultural veto",
        violations == 0,
        format!("{checked} injected classifications, {violations} vetoed-class predictions"),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

struct Sweep {
    accuracy: [f64; 3],
    shared_errors: usize,
    conf_cat: f64,
    conf_catt: f64,
    network: u64,
    elapsed: Duration,
}

fn replica_sweep() -> &'static Sweep {
    static SWEEP: std::sync::OnceLock<Sweep> = std::sync::OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let spec = load_spec("replica_spec.json");
        let network = NetworkCounter::new();
        let mut accuracy = [0.0; 3];
        let (mut shared, mut conf_cat, mut conf_catt) = (0, 0.0, 0.0);
        for seed in 0..SEEDS {
            let (manifest, tags) = tags_via_fixtures(&spec.with_seed(seed), &network);
            let results: Vec<ExperimentResult> = Regime::ALL
                .into_iter()
                .map(|regime| run(&manifest, regime, seed, &tags))
                .collect();
            for (acc, r) in accuracy.iter_mut().zip(&results) {
                *acc += r.matrix.accuracy().unwrap() / SEEDS as f64;
            }
            // same folds for CAT and CATT, so logs line up entry by entry
            compare_logs((Regime::CultureAwareTraining, &results[1].log), (Regime::CultureAwareTrainingTesting, &results[2].log)).unwrap();
            for (a, b) in results[1].log.iter().zip(&results[2].log) {
                assert_eq!((&a.image_id, a.fold), (&b.image_id, b.fold));
                if let (false, false, Some(ca), Some(cb)) = (a.is_correct(), b.is_correct(), a.confidence, b.confidence) {
                    shared += 1;
                    conf_cat += ca;
                    conf_catt += cb;
                }
            }
        }
        Sweep {
            accuracy,
            shared_errors: shared,
            conf_cat: conf_cat / shared.max(1) as f64,
            conf_catt: conf_catt / shared.max(1) as f64,
            network: network.get(),
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_5_regime_ordering() {
    let s = replica_sweep();
    let [cu, cat, catt] = s.accuracy;
    report(
        5,
        "regime ordering",
        catt >= cat && cat >= cu && catt - cat >= 0.05,
        format!("mean accuracy over {SEEDS} seeds CU {cu:.4}, CAT {cat:.4}, CATT {catt:.4}; CATT - CAT {:+.4}", catt - cat),
        s.elapsed,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_6_confidence_delta() {
    let s = replica_sweep();
    report(
        6,
        "confidence delta",
        s.shared_errors > 0 && s.conf_catt < s.conf_cat,
        format!(
            "{} images misclassified by both; mean confidence CAT {:.4}, CATT {:.4}, delta {:+.4}",
            s.shared_errors,
            s.conf_cat,
            s.conf_catt,
            s.conf_catt - s.conf_cat
        ),
        s.elapsed,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_7_target_band() {
    let start = Instant::now();
    let spec = load_spec("target_band_spec.json");
    let network = NetworkCounter::new();
    let (manifest, tags) = tags_via_fixtures(&spec, &network);
    let result = run(&manifest, Regime::CultureAwareTrainingTesting, spec.seed, &tags);
    let m = result.metrics(&manifest.superclasses());
    let (p, r) = (m.macro_precision.unwrap(), m.macro_recall.unwrap());
    report(
        7,
        "target band",
        p >= 0.84 && r >= 0.91 && network.get() == 0,
        format!("CATT seed {} precision {p:.4}, recall {r:.4}", spec.seed),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

fn evaluate_once(manifest: &Path, out: &Path) -> (BTreeMap<String, Vec<u8>>, u64) {
    let ctx = Context::new(CliConfig::default(), out).with_seed(11);
    cmd_evaluate(
        &ctx,
        &EvaluateArgs {
            manifest: manifest.to_path_buf(),
            regimes: vec![],
            regime_seeds: vec![],
            tags: None,
        },
    )
    .unwrap();
    let files = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    (files, ctx.network.get())
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let manifest = fixtures().join("replica/manifest.json");
    let dir = tempfile::tempdir().unwrap();
    let (a, net_a) = evaluate_once(&manifest, &dir.path().join("a"));
    let (b, net_b) = evaluate_once(&manifest, &dir.path().join("b"));
    let reports: Vec<&String> = a.keys().filter(|k| k.starts_with("report_")).collect();
    report(
        8,
        "determinism",
        reports.len() == 3 && a == b && net_a + net_b == 0,
        format!("{} JSON outputs byte-identical across two runs", a.len()),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_9_offline() {
    let start = Instant::now();
    let sweep = replica_sweep();
    let network = NetworkCounter::new();
    tags_via_fixtures(&load_spec("target_band_spec.json"), &network);
    let dir = tempfile::tempdir().unwrap();
    let (_, evaluate) = evaluate_once(&fixtures().join("replica/manifest.json"), dir.path());
    // a live provider without credentials must fail before any request
    let http = ProviderDescriptor {
        name: "clarifai".into(),
        kind: cultural_har::providers::ProviderKind::HttpService,
        api: Some(cultural_har::providers::ServiceApi::Clarifai),
        endpoint: Some("https://api.clarifai.com/v2/models/general-image-recognition/outputs".into()),
        credential_ref: Some("CULTURAL_HAR_ACCEPTANCE_NO_SUCH_KEY".into()),
        timeout_secs: 1,
        max_retries: 0,
    };
    let refused = matches!(build_provider(&http, &network), Err(Error::Provider { .. }));
    let total = sweep.network + network.get() + evaluate;
    report(
        9,
        "offline completeness",
        total == 0 && refused,
        format!("fixture providers only, {total} network requests"),
        start.elapsed(),
        Duration::from_secs(60),
    );
}
