mod common;

use std::collections::BTreeMap;

use cultural_har::{DatasetManifest, Regime};

fn counts(manifest: &DatasetManifest, regime: Regime) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for p in manifest.project(regime).unwrap() {
        *out.entry(p.class).or_default() += 1;
    }
    out
}

#[test]
fn culture_unaware_collapses_sleeping() {
    let m = common::reference_manifest();
    assert_eq!(
        counts(&m, Regime::CultureUnaware),
        BTreeMap::from([("lying-on-floor".to_string(), 12), ("sleeping".to_string(), 24)])
    );
}

#[test]
fn culture_aware_regimes_promote_subclasses() {
    let m = common::reference_manifest();
    let expected = BTreeMap::from([
        ("lying-on-floor".to_string(), 12),
        ("sleeping-bed".to_string(), 12),
        ("sleeping-futon".to_string(), 12),
    ]);
    assert_eq!(counts(&m, Regime::CultureAwareTraining), expected);
    assert_eq!(counts(&m, Regime::CultureAwareTrainingTesting), expected);
}

#[test]
fn floor_images_take_their_culture_from_the_background() {
    let m = common::reference_manifest();
    let projected = m.project(Regime::CultureAwareTrainingTesting).unwrap();
    let floor: Vec<_> = projected.iter().filter(|p| p.class == "lying-on-floor").collect();
    let european = floor
        .iter()
        .filter(|p| p.cultural_label.as_deref() == Some("european"))
        .count();
    assert_eq!(european, 6);
    assert!(floor.iter().all(|p| p.cultural_label.is_some()));
    for p in &projected {
        match p.class.as_str() {
            "sleeping-bed" => assert_eq!(p.cultural_label.as_deref(), Some("european")),
            "sleeping-futon" => assert_eq!(p.cultural_label.as_deref(), Some("japanese")),
            _ => {}
        }
    }
}

#[test]
fn records_without_any_culture_cannot_be_projected_for_catt() {
    let mut records = common::reference_manifest().records().to_vec();
    records[30].background_culture = None;
    let m = DatasetManifest::new(common::registry(), common::class_tree(), records).unwrap();
    assert!(m.project(Regime::CultureAwareTraining).is_ok());
    let err = m.project(Regime::CultureAwareTrainingTesting).unwrap_err();
    assert!(err.to_string().contains(&m.records()[30].image_id));
}

#[test]
fn manifest_round_trips_through_json() {
    let m = common::reference_manifest();
    let json = m.to_json().unwrap();
    let back = DatasetManifest::from_json(&json).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_json().unwrap(), json);
    assert_eq!(
        m.superclasses(),
        BTreeMap::from([(
            "sleeping".to_string(),
            vec!["sleeping-bed".to_string(), "sleeping-futon".to_string()]
        )])
    );
}

#[test]
fn unknown_manifest_fields_are_rejected() {
    let json = common::reference_manifest().to_json().unwrap();
    let tampered = json.replacen("\"records\"", "\"extra\": 1, \"records\"", 1);
    assert!(DatasetManifest::from_json(&tampered).is_err());
    let bad_version = json.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
    assert_ne!(bad_version, json);
    assert!(DatasetManifest::from_json(&bad_version).is_err());
}

#[test]
fn committed_replica_manifest_has_the_reference_structure() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/replica/manifest.json");
    let m = DatasetManifest::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(m.records().len(), 36);
    assert_eq!(counts(&m, Regime::CultureUnaware), counts(&common::reference_manifest(), Regime::CultureUnaware));
    assert_eq!(
        counts(&m, Regime::CultureAwareTraining),
        counts(&common::reference_manifest(), Regime::CultureAwareTraining)
    );
    let floor_eu = m
        .project(Regime::CultureAwareTrainingTesting)
        .unwrap()
        .into_iter()
        .filter(|p| p.class == "lying-on-floor" && p.cultural_label.as_deref() == Some("european"))
        .count();
    assert_eq!(floor_eu, 6);
}
