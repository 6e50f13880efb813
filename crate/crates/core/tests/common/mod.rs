#![allow(dead_code)]

use std::collections::BTreeMap;

use cultural_har::evaluation::TagTable;
use cultural_har::{DatasetManifest, ImageRecord, TagSet};

pub fn registry() -> Vec<String> {
    vec!["european".into(), "japanese".into()]
}

pub fn class_tree() -> BTreeMap<String, Vec<String>> {
    BTreeMap::from([
        (
            "sleeping".to_string(),
            vec!["sleeping-bed".to_string(), "sleeping-futon".to_string()],
        ),
        ("lying-on-floor".to_string(), vec![]),
    ])
}

/// The reference dataset layout: 12 bed images of european people, 12 futon
/// images of japanese people, 12 floor images with 6 european and 6
/// japanese backgrounds.
pub fn reference_manifest() -> DatasetManifest {
    let mut records = Vec::new();
    for i in 0..12 {
        records.push(ImageRecord {
            image_id: format!("bed-{i:02}"),
            path_or_uri: format!("fixtures/bed-{i:02}.json"),
            class_label: "sleeping".into(),
            subclass_label: Some("sleeping-bed".into()),
            cultural_label: Some("european".into()),
            background_culture: Some("european".into()),
        });
    }
    for i in 0..12 {
        records.push(ImageRecord {
            image_id: format!("futon-{i:02}"),
            path_or_uri: format!("fixtures/futon-{i:02}.json"),
            class_label: "sleeping".into(),
            subclass_label: Some("sleeping-futon".into()),
            cultural_label: Some("japanese".into()),
            background_culture: Some("japanese".into()),
        });
    }
    for i in 0..12 {
        let culture = if i < 6 { "european" } else { "japanese" };
        records.push(ImageRecord {
            image_id: format!("floor-{i:02}"),
            path_or_uri: format!("fixtures/floor-{i:02}.json"),
            class_label: "lying-on-floor".into(),
            subclass_label: None,
            cultural_label: None,
            background_culture: Some(culture.into()),
        });
    }
    DatasetManifest::new(registry(), class_tree(), records).unwrap()
}

/// Tag sets where every class has its own tag and nothing else.
pub fn separable_tags(manifest: &DatasetManifest) -> TagTable {
    manifest
        .records()
        .iter()
        .map(|r| {
            let tag = r.subclass_label.as_deref().unwrap_or(&r.class_label);
            (
                r.image_id.clone(),
                TagSet::from_texts(r.image_id.clone(), &[tag, "person"]).unwrap(),
            )
        })
        .collect()
}
