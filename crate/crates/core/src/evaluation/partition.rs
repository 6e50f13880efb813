use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Regime};
use crate::error::{Error, Result};

/// How each class is cut into subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionProtocol {
    pub subsets_per_class: usize,
    /// Fixed subset size. Larger classes are subsampled (stratified) down to
    /// `subsets_per_class * subset_size` records; `None` uses every record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
}

impl PartitionProtocol {
    /// Three subsets of four images per class.
    pub const REPLICA: PartitionProtocol = PartitionProtocol {
        subsets_per_class: 3,
        subset_size: Some(4),
    };

    pub fn all_records(subsets_per_class: usize) -> Self {
        PartitionProtocol {
            subsets_per_class,
            subset_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPartition {
    pub class_name: String,
    pub subsets: Vec<Vec<String>>,
    pub seed: u64,
}

impl SubsetPartition {
    pub fn subset_count(&self) -> usize {
        self.subsets.len()
    }
}

/// Stratum of a record within its projected class: the subclass it came
/// from (only when subclasses are collapsed) and its background culture.
type Stratum = (Option<String>, Option<String>);

/// Seeded random partition of every projected class into subsets.
///
/// Records are stratified by background culture (and, under `CU`, by the
/// collapsed subclass), and every stratum is spread evenly over the subsets.
/// A class whose strata cannot be split evenly is an error.
pub fn partition_subsets(
    manifest: &DatasetManifest,
    regime: Regime,
    protocol: PartitionProtocol,
    seed: u64,
) -> Result<Vec<SubsetPartition>> {
    let s = protocol.subsets_per_class;
    if s == 0 {
        return Err(Error::Partition("subsets_per_class must be positive".into()));
    }
    if protocol.subset_size == Some(0) {
        return Err(Error::Partition("subset_size must be positive".into()));
    }
    let projected = manifest.project(regime)?;
    let mut classes: BTreeMap<&str, BTreeMap<Stratum, Vec<&str>>> = BTreeMap::new();
    for (rec, proj) in manifest.records().iter().zip(&projected) {
        let collapsed_sub = if regime.splits_subclasses() {
            None
        } else {
            rec.subclass_label.clone()
        };
        classes
            .entry(proj.class.as_str())
            .or_default()
            .entry((collapsed_sub, rec.background_culture.clone()))
            .or_default()
            .push(rec.image_id.as_str());
    }

    let mut out = Vec::with_capacity(classes.len());
    for (class_idx, (class, strata)) in classes.into_iter().enumerate() {
        let n: usize = strata.values().map(Vec::len).sum();
        let target = match protocol.subset_size {
            Some(size) => {
                let target = size * s;
                if n < target {
                    return Err(Error::Partition(format!(
                        "class `{class}` has {n} records, fewer than {s} subsets of {size}"
                    )));
                }
                target
            }
            None => {
                if !n.is_multiple_of(s) {
                    return Err(Error::Partition(format!(
                        "class `{class}` has {n} records, not divisible into {s} subsets"
                    )));
                }
                n
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class_idx as u64);
        let mut subsets: Vec<Vec<String>> = vec![Vec::new(); s];
        for (stratum, mut members) in strata {
            let quota = members.len() * target;
            if !quota.is_multiple_of(n) || !(quota / n).is_multiple_of(s) {
                return Err(Error::Partition(format!(
                    "class `{class}`: stratum {} of {} records cannot be balanced across {s} subsets",
                    describe(&stratum),
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            for (i, id) in members.into_iter().take(quota / n).enumerate() {
                subsets[i % s].push(id.to_string());
            }
        }
        out.push(SubsetPartition {
            class_name: class.to_string(),
            subsets,
            seed,
        });
    }
    Ok(out)
}

fn describe(stratum: &Stratum) -> String {
    match stratum {
        (None, None) => "(unstratified)".into(),
        (sub, bg) => format!(
            "(subclass {}, background {})",
            sub.as_deref().unwrap_or("-"),
            bg.as_deref().unwrap_or("-")
        ),
    }
}
