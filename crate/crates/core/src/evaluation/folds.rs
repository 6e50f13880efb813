use serde::{Deserialize, Serialize};

use super::partition::SubsetPartition;
use crate::error::{Error, Result};

/// One train/test split: a test subset index per class, the rest for training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub test: Vec<usize>,
    pub train: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub partitions: Vec<SubsetPartition>,
    pub folds: Vec<Fold>,
}

/// Every combination of one test subset per class, `S^C` folds for `C`
/// classes of `S` subsets. Order is lexicographic in the test indices with
/// the first class most significant.
pub fn enumerate_folds(partitions: Vec<SubsetPartition>) -> Result<FoldPlan> {
    let s = match partitions.first() {
        Some(p) => p.subset_count(),
        None => return Err(Error::Partition("no classes to fold".into())),
    };
    if s == 0 {
        return Err(Error::Partition("partitions have no subsets".into()));
    }
    if let Some(p) = partitions.iter().find(|p| p.subset_count() != s) {
        return Err(Error::Partition(format!(
            "class `{}` has {} subsets, expected {s} like `{}`",
            p.class_name,
            p.subset_count(),
            partitions[0].class_name
        )));
    }
    let c = partitions.len();
    let total = u32::try_from(c)
        .ok()
        .and_then(|c| s.checked_pow(c))
        .ok_or_else(|| Error::Partition("fold count overflows".into()))?;

    let folds = (0..total)
        .map(|index| {
            let mut rest = index;
            let mut test = vec![0; c];
            for slot in test.iter_mut().rev() {
                *slot = rest % s;
                rest /= s;
            }
            let train = test
                .iter()
                .map(|&t| (0..s).filter(|&k| k != t).collect())
                .collect();
            Fold { index, test, train }
        })
        .collect();
    Ok(FoldPlan { partitions, folds })
}

impl FoldPlan {
    pub fn classes(&self) -> Vec<String> {
        self.partitions.iter().map(|p| p.class_name.clone()).collect()
    }

    pub fn seed(&self) -> Option<u64> {
        self.partitions.first().map(|p| p.seed)
    }

    pub fn subsets_per_class(&self) -> usize {
        self.partitions.first().map_or(0, SubsetPartition::subset_count)
    }

    /// `[class][subset]` → number of folds using that subset for testing.
    pub fn test_appearances(&self) -> Vec<Vec<usize>> {
        self.appearances(|fold, class, subset| fold.test[class] == subset)
    }

    /// `[class][subset]` → number of folds using that subset for training.
    pub fn train_appearances(&self) -> Vec<Vec<usize>> {
        self.appearances(|fold, class, subset| fold.train[class].contains(&subset))
    }

    fn appearances(&self, used: impl Fn(&Fold, usize, usize) -> bool) -> Vec<Vec<usize>> {
        self.partitions
            .iter()
            .enumerate()
            .map(|(ci, p)| {
                (0..p.subset_count())
                    .map(|si| self.folds.iter().filter(|f| used(f, ci, si)).count())
                    .collect()
            })
            .collect()
    }
}
