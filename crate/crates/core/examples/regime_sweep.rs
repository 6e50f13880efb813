//! Runs CU, CAT and CATT over a range of seeds on a synthetic spec and prints
//! mean accuracy, macro precision/recall and the CAT→CATT confidence shift.
//!
//! cargo run --release -p cultural-har --example regime_sweep -- fixtures/replica_spec.json 25

use cultural_har::evaluation::{
    compare_logs, enumerate_folds, partition_subsets, run_experiment, PartitionProtocol,
};
use cultural_har::synthetic::{generate, GeneratorSpec};
use cultural_har::{Regime, TrainingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "fixtures/replica_spec.json".into());
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(25);
    let spec = GeneratorSpec::from_json(&std::fs::read_to_string(path)?)?;

    let mut acc = [0.0; 3];
    let mut macro_p = [0.0; 3];
    let mut macro_r = [0.0; 3];
    let (mut delta, mut corrected, mut both) = (0.0, 0usize, 0usize);
    let (mut conf_cat, mut conf_catt, mut n_delta) = (0.0, 0.0, 0usize);
    let mut breakdown = std::collections::BTreeMap::new();
    for seed in 0..seeds {
        let data = generate(&spec.with_seed(seed))?;
        let tags = data.tag_table()?;
        let mut logs = Vec::new();
        for (i, regime) in Regime::ALL.into_iter().enumerate() {
            let parts = partition_subsets(&data.manifest, regime, PartitionProtocol::REPLICA, seed)?;
            let plan = enumerate_folds(parts)?;
            let result = run_experiment(&data.manifest, regime, &TrainingConfig::default(), &plan, &tags)?;
            let m = result.metrics(&data.manifest.superclasses());
            acc[i] += m.overall_accuracy.unwrap_or(0.0);
            macro_p[i] += m.macro_precision.unwrap_or(0.0);
            macro_r[i] += m.macro_recall.unwrap_or(0.0);
            logs.push(result);
        }
        for (b, c) in logs[1].log.iter().zip(&logs[2].log) {
            if !b.is_correct() && !c.is_correct() {
                let key = (b.actual.clone(), b.predicted.clone().unwrap_or_default(), c.predicted.clone().unwrap_or_default());
                let e = breakdown.entry(key).or_insert((0usize, 0.0));
                e.0 += 1;
                e.1 += c.confidence.unwrap_or(0.0) - b.confidence.unwrap_or(0.0);
            }
        }
        let cmp = compare_logs((logs[1].regime, &logs[1].log), (logs[2].regime, &logs[2].log))?;
        corrected += cmp.corrected;
        both += cmp.both_misclassified;
        if let Some(d) = cmp.mean_confidence_delta {
            delta += d;
            conf_cat += cmp.mean_confidence_baseline.unwrap();
            conf_catt += cmp.mean_confidence_candidate.unwrap();
            n_delta += 1;
        }
    }
    let n = seeds as f64;
    for (i, regime) in Regime::ALL.into_iter().enumerate() {
        println!(
            "{regime:>4}: accuracy {:.4}  macro precision {:.4}  macro recall {:.4}",
            acc[i] / n,
            macro_p[i] / n,
            macro_r[i] / n
        );
    }
    println!("CATT corrected {corrected} CAT errors; {both} misclassified by both");
    if n_delta > 0 {
        let k = n_delta as f64;
        println!(
            "confidence on shared errors: CAT {:.4}  CATT {:.4}  mean delta {:+.4} ({n_delta} seeds)",
            conf_cat / k,
            conf_catt / k,
            delta / k
        );
    }
    for ((actual, cat, catt), (count, sum)) in &breakdown {
        println!("  {actual} -> {cat} (CAT) / {catt} (CATT): {count} images, mean delta {:+.4}", sum / *count as f64);
    }
    Ok(())
}
