//! Train on a generated dataset and print intra-domain and held-out
//! metrics. Arguments are `key=value` overrides for the generator (prefix
//! `gen.`) and training configs.

use std::time::Instant;

use benet_data::kv::KvConfig;
use benet_data::{generate_dataset, Domain, GeneratorConfig, LabeledSample, Split};
use benet_harness::eval::{evaluate_scored, score};
use benet_harness::{calibrate, train_with, CalibrationSet, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (mut gen_kv, mut train_kv) = (KvConfig::default(), KvConfig::default());
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("expected key=value")?;
        match k.strip_prefix("gen.") {
            Some(k) => gen_kv.set(k, v),
            None => train_kv.set(k, v),
        }
    }
    let gen = GeneratorConfig::from_kv(&gen_kv)?;
    let cfg = TrainConfig::from_kv(&train_kv)?;
    let data = generate_dataset(&gen)?;
    let train_set = data.split(Split::Train);
    let test = data.split(Split::Test);
    let start = Instant::now();
    let out = train_with::<f32>(
        benet_core::BENetModel::new(cfg.model.clone(), cfg.seed)?,
        &train_set,
        &cfg,
        |e| {
            println!(
                "epoch {:2} total {:.4} ce {:.4} l1 {:.4} l2 {:.4} l3 {:.4}",
                e.epoch, e.total, e.cross_entropy, e.l1, e.l2, e.l3
            )
        },
    )?;
    println!("train time {:.1}s", start.elapsed().as_secs_f64());
    let tr = evaluate_scored(&score(&out.model, &train_set)?, None)?;
    println!("train auc {:.4} acc {:.4}", tr.auc.unwrap(), tr.accuracy);
    for set in [CalibrationSet::All, CalibrationSet::Real] {
        let det = calibrate(&out.model, &train_set, cfg.percentile, set)?;
        let theta = det.theta()?.into();
        let subset = |ds: &[Domain]| -> Vec<&LabeledSample> {
            test.iter().copied().filter(|s| ds.contains(&s.domain)).collect()
        };
        for (name, ds) in [
            ("intra", [Domain::Real, Domain::SpliceA, Domain::BlurB]),
            ("held_out", [Domain::Real, Domain::NoiseC, Domain::ColorD]),
        ] {
            let scored = score(&out.model, &subset(&ds))?;
            let plain = evaluate_scored(&scored, None)?;
            let det_r = evaluate_scored(&scored, Some(theta))?;
            println!(
                "[cal={set}] {name}: auc {:.4} acc {:.4}/{:.4} recall {:.4}/{:.4} theta {:.5}",
                plain.auc.unwrap(),
                plain.accuracy,
                det_r.accuracy,
                plain.fake_recall,
                det_r.fake_recall,
                theta
            );
            for d in &det_r.per_domain {
                println!(
                    "    {:8} n {:3} acc {:.3} p {:.3} D {:.5} unk {:.3}",
                    d.domain.name(),
                    d.count,
                    d.accuracy,
                    d.mean_probability,
                    d.mean_discrepancy,
                    d.unknown_rate
                );
            }
        }
    }
    Ok(())
}
