//! Train on a generated dataset and report the mean exceed ratio on a held-out split.
//!
//! `cargo run --release --example desk_run -- msr3 5000 500 200 500`

use std::time::Instant;

use gdmopt::diffusion::{sample, train, SampleConfig, TrainConfig};
use gdmopt::oracle::{Dataset, OracleConfig};
use gdmopt::problems::{ProblemKind, ProblemSpec};

fn main() -> gdmopt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let kind: ProblemKind = arg(0, "msr3").parse()?;
    let n_train: usize = arg(1, "5000").parse().unwrap();
    let n_test: usize = arg(2, "500").parse().unwrap();
    let epochs: usize = arg(3, "200").parse().unwrap();
    let omegas: Vec<f64> = arg(4, "500").split(',').map(|v| v.parse().unwrap()).collect();
    let first_k: usize = arg(5, "5").parse().unwrap();
    let mode: gdmopt::diffusion::VarianceMode = arg(6, "paper_eq13").parse()?;

    let spec = ProblemSpec::new(kind);
    let started = Instant::now();
    let train_set = Dataset::generate(&spec, n_train, 1, OracleConfig::default(), 1)?;
    let test_set = Dataset::generate(&spec, n_test, 2, OracleConfig::default(), 1)?;
    eprintln!("data {:.1}s", started.elapsed().as_secs_f64());

    let started = Instant::now();
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let model = train(&train_set, &cfg)?;
    let h = &model.meta.loss_history;
    eprintln!(
        "train {:.1}s loss first {:.4} last {:.4}",
        started.elapsed().as_secs_f64(),
        h.first().copied().unwrap_or(f64::NAN),
        h.last().copied().unwrap_or(f64::NAN)
    );

    for omega in omegas {
    let scfg = SampleConfig {
        omega,
        normalize_first_k: first_k,
        variance_mode: mode,
        ..SampleConfig::default()
    };
    let mut ratios = Vec::new();
    let mut improved = 0;
    for (i, row) in test_set.rows.iter().enumerate() {
        let (y, tr) = sample(&model, &row.x, &SampleConfig { seed: i as u64, ..scfg.clone() })?;
        ratios.push(spec.evaluate(&row.x, &y) / row.f_star);
        if spec.at_least_as_good(tr.objective, tr.initial_objective()) {
            improved += 1;
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("{kind} omega={omega}: mean ratio {mean:.4}, improved {improved}/{}", ratios.len());
    }
    Ok(())
}
