//! Tuning probes for the toy-run defaults (kept for reproducing the
//! learning-rate and std-clip ablation sweeps). Run with:
//! cargo test --release -p revex-core --test probe -- --ignored --nocapture

use revex_core::config::RunConfig;
use revex_core::train::train;

fn run(lr: f64, group: usize, batch: usize, steps: usize, seed: u64) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::toy_default();
    cfg.seed = seed;
    cfg.train.learning_rate = lr;
    cfg.grpo.group_size = group;
    cfg.train.batch_size = batch;
    cfg.train.max_steps = Some(steps);
    cfg.train.eval_interval = 1000; // skip dev eval for speed
    cfg.paths.log_dir = dir.path().to_path_buf();
    let t0 = std::time::Instant::now();
    let out = train(&cfg).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let r = &out.records;
    let probe_points: Vec<usize> = vec![0, 24, 49, 99, 199, 299, 399, 499]
        .into_iter()
        .filter(|&i| i < r.len())
        .collect();
    println!("\n=== lr={lr} G={group} B={batch} steps={steps} seed={seed} ({elapsed:.1}s) ===");
    println!("step | final  ans_r  ans_e  ans_f  fmt   | maxA  clip");
    for i in probe_points {
        let x = &r[i];
        println!(
            "{:4} | {:.3}  {:.3}  {:.3}  {:.3}  {:.3} | {:5.2}  {:.3}",
            x.step,
            x.mean_final,
            x.mean_ans_r,
            x.mean_ans_e,
            x.mean_ans_f,
            x.format_rate,
            x.max_abs_advantage,
            x.clip_fraction
        );
    }
    let tail = &r[r.len().saturating_sub(20)..];
    let tail_final: f64 = tail.iter().map(|x| x.mean_final).sum::<f64>() / tail.len() as f64;
    let tail_fmt: f64 = tail.iter().map(|x| x.format_rate).sum::<f64>() / tail.len() as f64;
    let max_adv = r.iter().map(|x| x.max_abs_advantage).fold(0.0, f64::max);
    println!("tail20: final={tail_final:.4} fmt={tail_fmt:.4} | run max|A|={max_adv:.2}");
}

#[test]
#[ignore]
fn probe_learning_rates() {
    for lr in [10.0, 15.0, 20.0] {
        run(lr, 128, 4, 500, 42);
    }
    for seed in [7, 123, 2026] {
        run(15.0, 128, 4, 500, seed);
    }
}

#[test]
#[ignore]
fn probe_eps_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::toy_default();
    cfg.set_eps_std(0.0);
    cfg.train.eval_interval = 1000;
    cfg.paths.log_dir = dir.path().to_path_buf();
    let out = train(&cfg).unwrap();
    let max_adv = out
        .records
        .iter()
        .map(|x| x.max_abs_advantage)
        .fold(0.0, f64::max);
    let degenerate: usize = out.records.iter().map(|x| x.degenerate_groups).sum();
    let tail = &out.records[480..];
    let tail_final: f64 = tail.iter().map(|x| x.mean_final).sum::<f64>() / tail.len() as f64;
    println!(
        "eps=0: run max|A|={max_adv:.2} degenerate_groups={degenerate} tail_final={tail_final:.4}"
    );
    let spikes = out
        .records
        .iter()
        .filter(|x| x.max_abs_advantage > 10.0)
        .count();
    println!("steps with max|A| > 10: {spikes}");
}
