//! Runs the scripted expert on a task filter and prints one line per episode.
//!
//!     cargo run --release -p aquasim --example scripted_rollouts -- goto 5

use aquasim::tasks::*;

fn main() {
    let mut args = std::env::args().skip(1);
    let filter = args.next().unwrap_or_else(|| "all".into());
    let n: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = SimConfig::default();
    let tasks = match select_tasks(&filter) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    for task in tasks {
        let mut wins = 0;
        for seed in 0..n {
            let mut policy = ScriptedPolicy::new(&task, &cfg);
            let r = match run_episode(&task, &cfg, seed, &mut policy, &RolloutOptions::default()) {
                Ok(r) => r,
                Err(e) => {
                    println!("{:24} seed {seed}: {e}", task.id);
                    continue;
                }
            };
            let rep = success_check(&task, &r.trace);
            wins += rep.success as usize;
            println!(
                "{:24} seed {seed} frames {:4} success {} distance {:.3} phases {:?}",
                task.id,
                r.frames.len(),
                rep.success,
                rep.final_distance,
                r.phase_sequence()
            );
        }
        println!("{}: {wins}/{n}", task.id);
    }
}
