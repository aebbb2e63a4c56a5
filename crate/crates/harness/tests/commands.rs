use aquasim::dataset::{checksum, read_episode, DatasetManifest, Split, HEADER_LEN, TRAILER_LEN};
use aquasim::tasks::INSTRUCTIONS;
use harness::*;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use tempfile::TempDir;

/// Desk dataset shared by the tests of this file: all tasks, 2 episodes
/// each, seed 7.
fn desk() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let req = GenerateRequest {
            seed: 7,
            workers: 1,
            tasks: None,
            episodes: None,
            out: dir.path().to_path_buf(),
        };
        generate(&HarnessConfig::desk(), &req).unwrap();
        dir
    })
    .path()
}

fn numeric_only() -> HarnessConfig {
    let mut cfg = HarnessConfig::desk();
    cfg.generate.render = false;
    cfg
}

fn small(out: &Path, tasks: &str, episodes: usize, workers: usize, cfg: &HarnessConfig) -> GenerateSummary {
    let req = GenerateRequest {
        seed: 3,
        workers,
        tasks: Some(tasks.into()),
        episodes: Some(episodes),
        out: out.to_path_buf(),
    };
    generate(cfg, &req).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn desk_dataset_totals_are_consistent() {
    let m = DatasetManifest::load(desk()).unwrap();
    assert_eq!(m.total_episodes, 40);
    assert_eq!(m.episodes.len(), 40);
    let mut frames = 0;
    for e in &m.episodes {
        let ep = read_episode(&desk().join(&e.file)).unwrap();
        assert_eq!(ep.meta, e.meta);
        assert_eq!(ep.frames.len(), e.meta.frame_count as usize);
        assert_eq!(ep.frames.len(), (e.meta.duration_s * 10.0 - 1e-9).ceil() as usize);
        frames += ep.frames.len();
    }
    assert_eq!(m.total_frames, frames);
    assert_eq!(m.count(Split::Train) + m.count(Split::Test), 40);
    assert!(validate(desk()).passed());
}

#[test]
fn worker_count_does_not_change_bytes() {
    let cfg = HarnessConfig::desk();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    small(a.path(), "goto_water_tower,pick_red_factory,follow_boat", 2, 1, &cfg);
    small(b.path(), "goto_water_tower,pick_red_factory,follow_boat", 2, 8, &cfg);
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn charge_station_episodes_last_about_fifteen_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let s = small(dir.path(), "goto_charge_station", 5, 1, &numeric_only());
    assert_eq!(s.episodes, 5);
    let m = DatasetManifest::load(dir.path()).unwrap();
    for e in &m.episodes {
        let n = e.meta.frame_count as f64;
        assert!((n - 150.0).abs() <= 15.0, "{n} frames");
    }
}

#[test]
fn recorded_actions_score_zero() {
    let rows = eval_offline(desk(), &OfflinePredictor::Recorded).unwrap();
    for r in &rows {
        assert_eq!(r.e_action, 0.0);
        assert_eq!(r.e_target, 0.0);
    }
}

#[test]
fn report_rows_match_instructions() {
    let m = DatasetManifest::load(desk()).unwrap();
    let present: BTreeSet<u32> = m.episodes.iter().filter(|e| e.split == Split::Test).map(|e| e.meta.instruction_id).collect();
    let rows = eval_offline(desk(), &OfflinePredictor::MeanBaseline).unwrap();
    let reported: BTreeSet<u32> = rows.iter().filter_map(|r| r.instruction).collect();
    assert_eq!(reported, present);
    // every task has a test episode, so every instruction shows up
    assert_eq!(reported.len(), INSTRUCTIONS.len());
    assert_eq!(rows.iter().filter(|r| r.instruction.is_none()).count(), 1);
    let table = offline_table(&rows);
    assert_eq!(table.rows.len(), INSTRUCTIONS.len() + 1);
}

#[test]
fn mean_baseline_matches_direct_computation() {
    let m = DatasetManifest::load(desk()).unwrap();
    let load = |split: Split| -> Vec<[f64; 7]> {
        m.episodes
            .iter()
            .filter(|e| e.split == split)
            .flat_map(|e| read_episode(&desk().join(&e.file)).unwrap().frames)
            .map(|f| f.target)
            .collect()
    };
    let (train, test) = (load(Split::Train), load(Split::Test));
    let mut mean = [0.0; 3];
    for t in &train {
        for i in 0..3 {
            mean[i] += t[4 + i] / train.len() as f64;
        }
    }
    let expected = test
        .iter()
        .map(|t| ((t[4] - mean[0]).powi(2) + (t[5] - mean[1]).powi(2) + (t[6] - mean[2]).powi(2)).sqrt())
        .sum::<f64>()
        / test.len() as f64;
    let rows = eval_offline(desk(), &OfflinePredictor::MeanBaseline).unwrap();
    let overall = rows.iter().find(|r| r.instruction.is_none()).unwrap();
    assert_eq!(overall.frames, test.len());
    assert!((overall.e_target - expected).abs() < 1e-9, "{} vs {expected}", overall.e_target);
    assert!(overall.e_action > 0.0);
}

#[test]
fn closed_loop_repeats() {
    let cfg = HarnessConfig::desk();
    let req = |workers| ClosedLoopRequest {
        tasks: "goto_charge_station,scan_ship_modern,pick_blue_shallow".into(),
        episodes: 3,
        seed: 11,
        workers,
    };
    let a = eval_closed_loop(&cfg, &req(1), &PolicyKind::Scripted).unwrap();
    let b = eval_closed_loop(&cfg, &req(1), &PolicyKind::Scripted).unwrap();
    let c = eval_closed_loop(&cfg, &req(3), &PolicyKind::Scripted).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(closed_loop_table(&a).to_tsv(), closed_loop_table(&c).to_tsv());
}

#[test]
fn random_policy_never_grasps() {
    let req = ClosedLoopRequest {
        tasks: "pick,transfer".into(),
        episodes: 5,
        seed: 5,
        workers: 1,
    };
    let results = eval_closed_loop(&HarnessConfig::desk(), &req, &PolicyKind::Random).unwrap();
    assert_eq!(results.len(), aquasim::tasks::select_tasks("pick,transfer").unwrap().len());
    for r in &results {
        assert!(r.grasping);
        assert_eq!(r.successes(), 0, "{}", r.task);
        assert!(r.episodes.iter().all(|e| e.final_distance.is_finite() && e.final_distance > 0.0));
    }
}

fn copy_dataset(src: &Path) -> TempDir {
    let dst = tempfile::tempdir().unwrap();
    for (name, bytes) in files(src) {
        std::fs::write(dst.path().join(name), bytes).unwrap();
    }
    dst
}

fn small_dataset() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        small(dir.path(), "goto_water_tower,inspect_pipeline_sea", 2, 1, &numeric_only());
        dir
    })
    .path()
}

#[test]
fn flipped_byte_names_the_episode() {
    let dir = copy_dataset(small_dataset());
    let m = DatasetManifest::load(dir.path()).unwrap();
    let victim = &m.episodes[2].file;
    let path = dir.path().join(victim);
    let mut bytes = std::fs::read(&path).unwrap();
    let at = bytes.len() / 2;
    bytes[at] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    let report = validate(dir.path());
    assert!(!report.passed());
    assert!(report.issues.iter().all(|i| i.episode.as_deref() == Some(victim.as_str())), "{:?}", report.issues);
    assert!(report.issues[0].to_string().contains(victim.as_str()));
}

/// Offset of the first numeric row inside an episode file.
fn first_row(bytes: &[u8]) -> usize {
    let mut at = HEADER_LEN;
    while at < bytes.len() - TRAILER_LEN {
        let tag = &bytes[at..at + 4];
        let len = u64::from_le_bytes(bytes[at + 4..at + 12].try_into().unwrap()) as usize;
        if tag == b"NUMS" {
            return at + 12 + 8;
        }
        at += 12 + len;
    }
    panic!("no numeric chunk");
}

#[test]
fn edited_timestamp_cites_the_rate() {
    let dir = copy_dataset(small_dataset());
    let m = DatasetManifest::load(dir.path()).unwrap();
    let victim = &m.episodes[1].file;
    let path = dir.path().join(victim);
    let mut bytes = std::fs::read(&path).unwrap();
    let stride = aquasim::dataset::FRAME_STRIDE * 8;
    let ts = first_row(&bytes) + 3 * stride;
    assert_eq!(f64::from_le_bytes(bytes[ts..ts + 8].try_into().unwrap()), 0.3);
    bytes[ts..ts + 8].copy_from_slice(&0.35f64.to_le_bytes());
    // keep the container intact so only the timing is wrong
    let split = bytes.len() - TRAILER_LEN;
    let sum = checksum(&bytes[..split]);
    bytes[split..].copy_from_slice(&sum.to_le_bytes());
    std::fs::write(&path, bytes).unwrap();
    let report = validate(dir.path());
    assert_eq!(report.issues.len(), 1, "{:?}", report.issues);
    let text = report.issues[0].to_string();
    assert!(text.contains(victim.as_str()) && text.contains("10 Hz"), "{text}");
}

#[test]
fn replay_export_writes_csv() {
    let out = tempfile::tempdir().unwrap();
    let written = replay_export(small_dataset(), "inspect_pipeline_sea", out.path()).unwrap();
    assert_eq!(written.len(), 2);
    let m = DatasetManifest::load(small_dataset()).unwrap();
    for path in &written {
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let width = lines[0].split(',').count();
        assert!(lines[0].starts_with("time,"));
        assert!(lines.iter().all(|l| l.split(',').count() == width));
        let stem = path.file_stem().unwrap().to_str().unwrap();
        let e = m.episodes.iter().find(|e| e.file.starts_with(stem)).unwrap();
        assert_eq!(lines.len() - 1, e.meta.frame_count as usize);
        assert!(lines[1..].iter().all(|l| l.split(',').all(|v| v.parse::<f64>().is_ok())));
    }
}

#[test]
fn episode_seeds_are_stable_and_distinct() {
    assert_eq!(episode_seed(7, "follow_boat", 0), episode_seed(7, "follow_boat", 0));
    let seeds: BTreeSet<u64> = ["follow_boat", "goto_water_tower"]
        .iter()
        .flat_map(|t| (0..50).map(move |i| episode_seed(7, t, i)))
        .chain((0..50).map(|i| episode_seed(8, "follow_boat", i)))
        .collect();
    assert_eq!(seeds.len(), 150);
}

#[test]
fn embedded_config_parses_and_rejects_junk() {
    let cfg = HarnessConfig::desk();
    assert_eq!(cfg.generate.episodes, 2);
    assert_eq!(cfg.generate.tasks, "all");
    assert!(matches!(HarnessConfig::from_toml("[generate]\nbogus = 1\n"), Err(HarnessError::Config(_))));
    assert!(matches!(HarnessConfig::from_toml("[generate]\ntest_fraction = 1.5\n"), Err(HarnessError::Config(_))));
}

// ---- the binary ----

fn bin() -> std::process::Command {
    let mut c = std::process::Command::new(env!("CARGO_BIN_EXE_aquasim"));
    c.env_remove(CONFIG_ENV);
    c
}

fn exit_code(c: &mut std::process::Command) -> (i32, String) {
    let out = c.output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ds");
    let cfg = write_config(tmp.path(), "[generate]\ntasks = \"goto_water_tower\"\nepisodes = 1\nrender = false\n");
    let (code, text) = exit_code(bin().args(["generate", "--seed", "1", "--out"]).arg(&out).arg("--config").arg(&cfg));
    assert_eq!(code, 0, "{text}");
    assert_eq!(exit_code(bin().arg("validate").arg(&out)).0, 0);

    let bad = copy_dataset(&out);
    let victim = bad.path().join(aquasim::dataset::episode_file_name(0));
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[HEADER_LEN + 20] ^= 0x40;
    std::fs::write(&victim, bytes).unwrap();
    let (code, text) = exit_code(bin().arg("validate").arg(bad.path()));
    assert_eq!(code, 1, "{text}");
    assert!(text.contains(&aquasim::dataset::episode_file_name(0)));

    // usage errors
    assert_eq!(exit_code(bin().args(["generate", "--out"]).arg(tmp.path().join("x"))).0, 2);
    assert_eq!(exit_code(bin().args(["generate", "--no-such-flag"])).0, 2);
    assert_eq!(exit_code(bin().args(["eval-offline"]).arg(&out)).0, 2);
    assert_eq!(exit_code(bin().args(["generate", "--seed", "1", "--tasks", "nope", "--out"]).arg(tmp.path().join("y"))).0, 2);
    // runtime failure
    assert_eq!(exit_code(bin().args(["eval-offline", "--baseline", "mean"]).arg(tmp.path().join("missing"))).0, 3);
}

#[test]
fn cli_config_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let env_cfg = write_config(tmp.path(), "[generate]\ntasks = \"goto_charge_station\"\nepisodes = 3\nrender = false\n");
    let out = tmp.path().join("env");
    let (code, text) = exit_code(bin().env(CONFIG_ENV, &env_cfg).args(["generate", "--seed", "2", "--out"]).arg(&out));
    assert_eq!(code, 0, "{text}");
    let m = DatasetManifest::load(&out).unwrap();
    assert_eq!(m.total_episodes, 3);
    assert!(m.episodes.iter().all(|e| e.meta.task_id == "goto_charge_station"));
    assert!(m.images.is_none());

    // flags beat the file
    let out2 = tmp.path().join("flags");
    let (code, _) = exit_code(
        bin()
            .env(CONFIG_ENV, &env_cfg)
            .args(["generate", "--seed", "2", "--episodes", "1", "--tasks", "goto_water_tower", "--out"])
            .arg(&out2),
    );
    assert_eq!(code, 0);
    let m = DatasetManifest::load(&out2).unwrap();
    assert_eq!(m.total_episodes, 1);
    assert_eq!(m.episodes[0].meta.task_id, "goto_water_tower");

    // an unreadable config is a usage error
    let (code, _) = exit_code(bin().env(CONFIG_ENV, tmp.path().join("absent.toml")).args(["generate", "--seed", "1", "--out"]).arg(&out2));
    assert_eq!(code, 2);
}

#[test]
fn cli_reports_and_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = exit_code(
        bin()
            .args(["eval-closed-loop", "--policy", "scripted", "--tasks", "goto_water_tower", "--episodes", "2", "--seed", "4", "--out"])
            .arg(tmp.path()),
    );
    assert_eq!(code, 0, "{text}");
    let table = Table::from_tsv(&std::fs::read_to_string(tmp.path().join("closed_loop_report.tsv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0][table.column("task").unwrap()], "goto_water_tower");

    let (code, text) = exit_code(bin().args(["eval-offline", "--baseline", "recorded", "--out"]).arg(tmp.path()).arg(small_dataset()));
    assert_eq!(code, 0, "{text}");
    let table = Table::from_tsv(&std::fs::read_to_string(tmp.path().join("offline_report.tsv")).unwrap()).unwrap();
    let col = table.column("e_action").unwrap();
    assert!(table.rows.iter().all(|r| r[col].parse::<f64>().unwrap() == 0.0));

    let csv = tmp.path().join("csv");
    let (code, text) = exit_code(bin().args(["replay-export", "--out"]).arg(&csv).arg(small_dataset()));
    assert_eq!(code, 0, "{text}");
    assert_eq!(std::fs::read_dir(&csv).unwrap().count(), 4);
}
