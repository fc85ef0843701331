//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always print:
//! `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, FixedOffset, TimeZone};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use common::stub::{local_reply, Captured, StubServer};
use common::{case_bundle, cosine_law_m, read_fixture};
use repdraft::case_model::{Direction, LocationRecord, SectionTarget};
use repdraft::grounding::{score, score_text, DraftRef, Tolerances};
use repdraft::ingest::lex::collapse_whitespace;
use repdraft::ingest::{
    has_errors, parse_csv_messages, parse_device_profile, parse_lablog_locations, parse_lablog_messages,
    parse_mandate, parse_tool_report_locations, parse_tool_report_messages,
};
use repdraft::llm_gateway::{
    BackendConfig, FaultProfile, Gateway, HttpResponse, Transport, CHAT_COMPLETIONS_PATH, LOCAL_GENERATE_PATH,
};
use repdraft::pipeline::{run_experiment, ResultsStore, MANUAL_NOTE};
use repdraft::prompting::{build_matrix, PromptSpec, RenderOptions};
use repdraft::transform::{detect_colocations, group_locations_spatial, haversine_m, GeoPoint};

const BIN: &str = env!("CARGO_BIN_EXE_repdraft");

enum Verdict {
    Pass(String),
    Skip(String),
}

type Outcome = Result<Verdict, String>;
type Criterion = fn() -> Outcome;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ts(s: &str) -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339(s).unwrap()
}

fn matrix() -> Vec<PromptSpec> {
    build_matrix(&case_bundle(), RenderOptions::default()).unwrap()
}

// 1 ------------------------------------------------------------------------

fn golden_parse() -> Outcome {
    let started = Instant::now();

    let (p2, d2) = parse_device_profile(&read_fixture("lablog_profile.txt"));
    let (p3, d3) = parse_device_profile(&read_fixture("tool_report_profile.txt"));
    check(!has_errors(&d2) && !has_errors(&d3), || {
        format!("profile diagnostics {d2:?} {d3:?}")
    })?;
    check(p2 == p3, || {
        format!("lab-log and tool-report profiles differ: {p2:?} vs {p3:?}")
    })?;
    let got = (
        p2.vendor.as_str(),
        p2.model_code.as_str(),
        p2.os_version.as_str(),
        p2.mac_address.as_str(),
        p2.timezone.as_str(),
    );
    let want = (
        "Samsung",
        "SM-G925F",
        "6.0.1",
        "AC:5F:3E:73:E3:78",
        "America/New_York",
    );
    check(got == want, || format!("profile {got:?}"))?;

    let (tool_locs, d) = parse_tool_report_locations(&read_fixture("tool_report_locations.txt"));
    check(!has_errors(&d) && tool_locs.len() == 3, || {
        format!("tool-report locations: {} records, {d:?}", tool_locs.len())
    })?;
    let first = &tool_locs[0];
    check(
        first.name == "20190214_143344.jpg"
            && first.latitude == 38.9075
            && first.longitude == -77.072778
            && first.timestamp == ts("2019-02-14T14:33:44+00:00")
            && first.size_bytes == Some(4_894_559),
        || format!("tool-report locations first record {first:?}"),
    )?;
    check(
        (tool_locs[1].latitude, tool_locs[1].longitude) == (38.9075, -77.072778),
        || format!("comma-decimal entry {:?}", tool_locs[1]),
    )?;

    let (lab_locs, d) = parse_lablog_locations(&read_fixture("lablog_locations.txt"));
    check(!has_errors(&d) && lab_locs.len() == 3, || {
        format!("lab-log locations: {} records, {d:?}", lab_locs.len())
    })?;
    check(
        lab_locs[0].latitude == 38.9075
            && lab_locs[0].longitude == -77.0727777777778
            && lab_locs[0]
                .related_location
                .as_deref()
                .is_some_and(|r| r.starts_with("Healy Hall, 37th St NW, Washington")),
        || format!("lab-log locations first record {:?}", lab_locs[0]),
    )?;

    let (tool_msgs, d) = parse_tool_report_messages(&read_fixture("tool_report_messages.txt"));
    check(!has_errors(&d) && tool_msgs.len() == 3, || {
        format!("tool-report messages: {} records, {d:?}", tool_msgs.len())
    })?;
    check(
        tool_msgs[0].body == "Wonder Woman created the group Secret"
            && tool_msgs[0].timestamp == ts("2019-02-05T12:16:00+00:00")
            && tool_msgs[0].direction == Some(Direction::Incoming),
        || format!("tool-report messages record 1 {:?}", tool_msgs[0]),
    )?;
    let s = tool_msgs[1].sender.as_ref();
    check(
        s.is_some_and(|s| s.id == "695862679" && s.display_name.as_deref() == Some("Wonder Woman")),
        || format!("tool-report messages record 2 sender {s:?}"),
    )?;
    check(tool_msgs[2].direction == Some(Direction::Incoming), || {
        format!("tool-report messages record 3 {:?}", tool_msgs[2])
    })?;

    let (lab_msgs, d) = parse_lablog_messages(&read_fixture("lablog_messages.txt"));
    check(!has_errors(&d) && lab_msgs.len() == 3, || {
        format!("lab-log messages: {} records, {d:?}", lab_msgs.len())
    })?;
    check(
        lab_msgs[0].timestamp == ts("2019-02-05T07:16:04-05:00")
            && lab_msgs[0].timestamp.offset().local_minus_utc() == -5 * 3600
            && lab_msgs[0].sender.is_none(),
        || format!("lab-log messages record 1 {:?}", lab_msgs[0]),
    )?;

    let (csv_msgs, d) = parse_csv_messages(&read_fixture("csv_messages.txt"));
    check(!has_errors(&d) && csv_msgs.len() == 3, || {
        format!("csv messages: {} records, {d:?}", csv_msgs.len())
    })?;
    check(csv_msgs[1].body.contains("This mission will be tricky"), || {
        format!("csv messages record 2 {:?}", csv_msgs[1])
    })?;

    let (m, d) = parse_mandate(&read_fixture("mandate_excerpt.txt"));
    check(
        !has_errors(&d)
            && m.received_date == chrono::NaiveDate::from_ymd_opt(2023, 10, 1)
            && m.investigator_name.as_deref() == Some("X")
            && m.questions.iter().any(|q| q.starts_with("Where was Mr Sforza")),
        || format!("mandate excerpt {m:?} {d:?}"),
    )?;
    let (m, d) = parse_mandate(&read_fixture("mandate_full.txt"));
    check(
        !has_errors(&d)
            && m.questions.len() == 5
            && m.deadline == chrono::NaiveDate::from_ymd_opt(2023, 10, 12),
        || format!("full mandate {m:?} {d:?}"),
    )?;

    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(Verdict::Pass(format!("5 excerpts + mandate in {elapsed:?}")))
}

// 2 ------------------------------------------------------------------------

fn cross_format() -> Outcome {
    let (tool_msgs, _) = parse_tool_report_messages(&read_fixture("tool_report_messages.txt"));
    let (lab_msgs, _) = parse_lablog_messages(&read_fixture("lablog_messages.txt"));
    let (csv_msgs, _) = parse_csv_messages(&read_fixture("csv_messages.txt"));
    for i in 0..3 {
        let bodies =
            [&tool_msgs[i].body, &lab_msgs[i].body, &csv_msgs[i].body].map(|b| collapse_whitespace(b));
        check(bodies[0] == bodies[1] && bodies[1] == bodies[2], || {
            format!("message {i} bodies {bodies:?}")
        })?;
        let minutes =
            [&tool_msgs[i], &lab_msgs[i], &csv_msgs[i]].map(|m| m.timestamp.timestamp().div_euclid(60));
        check(minutes[0] == minutes[1] && minutes[1] == minutes[2], || {
            format!(
                "message {i} instants {} {} {}",
                tool_msgs[i].timestamp, lab_msgs[i].timestamp, csv_msgs[i].timestamp
            )
        })?;
    }
    let (tool_locs, _) = parse_tool_report_locations(&read_fixture("tool_report_locations.txt"));
    let (lab_locs, _) = parse_lablog_locations(&read_fixture("lablog_locations.txt"));
    let mut worst: f64 = 0.0;
    for (a, b) in tool_locs.iter().zip(&lab_locs) {
        check(a.name == b.name && a.timestamp == b.timestamp, || {
            format!("{a:?} vs {b:?}")
        })?;
        worst = worst
            .max((a.latitude - b.latitude).abs())
            .max((a.longitude - b.longitude).abs());
    }
    check(tool_locs.len() == lab_locs.len() && worst <= 1e-4, || {
        format!("coordinate gap {worst}")
    })?;
    Ok(Verdict::Pass(format!(
        "3 bodies x 3 formats agree; max coordinate gap {worst:.1e} deg"
    )))
}

// 3 ------------------------------------------------------------------------

const INTRO_REQUEST: &str = "Can you summarize the previous text and write the intro of a forensic report for me? I need important elements of the description, the mandate, the questions asked (all of them), and the investigator of the case!";

fn matrix_replication() -> Outcome {
    let m = matrix();
    check(m.len() == 36, || format!("{} prompts", m.len()))?;
    let mut counts = BTreeMap::new();
    for p in &m {
        *counts.entry(p.target).or_insert(0) += 1;
    }
    let got: Vec<usize> = SectionTarget::ALL
        .iter()
        .map(|t| counts.get(t).copied().unwrap_or(0))
        .collect();
    check(got == [4, 4, 4, 12, 12], || format!("breakdown {got:?}"))?;
    let ids: BTreeSet<&str> = m.iter().map(|p| p.prompt_id.as_str()).collect();
    check(ids.len() == 36, || format!("{} distinct ids", ids.len()))?;
    let intro = m
        .iter()
        .find(|p| p.target == SectionTarget::Introduction && p.variant.phrasing_id == 0)
        .ok_or("no Introduction phrasing 0")?;
    check(intro.request == INTRO_REQUEST, || {
        format!("request {:?}", intro.request)
    })?;
    check(intro.rendered_text.contains(INTRO_REQUEST), || {
        "request missing from prompt text".into()
    })?;
    Ok(Verdict::Pass(
        "36 prompts, 4/4/4/12/12, distinct ids, verbatim request".into(),
    ))
}

// 4 ------------------------------------------------------------------------

fn random_records(rng: &mut StdRng, n: usize) -> Vec<LocationRecord> {
    let base = FixedOffset::east_opt(0)
        .unwrap()
        .with_ymd_and_hms(2019, 2, 14, 12, 0, 0)
        .unwrap();
    (0..n)
        .map(|i| {
            let offset = FixedOffset::east_opt(rng.random_range(-12..=12) * 3600).unwrap();
            LocationRecord {
                name: format!("r{i}.jpg"),
                timestamp: (base + chrono::TimeDelta::seconds(rng.random_range(0..6 * 3600)))
                    .with_timezone(&offset),
                category: "Media Locations".into(),
                latitude: rng.random_range(38.900..38.915),
                longitude: rng.random_range(-77.080..-77.062),
                related_location: None,
                source_file: None,
                size_bytes: None,
            }
        })
        .collect()
}

fn components(records: &[LocationRecord], radius: f64) -> BTreeSet<Vec<usize>> {
    let n = records.len();
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        seen[s] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && haversine_m(GeoPoint::of(&records[i]), GeoPoint::of(&records[j])) <= radius {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

fn transform_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut pairs_seen = 0;
    for trial in 0..200 {
        let (na, nb) = (rng.random_range(0..=100), rng.random_range(0..=100));
        let a = random_records(&mut rng, na);
        let b = random_records(&mut rng, nb);
        let radius = rng.random_range(20.0..400.0);
        let window = Duration::from_secs(rng.random_range(1..=120) * 60);

        let mut brute = BTreeSet::new();
        for (i, ra) in a.iter().enumerate() {
            for (j, rb) in b.iter().enumerate() {
                let close = haversine_m(GeoPoint::of(ra), GeoPoint::of(rb)) <= radius;
                let gap = (ra.timestamp - rb.timestamp).abs().to_std().unwrap();
                if close && gap <= window {
                    brute.insert((i, j));
                }
            }
        }
        let fast: Vec<(usize, usize)> = detect_colocations(&a, &b, radius, window)
            .iter()
            .map(|m| (m.record_a, m.record_b))
            .collect();
        let fast_set: BTreeSet<_> = fast.iter().copied().collect();
        check(fast.len() == fast_set.len() && fast_set == brute, || {
            format!(
                "trial {trial}: colocations {} vs brute force {}",
                fast_set.len(),
                brute.len()
            )
        })?;
        pairs_seen += brute.len();

        let clusters: BTreeSet<Vec<usize>> = group_locations_spatial(&a, radius)
            .into_iter()
            .map(|c| c.member_indices)
            .collect();
        check(clusters == components(&a, radius), || {
            format!("trial {trial}: clusters differ")
        })?;
    }

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (lat1, lon1) = (rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0));
        let (lat2, lon2) = (rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0));
        let h = haversine_m(GeoPoint::new(lat1, lon1), GeoPoint::new(lat2, lon2));
        worst = worst.max((h - cosine_law_m(lat1, lon1, lat2, lon2)).abs());
    }
    check(worst <= 0.5, || format!("haversine vs cosine law: {worst} m"))?;

    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(Verdict::Pass(format!(
        "200/200 trials agree ({pairs_seen} pairs); haversine gap {worst:.2e} m; {elapsed:?}"
    )))
}

// 5 ------------------------------------------------------------------------

fn grounding() -> Outcome {
    let bundle = case_bundle();
    let tol = Tolerances::default();
    let m = matrix();
    let dref = |id: &str| DraftRef {
        prompt_id: id.to_string(),
        backend_label: "input".into(),
    };

    let mut sound = 0;
    for p in &m {
        let r = score_text(p.input_block(), dref(&p.prompt_id), &bundle, p.target, &tol);
        check(r.hallucination_count == 0, || {
            format!("{} input: {}", p.prompt_id, r.to_text())
        })?;
        sound += 1;
    }
    for name in [
        "tool_report_messages.txt",
        "lablog_messages.txt",
        "csv_messages.txt",
        "tool_report_locations.txt",
        "lablog_locations.txt",
        "lablog_profile.txt",
        "tool_report_profile.txt",
        "mandate_full.txt",
        "methodology.txt",
        "items.txt",
    ] {
        let r = score_text(
            &read_fixture(name),
            dref(name),
            &bundle,
            SectionTarget::Introduction,
            &tol,
        );
        check(r.hallucination_count == 0, || format!("{name}: {}", r.to_text()))?;
        sound += 1;
    }

    let faults = [
        FaultProfile::InjectCoordinate {
            lat: 40.748817,
            lon: -73.985428,
        },
        FaultProfile::InjectCoordinate {
            lat: 38.9106,
            lon: -77.0651,
        },
        FaultProfile::InjectCoordinate {
            lat: -33.856784,
            lon: 151.215297,
        },
        FaultProfile::InjectName {
            name: "Moriarty".into(),
        },
        FaultProfile::InjectName {
            name: "Mr Holmes".into(),
        },
        FaultProfile::InjectName {
            name: "Irene Adler".into(),
        },
    ];
    let mut injected = 0;
    for fault in &faults {
        let gw = Gateway::new(BackendConfig::mock("mock", fault.clone()));
        for p in &m {
            let d = gw.generate(p).map_err(|e| e.to_string())?;
            let r = score(&d, &bundle, p.target, &tol);
            check(r.hallucination_count >= 1, || {
                format!("{fault:?} on {}: {}\n{}", p.prompt_id, d.text, r.to_text())
            })?;
            injected += 1;
        }
    }

    let mut dropped = 0;
    for p in &m {
        let n = score(
            &Gateway::new(BackendConfig::mock("mock", FaultProfile::Faithful))
                .generate(p)
                .unwrap(),
            &bundle,
            p.target,
            &tol,
        )
        .required_facts
        .len();
        for k in 0..=n {
            let gw = Gateway::new(BackendConfig::mock("mock", FaultProfile::DropFacts { k }));
            let d = gw.generate(p).map_err(|e| e.to_string())?;
            let r = score(&d, &bundle, p.target, &tol);
            let want = (n - k) as f64 / n as f64;
            check(r.completeness == want && r.hallucination_count == 0, || {
                format!(
                    "DropFacts({k}) on {}: completeness {} want {want}\n{}",
                    p.prompt_id,
                    r.completeness,
                    r.to_text()
                )
            })?;
            dropped += 1;
        }
    }
    Ok(Verdict::Pass(format!(
        "{sound} sound inputs, {injected}/{injected} injected drafts flagged, {dropped} DropFacts drafts exact"
    )))
}

// 6 ------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`repdraft {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline_once(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let manifest = common::fixture("manifest.toml");
    run_cli(
        dir,
        &[
            "ingest",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            "bundle.toml",
        ],
    )?;
    run_cli(
        dir,
        &["matrix", "--bundle", "bundle.toml", "--out", "matrix.json"],
    )?;
    run_cli(
        dir,
        &[
            "experiment",
            "--bundle",
            "bundle.toml",
            "--matrix",
            "matrix.json",
            "--backend",
            "mock",
            "--store",
            "results.jsonl",
        ],
    )?;
    let table = run_cli(dir, &["summarize", "--store", "results.jsonl"])?.stdout;
    std::fs::write(dir.join("summary.txt"), table).unwrap();
    let table = run_cli(dir, &["summarize", "--store", "results.jsonl", "--json"])?.stdout;
    std::fs::write(dir.join("summary.json"), table).unwrap();

    let specs: Vec<PromptSpec> =
        serde_json::from_slice(&std::fs::read(dir.join("matrix.json")).unwrap()).unwrap();
    let mut slots = Vec::new();
    for target in SectionTarget::ALL {
        let p = specs.iter().find(|p| p.target == target).unwrap();
        let file = format!("{target}.draft.json");
        run_cli(
            dir,
            &[
                "generate",
                "--matrix",
                "matrix.json",
                "--prompt-id",
                &p.prompt_id,
                "--out",
                &file,
            ],
        )?;
        slots.push(format!("{target}={file}"));
    }
    let mut args = vec!["assemble", "--bundle", "bundle.toml", "--out", "report.md"];
    for s in &slots {
        args.extend(["--draft", s.as_str()]);
    }
    run_cli(dir, &args)?;

    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        files.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).unwrap(),
        );
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline_once(d1.path())?;
    let second = pipeline_once(d2.path())?;
    check(first.keys().eq(second.keys()), || "different file sets".into())?;
    for (name, bytes) in &first {
        check(&second[name] == bytes, || format!("{name} differs between runs"))?;
    }

    let report = String::from_utf8(first["report.md"].clone()).unwrap();
    let headings: Vec<&str> = report.lines().filter(|l| l.starts_with("# ")).collect();
    let want = [
        "# Introduction",
        "# Items Received",
        "# Methodology",
        "# Results",
        "# Discussion",
        "# Conclusion",
    ];
    check(headings == want, || format!("headings {headings:?}"))?;
    for manual in ["# Discussion", "# Conclusion"] {
        let body: String = report
            .split(manual)
            .nth(1)
            .unwrap()
            .lines()
            .skip(1)
            .take_while(|l| !l.starts_with("# "))
            .collect::<Vec<_>>()
            .join("\n");
        check(body.contains(MANUAL_NOTE) && !body.contains("<!--"), || {
            format!("{manual} body {body:?}")
        })?;
    }
    Ok(Verdict::Pass(format!(
        "{} files byte-identical across two runs; 6 headings in order",
        first.len()
    )))
}

// 7 ------------------------------------------------------------------------

fn statelessness() -> Outcome {
    let m = matrix();
    let bundle = case_bundle();
    let replies = |n: usize| format!("Reply number {n} with marker zq{n:03}x.");

    let local = StubServer::start(Box::new(move |n, _| (200, local_reply(&replies(n)))));
    let hosted = StubServer::start(Box::new(move |n, _| {
        let body = json!({
            "choices": [{ "message": { "role": "assistant", "content": replies(n) } }],
            "usage": { "completion_tokens": 9 }
        });
        (200, body.to_string())
    }));
    std::env::set_var("REPDRAFT_ACCEPTANCE_KEY", "test-key");
    let mut hosted_cfg = BackendConfig::hosted("hosted", &hosted.url, "stub-model");
    hosted_cfg.api_key_env = Some("REPDRAFT_ACCEPTANCE_KEY".into());
    let gateways = [
        Gateway::new(BackendConfig::local("local", &local.url, "stub-model")),
        Gateway::new(hosted_cfg),
    ];
    let dir = tempfile::tempdir().unwrap();
    let store = ResultsStore::open(dir.path().join("results.jsonl"));
    let outcome =
        run_experiment(&bundle, &gateways, &m, &store, &Tolerances::default()).map_err(|e| e.to_string())?;
    check(outcome.errors == 0 && outcome.records == 72, || {
        format!("{outcome:?}")
    })?;

    let prompt_of = |c: &Captured, hosted: bool| -> Result<String, String> {
        if hosted {
            let msgs = c.body["messages"].as_array().ok_or("no messages")?;
            check(msgs.len() == 1 && msgs[0]["role"] == "user", || {
                format!("messages {msgs:?}")
            })?;
            Ok(msgs[0]["content"].as_str().unwrap_or_default().to_string())
        } else {
            Ok(c.body["prompt"].as_str().unwrap_or_default().to_string())
        }
    };

    let texts: Vec<&str> = m.iter().map(|p| p.rendered_text.as_str()).collect();
    let mut checked = 0;
    for (server, hosted, path) in [
        (&local, false, LOCAL_GENERATE_PATH),
        (&hosted, true, CHAT_COMPLETIONS_PATH),
    ] {
        let reqs = server.requests();
        check(reqs.len() == 36, || format!("{} requests captured", reqs.len()))?;
        let mut sent = BTreeSet::new();
        for (i, c) in reqs.iter().enumerate() {
            check(c.path == path, || format!("path {}", c.path))?;
            check(!c.headers.iter().any(|(k, _)| k == "cookie"), || {
                "cookie header sent".into()
            })?;
            let prompt = prompt_of(c, hosted)?;
            let own = texts
                .iter()
                .position(|t| *t == prompt)
                .ok_or_else(|| format!("request {i} is not a matrix prompt"))?;
            sent.insert(own);
            for (j, other) in texts.iter().enumerate() {
                check(j == own || !prompt.contains(other), || {
                    format!("request {i} embeds prompt {j}")
                })?;
            }
            for n in 0..reqs.len() {
                check(!prompt.contains(&format!("zq{n:03}x")), || {
                    format!("request {i} embeds reply {n}")
                })?;
            }
            checked += 1;
        }
        check(sent.len() == 36, || {
            format!("{} distinct prompts sent", sent.len())
        })?;
    }
    Ok(Verdict::Pass(format!(
        "{checked} captured requests each carry exactly one prompt, no history"
    )))
}

// 8 ------------------------------------------------------------------------

struct FailOne {
    poison: String,
    calls: Mutex<usize>,
}

impl Transport for FailOne {
    fn post_json(
        &self,
        _: &str,
        _: &[(String, String)],
        body: &Value,
        _: Duration,
    ) -> Result<HttpResponse, String> {
        *self.calls.lock().unwrap() += 1;
        if body["prompt"] == self.poison.as_str() {
            return Err("connection reset by stub".into());
        }
        Ok(HttpResponse {
            status: 200,
            body: local_reply("Draft."),
        })
    }
}

fn fault_tolerance() -> Outcome {
    let m = matrix();
    let bundle = case_bundle();
    let poison = m[17].rendered_text.clone();

    let mut cfg = BackendConfig::local("flaky", "http://unused", "stub-model");
    cfg.retry_backoff_ms = 1;
    let transport = Arc::new(FailOne {
        poison: poison.clone(),
        calls: Mutex::new(0),
    });
    let gw = Gateway::with_transport(cfg, transport.clone());
    let dir = tempfile::tempdir().unwrap();
    let store = ResultsStore::open(dir.path().join("results.jsonl"));
    let outcome =
        run_experiment(&bundle, &[gw], &m, &store, &Tolerances::default()).map_err(|e| e.to_string())?;
    let records = store.read_all().map_err(|e| e.to_string())?;
    let bad: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_error())
        .map(|(i, _)| i)
        .collect();
    check(
        outcome.records == 36 && outcome.errors == 1 && records.len() == 36 && bad == [17],
        || format!("library run: {outcome:?}, error rows {bad:?}"),
    )?;
    check(*transport.calls.lock().unwrap() == 38, || {
        "expected 2 retries of the failing call".into()
    })?;

    // Same through the CLI against a real socket.
    let server = StubServer::start(Box::new(move |_, c| {
        if c.body["prompt"] == poison.as_str() {
            (503, r#"{"error":"overloaded"}"#.into())
        } else {
            (200, local_reply("Draft."))
        }
    }));
    let profiles = format!(
        "[profiles.flaky]\nlabel = \"flaky\"\nbackend_kind = \"local_generate\"\nendpoint_url = \"{}\"\nmodel_name = \"stub\"\nretry_backoff_ms = 1\n",
        server.url
    );
    let d = dir.path();
    std::fs::write(d.join("profiles.toml"), profiles).unwrap();
    let manifest = common::fixture("manifest.toml");
    run_cli(
        d,
        &[
            "ingest",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            "bundle.toml",
        ],
    )?;
    let out = Command::new(BIN)
        .current_dir(d)
        .args([
            "experiment",
            "--bundle",
            "bundle.toml",
            "--profiles",
            "profiles.toml",
            "--backend",
            "flaky",
            "--store",
            "cli.jsonl",
        ])
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.code() == Some(0), || {
        format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    let cli = ResultsStore::open(d.join("cli.jsonl"))
        .read_all()
        .map_err(|e| e.to_string())?;
    let errors = cli.iter().filter(|r| r.is_error()).count();
    check(cli.len() == 36 && errors == 1, || {
        format!("CLI store: {} records, {errors} errors", cli.len())
    })?;
    Ok(Verdict::Pass(
        "35 drafts + 1 error record, library and CLI (exit 0)".into(),
    ))
}

// 9 ------------------------------------------------------------------------

fn live_smoke() -> Outcome {
    let Ok(endpoint) = std::env::var("REPDRAFT_LIVE_ENDPOINT") else {
        return Ok(Verdict::Skip(
            "set REPDRAFT_LIVE_ENDPOINT to a local generate server".into(),
        ));
    };
    let model = std::env::var("REPDRAFT_LIVE_MODEL").unwrap_or_else(|_| "local".into());
    let prompt = matrix()
        .into_iter()
        .find(|p| p.target == SectionTarget::Introduction)
        .unwrap();
    let draft = Gateway::new(BackendConfig::local("live", &endpoint, &model))
        .generate(&prompt)
        .map_err(|e| e.to_string())?;
    check(
        !draft.text.trim().is_empty() && draft.latency > Duration::ZERO,
        || format!("{draft:?}"),
    )?;
    Ok(Verdict::Pass(format!(
        "{} chars in {:?}",
        draft.text.len(),
        draft.latency
    )))
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("golden-parse fidelity", golden_parse),
        ("cross-format equivalence", cross_format),
        ("matrix replication", matrix_replication),
        ("transform oracles", transform_oracles),
        ("grounding soundness and sensitivity", grounding),
        ("end-to-end determinism", determinism),
        ("statelessness", statelessness),
        ("fault tolerance", fault_tolerance),
        ("live-backend smoke", live_smoke),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(Verdict::Pass(detail)) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Ok(Verdict::Skip(why)) => println!("criterion {} {name}: SKIP ({why})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
