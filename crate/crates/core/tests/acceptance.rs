//! Acceptance criteria, one line of output each.
//!
//! Runs without the libtest harness so every criterion reports PASS or FAIL
//! even when an earlier one fails. Exits non-zero if any criterion fails.

use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cotprune::gateway::mock::{REORDER_MARKER, SCORE_FAULT_MARKER};
use cotprune::pipeline::{
    audit_corpus, compute_report, load_corpus, Backends, Pipeline, PipelineConfig, RunOptions,
    Stages,
};
use cotprune::{
    entropy_topk, fine_prune, gestalt_similarity, join_steps, pattern_match, removal_order,
    split_steps, step_perplexity, surprisal, ReferenceTokenizer, Sample, ScoredStep, Status,
    StepSequence, TokenSpan, Tokenizer,
};

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus20.jsonl");
const BIN: &str = env!("CARGO_BIN_EXE_cotprune");

type Check = fn() -> String;

// ---------------------------------------------------------------------------
// Oracles

/// Ratcliff-Obershelp by exhaustive search: the longest common block is found
/// by trying every pair of start positions, earliest in `a` then earliest in
/// `b` winning ties, then both sides are recursed into.
fn oracle_matches(a: &[char], b: &[char]) -> usize {
    let (mut best, mut bi, mut bj) = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best {
                (best, bi, bj) = (k, i, j);
            }
        }
    }
    if best == 0 {
        return 0;
    }
    best + oracle_matches(&a[..bi], &b[..bj]) + oracle_matches(&a[bi + best..], &b[bj + best..])
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * oracle_matches(&a, &b) as f64 / (a.len() + b.len()) as f64
}

/// Pattern matching written out as the pseudocode reads: one origin cursor,
/// advanced past every compared step, with a found flag per coarse step.
fn oracle_pattern_match(
    origin: &[String],
    coarse: &[String],
    tau: f64,
) -> (bool, Vec<(usize, usize)>) {
    let mut origin_idx = 0;
    let mut alignment = Vec::new();
    for (ci, s_coarse) in coarse.iter().enumerate() {
        let mut found_match = false;
        while origin_idx < origin.len() {
            let s_origin = &origin[origin_idx];
            let score = oracle_similarity(s_origin, s_coarse);
            if score >= tau {
                found_match = true;
                alignment.push((ci, origin_idx));
                origin_idx += 1;
                break;
            }
            origin_idx += 1;
        }
        if !found_match {
            return (false, alignment);
        }
    }
    (true, alignment)
}

/// Smallest k such that dropping the first k steps of ascending
/// (score, index) order fits the budget, capped at n - 1.
fn oracle_removed(scores: &[f64], texts: &[String], budget: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let count = |drop: &[usize]| {
        let kept: Vec<&str> = (0..texts.len())
            .filter(|i| !drop.contains(i))
            .map(|i| texts[i].as_str())
            .collect();
        ReferenceTokenizer.count(&kept.join("\n\n"))
    };
    for k in 0..scores.len() {
        if count(&order[..k]) <= budget {
            return order[..k].to_vec();
        }
    }
    order[..scores.len() - 1].to_vec()
}

// ---------------------------------------------------------------------------
// Helpers

fn random_string(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}

fn seq(v: Vec<String>) -> StepSequence {
    StepSequence::new(v).expect("valid steps")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

fn mock_pipeline(budget: usize) -> Pipeline {
    let cfg = PipelineConfig {
        mock: true,
        seed: 42,
        budget,
        concurrency: 4,
        ..Default::default()
    };
    Pipeline::new(cfg, Backends::mock(42)).expect("pipeline")
}

fn words(n: usize) -> String {
    (0..n)
        .map(|i| format!("w{i}"))
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Criteria

fn c1_gestalt_oracle() -> String {
    let start = Instant::now();
    let alphabets: [Vec<char>; 4] = [
        "ab".chars().collect(),
        "abcd ".chars().collect(),
        "abcdefghijklmnopqrstuvwxyz0123456789 _(){}"
            .chars()
            .collect(),
        "aé漢\u{1F600}b ".chars().collect(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let alpha = &alphabets[rng.random_range(0..alphabets.len())];
        let a = random_string(&mut rng, alpha, 64);
        let b = random_string(&mut rng, alpha, 64);
        let got = gestalt_similarity(&a, &b);
        let want = if a.is_empty() != b.is_empty() {
            0.0
        } else {
            oracle_similarity(&a, &b)
        };
        worst = worst.max((got - want).abs());
        assert!(close(got, want, 1e-12), "{a:?} vs {b:?}: {got} != {want}");
    }
    assert_eq!(gestalt_similarity("abcd", "bcde"), 0.75);
    assert_eq!(gestalt_similarity("", ""), 1.0);
    assert_eq!(gestalt_similarity("", "x"), 0.0);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    format!("1000 pairs, max |diff| {worst:e}")
}

fn c2_pattern_match_fidelity() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab = [
        "read", "loop", "sum", "wait", "hmm", "print", "check", "edge", "list", "x",
    ];
    let (mut identity, mut reordered, mut valid) = (0, 0, 0);
    for case in 0..500 {
        let n = rng.random_range(1..=12);
        let kind = case % 4;
        let (origin, coarse): (Vec<String>, Vec<String>) = if kind == 3 {
            // Disjoint alphabets: steps are mutually dissimilar.
            let origin: Vec<String> = (0..n)
                .map(|k| {
                    let base = 0x400 + 16 * k as u32;
                    let len = rng.random_range(1..10);
                    (0..len)
                        .map(|_| char::from_u32(base + rng.random_range(0..16)).unwrap())
                        .collect()
                })
                .collect();
            let mut coarse = origin.clone();
            coarse.reverse();
            (origin, coarse)
        } else {
            let origin: Vec<String> = (0..n)
                .map(|_| {
                    let len = rng.random_range(1..6);
                    (0..len)
                        .map(|_| vocab[rng.random_range(0..vocab.len())])
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let coarse = match kind {
                0 => origin.clone(),
                1 => {
                    let mut kept = Vec::new();
                    for s in &origin {
                        if !rng.random_bool(0.6) {
                            continue;
                        }
                        kept.push(if rng.random_bool(0.3) {
                            format!("{s} {}", vocab[rng.random_range(0..vocab.len())])
                        } else {
                            s.clone()
                        });
                    }
                    kept
                }
                _ => (0..rng.random_range(1..=n))
                    .map(|_| origin[rng.random_range(0..n)].clone())
                    .collect(),
            };
            (origin, coarse)
        };
        let tau = if kind == 0 || kind == 3 {
            0.6
        } else {
            rng.random_range(0.3..0.95)
        };
        let got = pattern_match(&seq(origin.clone()), &seq(coarse.clone()), tau);
        let (want_valid, want_align) = oracle_pattern_match(&origin, &coarse, tau);
        assert_eq!(
            got.valid, want_valid,
            "case {case}: {origin:?} / {coarse:?} at {tau}"
        );
        let got_align: Vec<(usize, usize)> = got
            .alignment
            .iter()
            .map(|a| (a.coarse_index, a.origin_index))
            .collect();
        assert_eq!(got_align, want_align, "case {case}");
        if kind == 0 {
            assert!(got.valid, "identity case {case} invalid");
            identity += 1;
        }
        if kind == 3 && n >= 2 {
            assert!(!got.valid, "reordered case {case} valid");
            reordered += 1;
        }
        valid += usize::from(got.valid);
    }
    format!("500 cases ({identity} identity, {reordered} reordered, {valid} valid overall)")
}

fn scored_steps(scores: &[f64], texts: &[String]) -> Vec<ScoredStep> {
    scores
        .iter()
        .zip(texts)
        .enumerate()
        .map(|(i, (&s, t))| ScoredStep {
            step_index: i,
            text: t.clone(),
            first_token: TokenSpan {
                index: 0,
                byte_start: 0,
                byte_end: 1,
                logprob: -s,
            },
            surprisal: s,
            entropy_topk: None,
            step_ppl: None,
        })
        .collect()
}

fn c3_refiner_fidelity() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut early = 0;
    let mut violations = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=10);
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..6u8)) * 0.5)
            .collect();
        let texts: Vec<String> = (0..n)
            .map(|k| {
                (0..rng.random_range(1..12))
                    .map(|j| format!("s{k}t{j}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let budget = rng.random_range(1..60);
        let steps = scored_steps(&scores, &texts);
        let r = fine_prune(&steps, budget, &ReferenceTokenizer).unwrap();
        let want = oracle_removed(&scores, &texts, budget);
        assert_eq!(r.removed, want, "case {case}");
        assert!(!r.steps.is_empty(), "case {case}: empty result");
        let kept: Vec<String> = (0..n)
            .filter(|i| !want.contains(i))
            .map(|i| texts[i].clone())
            .collect();
        assert_eq!(r.steps.steps(), &kept[..], "case {case}");
        let order = removal_order(&steps);
        assert_eq!(&order[..r.removed.len()], &r.removed[..]);
        if ReferenceTokenizer.count(&texts.join("\n\n")) <= budget {
            assert!(
                r.removed.is_empty() && r.steps.steps() == &texts[..],
                "case {case}: early return mutated"
            );
            early += 1;
        }
        violations += usize::from(r.budget_violation);
    }
    // Hand-traced: three 10-token steps, 30 tokens total, budget 25. The
    // lowest score (step 1) goes first and leaves 20 tokens.
    let texts: Vec<String> = ["a", "b", "c"]
        .iter()
        .map(|p| {
            (0..10)
                .map(|i| format!("{p}{i}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let r = fine_prune(
        &scored_steps(&[2.0, 0.5, 3.0], &texts),
        25,
        &ReferenceTokenizer,
    )
    .unwrap();
    assert_eq!(r.removed, [1]);
    assert_eq!(r.steps.steps(), [texts[0].clone(), texts[2].clone()]);
    format!("500 cases ({early} within budget, {violations} single-step violations), fixture survivors {{0, 2}}")
}

fn c4_analytics() -> String {
    let s = surprisal(0.5f64.ln()).unwrap();
    assert!(close(s, std::f64::consts::LN_2, 1e-9), "surprisal {s}");
    let h = entropy_topk(&[0.25f64.ln(); 4]).unwrap();
    assert!(close(h, 2.0 * std::f64::consts::LN_2, 1e-9), "entropy {h}");
    let toks = [-1.0, -3.0].map(|lp| TokenSpan {
        index: 0,
        byte_start: 0,
        byte_end: 1,
        logprob: lp,
    });
    let p = step_perplexity(&toks).unwrap();
    assert!(
        close(p, std::f64::consts::E.powi(2), 1e-9),
        "perplexity {p}"
    );
    format!("surprisal {s:.6}, entropy {h:.6}, ppl {p:.6}")
}

fn c5_determinism() -> String {
    let start = Instant::now();
    let dir = tempdir();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let summary = mock_pipeline(60)
            .run(&RunOptions::new(CORPUS, &out, Stages::Both))
            .unwrap();
        let report = fs::read(summary.report_path.unwrap()).unwrap();
        (fs::read(&out).unwrap(), report, summary.report)
    };
    let (a, ra, report) = run("a.jsonl");
    let (b, rb, _) = run("b.jsonl");
    assert_eq!(a, b, "output corpora differ");
    assert_eq!(ra, rb, "reports differ");
    assert_eq!(report.samples_total, 20);
    assert_eq!(report.stage2_ok, 20);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    format!(
        "2 runs, {} bytes identical, {:.2}s, mock backends only",
        a.len(),
        elapsed.as_secs_f64()
    )
}

/// Fixture corpus with one stage-1 fallback and one scoring failure.
fn mixed_corpus(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(CORPUS).unwrap();
    let mut lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let cot = lines[3]["cot"].as_str().unwrap().to_owned();
    lines[3]["cot"] = format!("{cot}\n\n{REORDER_MARKER}").into();
    let q = lines[7]["question"].as_str().unwrap().to_owned();
    lines[7]["question"] = format!("{q} {SCORE_FAULT_MARKER}").into();
    let p = dir.join("mixed.jsonl");
    fs::write(
        &p,
        lines
            .iter()
            .map(|v| v.to_string() + "\n")
            .collect::<String>(),
    )
    .unwrap();
    p
}

fn c6_audit() -> String {
    let dir = tempdir();
    let input = mixed_corpus(dir.path());
    let out = dir.path().join("out.jsonl");
    let budget = 40;
    let summary = mock_pipeline(budget)
        .run(&RunOptions::new(&input, &out, Stages::Both))
        .unwrap();
    assert_eq!(summary.report.stage1_fallback, 1);
    assert_eq!(summary.report.failed, 1);

    let corpus = load_corpus(&out, 0.0).unwrap();
    let audit = audit_corpus(&corpus.samples, 0.6, budget, &ReferenceTokenizer);
    assert!(audit.passed(), "library audit: {:?}", audit.findings);
    let checked = corpus
        .samples
        .iter()
        .filter(|s| s.status == Status::Stage2Ok)
        .count();

    let status = Command::new(BIN)
        .args(["validate", "--budget", "40", "--input"])
        .arg(&out)
        .arg("--report")
        .arg(summary.report_path.unwrap())
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "validate exit {:?}",
        status.status.code()
    );

    // A tampered corpus must be caught: reorder one final CoT.
    let mut tampered = corpus.samples.clone();
    let victim = tampered
        .iter_mut()
        .find(|s| {
            s.status == Status::Stage2Ok && split_steps(s.cot_final.as_deref().unwrap()).len() >= 2
        })
        .expect("a multi-step final CoT");
    let mut steps = split_steps(victim.cot_final.as_deref().unwrap()).into_inner();
    steps.reverse();
    victim.cot_final = Some(steps.join("\n\n"));
    let bad = dir.path().join("bad.jsonl");
    cotprune::pipeline::write_jsonl(&bad, &tampered).unwrap();
    let status = Command::new(BIN)
        .args(["validate", "--budget", "40", "--input"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(2),
        "tampered corpus passed validate"
    );
    format!("{checked} stage2_ok samples pass (a)(b)(c); tampered corpus rejected")
}

fn synthetic(before: u64, after: u64, n: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let share = |total: u64| (total / n + u64::from(i < total % n)) as usize;
            let mut s = Sample::new(format!("t{i}"), "q", words(share(before)), "a");
            s.cot_coarse = Some(words(share(after)));
            s.transition(Status::Stage1Ok).unwrap();
            s.cot_final = Some(words(share(after)));
            s.transition(Status::Stage2Ok).unwrap();
            s
        })
        .collect()
}

fn c7_table3_arithmetic() -> String {
    let ours = compute_report(&synthetic(13023, 3178, 12), &ReferenceTokenizer);
    assert_eq!(
        (ours.tokens_before, ours.tokens_after_stage2),
        (13023, 3178)
    );
    assert!(
        close(ours.reduction_pct, 75.6, 0.05),
        "{}",
        ours.reduction_pct
    );

    let dir = tempdir();
    let path = dir.path().join("selective.jsonl");
    cotprune::pipeline::write_jsonl(&path, &synthetic(13023, 6722, 12)).unwrap();
    let out = Command::new(BIN)
        .arg("stats")
        .arg("--input")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pct = report["reduction_pct"].as_f64().unwrap();
    assert!(close(pct, 48.4, 0.05), "{pct}");
    format!(
        "13023->3178 = -{:.1}%, 13023->6722 via stats = -{pct:.1}%",
        ours.reduction_pct
    )
}

fn step_strategy() -> impl Strategy<Value = Vec<String>> {
    let line = "[ \t]{0,2}[a-zA-Z0-9`#(){}=+:,.é漢]{1,12}([ \t][a-zA-Z0-9`#()=]{1,8}){0,3}";
    let step = proptest::collection::vec(line, 1..4).prop_map(|ls| ls.join("\n"));
    proptest::collection::vec(step, 0..8)
}

fn c8_segmenter_roundtrip() -> String {
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(
        config.clone(),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    runner
        .run(&step_strategy(), |steps| {
            let s = StepSequence::new(steps).expect("generated steps are valid");
            prop_assert_eq!(split_steps(&join_steps(&s)), s);
            Ok(())
        })
        .unwrap_or_else(|e| panic!("split after join: {e}"));

    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&"[a-c \t\r\n`]{0,60}", |text| {
            let once = join_steps(&split_steps(&text));
            prop_assert_eq!(join_steps(&split_steps(&once)), once);
            Ok(())
        })
        .unwrap_or_else(|e| panic!("join after split: {e}"));
    "1000 sequences round-trip, 1000 texts stable after one pass".into()
}

fn c9_resume() -> String {
    let dir = tempdir();
    let full = dir.path().join("full.jsonl");
    // Fresh backends per run, as separate processes would have.
    let clean = mock_pipeline(60)
        .run(&RunOptions::new(CORPUS, &full, Stages::Both))
        .unwrap();

    let part = dir.path().join("part.jsonl");
    let halted = mock_pipeline(60)
        .run(&RunOptions {
            halt_after: Some(10),
            ..RunOptions::new(CORPUS, &part, Stages::Both)
        })
        .unwrap();
    assert!(halted.halted && halted.processed == 10);
    // A record torn mid-write by the crash.
    let mut f = fs::OpenOptions::new().append(true).open(&part).unwrap();
    std::io::Write::write_all(&mut f, b"{\"id\":\"half").unwrap();
    drop(f);

    let resumed = mock_pipeline(60)
        .run(&RunOptions {
            resume: true,
            ..RunOptions::new(CORPUS, &part, Stages::Both)
        })
        .unwrap();
    assert_eq!(resumed.resumed_from, 10);
    assert_eq!(resumed.processed, 10);
    assert_eq!(
        fs::read(&full).unwrap(),
        fs::read(&part).unwrap(),
        "resumed corpus differs"
    );
    assert_eq!(
        fs::read(clean.report_path.unwrap()).unwrap(),
        fs::read(resumed.report_path.unwrap()).unwrap(),
        "resumed report differs"
    );
    "halted at 10/20, torn tail discarded, resumed output byte-identical".into()
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        (
            "gestalt similarity matches brute-force oracle",
            c1_gestalt_oracle,
        ),
        (
            "pattern matching matches step-by-step oracle",
            c2_pattern_match_fidelity,
        ),
        (
            "budget refinement removes minimal prefix",
            c3_refiner_fidelity,
        ),
        ("surprisal, entropy and perplexity analytics", c4_analytics),
        ("end-to-end determinism on 20-sample corpus", c5_determinism),
        ("validate confirms corpus invariants", c6_audit),
        ("token reduction arithmetic", c7_table3_arithmetic),
        ("segmenter round trip", c8_segmenter_roundtrip),
        ("resume after interruption", c9_resume),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(check);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name} [{detail}] ({secs:.2}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!(
                    "criterion {}: FAIL {name} [{}] ({secs:.2}s)",
                    i + 1,
                    panic_message(e)
                );
            }
        }
    }
    let _ = panic::take_hook();
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
