//! Acceptance suite. Each test covers one criterion, checks every clause at
//! its stated tolerance, and prints one pass/fail line per clause (run with
//! `--nocapture` to see them all).

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use mcqa_probe::augment::{augment_instance_traced, AugmentBranch, AugmentConfig};
use mcqa_probe::dataset::{Dataset, McqaInstance, OptionEntry, EMPTY_SENTINEL};
use mcqa_probe::evalreport::{
    accuracy, monotonicity_check, render_report, render_table, EvalReport, PredictionFile,
    ReportFormat, SettingResult,
};
use mcqa_probe::perturb::{
    perturb_nc, perturb_no, perturb_nq, perturb_pio, PerturbationSetting, PIO_CONTEXT_COPIES,
};
use mcqa_probe::rng::SplitMix64;
use mcqa_probe::scorer::{
    remote_score, score_dataset, score_dataset_remote, FeatureVector, LinearScorer,
    RemoteScorerConfig, ScoreItem, FEATURE_LEN,
};
use mcqa_probe::train::{
    binary_loss_grad, multiclass_loss_grad, train, LossKind, TrainConfig,
};

/// Collects clause outcomes for one criterion and reports them.
struct Gate {
    name: &'static str,
    failures: usize,
    clauses: Vec<String>,
}

impl Gate {
    fn new(name: &'static str) -> Self {
        Gate {
            name,
            failures: 0,
            clauses: Vec::new(),
        }
    }

    fn clause(&mut self, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        self.clauses
            .push(format!("  [{}] {detail}", if ok { "pass" } else { "FAIL" }));
    }

    fn finish(self) {
        let status = if self.failures == 0 { "PASS" } else { "FAIL" };
        println!("acceptance {}: {status}", self.name);
        for line in &self.clauses {
            println!("{line}");
        }
        assert!(
            self.failures == 0,
            "acceptance {}: {} clause(s) failed:\n{}",
            self.name,
            self.failures,
            self.clauses.join("\n")
        );
    }
}

// criterion 1: sampler statistics -----------------------------------------

#[test]
fn criterion_1_sampler_statistics() {
    let start = Instant::now();
    let mut gate = Gate::new("1 (sampler statistics)");
    let cfg = AugmentConfig {
        p_correct: 0.2,
        p_incorrect: 0.8,
        seed: 11,
    };
    let inst = McqaInstance {
        id: "stats".into(),
        question: "the sampled question".into(),
        options: (0..3)
            .map(|j| OptionEntry::new(format!("option {j}"), format!("context {j}")))
            .collect(),
        gold: 1,
    };

    let n = 100_000u64;
    let mut gold_fires = 0u64;
    let mut branches = [0u64; 3];
    let mut sentinels = [0u64; 3];
    let mut incorrect_fires = 0u64;
    let mut incorrect_draws = 0u64;
    for i in 0..n {
        let mut rng = SplitMix64::derive(cfg.seed, &[0, i]);
        let (_, traces) = augment_instance_traced(&inst, Some("previous"), &cfg, &mut rng);
        for t in traces {
            if t.option_index == inst.gold {
                if t.fired {
                    gold_fires += 1;
                    let b = match t.branch.unwrap() {
                        AugmentBranch::Context => 0,
                        AugmentBranch::Option => 1,
                        AugmentBranch::Question => 2,
                    };
                    branches[b] += 1;
                    if t.chose_sentinel.unwrap() {
                        sentinels[b] += 1;
                    }
                }
            } else {
                incorrect_draws += 1;
                if t.fired {
                    incorrect_fires += 1;
                }
            }
        }
    }

    let fire = gold_fires as f64 / n as f64;
    gate.clause(
        (fire - 0.2).abs() <= 0.005,
        format!("correct-option fire rate {fire:.4} within 0.200 +/- 0.005"),
    );
    for (b, name) in ["context", "option", "question"].iter().enumerate() {
        let rate = branches[b] as f64 / gold_fires as f64;
        gate.clause(
            (rate - 1.0 / 3.0).abs() <= 0.01,
            format!("{name} branch rate {rate:.4} within 1/3 +/- 0.01"),
        );
        let sub = sentinels[b] as f64 / branches[b] as f64;
        gate.clause(
            (sub - 0.5).abs() <= 0.01,
            format!("{name} sub-choice rate {sub:.4} within 1/2 +/- 0.01"),
        );
    }
    let inc = incorrect_fires as f64 / incorrect_draws as f64;
    gate.clause(
        (inc - 0.8).abs() <= 0.005,
        format!("incorrect-option fire rate {inc:.4} within 0.800 +/- 0.005"),
    );
    let elapsed = start.elapsed();
    gate.clause(
        elapsed < Duration::from_secs(5),
        format!("runtime {elapsed:.2?} < 5 s"),
    );
    gate.finish();
}

// criterion 2: gradient checks ---------------------------------------------

fn max_rel_error(
    loss_at: impl Fn(&[f64; FEATURE_LEN]) -> f64,
    grad: &[f64; FEATURE_LEN],
    at: &[f64; FEATURE_LEN],
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..FEATURE_LEN {
        let mut plus = *at;
        let mut minus = *at;
        plus[i] += h;
        minus[i] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        // the 1e-6 floor absorbs finite-difference noise on exact-zero
        // components
        let denom = numeric.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max((numeric - grad[i]).abs() / denom);
    }
    worst
}

#[test]
fn criterion_2_gradient_checks() {
    let start = Instant::now();
    let mut gate = Gate::new("2 (gradient checks)");
    let mut rng = SplitMix64::new(20_24);
    let mut random_vec = |bias: bool| {
        let mut v = [0.0; FEATURE_LEN];
        for x in v.iter_mut() {
            *x = rng.next_f64() * 4.0 - 2.0;
        }
        if bias {
            v[FEATURE_LEN - 1] = 1.0;
        }
        v
    };

    let mut worst_mc: f64 = 0.0;
    let mut worst_bin: f64 = 0.0;
    for case in 0..100 {
        let k = 2 + (case % 4);
        let features: Vec<FeatureVector> =
            (0..k).map(|_| FeatureVector(random_vec(true))).collect();
        let gold = case % k;
        let w = random_vec(false);
        let (_, grad) = multiclass_loss_grad(&w, &features, gold);
        worst_mc = worst_mc.max(max_rel_error(
            |w| multiclass_loss_grad(w, &features, gold).0,
            &grad,
            &w,
        ));

        let f = FeatureVector(random_vec(true));
        let label = if case % 2 == 0 {
            mcqa_probe::augment::TripletLabel::Positive
        } else {
            mcqa_probe::augment::TripletLabel::Negative
        };
        let (_, grad) = binary_loss_grad(&w, &f, label);
        worst_bin = worst_bin.max(max_rel_error(
            |w| binary_loss_grad(w, &f, label).0,
            &grad,
            &w,
        ));
    }
    gate.clause(
        worst_mc < 1e-4,
        format!("multiclass max relative error {worst_mc:.2e} < 1e-4 over 100 instances"),
    );
    gate.clause(
        worst_bin < 1e-4,
        format!("binary max relative error {worst_bin:.2e} < 1e-4 over 100 triplets"),
    );
    let elapsed = start.elapsed();
    gate.clause(
        elapsed < Duration::from_secs(1),
        format!("runtime {elapsed:.2?} < 1 s"),
    );
    gate.finish();
}

// criterion 3: perturbation invariants -------------------------------------

fn fuzz_string(rng: &mut SplitMix64) -> String {
    const WORDS: [&str; 10] = [
        "alpha", "Bravo", "charlie-7", "müden", "東京", "x", "the", "<s>", "9lives", "p.q",
    ];
    match rng.next_below(8) {
        0 => EMPTY_SENTINEL.to_string(),
        1 => String::new(),
        _ => {
            let n = 1 + rng.next_below(6);
            (0..n)
                .map(|_| WORDS[rng.next_below(WORDS.len() as u64) as usize])
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

fn fuzz_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    Dataset::new(
        (0..n)
            .map(|i| {
                let k = 2 + rng.next_below(7) as usize;
                let gold = rng.next_below(k as u64) as usize;
                McqaInstance {
                    id: format!("fuzz{i}"),
                    question: fuzz_string(&mut rng),
                    options: (0..k)
                        .map(|_| OptionEntry::new(fuzz_string(&mut rng), fuzz_string(&mut rng)))
                        .collect(),
                    gold,
                }
            })
            .collect(),
    )
}

#[test]
fn criterion_3_perturbation_invariants() {
    let start = Instant::now();
    let mut gate = Gate::new("3 (perturbation invariants)");
    let d = fuzz_dataset(1000, 99);

    let (pio, choices) = perturb_pio(&d, 4242);
    let mut gold_intact = true;
    let mut rewrite_exact = true;
    let mut untouched_exact = true;
    for ((orig, pert), choice) in d.instances.iter().zip(&pio.instances).zip(&choices) {
        if pert.options[orig.gold] != orig.options[orig.gold] {
            gold_intact = false;
        }
        let j = choice.perturbed_option_index;
        let expected_context = [orig.question.as_str(); PIO_CONTEXT_COPIES].join(" ");
        if pert.options[j].text != orig.question || pert.options[j].context != expected_context {
            rewrite_exact = false;
        }
        for (idx, (o, p)) in orig.options.iter().zip(&pert.options).enumerate() {
            if idx != j && o != p {
                untouched_exact = false;
            }
        }
    }
    gate.clause(gold_intact, "PIO preserves every gold triplet byte-exactly".into());
    gate.clause(
        rewrite_exact,
        format!("PIO rewrites the chosen option to the question and {PIO_CONTEXT_COPIES} space-joined copies"),
    );
    gate.clause(
        untouched_exact,
        "PIO touches exactly one incorrect option per instance".into(),
    );

    let no = perturb_no(&d);
    let nq = perturb_nq(&d);
    let nc = perturb_nc(&d);
    let no_scope = d.instances.iter().zip(&no.instances).all(|(o, p)| {
        p.question == o.question
            && p.gold == o.gold
            && p.options.iter().zip(&o.options).all(|(pn, on)| {
                pn.text == EMPTY_SENTINEL && pn.context == on.context
            })
    });
    let nq_scope = d.instances.iter().zip(&nq.instances).all(|(o, p)| {
        p.question == EMPTY_SENTINEL && p.options == o.options && p.gold == o.gold
    });
    let nc_scope = d.instances.iter().zip(&nc.instances).all(|(o, p)| {
        p.question == o.question
            && p.gold == o.gold
            && p.options.iter().zip(&o.options).all(|(pn, on)| {
                pn.context == EMPTY_SENTINEL && pn.text == on.text
            })
    });
    gate.clause(no_scope, "NO empties option texts and nothing else".into());
    gate.clause(nq_scope, "NQ empties questions and nothing else".into());
    gate.clause(nc_scope, "NC empties contexts and nothing else".into());
    gate.clause(
        perturb_no(&no).instances == no.instances
            && perturb_nq(&nq).instances == nq.instances
            && perturb_nc(&nc).instances == nc.instances,
        "NO/NQ/NC are idempotent".into(),
    );
    let elapsed = start.elapsed();
    gate.clause(
        elapsed < Duration::from_secs(5),
        format!("runtime {elapsed:.2?} < 5 s"),
    );
    gate.finish();
}

// criterion 4: directional reproduction ------------------------------------

/// Separable corpus: the gold option's context quotes the option text, the
/// distractor contexts are disjoint filler of the same length, questions
/// share no tokens with anything, and gold indices cycle round-robin.
fn separable_corpus(n: usize) -> Dataset {
    Dataset::new(
        (0..n)
            .map(|i| {
                let k = 4;
                let gold = i % k;
                McqaInstance {
                    id: format!("s{i}"),
                    question: format!("query{i}a query{i}b query{i}c"),
                    options: (0..k)
                        .map(|j| {
                            let text = format!("answer{i}x{j}");
                            let context = if j == gold {
                                format!("answer{i}x{j} pad{i}x{j}a pad{i}x{j}b")
                            } else {
                                format!("pad{i}x{j}c pad{i}x{j}a pad{i}x{j}b")
                            };
                            OptionEntry::new(text, context)
                        })
                        .collect(),
                    gold,
                }
            })
            .collect(),
    )
}

fn accuracy_of(scorer: &LinearScorer, d: &Dataset, gold: &Dataset) -> f64 {
    let m = score_dataset(scorer, d).unwrap();
    accuracy(&PredictionFile::from_matrix(d, &m), gold).unwrap()
}

#[test]
fn criterion_4_directional_reproduction() {
    let start = Instant::now();
    let mut gate = Gate::new("4 (directional reproduction)");
    let gold = separable_corpus(2000);

    // multiclass scorer under Original, NC, and PIO
    let multiclass = train(
        &gold,
        &TrainConfig {
            loss: LossKind::Multiclass,
            epochs: 4,
            learning_rate: 0.1,
            seed: 3,
            augment: None,
            augment_start_epoch: 0,
        },
    )
    .unwrap()
    .scorer;

    let orig_acc = accuracy_of(&multiclass, &gold, &gold);
    gate.clause(
        orig_acc >= 95.0,
        format!("multiclass Original accuracy {orig_acc:.1} >= 95"),
    );

    let nc_acc = accuracy_of(&multiclass, &perturb_nc(&gold), &gold);
    gate.clause(
        (nc_acc - 25.0).abs() <= 3.0,
        format!("multiclass NC accuracy {nc_acc:.1} within 25 +/- 3"),
    );

    let (pio, choices) = perturb_pio(&gold, 17);
    let orig_preds = PredictionFile::from_matrix(&gold, &score_dataset(&multiclass, &gold).unwrap());
    let pio_preds = PredictionFile::from_matrix(&pio, &score_dataset(&multiclass, &pio).unwrap());
    let mono = monotonicity_check(&orig_preds, &pio_preds, &gold, &choices).unwrap();
    gate.clause(
        mono.violation_rate > 50.0,
        format!(
            "multiclass PIO violation rate {:.1} > 50 (echo attraction {:.1})",
            mono.violation_rate, mono.echo_attraction_rate
        ),
    );

    // binary scorer trained with the augmentation sampler, under NO and NQ
    let augmented = train(
        &gold,
        &TrainConfig {
            loss: LossKind::Binary,
            epochs: 5,
            learning_rate: 0.1,
            seed: 3,
            augment: Some(AugmentConfig {
                p_correct: 0.2,
                p_incorrect: 0.8,
                seed: 3,
            }),
            augment_start_epoch: 0,
        },
    )
    .unwrap()
    .scorer;

    let no_acc = accuracy_of(&augmented, &perturb_no(&gold), &gold);
    gate.clause(
        (no_acc - 25.0).abs() <= 5.0,
        format!("binary+augmented NO accuracy {no_acc:.1} within 25 +/- 5"),
    );
    let nq_acc = accuracy_of(&augmented, &perturb_nq(&gold), &gold);
    gate.clause(
        (nq_acc - 25.0).abs() <= 5.0,
        format!("binary+augmented NQ accuracy {nq_acc:.1} within 25 +/- 5"),
    );

    let elapsed = start.elapsed();
    gate.clause(
        elapsed < Duration::from_secs(60),
        format!("runtime {elapsed:.2?} < 60 s"),
    );
    gate.finish();
}

// criterion 5: table fidelity ----------------------------------------------

fn report_row(
    model: &str,
    o: f64,
    pio: f64,
    no: Option<f64>,
    nq: f64,
    nc: f64,
) -> EvalReport {
    let mut results = vec![
        SettingResult {
            setting: PerturbationSetting::Original,
            accuracy: o,
        },
        SettingResult {
            setting: PerturbationSetting::Pio,
            accuracy: pio,
        },
    ];
    if let Some(no) = no {
        results.push(SettingResult {
            setting: PerturbationSetting::No,
            accuracy: no,
        });
    }
    results.push(SettingResult {
        setting: PerturbationSetting::Nq,
        accuracy: nq,
    });
    results.push(SettingResult {
        setting: PerturbationSetting::Nc,
        accuracy: nc,
    });
    EvalReport {
        model: model.to_string(),
        results,
        monotonicity: None,
        sanity_margin_no: None,
        sanity_margin_nq: None,
        reading_margin: None,
    }
}

#[test]
fn criterion_5_table_fidelity() {
    let mut gate = Gate::new("5 (table fidelity)");
    let rows = vec![
        report_row("ARISTO RoBERTa", 78.3, 25.4, Some(46.8), 55.3, 63.8),
        report_row("ARISTO + Our Training", 75.8, 55.5, Some(26.9), 35.4, 42.4),
        report_row("RACE RoBERTa", 84.8, 45.8, None, 62.8, 49.1),
        report_row("RACE + Our Training", 83.9, 72.4, None, 12.4, 20.6),
        report_row("QASC RoBERTa", 85.2, 7.9, Some(50.2), 34.3, 55.8),
        report_row("QASC + Our Training", 82.6, 38.0, Some(13.7), 12.3, 34.7),
    ];
    let md = render_table(&rows, ReportFormat::Markdown);
    let expected_rows = [
        "| ARISTO RoBERTa | 78.3 | 25.4 | 46.8 | 55.3 | 63.8 |",
        "| ARISTO + Our Training | 75.8 | 55.5 | 26.9 | 35.4 | 42.4 |",
        "| RACE RoBERTa | 84.8 | 45.8 | - | 62.8 | 49.1 |",
        "| RACE + Our Training | 83.9 | 72.4 | - | 12.4 | 20.6 |",
        "| QASC RoBERTa | 85.2 | 7.9 | 50.2 | 34.3 | 55.8 |",
        "| QASC + Our Training | 82.6 | 38.0 | 13.7 | 12.3 | 34.7 |",
    ];
    gate.clause(
        md.lines().next()
            == Some("| Model | O (\u{2191}) | PIO (\u{2191}) | NO (\u{2193}) | NQ (\u{2193}) | NC (\u{2193}) |"),
        "column order and arrow directions match".into(),
    );
    for row in expected_rows {
        gate.clause(
            md.contains(row),
            format!("markdown row byte-exact: {row}"),
        );
    }
    let tsv = render_table(&rows, ReportFormat::Tsv);
    gate.clause(
        tsv.contains("RACE RoBERTa\t84.8\t45.8\t-\t62.8\t49.1"),
        "tsv carries the RACE NO dash and identical cells".into(),
    );
    let md_cells: Vec<&str> = md.split(['|', '\n', ' ']).filter(|c| c.contains('.')).collect();
    let tsv_cells: Vec<&str> = tsv.split(['\t', '\n']).filter(|c| c.contains('.')).collect();
    gate.clause(md_cells == tsv_cells, "markdown and tsv numeric cells agree".into());
    gate.finish();
}

// criterion 6: pipeline determinism ----------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcqa-probe"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn mcqa-probe");
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let corpus = separable_corpus(300);
    let train_path = dir.join("train.jsonl");
    mcqa_probe::dataset::save_dataset(&corpus, &train_path).unwrap();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();

    run_ok(bin().args([
        "perturb", "--setting", "pio",
        "--in", &p("train.jsonl"), "--out", &p("pio.jsonl"),
        "--choices", &p("pio.choices.jsonl"), "--seed", "17",
    ]));
    for setting in ["no", "nq", "nc"] {
        run_ok(bin().args([
            "perturb", "--setting", setting,
            "--in", &p("train.jsonl"), "--out", &p(&format!("{setting}.jsonl")),
        ]));
    }
    run_ok(bin().args([
        "train", "--loss", "binary", "--augment",
        "--p-correct", "0.2", "--p-incorrect", "0.8",
        "--epochs", "5", "--lr", "0.1", "--seed", "3",
        "--in", &p("train.jsonl"),
        "--model-out", &p("model.json"), "--log", &p("train.log.jsonl"),
    ]));
    for (input, preds) in [
        ("train.jsonl", "orig.preds.jsonl"),
        ("pio.jsonl", "pio.preds.jsonl"),
        ("no.jsonl", "no.preds.jsonl"),
        ("nq.jsonl", "nq.preds.jsonl"),
        ("nc.jsonl", "nc.preds.jsonl"),
    ] {
        run_ok(bin().args([
            "score", "--model", &p("model.json"),
            "--in", &p(input), "--out", &p(preds),
        ]));
    }
    for format in ["markdown", "tsv"] {
        run_ok(bin().args([
            "report",
            "--gold", &p("train.jsonl"),
            "--original", &p("orig.preds.jsonl"),
            "--pio", &p("pio.preds.jsonl"), "--choices", &p("pio.choices.jsonl"),
            "--no", &p("no.preds.jsonl"),
            "--nq", &p("nq.preds.jsonl"),
            "--nc", &p("nc.preds.jsonl"),
            "--format", format,
            "--model-name", "binary+augmented",
            "--out", &p(&format!("report.{format}")),
        ]));
    }

    let mut artifacts: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().to_string(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    artifacts.sort();
    artifacts
}

#[test]
fn criterion_6_pipeline_determinism() {
    let mut gate = Gate::new("6 (pipeline determinism)");
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_pipeline(dir_a.path());
    let b = run_pipeline(dir_b.path());
    gate.clause(a.len() == 15, format!("pipeline produced {} artifacts", a.len()));
    let names_match = a.iter().map(|(n, _)| n).eq(b.iter().map(|(n, _)| n));
    gate.clause(names_match, "both runs produced the same artifact set".into());
    for ((name, bytes_a), (_, bytes_b)) in a.iter().zip(&b) {
        gate.clause(
            bytes_a == bytes_b,
            format!("{name} is byte-identical across runs"),
        );
    }
    gate.finish();
}

// criterion 7: remote protocol ----------------------------------------------

fn spawn_mock<F>(handler: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(&serde_json::Value) -> String + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    let handler = Arc::new(handler);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            counter.fetch_add(1, Ordering::SeqCst);
            let handler = handler.clone();
            std::thread::spawn(move || {
                if let Some(body) = read_request(&mut stream) {
                    let parsed: serde_json::Value =
                        serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                    let resp = handler(&parsed);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                        resp.len()
                    );
                }
            });
        }
    });
    (format!("http://{addr}"), requests)
}

fn read_request(stream: &mut TcpStream) -> Option<Vec<u8>> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    Some(buf[header_end..].to_vec())
}

/// Deterministic per-id score so alignment mistakes are visible.
fn id_score(id: &str) -> f64 {
    id.bytes().map(|b| b as f64).sum::<f64>() / 1000.0
}

#[test]
fn criterion_7_remote_protocol() {
    let mut gate = Gate::new("7 (remote protocol)");

    let (url, requests) = spawn_mock(|body| {
        let items = body["items"].as_array().cloned().unwrap_or_default();
        let scores: Vec<serde_json::Value> = items
            .iter()
            .map(|it| {
                let id = it["id"].as_str().unwrap();
                serde_json::json!({"id": id, "score": id_score(id)})
            })
            .collect();
        serde_json::json!({ "scores": scores }).to_string()
    });
    let cfg = RemoteScorerConfig {
        endpoint_url: url,
        batch_size: 64,
        timeout: Duration::from_secs(10),
    };

    // 250 four-way instances = 1000 triplets
    let d = separable_corpus(250);
    let matrix = score_dataset_remote(&cfg, &d, 2).unwrap();
    gate.clause(
        requests.load(Ordering::SeqCst) == 16,
        format!(
            "1000 items at batch_size 64 issued {} requests (expected 16)",
            requests.load(Ordering::SeqCst)
        ),
    );
    let mut aligned = true;
    for (inst, row) in d.instances.iter().zip(&matrix.rows) {
        for (j, &score) in row.iter().enumerate() {
            if score != id_score(&format!("{}#{j}", inst.id)) {
                aligned = false;
            }
        }
    }
    gate.clause(aligned, "every score aligns with its wire id".into());

    let (url, _) = spawn_mock(|body| {
        let items = body["items"].as_array().cloned().unwrap_or_default();
        let scores: Vec<serde_json::Value> = items
            .iter()
            .skip(1)
            .map(|it| serde_json::json!({"id": it["id"], "score": 0.0}))
            .collect();
        serde_json::json!({ "scores": scores }).to_string()
    });
    let cfg = RemoteScorerConfig {
        endpoint_url: url,
        batch_size: 64,
        timeout: Duration::from_secs(10),
    };
    let batch: Vec<ScoreItem> = (0..3)
        .map(|i| ScoreItem::new(format!("b{i}"), "q", "o", "c"))
        .collect();
    let err = remote_score(&cfg, &batch).unwrap_err();
    gate.clause(
        err.to_string().contains("b0"),
        format!("missing id is a hard error naming the id: {err}"),
    );

    let (url, _) = spawn_mock(|body| {
        let id = body["items"][0]["id"].clone();
        format!(r#"{{"scores":[{{"id":{id},"score":1e999}}]}}"#)
    });
    let cfg = RemoteScorerConfig {
        endpoint_url: url,
        batch_size: 64,
        timeout: Duration::from_secs(10),
    };
    let err = remote_score(&cfg, &batch[..1]).unwrap_err();
    gate.clause(
        matches!(err, mcqa_probe::Error::Scoring(_)),
        format!("non-finite score is a hard error: {err}"),
    );

    gate.finish();
}

// sanity: the rendered single-model report stays pure across calls ---------

#[test]
fn report_rendering_is_pure() {
    let rows = [report_row("m", 50.0, 25.0, Some(30.0), 20.0, 10.0)];
    let a = render_report(&rows[0], ReportFormat::Markdown);
    let b = render_report(&rows[0], ReportFormat::Markdown);
    assert_eq!(a, b);
}
