//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p fedpart-cli --test acceptance` runs everything; set
//! `ACCEPTANCE_ONLY=1,7` to run a subset.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fedpart_cli::{cmd_gradcheck, ExperimentConfig, GradcheckArgs};
use fedpart_core::data::{gen_blobs, partition, train_test_split, ClientShard, Dataset, PartitionPlan, PartitionPolicy};
use fedpart_core::federation::{
    aggregate, aggregation_weights, run_experiment_with, ClientUpdateResult, Federation, FederationConfig,
    MessageKind, RunOptions,
};
use fedpart_core::metrics::{comm_cost_round, to_csv_string, ExperimentResult};
use fedpart_core::nn::{init_params, loss_and_grad, LayerSpec, ModelSpec};
use fedpart_core::seed::rng_from;
use fedpart_core::Strategy;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

type Check = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mlp(hidden: usize, classes: usize, dim: usize, specific_from: usize) -> Value {
    json!({
        "layers": [
            {"kind": "dense", "in_dim": dim, "out_dim": hidden},
            {"kind": "relu"},
            {"kind": "dense", "in_dim": hidden, "out_dim": classes}
        ],
        "specific_from": specific_from
    })
}

fn seeds(s: u64) -> Value {
    json!({"init": 1000 + s, "selection": 2000 + s, "train": 3000 + s, "data": 4000 + s})
}

fn parse(v: Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string()).expect("acceptance config is valid")
}

struct Prepared {
    spec: ModelSpec,
    shards: Vec<ClientShard>,
    fed: FederationConfig,
}

fn prepare(cfg: &ExperimentConfig) -> Prepared {
    let (dataset, tags) = cfg.build_dataset(Path::new(".")).unwrap();
    let spec = cfg.model_spec(&dataset).unwrap();
    let shards = cfg.build_shards(&dataset, tags.as_deref()).unwrap();
    Prepared {
        spec,
        shards,
        fed: cfg.federation_config(),
    }
}

fn run(p: &Prepared, strategy: Strategy, threads: Option<usize>) -> ExperimentResult {
    let mut fed = p.fed.clone();
    fed.strategy = strategy;
    run_experiment_with(
        &fed,
        &p.spec,
        p.shards.clone(),
        RunOptions {
            threads,
            record_trace: false,
        },
    )
    .unwrap()
}

// ---------------------------------------------------------------- 1

const CONFLICT_DATA_SEED: u64 = 7;

/// Label-conflict modes, 20 classes over 10 clients, two classes each.
fn conflict_config() -> Value {
    json!({
        "model": mlp(64, 20, 16, 2),
        "data": {
            "source": {"kind": "conflicting_modes", "num_classes": 20, "per_class": 200, "dim": 16,
                       "spread": 0.5, "num_modes": 2, "label_conflict": true},
            "partition": {"policy": "disjoint", "classes_per_client": 2},
            "test_frac": 0.2
        },
        "federation": {"K": 10, "C": 10, "T": 100, "E": 1, "lr": 0.1, "batch_size": 32, "strategy": "HDAFL"},
        "seeds": {"init": 1, "selection": 2, "train": 3, "data": CONFLICT_DATA_SEED}
    })
}

fn criterion_1() -> Check {
    let cfg = parse(conflict_config());
    let p = prepare(&cfg);
    // A client holding both classes of a conflicting pair would be ambiguous
    // even with a private head; the seed is chosen so that none does.
    for s in &p.shards {
        let support: HashSet<usize> = s.train.label_support().into_iter().collect();
        for &c in &support {
            ensure(!support.contains(&((c + 10) % 20)), || {
                format!("precondition: client {} holds conflicting classes {c} and {}", s.client_id, (c + 10) % 20)
            })?;
        }
    }
    let hdafl = run(&p, Strategy::Hdafl, None).final_accuracy().unwrap();
    let fedavg = run(&p, Strategy::FedAvg, None).final_accuracy().unwrap();
    let detail = format!("HDAFL {hdafl:.4}, FED_AVG {fedavg:.4}, gap {:.4}", hdafl - fedavg);
    ensure(hdafl >= 0.90 && hdafl - fedavg >= 0.30, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 2, 3

fn blobs_config(partition: Value, seed: u64) -> Value {
    json!({
        "model": mlp(64, 20, 16, 2),
        "data": {
            "source": {"kind": "blobs", "num_classes": 20, "per_class": 300, "dim": 16, "spread": 1.5},
            "partition": partition,
            "test_frac": 0.2
        },
        "federation": {"K": 20, "C": 10, "T": 150, "E": 1, "lr": 0.1, "batch_size": 32, "strategy": "HDAFL"},
        "seeds": seeds(seed)
    })
}

fn seed_averaged(partition: Value) -> (f64, f64) {
    let (mut h, mut f) = (0.0, 0.0);
    for s in 0..3 {
        let p = prepare(&parse(blobs_config(partition.clone(), s)));
        h += run(&p, Strategy::Hdafl, None).final_accuracy().unwrap();
        f += run(&p, Strategy::FedAvg, None).final_accuracy().unwrap();
    }
    (h / 3.0, f / 3.0)
}

fn criterion_2() -> Check {
    let (hdafl, fedavg) = seed_averaged(json!({"policy": "noniid", "alpha": 0.3}));
    let detail = format!("mean over 3 seeds: HDAFL {hdafl:.4}, FED_AVG {fedavg:.4}");
    ensure(hdafl >= fedavg - 0.01, || detail.clone())?;
    Ok(detail)
}

fn criterion_3() -> Check {
    let (hdafl, fedavg) = seed_averaged(json!({"policy": "iid"}));
    let detail = format!("mean over 3 seeds: HDAFL {hdafl:.4}, FED_AVG {fedavg:.4}");
    ensure(fedavg >= hdafl - 0.02, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 4

/// Independent parameter count for one layer.
fn count(layer: &LayerSpec) -> usize {
    match *layer {
        LayerSpec::Dense { in_dim, out_dim } => (in_dim + 1) * out_dim,
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
        } => (in_channels * kernel_len + 1) * out_channels,
        _ => 0,
    }
}

fn random_spec(rng: &mut impl Rng) -> ModelSpec {
    let len = rng.random_range(6..20);
    let classes = rng.random_range(2..6);
    let mut layers = Vec::new();
    let mut width = len;
    if rng.random_bool(0.5) {
        let (oc, k) = (rng.random_range(1..4), rng.random_range(1..4));
        layers.push(LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: oc,
            kernel_len: k,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Flatten);
        width = oc * (len - k + 1);
    }
    for _ in 0..rng.random_range(0..3) {
        let out = rng.random_range(2..12);
        layers.push(LayerSpec::Dense { in_dim: width, out_dim: out });
        layers.push(LayerSpec::Relu);
        width = out;
    }
    layers.push(LayerSpec::Dense {
        in_dim: width,
        out_dim: classes,
    });
    // Any boundary that leaves the head private.
    let specific_from = rng.random_range(0..layers.len());
    ModelSpec::new(vec![len], layers, specific_from, classes).unwrap()
}

fn criterion_4() -> Check {
    let mut rng = rng_from(44, &[]);
    let mut lines = Vec::new();
    for i in 0..5 {
        let spec = random_spec(&mut rng);
        let per_round = rng.random_range(1..9);
        let generic: usize = spec.layers[..spec.specific_from].iter().map(count).sum();
        let total: usize = spec.layers.iter().map(count).sum();
        let expect = |n: usize| (per_round * n * 4) as u64;
        let fa = comm_cost_round(Strategy::FedAvg, &spec, per_round);
        let hd = comm_cost_round(Strategy::Hdafl, &spec, per_round);
        let lg = comm_cost_round(Strategy::LgComplement, &spec, per_round);
        ensure(fa == (expect(total), expect(total)), || format!("spec {i}: FED_AVG {fa:?}"))?;
        ensure(hd == (expect(generic), expect(generic)), || format!("spec {i}: HDAFL {hd:?}"))?;
        ensure(hd.0 < fa.0 && hd.1 < fa.1, || format!("spec {i}: HDAFL not below FED_AVG"))?;
        ensure(hd.0 + lg.0 == fa.0 && hd.1 + lg.1 == fa.1, || format!("spec {i}: slices do not partition"))?;

        // The logged bytes of a real round agree with the closed form.
        let ds = gen_blobs(spec.num_classes, 8 * per_round, spec.input_shape[0], 1.0, i).unwrap();
        let shards = tiny_shards(&ds, per_round, i);
        let fed = FederationConfig {
            clients: per_round,
            per_round,
            rounds: 2,
            local_epochs: 1,
            lr: 0.05,
            batch_size: 8,
            strategy: Strategy::Hdafl,
            seed_selection: i,
            seed_init: i,
            seed_train: i,
            target_accuracy: None,
            early_stop: false,
        };
        let logs = run_experiment_with(&fed, &spec, shards, RunOptions::default()).unwrap().logs;
        ensure(
            logs[1].uplink_bytes == expect(generic) && logs[1].cumulative_bytes == 4 * expect(generic),
            || format!("spec {i}: logged bytes {:?}", logs[1]),
        )?;
        lines.push(format!("{}/{}", hd.0 + hd.1, fa.0 + fa.1));
    }
    Ok(format!("HDAFL/FED_AVG bytes per round: {}", lines.join(", ")))
}

fn tiny_shards(ds: &Dataset, k: usize, seed: u64) -> Vec<ClientShard> {
    let plan = PartitionPlan {
        policy: PartitionPolicy::Iid,
        clients: k,
        seed,
    };
    partition(ds, &plan, None)
        .unwrap()
        .iter()
        .map(|s| train_test_split(s, 0.25, seed).unwrap())
        .collect()
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let specs = [
        ("dense:6:10,relu,dense:10:4", "6"),
        ("conv1d:1:3:3,relu,flatten,dense:18:5,relu,dense:5:3", "8"),
        ("conv1d:2:2:2,relu,conv1d:2:3:3,flatten,dense:12:4", "2x7"),
    ];
    let mut worst: f64 = 0.0;
    for (layers, input) in specs {
        for seed in 0..10 {
            let out = cmd_gradcheck(&GradcheckArgs {
                layers: layers.into(),
                input: input.into(),
                seed,
                batch_size: 4,
                corrupt_index: None,
            })
            .map_err(|e| e.to_string())?;
            ensure(out.passed, || {
                format!("{layers} seed {seed}: max rel err {:e} at {}", out.max_rel_error, out.worst_index)
            })?;
            worst = worst.max(out.max_rel_error);
        }
    }
    let status = Command::new(env!("CARGO_BIN_EXE_fedpart"))
        .args(["gradcheck", "--layers", specs[1].0, "--input", specs[1].1, "--seed", "3"])
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure(status.code() == Some(0), || format!("binary exit status {status}"))?;
    Ok(format!("30 checks, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let mut rng = rng_from(66, &[]);
    let mut max_err: f64 = 0.0;
    for case in 0..100 {
        let m = rng.random_range(1..9);
        let len = rng.random_range(1..25);
        let updates: Vec<ClientUpdateResult> = (0..m)
            .map(|k| ClientUpdateResult {
                client_id: k,
                shared_slice: (0..len).map(|_| rng.random_range(-10.0..10.0)).collect(),
                n_k: rng.random_range(1..1000),
                train_loss: 0.0,
            })
            .collect();
        let total: usize = updates.iter().map(|u| u.n_k).sum();
        let weights = aggregation_weights(&updates).unwrap();
        let wsum: f64 = weights.iter().sum();
        ensure((wsum - 1.0).abs() <= 1e-12, || format!("case {case}: weights sum to {wsum}"))?;
        for (w, u) in weights.iter().zip(&updates) {
            ensure((w - u.n_k as f64 / total as f64).abs() <= 1e-15, || format!("case {case}: weight {w}"))?;
        }
        let got = aggregate(&updates).unwrap();
        #[allow(clippy::needless_range_loop)]
        for j in 0..len {
            let direct: f64 = updates.iter().map(|u| u.n_k as f64 * u.shared_slice[j]).sum::<f64>() / total as f64;
            let err = (got[j] - direct).abs();
            max_err = max_err.max(err);
            ensure(err <= 1e-12, || format!("case {case} component {j}: {} vs {direct}", got[j]))?;
            let lo = updates.iter().map(|u| u.shared_slice[j]).fold(f64::INFINITY, f64::min);
            let hi = updates.iter().map(|u| u.shared_slice[j]).fold(f64::NEG_INFINITY, f64::max);
            ensure(lo <= got[j] && got[j] <= hi, || format!("case {case} component {j} outside [{lo}, {hi}]"))?;
        }
    }
    Ok(format!("100 cases, max abs deviation {max_err:.2e}"))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    for s in 0..3 {
        let mut v = blobs_config(json!({"policy": "noniid", "alpha": 0.5}), s);
        v["model"] = mlp(16, 20, 16, 3);
        v["federation"]["K"] = json!(8);
        v["federation"]["C"] = json!(4);
        v["federation"]["T"] = json!(20);
        let p = prepare(&parse(v));
        let mut feds: Vec<Federation> = [Strategy::Hdafl, Strategy::FedAvg]
            .into_iter()
            .map(|st| {
                let mut cfg = p.fed.clone();
                cfg.strategy = st;
                Federation::new(cfg, p.spec.clone(), p.shards.clone(), RunOptions::default()).unwrap()
            })
            .collect();
        for t in 1..=20 {
            let a = feds[0].run_round().unwrap();
            let b = feds[1].run_round().unwrap();
            let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            ensure(
                a.mean_client_accuracy.to_bits() == b.mean_client_accuracy.to_bits()
                    && a.mean_client_loss.to_bits() == b.mean_client_loss.to_bits()
                    && a.selected == b.selected
                    && a.cumulative_bytes == b.cumulative_bytes,
                || format!("seed {s} round {t}: logs differ"),
            )?;
            ensure(bits(&feds[0].server().shared) == bits(&feds[1].server().shared), || {
                format!("seed {s} round {t}: server vectors differ")
            })?;
            for k in 0..p.fed.clients {
                ensure(
                    bits(feds[0].clients()[k].params.values()) == bits(feds[1].clients()[k].params.values()),
                    || format!("seed {s} round {t}: client {k} differs"),
                )?;
            }
        }
    }
    Ok("3 seeds x 20 rounds bit-identical".into())
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Check {
    let mut v = blobs_config(json!({"policy": "iid"}), 8);
    v["data"]["source"]["per_class"] = json!(15);
    v["federation"] = json!({"K": 1, "C": 1, "T": 10, "E": 2, "lr": 0.05, "batch_size": 16, "strategy": "FED_AVG"});
    let p = prepare(&parse(v));
    let mut fed = Federation::new(p.fed.clone(), p.spec.clone(), p.shards.clone(), RunOptions::default()).unwrap();

    // Plain mini-batch SGD on the single client's training data.
    let train = &p.shards[0].train;
    let mut w = init_params(&p.spec, p.fed.seed_init).unwrap();
    for t in 1..=10usize {
        for e in 0..p.fed.local_epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng_from(p.fed.seed_train, &[0, t as u64, e as u64]));
            for chunk in order.chunks(p.fed.batch_size) {
                let (_, g) = loss_and_grad(&p.spec, &w, &train.batch(chunk)).unwrap();
                let next: Vec<f64> = w.values().iter().zip(&g.0).map(|(x, d)| x - p.fed.lr * d).collect();
                w = fedpart_core::nn::ParamSet::from_values(&p.spec, next).unwrap();
            }
        }
        fed.run_round().unwrap();
        ensure(fed.server().shared.as_slice() == w.values(), || format!("round {t}: server differs"))?;
        ensure(fed.clients()[0].params.values() == w.values(), || format!("round {t}: client differs"))?;
    }
    Ok(format!("{} parameters equal after each of 10 rounds", w.len()))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("conflict.json");
    std::fs::write(&cfg_path, conflict_config().to_string()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}.csv"));
        let res = Command::new(env!("CARGO_BIN_EXE_fedpart"))
            .env("FEDPART_THREADS", threads)
            .arg("compare")
            .arg(&cfg_path)
            .args(["--strategies", "FED_AVG,HDAFL", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(res.status.success(), || String::from_utf8_lossy(&res.stderr).into_owned())?;
        let mut files = Vec::new();
        for st in ["FED_AVG", "HDAFL"] {
            files.push(std::fs::read(dir.path().join(format!("t{threads}_{st}.csv"))).map_err(|e| e.to_string())?);
        }
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1], || "CSV bytes differ between 1 and 8 threads".into())?;

    // The in-process run with an explicit pool matches the binary's output.
    let p = prepare(&parse(conflict_config()));
    let in_process = to_csv_string(&run(&p, Strategy::Hdafl, Some(3)));
    ensure(in_process.as_bytes() == outputs[0][1].as_slice(), || "in-process CSV differs".into())?;
    Ok(format!("{} + {} CSV bytes identical across 1, 3 and 8 threads", outputs[0][0].len(), outputs[0][1].len()))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Check {
    let p = prepare(&parse(conflict_config()));
    let trace_run = |strategy: Strategy, rounds: usize| {
        let mut cfg = p.fed.clone();
        cfg.strategy = strategy;
        let options = RunOptions {
            threads: None,
            record_trace: true,
        };
        let mut fed = Federation::new(cfg, p.spec.clone(), p.shards.clone(), options).unwrap();
        // Every private value any client ever held, snapshotted each round.
        let mut private = Vec::new();
        for _ in 0..rounds {
            fed.run_round().unwrap();
            for c in fed.clients() {
                private.extend_from_slice(c.params.specific());
            }
        }
        (fed, private)
    };

    let (fed, private) = trace_run(Strategy::Hdafl, p.fed.rounds);
    let trace = fed.trace().unwrap();
    // Values from the common initial vector are public, not private.
    let public: HashSet<u64> = trace
        .messages()
        .iter()
        .filter(|m| m.kind == MessageKind::Init)
        .flat_map(|m| m.bytes.chunks(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let needles: Vec<f64> = private.into_iter().filter(|v| !public.contains(&v.to_bits())).collect();
    let leaks = trace.leaks(&needles);
    ensure(leaks.is_empty(), || {
        format!("{} messages leak, first round {} client {}", leaks.len(), leaks[0].round, leaks[0].client_id)
    })?;

    // Negative control: sharing everything must show up in the search.
    let (full, full_private) = trace_run(Strategy::FedAvg, 2);
    ensure(!full.trace().unwrap().leaks(&full_private).is_empty(), || {
        "search failed to detect FED_AVG uploads".into()
    })?;
    Ok(format!(
        "{} messages, {} private values, no leak",
        trace.messages().len(),
        needles.len()
    ))
}

fn main() {
    let only: Option<HashSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 10] = [
        (1, "disjoint label-conflict collapse", criterion_1),
        (2, "non-iid ordering", criterion_2),
        (3, "iid ordering", criterion_3),
        (4, "communication ordering", criterion_4),
        (5, "gradient correctness", criterion_5),
        (6, "aggregation oracle", criterion_6),
        (7, "strategy-boundary equivalence", criterion_7),
        (8, "centralized equivalence", criterion_8),
        (9, "determinism across worker counts", criterion_9),
        (10, "privacy of specific slices", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
