//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qaprobe::adapter::{
    format_dump, parse_dump, train_toy, Adapter, ConstantAdapter, DumpFile, DumpRow, ExecAdapter, Hyperparams,
    Perturbation, Probe, Session, ToyAdapter, TrainingSet,
};
use qaprobe::analysis::{
    answer_novelty_analysis, failure_analysis, image_consistency, modality_ablation, novelty_analysis,
    pos_drop_probe, prefix_probe, AnalysisOptions, ConsistencyParams, FailureFeature, DEFAULT_PREFIX_GRID,
};
use qaprobe::data::{Dataset, Instance, PosGroup, Split, VectorTable};
use qaprobe::knn::{distance, knn_batch, Metric, TrainMatrix};
use qaprobe::stats::{pearson, StatsError};
use qaprobe::synth::{
    generate, DistanceGatedOracle, KeyedOracle, Mode, NearestAnswerAdapter, PlantDescriptor, SynthConfig,
};

const PEARSON_EXACT_TOL: f64 = 1e-12;
const PEARSON_AFFINE_TOL: f64 = 1e-9;
const NOVELTY_MAX_R: f64 = -0.8;
const FAILURE_MIN_BALANCED_ACCURACY: f64 = 0.95;
const FAILURE_MIN_MISTAKE_FRACTION: f64 = 0.9;
const ANSWER_NOVELTY_MAX_R: f64 = -0.6;
const GRADIENT_MAX_REL_ERROR: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-5;
const K_GRID: [usize; 5] = [1, 5, 10, 25, 50];

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn synth(modes: &[Mode]) -> Result<(Dataset, PlantDescriptor), String> {
    let mut cfg = SynthConfig::default();
    cfg.modes.extend(modes.iter().copied());
    generate(&cfg).map_err(|e| e.to_string())
}

fn session(adapter: impl Adapter + 'static) -> Result<Session, String> {
    Session::open(Box::new(adapter)).map(Session::with_cache).map_err(|e| e.to_string())
}

fn toy_session(d: &Dataset) -> Result<Session, String> {
    let model = train_toy(d, Hyperparams::default()).map_err(|e| e.to_string())?;
    session(ToyAdapter::new(Arc::new(model), Arc::new(d.image_features.clone())).map_err(|e| e.to_string())?)
}

fn knn_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for metric in [Metric::Euclidean, Metric::Cosine] {
        for _ in 0..100 {
            let n = rng.gen_range(1..=500);
            let dim = rng.gen_range(1..=32);
            let k = rng.gen_range(1..=n.min(60));
            // small integer grid so that exact ties occur
            let coarse = rng.gen_bool(0.5);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..dim)
                    .map(|_| if coarse { rng.gen_range(-2..=2) as f64 } else { rng.gen_range(-1.0..1.0) })
                    .collect()
            };
            let rows: Vec<Vec<f64>> = (0..n).map(|_| draw(&mut rng)).collect();
            let query = draw(&mut rng);
            let matrix = TrainMatrix::from_rows(dim, rows.iter().map(Vec::as_slice)).map_err(|e| e.to_string())?;
            let got = knn_batch(&[("q", &query)], &matrix, k, metric).map_err(|e| e.to_string())?;
            let mut all: Vec<(f64, usize)> =
                rows.iter().enumerate().map(|(i, r)| (distance(&query, r, metric).unwrap(), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<(usize, u64)> = all[..k].iter().map(|(d, i)| (*i, d.to_bits())).collect();
            let have: Vec<(usize, u64)> =
                got[0].neighbors.iter().map(|nb| (nb.train_index, nb.distance.to_bits())).collect();
            check(have == want, format!("{metric} mismatch at n={n} dim={dim} k={k}"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} queries, both metrics, bitwise equal to full sort"))
}

fn pearson_correctness() -> Outcome {
    let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.37 - 3.0).collect();
    let up: Vec<f64> = x.iter().map(|v| 2.5 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -0.75 * v + 4.0).collect();
    let r_up = pearson(&x, &up).map_err(|e| e.to_string())?;
    let r_down = pearson(&x, &down).map_err(|e| e.to_string())?;
    check((r_up - 1.0).abs() <= PEARSON_EXACT_TOL, format!("linear r = {r_up}"))?;
    check((r_down + 1.0).abs() <= PEARSON_EXACT_TOL, format!("anti-linear r = {r_down}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(3..60);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (a, b, c, d) = (rng.gen_range(0.1..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..-0.1), rng.gen_range(-5.0..5.0));
        let base = pearson(&xs, &ys).map_err(|e| e.to_string())?;
        let xt: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
        let yt: Vec<f64> = ys.iter().map(|v| c * v + d).collect();
        let moved = pearson(&xt, &yt).map_err(|e| e.to_string())?;
        worst = worst.max((moved + base).abs());
    }
    check(worst <= PEARSON_AFFINE_TOL, format!("affine deviation {worst:e}"))?;
    check(pearson(&x, &vec![3.0; x.len()]) == Err(StatsError::ZeroVariance), "zero variance not undefined")?;
    Ok(format!("r = {r_up} / {r_down}; 1000 affine cases, worst deviation {worst:.1e}; zero variance undefined"))
}

fn novelty_reproduction() -> Outcome {
    let (d, plant) = synth(&[Mode::NoveltyPlanted])?;
    let oracle = DistanceGatedOracle::new(&d, &plant).map_err(|e| e.to_string())?;
    let mut s = session(oracle)?;
    let opts = AnalysisOptions::default();
    let nov = novelty_analysis(&d, &mut s, &K_GRID, None, &opts).map_err(|e| e.to_string())?;
    let best = nov.per_k.iter().find(|r| r.k == nov.best_k).expect("best row");
    let r = best.pearson_binned.ok_or("binned r undefined")?;
    let fail = failure_analysis(&d, &mut s, FailureFeature::QiDistance, &K_GRID, None, 0, &opts)
        .map_err(|e| e.to_string())?;
    let ba = fail.balanced_accuracy.ok_or("balanced accuracy undefined")?;
    let frac = fail.predicted_failure_fraction_of_mistakes.ok_or("mistake fraction undefined")?;
    let msg = format!("binned r = {r:.4} (k={}), balanced accuracy = {ba:.4}, mistakes predicted = {frac:.4}", nov.best_k);
    check(r <= NOVELTY_MAX_R && ba >= FAILURE_MIN_BALANCED_ACCURACY && frac >= FAILURE_MIN_MISTAKE_FRACTION, &msg)?;
    Ok(msg)
}

fn answer_novelty_reproduction() -> Outcome {
    let (d, _) = synth(&[Mode::AnswerShift])?;
    let mut s = session(NearestAnswerAdapter::new(&d))?;
    let rep = answer_novelty_analysis(&d, &mut s, &K_GRID, None, &AnalysisOptions::default())
        .map_err(|e| e.to_string())?;
    let best = rep.per_k.iter().find(|r| r.k == rep.best_k).expect("best row");
    let r = best.pearson_binned.ok_or("binned r undefined")?;
    let msg = format!("binned r = {r:.4} at k={} (raw {:?})", rep.best_k, best.pearson_raw.map(|x| (x * 1e4).round() / 1e4));
    check(r <= ANSWER_NOVELTY_MAX_R, &msg)?;
    Ok(msg)
}

fn prefix_convergence() -> Outcome {
    let opts = AnalysisOptions::default();
    let (keyed, plant) = synth(&[Mode::FirstWordKeyed])?;
    let mut s = session(KeyedOracle::from_plant(&plant).map_err(|e| e.to_string())?)?;
    let rep = prefix_probe(&keyed, &mut s, &DEFAULT_PREFIX_GRID, &opts).map_err(|e| e.to_string())?;
    for p in rep.per_point.iter().filter(|p| p.pct >= 10) {
        check(p.fraction_same_as_full == 1.0, format!("first-word plant: {}% gives {}", p.pct, p.fraction_same_as_full))?;
    }
    let zero = rep.per_point[0].fraction_same_as_full;

    // the 100% point on other dataset/adapter pairs
    let mut pairs = 0;
    for mode in [Mode::QuestionDominant, Mode::LabelBiased, Mode::WhKeyed] {
        let (d, _) = synth(&[mode])?;
        let sessions = vec![toy_session(&d)?, session(ConstantAdapter::new("yes"))?];
        for mut s in sessions {
            let rep = prefix_probe(&d, &mut s, &DEFAULT_PREFIX_GRID, &opts).map_err(|e| e.to_string())?;
            let last = rep.per_point.last().expect("grid");
            check(last.pct == 100 && last.fraction_same_as_full == 1.0, format!("{mode}: 100% point {}", last.fraction_same_as_full))?;
            for b in &rep.per_qtype {
                let l = b.per_point.last().expect("grid");
                check(l.fraction_same_as_full == 1.0, format!("{mode} {}: 100% point {}", b.qtype, l.fraction_same_as_full))?;
            }
            pairs += 1;
        }
    }
    Ok(format!("first-word plant: 1.0 at every point >= 10% (0% gives {zero:.3}); 100% point is 1.0 on {} dataset/adapter pairs", pairs + 1))
}

fn pos_sensitivity() -> Outcome {
    let (d, plant) = synth(&[Mode::WhKeyed])?;
    let mut s = session(KeyedOracle::from_plant(&plant).map_err(|e| e.to_string())?)?;
    let rep = pos_drop_probe(&d, &mut s, &PosGroup::ALL, &AnalysisOptions::default()).map_err(|e| e.to_string())?;
    let row = |g: PosGroup| rep.per_group.iter().find(|r| r.group == g).expect("group row");
    let wh = row(PosGroup::Wh);
    let pronoun = row(PosGroup::Pronoun);
    check(wh.n_questions_affected > 0 && wh.fraction_unchanged == 0.0, format!("WH unchanged {}", wh.fraction_unchanged))?;
    check(
        pronoun.n_questions_affected > 0 && pronoun.fraction_unchanged == 1.0,
        format!("PRONOUN unchanged {} over {}", pronoun.fraction_unchanged, pronoun.n_questions_affected),
    )?;
    let vacuous: Vec<_> = rep.per_group.iter().filter(|r| r.n_questions_affected == 0).collect();
    check(!vacuous.is_empty(), "no vacuous group to check")?;
    for r in &vacuous {
        check(r.fraction_unchanged == 1.0 && r.n_excluded == rep.n, format!("vacuous {} reports {}", r.group, r.fraction_unchanged))?;
    }
    let names: Vec<&str> = vacuous.iter().map(|r| r.group.as_str()).collect();
    Ok(format!(
        "WH changes {}/{} questions, PRONOUN changes 0/{}, vacuous {} report 1.0",
        wh.n_questions_affected,
        wh.n_questions_affected,
        pronoun.n_questions_affected,
        names.join(",")
    ))
}

fn stubbornness() -> Outcome {
    let (d, _) = synth(&[Mode::LabelBiased])?;
    let params = ConsistencyParams::default();
    let opts = AnalysisOptions::default();
    let mut s = session(ConstantAdapter::new("yes"))?;
    let rep = image_consistency(&d, &mut s, &params, &opts).map_err(|e| e.to_string())?;
    check(!rep.per_question.is_empty(), "no question groups")?;
    check(rep.per_question.iter().all(|q| q.x == 1.0), "constant adapter has X < 1")?;
    let at_full = rep.histogram.at_least(1.0);
    check(at_full == Some(1.0), format!("cumulative_at_least(100%) = {at_full:?}"))?;

    let mut toy = toy_session(&d)?;
    let rep = image_consistency(&d, &mut toy, &params, &opts).map_err(|e| e.to_string())?;
    let band = rep.band_mean_accuracy.ok_or("no questions in the band")?;
    let msg = format!(
        "constant: {} groups at X = 1.0; toy: band accuracy {band:.4} over {} questions vs overall {:.4}",
        rep.per_question.len(),
        rep.band_n_questions,
        rep.overall_mean_accuracy
    );
    check(band >= rep.overall_mean_accuracy, &msg)?;
    Ok(msg)
}

fn modality_ablation_criterion() -> Outcome {
    let opts = AnalysisOptions::default();
    let (qo, _) = synth(&[Mode::QuestionOnly])?;
    let a = modality_ablation(&qo, &mut toy_session(&qo)?, &opts).map_err(|e| e.to_string())?;
    check(a.changed_on_adding_image == 0.0, format!("question_only: adding image changes {}", a.changed_on_adding_image))?;
    let (qd, _) = synth(&[Mode::QuestionDominant])?;
    let b = modality_ablation(&qd, &mut toy_session(&qd)?, &opts).map_err(|e| e.to_string())?;
    let msg = format!(
        "question_only: adding image changes {}; question_dominant: adding question {:.4} > adding image {:.4}",
        a.changed_on_adding_image, b.changed_on_adding_question, b.changed_on_adding_image
    );
    check(b.changed_on_adding_question > b.changed_on_adding_image, &msg)?;
    Ok(msg)
}

/// Unique questions over one all-zero image, so only the question pathway
/// can separate the answers.
fn unique_question_dataset(n: usize, n_answers: usize) -> Dataset {
    let instances = (0..n)
        .map(|i| {
            let answer = format!("a{}", i % n_answers);
            let tokens: Vec<String> = ["what", "is", "the", &format!("thing{i}")].iter().map(|s| s.to_string()).collect();
            Instance::new(
                format!("q{i}"),
                tokens.join(" "),
                tokens,
                None,
                "blank".to_string(),
                vec![answer.clone(); 10],
                answer,
                Split::Train,
            )
            .expect("valid instance")
        })
        .collect();
    let images = VectorTable::from_rows(8, vec![("blank".to_string(), vec![0.0; 8])]).expect("table");
    Dataset::new(instances, images, None).expect("dataset")
}

fn param(m: &mut qaprobe::adapter::ToyModel, is_bias: bool, i: usize) -> &mut f64 {
    if is_bias {
        &mut m.bias[i]
    } else {
        &mut m.weights[i]
    }
}

fn toy_model_checks() -> Outcome {
    let (d, _) = synth(&[Mode::QuestionDominant])?;
    let set = TrainingSet::from_dataset(&d).map_err(|e| e.to_string())?;
    let hp = Hyperparams { epochs: 20, ..Hyperparams::default() };
    let mut model = train_toy(&d, hp).map_err(|e| e.to_string())?;
    let (gw, gb) = set.gradient(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let n_samples = 40;
    for s in 0..n_samples {
        let (is_bias, i) = if s % 5 == 4 {
            (true, rng.gen_range(0..model.bias.len()))
        } else {
            (false, rng.gen_range(0..model.weights.len()))
        };
        let orig = *param(&mut model, is_bias, i);
        *param(&mut model, is_bias, i) = orig + GRADIENT_STEP;
        let up = set.loss(&model);
        *param(&mut model, is_bias, i) = orig - GRADIENT_STEP;
        let down = set.loss(&model);
        *param(&mut model, is_bias, i) = orig;
        let numeric = (up - down) / (2.0 * GRADIENT_STEP);
        let analytic = if is_bias { gb[i] } else { gw[i] };
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    check(worst < GRADIENT_MAX_REL_ERROR, format!("gradient relative error {worst:e}"))?;

    let small = unique_question_dataset(50, 10);
    let memorized = train_toy(&small, Hyperparams::default()).map_err(|e| e.to_string())?;
    let acc = TrainingSet::from_dataset(&small).map_err(|e| e.to_string())?.accuracy(&memorized);
    check(acc == 1.0, format!("50 unique questions: train accuracy {acc}"))?;

    let bits = |m: &qaprobe::adapter::ToyModel| -> Vec<u64> { m.weights.iter().chain(&m.bias).map(|w| w.to_bits()).collect() };
    let a = train_toy(&d, Hyperparams::default()).map_err(|e| e.to_string())?;
    let b = train_toy(&d, Hyperparams::default()).map_err(|e| e.to_string())?;
    let c = train_toy(&d, Hyperparams { seed: 1, ..Hyperparams::default() }).map_err(|e| e.to_string())?;
    check(bits(&a) == bits(&b), "same seed gave different weights")?;
    check(bits(&a) != bits(&c), "different seeds gave identical weights")?;
    Ok(format!(
        "gradient worst relative error {worst:.1e} over {n_samples} entries; 50 unique questions memorized in 200 epochs; training bitwise reproducible"
    ))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qaprobe")
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), format!("qaprobe {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.expect("entry").path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn without_timings(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).expect("manifest json");
    v.as_object_mut().expect("object").remove("timings");
    v
}

fn end_to_end_determinism(tmp: &Path) -> Outcome {
    let data = tmp.join("e2e-data");
    let s = |p: &PathBuf| p.to_str().unwrap().to_owned();
    run(&["gen", "--seed", "11", "--mode", "label_biased", "-o", &s(&data)])?;
    let config = tmp.join("e2e.toml");
    fs::write(&config, "k = [1, 5, 25]\nseed = 3\n[image]\nmin_images = 20\n").unwrap();
    let outs = [tmp.join("e2e-out1"), tmp.join("e2e-out2")];
    for out in &outs {
        run(&["analyze", "all", "--data", &s(&data), "--adapter", "toy", "--config", &s(&config), "--out", &s(out)])?;
    }
    let (a, b) = (dir_files(&outs[0]), dir_files(&outs[1]));
    check(a.keys().eq(b.keys()), "different file sets")?;
    let mut svgs = 0;
    for (name, bytes) in &a {
        if name == "manifest.json" {
            check(without_timings(bytes) == without_timings(&b[name]), "manifests differ outside timings")?;
        } else {
            check(*bytes == b[name], format!("{name} differs"))?;
            svgs += usize::from(name.ends_with(".svg"));
        }
    }
    Ok(format!("{} files identical across two runs ({svgs} SVG); manifests differ only in timings", a.len()))
}

fn wire_conformance(tmp: &Path) -> Outcome {
    let data = tmp.join("wire-data");
    let model = tmp.join("wire-model.json");
    let dump = tmp.join("wire.dump");
    let s = |p: &PathBuf| p.to_str().unwrap().to_owned();
    run(&["gen", "--seed", "5", "--mode", "question_dominant", "-o", &s(&data)])?;
    run(&["train-toy", "--data", &s(&data), "-o", &s(&model)])?;
    let adapter = format!("toy:{}", s(&model));
    run(&[
        "dump", "--data", &s(&data), "--adapter", &adapter, "--split", "test", "--embed", "--probes",
        "full,prefix:50,img:mean,q:mean,drop:WH", "-o", &s(&dump),
    ])?;
    let dump_text = fs::read_to_string(&dump).map_err(|e| e.to_string())?;
    let recorded = parse_dump(&dump_text).map_err(|e| e.to_string())?;

    let d = Dataset::load_dir(&data).map_err(|e| e.to_string())?;
    let test = d.test();
    let kinds: Vec<Perturbation> =
        ["full", "prefix:50", "img:mean", "q:mean", "drop:WH"].iter().map(|p| p.parse().unwrap()).collect();
    let probes: Vec<Probe> = (0..100).map(|i| Probe::new(test[i * 3 % test.len()], kinds[i % kinds.len()])).collect();

    let cmd = format!("'{}' serve --data '{}' --adapter '{}'", bin(), s(&data), adapter);
    let mut ext = ExecAdapter::spawn(&cmd).map_err(|e| e.to_string())?;
    let caps = ext.handshake().map_err(|e| e.to_string())?;
    check(caps.has_embedding && caps.embedding_dim == Some(recorded.dim), "handshake capabilities")?;
    let preds = ext.predict(&probes, true).map_err(|e| e.to_string())?;
    check(preds.len() == 100, format!("{} predictions", preds.len()))?;

    let got = DumpFile { dim: recorded.dim, rows: preds.into_iter().map(DumpRow::from).collect() };
    let got_text = format_dump(&got).map_err(|e| e.to_string())?;
    let by_key: BTreeMap<(&str, &str), &str> = dump_text
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.splitn(3, '\t');
            ((f.next().unwrap(), f.next().unwrap()), l)
        })
        .collect();
    let mut lines = got_text.lines();
    check(lines.next() == dump_text.lines().next(), "dump header differs")?;
    for (line, probe) in lines.zip(&probes) {
        let want = by_key.get(&(probe.instance_id.as_str(), probe.probe_id.as_str())).ok_or("probe missing from dump")?;
        check(line == *want, format!("{} {} differs from dump", probe.instance_id, probe.probe_id))?;
    }
    Ok(format!("handshake + 100 predictions over 5 probe kinds byte-identical to the dump (dim {})", recorded.dim))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("k-NN oracle equivalence", Box::new(knn_oracle_equivalence)),
        ("Pearson correctness", Box::new(pearson_correctness)),
        ("novelty reproduction", Box::new(novelty_reproduction)),
        ("answer-novelty reproduction", Box::new(answer_novelty_reproduction)),
        ("prefix convergence", Box::new(prefix_convergence)),
        ("POS sensitivity", Box::new(pos_sensitivity)),
        ("stubbornness", Box::new(stubbornness)),
        ("modality ablation", Box::new(modality_ablation_criterion)),
        ("toy model", Box::new(toy_model_checks)),
        ("end-to-end determinism", Box::new(|| end_to_end_determinism(tmp.path()))),
        ("wire-protocol conformance", Box::new(|| wire_conformance(tmp.path()))),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", n + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
