//! Acceptance suite: one pass/fail line per criterion, each checked against
//! an oracle written independently of the library code it exercises.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use seg_genlab::archive::{ArchiveMetadata, AveragingMode, Scope, TensorArchive};
use seg_genlab::averaging::{average_weights, AveragingRequest};
use seg_genlab::characterization::{
    compare_styles, connected_components, lesion_stats, style_summary, Connectivity, HistogramSpec, StyleRelation,
};
use seg_genlab::ensemble::{ensemble_average, EnsembleMember, EnsembleSet};
use seg_genlab::error::{Error, ErrorClass};
use seg_genlab::metrics::{binned_aupr, dice, read_metric_records, write_metric_records, MetricKind, MetricRecord};
use seg_genlab::plan::{
    enumerate_combinations, split_ids, DatasetManifest, DatasetSummary, ExperimentPlan, ImageRecord, SplitSpec,
    StyleTag, Subset,
};
use seg_genlab::raster::{
    load_probability_map, quantize_probability, save_probability_map, LesionCode, LesionMask, ProbabilityMap,
};
use seg_genlab::report::{scenario_table, RowMark};
use seg_genlab::synth::{generate_mask, generate_prediction, SynthConfig, SynthDatasetConfig};

/// xorshift64* for test inputs, deliberately unrelated to the library's
/// generator.
struct TestRng(u64);

impl TestRng {
    fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1)
    }

    fn next(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next() % (hi - lo + 1) as u64) as usize
    }
}

fn random_mask(rng: &mut TestRng, w: usize, h: usize, density: f64) -> LesionMask {
    let bits = (0..w * h).map(|_| rng.unit() < density).collect();
    LesionMask::new("r", LesionCode::Ex, w, h, bits).unwrap()
}

// ---------------------------------------------------------------------------
// Oracles

fn dice_oracle(a: &LesionMask, b: &LesionMask) -> f64 {
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (pa, pb) = (a.get(x, y), b.get(x, y));
            inter += (pa && pb) as u64;
            na += pa as u64;
            nb += pb as u64;
        }
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// 11 thresholds k/10, strict p > t, precision 1 with no positive
/// predictions, recall 0 with no positive truth; points ordered by recall
/// (then precision, high first); trapezoid from (0, first precision).
fn aupr_oracle(p: &ProbabilityMap, t: &LesionMask) -> f64 {
    let mut pts = Vec::new();
    for k in 0..=10 {
        let tau = k as f64 / 10.0;
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for y in 0..t.height() {
            for x in 0..t.width() {
                match (p.get(x, y) > tau, t.get(x, y)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    _ => {}
                }
            }
        }
        let prec = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let rec = if tp + fneg == 0 {
            0.0
        } else {
            tp as f64 / (tp + fneg) as f64
        };
        pts.push((rec, prec));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, pts[0].1);
    for (r, pr) in pts {
        area += (r - r0) * (pr + p0) / 2.0;
        r0 = r;
        p0 = pr;
    }
    area
}

/// Breadth-first flood fill, components in row-major order of first pixel.
fn flood_fill_areas(m: &LesionMask, eight: bool) -> Vec<u64> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut areas = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !m.get(x as usize, y as usize) || seen[i] {
                continue;
            }
            seen[i] = true;
            let mut q = VecDeque::from([(x, y)]);
            let mut area = 0;
            while let Some((cx, cy)) = q.pop_front() {
                area += 1;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (cx + dx, cy + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if m.get(nx as usize, ny as usize) && !seen[j] {
                            seen[j] = true;
                            q.push_back((nx, ny));
                        }
                    }
                }
            }
            areas.push(area);
        }
    }
    areas
}

fn subsets_oracle(items: &[&str]) -> Vec<BTreeSet<String>> {
    fn rec(items: &[&str], i: usize, cur: &mut Vec<String>, out: &mut Vec<BTreeSet<String>>) {
        if i == items.len() {
            if !cur.is_empty() {
                out.push(cur.iter().cloned().collect());
            }
            return;
        }
        rec(items, i + 1, cur, out);
        cur.push(items[i].to_string());
        rec(items, i + 1, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(items, 0, &mut Vec::new(), &mut out);
    out
}

fn ulp_distance(a: f32, b: f32) -> u32 {
    if a == b {
        return 0;
    }
    let key = |v: f32| {
        let bits = v.to_bits() as i32;
        if bits < 0 {
            i32::MIN.wrapping_sub(bits)
        } else {
            bits
        }
    };
    key(a).wrapping_sub(key(b)).unsigned_abs()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn iqr(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    q(0.75) - q(0.25)
}

// ---------------------------------------------------------------------------
// Criteria

fn combination_enumeration() {
    let ids = ["IDR", "DDR", "FGA", "RET", "MES"];
    let datasets: Vec<DatasetSummary> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| DatasetSummary {
            id: id.to_string(),
            style: StyleTag::Fine,
            train_images: 10 * (i + 1),
        })
        .collect();
    let combos = enumerate_combinations(&datasets, &BTreeSet::new()).unwrap();
    assert_eq!(combos.len(), 31);
    let got: BTreeSet<BTreeSet<String>> = combos.iter().map(|c| c.members.iter().cloned().collect()).collect();
    let expected: BTreeSet<BTreeSet<String>> = subsets_oracle(&ids).into_iter().collect();
    assert_eq!(got, expected);
    for id in ids {
        assert_eq!(combos.iter().filter(|c| c.contains(id)).count(), 16, "{id}");
    }
    let held: BTreeSet<String> = ["IDR".to_string()].into();
    let loo = enumerate_combinations(&datasets, &held).unwrap();
    assert_eq!(loo.len(), 15);
    assert!(loo.iter().all(|c| !c.contains("IDR")));
}

fn dice_oracle_equivalence() {
    let mut rng = TestRng::new(11);
    for i in 0..1000 {
        let (da, db) = match i % 10 {
            0 => (0.0, 0.0),
            1 => (0.0, rng.unit()),
            _ => (rng.unit(), rng.unit()),
        };
        let a = random_mask(&mut rng, 32, 32, da);
        let b = random_mask(&mut rng, 32, 32, db);
        assert_eq!(dice(&a, &b).unwrap(), dice_oracle(&a, &b), "pair {i}");
    }
}

fn aupr_oracle_equivalence() {
    let mut rng = TestRng::new(23);
    for i in 0..200 {
        let density = if i % 20 == 0 { 0.0 } else { rng.unit() * 0.5 };
        let truth = random_mask(&mut rng, 64, 64, density);
        let skill = rng.unit();
        let probs: Vec<f64> = truth
            .bits()
            .iter()
            .map(|&t| {
                let r = rng.unit();
                if r < 0.2 {
                    // Exactly on a threshold, to exercise strict binarization.
                    rng.range(0, 10) as f64 / 10.0
                } else if r < 0.2 + 0.8 * skill {
                    if t {
                        0.5 + 0.5 * rng.unit()
                    } else {
                        0.5 * rng.unit()
                    }
                } else {
                    rng.unit()
                }
            })
            .collect();
        let p = ProbabilityMap::new("r", LesionCode::Ex, 64, 64, probs).unwrap();
        let got = binned_aupr(&p, &truth).unwrap().value;
        let want = aupr_oracle(&p, &truth);
        assert!((got - want).abs() <= 1e-12, "pair {i}: {got} vs {want}");
    }
    let truth = random_mask(&mut rng, 64, 64, 0.1);
    let perfect = ProbabilityMap::from_mask(&truth);
    assert_eq!(binned_aupr(&perfect, &truth).unwrap().value, 1.0);
}

fn random_archive(rng: &mut TestRng, layout: &[(String, Vec<usize>)], meta: ArchiveMetadata) -> TensorArchive {
    let mut a = TensorArchive::new(meta);
    for (name, shape) in layout {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let scale = 10f64.powi(rng.range(0, 8) as i32 - 4);
                ((rng.unit() * 2.0 - 1.0) * scale) as f32
            })
            .collect();
        a = a.with_tensor(name, shape.clone(), data).unwrap();
    }
    a
}

fn random_layout(rng: &mut TestRng) -> Vec<(String, Vec<usize>)> {
    let n_tensors = rng.range(1, 10);
    let budget = 10_000 / n_tensors;
    (0..n_tensors)
        .map(|i| {
            let role = if i % 2 == 0 { "enc." } else { "dec." };
            let shape = match rng.range(1, 3) {
                1 => vec![rng.range(1, budget)],
                2 => vec![rng.range(1, 32), rng.range(1, budget / 32)],
                _ => vec![rng.range(1, 8), rng.range(1, 8), rng.range(1, (budget / 64).max(1))],
            };
            (format!("{role}layer{i}.weight"), shape)
        })
        .collect()
}

fn weight_averaging() {
    let mut rng = TestRng::new(37);
    for trial in 0..40 {
        let layout = random_layout(&mut rng);
        let n = rng.range(1, 6);
        let mode = if trial % 2 == 0 {
            AveragingMode::Soup
        } else {
            AveragingMode::Swa
        };
        let inputs: Vec<TensorArchive> = (0..n)
            .map(|k| {
                let meta = match mode {
                    AveragingMode::Soup => ArchiveMetadata::new(format!("run{k}"), 1000, format!("hp{k}")),
                    AveragingMode::Swa => ArchiveMetadata::new("run", 100 * (k as u64 + 1), "hp"),
                }
                .with_roles(&["enc."], &["dec."]);
                random_archive(&mut rng, &layout, meta)
            })
            .collect();
        let refs: Vec<&TensorArchive> = inputs.iter().collect();

        let full = average_weights(&AveragingRequest::new(refs.clone(), mode, Scope::Full)).unwrap();
        for (name, _) in &layout {
            let got = full.get(name).unwrap().data();
            for (i, &g) in got.iter().enumerate() {
                // Reverse-order f64 accumulation, independent of the library's order.
                let sum: f64 = inputs.iter().rev().map(|a| a.get(name).unwrap().data()[i] as f64).sum();
                let want = (sum / n as f64) as f32;
                assert!(ulp_distance(g, want) <= 1, "{name}[{i}]: {g} vs {want}");
            }
        }

        let enc =
            average_weights(&AveragingRequest::new(refs.clone(), mode, Scope::Encoder).with_base(&inputs[0])).unwrap();
        for (name, _) in &layout {
            if name.starts_with("dec.") {
                assert!(enc.get(name).unwrap().bits_eq(inputs[0].get(name).unwrap()), "{name}");
            } else {
                assert!(enc.get(name).unwrap().bits_eq(full.get(name).unwrap()), "{name}");
            }
        }

        let single = average_weights(&AveragingRequest::new(vec![&inputs[0]], mode, Scope::Full)).unwrap();
        for (name, _) in &layout {
            assert!(single.get(name).unwrap().bits_eq(inputs[0].get(name).unwrap()));
        }
    }
}

fn ensemble_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = TestRng::new(41);
    let (w, h) = (48, 40);
    let values: Vec<u16> = (0..w * h).map(|_| (rng.next() % 65536) as u16).collect();
    let mk = |dir_name: &str, f: &dyn Fn(u16) -> u16| {
        let probs = values.iter().map(|&v| f(v) as f64 / 65535.0).collect();
        let map = ProbabilityMap::new("img", LesionCode::He, w, h, probs).unwrap();
        let d = dir.path().join(dir_name);
        std::fs::create_dir_all(&d).unwrap();
        load_probability_map(save_probability_map(&map, &d).unwrap()).unwrap()
    };
    let p = mk("a", &|v| v);
    let q = mk("b", &|v| 65535 - v);
    let avg = ensemble_average(
        &EnsembleSet::new(vec![
            EnsembleMember { model_id: "a", map: &p },
            EnsembleMember { model_id: "b", map: &q },
        ])
        .unwrap(),
    )
    .unwrap();
    assert!(avg.probs().iter().all(|&v| v == 0.5));
    assert!(avg.probs().iter().all(|&v| quantize_probability(v) == 32768));

    let maps: Vec<ProbabilityMap> = (0..5)
        .map(|_| {
            let probs = (0..w * h).map(|_| (rng.next() % 65536) as f64 / 65535.0).collect();
            ProbabilityMap::new("img", LesionCode::He, w, h, probs).unwrap()
        })
        .collect();
    let ids = ["m0", "m1", "m2", "m3", "m4"];
    let reference = {
        let members = maps
            .iter()
            .zip(ids)
            .map(|(map, id)| EnsembleMember { model_id: id, map })
            .collect();
        ensemble_average(&EnsembleSet::new(members).unwrap()).unwrap()
    };
    let mut order: Vec<usize> = (0..5).collect();
    // Every permutation via Heap's algorithm.
    let mut c = [0usize; 5];
    let mut i = 0;
    let mut checked = 0;
    let check = |order: &[usize]| {
        let members = order
            .iter()
            .map(|&k| EnsembleMember {
                model_id: ids[k],
                map: &maps[k],
            })
            .collect();
        let out = ensemble_average(&EnsembleSet::new(members).unwrap()).unwrap();
        assert!(out
            .probs()
            .iter()
            .zip(reference.probs())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    };
    check(&order);
    checked += 1;
    while i < 5 {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            check(&order);
            checked += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    assert_eq!(checked, 120);
}

fn connected_components_criterion() {
    let mut rng = TestRng::new(53);
    for i in 0..500 {
        let density = 0.05 + 0.6 * rng.unit();
        let m = random_mask(&mut rng, 64, 64, density);
        let mut counts = [0usize; 2];
        for (k, (conn, eight)) in [(Connectivity::Four, false), (Connectivity::Eight, true)]
            .into_iter()
            .enumerate()
        {
            let got: Vec<u64> = connected_components(&m, conn).iter().map(|c| c.area).collect();
            let want = flood_fill_areas(&m, eight);
            assert_eq!(got, want, "mask {i}, {conn:?}");
            counts[k] = got.len();
        }
        assert!(counts[0] >= counts[1], "mask {i}");
    }
}

fn characterization_separation() {
    let fine = SynthConfig::new(101, 256, 256, 40.0, 8.0);
    let coarse = SynthConfig::new(202, 256, 256, 4.0, 400.0).coarse();
    let summarize = |id: &str, cfg: &SynthConfig| {
        let stats: Vec<_> = (0..100)
            .map(|i| lesion_stats(&generate_mask(cfg, i).unwrap().mask))
            .collect();
        let log_area: Vec<f64> = stats.iter().filter_map(|s| s.mean_area.map(f64::log10)).collect();
        let log_count: Vec<f64> = stats
            .iter()
            .filter(|s| s.lesion_count > 0)
            .map(|s| (s.lesion_count as f64).log10())
            .collect();
        (
            style_summary(id, &stats, HistogramSpec::default()).unwrap(),
            log_area,
            log_count,
        )
    };
    let (sf, fa, fc) = summarize("fine", &fine);
    let (sc, ca, cc) = summarize("coarse", &coarse);
    assert_eq!(compare_styles(&sc, &sf).unwrap(), StyleRelation::Coarser);
    assert_eq!(compare_styles(&sf, &sc).unwrap(), StyleRelation::Finer);

    let pooled_area = (iqr(fa.clone()) + iqr(ca.clone())) / 2.0;
    let pooled_count = (iqr(fc.clone()) + iqr(cc.clone())) / 2.0;
    let (mfa, mca) = (median(fa), median(ca));
    let (mfc, mcc) = (median(fc), median(cc));
    assert!(
        mca - mfa > pooled_area,
        "area medians {mca} vs {mfa}, pooled IQR {pooled_area}"
    );
    assert!(
        mfc - mcc > pooled_count,
        "count medians {mfc} vs {mcc}, pooled IQR {pooled_count}"
    );
    let spread = sc.spread.unwrap();
    assert!((spread.median_log_area - mca).abs() < 1e-12);
    assert!((spread.median_log_count - mcc).abs() < 1e-12);
}

/// Integer form of round-half-up on 30% test, then 15% of the remainder.
fn split_oracle(n: usize) -> (usize, usize, usize) {
    let test = (3 * n + 5) / 10;
    let rest = n - test;
    let val = (15 * rest + 50) / 100;
    (rest - val, val, test)
}

fn split_protocol() {
    let ids: Vec<String> = (0..200).map(|i| format!("img{i:03}")).collect();
    let run = |ids: &[String], seed| {
        let mut refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        split_ids(&mut refs, seed, 0.30, 0.15).unwrap()
    };
    let count = |a: &BTreeMap<String, Subset>, s| a.values().filter(|&&v| v == s).count();
    let a = run(&ids, 7);
    assert_eq!(
        (
            count(&a, Subset::Train),
            count(&a, Subset::Val),
            count(&a, Subset::Test)
        ),
        (119, 21, 60)
    );
    assert_eq!(a, run(&ids, 7));
    let mut reversed = ids.clone();
    reversed.reverse();
    assert_eq!(a, run(&reversed, 7), "assignment depends only on the sorted ids");

    let mut rng = TestRng::new(61);
    for _ in 0..100 {
        let n = rng.range(3, 3000);
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let seed = rng.next();
        let s = run(&ids, seed);
        assert_eq!(s.len(), n);
        assert!(ids.iter().all(|id| s.contains_key(id)));
        let got = (
            count(&s, Subset::Train),
            count(&s, Subset::Val),
            count(&s, Subset::Test),
        );
        assert_eq!(got, split_oracle(n), "n = {n}");
    }
}

fn manifest_of(id: &str, n: usize, style: StyleTag) -> DatasetManifest {
    DatasetManifest {
        id: id.into(),
        style,
        lesions: vec![LesionCode::Ex],
        resolution: None,
        images: (0..n)
            .map(|i| ImageRecord {
                image_id: format!("{id}{i:04}"),
                ..Default::default()
            })
            .collect(),
        split: SplitSpec::Generated {
            seed: 0,
            test_ratio: 0.30,
            val_ratio: 0.15,
        },
    }
}

/// Runs the built binary, keeping its output off the criterion lines
/// unless it fails.
fn dispatch(args: &[&str]) -> i32 {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_seg-genlab"))
        .args(args)
        .output()
        .expect("spawn seg-genlab");
    if !out.status.success() {
        eprintln!("seg-genlab {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn end_to_end_rehearsal() {
    let root = tempfile::tempdir().unwrap();
    let ds_dir = root.path().join("datasets");
    let specs = [
        ("FA", 40u64, false, 1u64),
        ("FB", 40, false, 2),
        ("CO", 120, true, 3),
        ("TST", 40, false, 4),
    ];
    for (id, n, coarse, seed) in specs {
        let mut generator = SynthConfig::new(
            seed,
            96,
            96,
            if coarse { 3.0 } else { 12.0 },
            if coarse { 150.0 } else { 10.0 },
        );
        if coarse {
            generator = generator.coarse();
        }
        let cfg = SynthDatasetConfig {
            dataset_id: id.into(),
            n_images: n,
            lesions: vec![LesionCode::Ex],
            split_seed: None,
            generator,
        };
        let path = root.path().join(format!("{id}.json"));
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let out = ds_dir.join(id);
        assert_eq!(
            dispatch(&["synth", "--config", path_str(&path), "--out", path_str(&out)]),
            0
        );
    }
    let plan_path = root.path().join("plan.json");
    assert_eq!(
        dispatch(&[
            "plan",
            "--datasets",
            path_str(&ds_dir),
            "--out",
            path_str(&plan_path),
            "--hold-out",
            "TST",
            "--seeds",
            "0,1,2",
        ]),
        0
    );
    let plan = ExperimentPlan::load(&plan_path).unwrap();
    assert_eq!(plan.combinations.len(), 7);

    // Ground truth of the held-out test split.
    let test_manifest = DatasetManifest::load(ds_dir.join("TST/manifest.json")).unwrap();
    let split = test_manifest.resolve_split().unwrap();
    let truth_dir = root.path().join("truth");
    std::fs::create_dir_all(&truth_dir).unwrap();
    for img in &test_manifest.images {
        if split[&img.image_id] == Subset::Test {
            let src = ds_dir.join("TST").join(&img.masks[&LesionCode::Ex]);
            std::fs::copy(&src, truth_dir.join(src.file_name().unwrap())).unwrap();
        }
    }
    let truths: Vec<LesionMask> = std::fs::read_dir(&truth_dir)
        .unwrap()
        .map(|e| seg_genlab::raster::load_mask(e.unwrap().path()).unwrap())
        .collect();

    // Predictor quality grows with the effective amount of training data,
    // where images labelled in a different style count for a quarter.
    let test_style = plan.dataset("TST").unwrap().style;
    let quality = |members: &[String]| {
        let eff: f64 = members
            .iter()
            .map(|m| {
                let d = plan.dataset(m).unwrap();
                let w = if d.style == test_style { 1.0 } else { 0.25 };
                w * d.train_images as f64
            })
            .sum();
        eff / (eff + 30.0)
    };

    let mut record_files = Vec::new();
    for (ci, combo) in plan.combinations.iter().enumerate() {
        let q = quality(&combo.members);
        for &seed in &plan.replicate_seeds {
            let pred_dir = root.path().join(format!("pred_{ci}_{seed}"));
            std::fs::create_dir_all(&pred_dir).unwrap();
            for (ti, t) in truths.iter().enumerate() {
                let p = generate_prediction(t, q, 1000 * seed + 10 * ci as u64 + ti as u64 * 7919).unwrap();
                save_probability_map(&p, &pred_dir).unwrap();
            }
            let out = root.path().join(format!("rec_{ci}_{seed}.csv"));
            let seed_s = seed.to_string();
            let code = dispatch(&[
                "metrics",
                "--pred",
                path_str(&pred_dir),
                "--truth",
                path_str(&truth_dir),
                "--lesions",
                "EX",
                "--metric",
                "dice",
                "--combination",
                &combo.combination_id,
                "--test-dataset",
                "TST",
                "--replicate-seed",
                &seed_s,
                "--out",
                path_str(&out),
            ]);
            assert_eq!(code, 0);
            record_files.push(out);
        }
    }

    let report_csv = root.path().join("scenario.csv");
    let report_json = root.path().join("scenario.json");
    let mut args = vec![
        "report",
        "--scenario",
        "TST",
        "--plan",
        path_str(&plan_path),
        "--out",
        path_str(&report_csv),
        "--json",
        path_str(&report_json),
        "--records",
    ];
    args.extend(record_files.iter().map(|p| path_str(p)));
    assert_eq!(dispatch(&args), 0);
    let report: seg_genlab::report::ScenarioReport =
        serde_json::from_str(&std::fs::read_to_string(&report_json).unwrap()).unwrap();
    let mean = |id: &str| report.row(id).unwrap().summary.unwrap().mean;
    assert_eq!(report.row("FA+FB").unwrap().style, StyleTag::Fine);
    assert_eq!(report.row("CO").unwrap().style, StyleTag::Coarse);
    assert!(
        plan.combination("CO").unwrap().total_training_images
            > plan.combination("FA+FB").unwrap().total_training_images
    );
    assert!(
        mean("FA+FB") > mean("CO"),
        "fine {} vs coarse {}",
        mean("FA+FB"),
        mean("CO")
    );
    assert_eq!(report.worst().unwrap().combination_id, "CO");

    table3_fixture(root.path());
}

/// Dice on the IDRID test split from three rows of the published table.
fn table3_fixture(dir: &Path) {
    let manifests = [
        manifest_of("IDR", 81, StyleTag::Fine),
        manifest_of("DDR", 757, StyleTag::Fine),
        manifest_of("FGA", 1842, StyleTag::Mixed),
        manifest_of("RET", 1593, StyleTag::Coarse),
        manifest_of("MES", 200, StyleTag::Fine),
    ];
    let plan = ExperimentPlan::build(&manifests, ["IDR".to_string()].into(), vec![0]).unwrap();
    let records = vec![
        MetricRecord::new("DDR+MES", "IDR", LesionCode::Ex, 0, MetricKind::Dice, 0.634),
        MetricRecord::new("RET", "IDR", LesionCode::Ex, 0, MetricKind::Dice, 0.222),
        MetricRecord::new("DDR+FGA+MES", "IDR", LesionCode::Ex, 0, MetricKind::Dice, 0.661),
    ];
    let path = dir.join("table3.csv");
    write_metric_records(std::fs::File::create(&path).unwrap(), &records).unwrap();
    let records = read_metric_records(std::fs::File::open(&path).unwrap()).unwrap();

    assert!(matches!(
        scenario_table(&plan, "IDR", MetricKind::Dice, &records, false),
        Err(Error::Join(_))
    ));
    let report = scenario_table(&plan, "IDR", MetricKind::Dice, &records, true).unwrap();
    let present: Vec<(&str, f64)> = report
        .rows
        .iter()
        .filter_map(|r| r.summary.map(|s| (r.combination_id.as_str(), s.mean)))
        .collect();
    assert_eq!(
        present,
        vec![("DDR+MES", 0.634), ("RET", 0.222), ("DDR+FGA+MES", 0.661)]
    );
    assert_eq!(report.best().unwrap().combination_id, "DDR+FGA+MES");
    assert_eq!(report.worst().unwrap().combination_id, "RET");
    assert_eq!(report.row("DDR+FGA+MES").unwrap().mark, Some(RowMark::Best));

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let starred: Vec<&str> = csv.lines().filter(|l| l.ends_with(",*")).collect();
    assert_eq!(starred.len(), 1);
    assert!(
        starred[0].starts_with("IDR,DDR+FGA+MES,1665,mixed,1,0.661000"),
        "{}",
        starred[0]
    );
}

fn split_archive(bytes: &[u8]) -> (serde_json::Value, Vec<u8>) {
    let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let manifest = serde_json::from_slice(&bytes[14..14 + len]).unwrap();
    (manifest, bytes[14 + len..].to_vec())
}

fn join_archive(manifest: &serde_json::Value, data: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(manifest).unwrap();
    let mut out = b"SGLB1\n".to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(data);
    out
}

fn archive_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = TestRng::new(71);
    for i in 0..1000 {
        let n_tensors = rng.range(1, 6);
        let mut a = TensorArchive::new(
            ArchiveMetadata::new(format!("m{i}"), rng.next() % 100_000, format!("hp{}", rng.range(0, 9)))
                .with_roles(&["enc."], &["dec."]),
        );
        for t in 0..n_tensors {
            let shape: Vec<usize> = (0..rng.range(1, 3)).map(|_| rng.range(1, 12)).collect();
            let n: usize = shape.iter().product();
            // Raw bit patterns, including NaNs, infinities and -0.
            let data = (0..n).map(|_| f32::from_bits(rng.next() as u32)).collect();
            let prefix = ["enc.", "dec.", "head."][t % 3];
            a = a.with_tensor(&format!("{prefix}t{t}"), shape, data).unwrap();
        }
        let back = if i % 10 == 0 {
            let path = dir.path().join(format!("a{i}.sglb"));
            seg_genlab::archive::write_archive(&a, &path).unwrap();
            seg_genlab::archive::read_archive(&path).unwrap()
        } else {
            TensorArchive::from_bytes(&a.to_bytes().unwrap()).unwrap()
        };
        assert!(back.bits_eq(&a), "round trip {i}");
        assert_eq!(back.metadata, a.metadata);
        assert_eq!(back.to_bytes().unwrap(), a.to_bytes().unwrap());

        // Corrupt one tensor's offset: shifted by whole elements it overlaps
        // a neighbour or runs past the data; shifted by 1-3 bytes it is
        // misaligned.
        let (manifest, data) = split_archive(&a.to_bytes().unwrap());
        let names: Vec<String> = manifest["tensors"].as_object().unwrap().keys().cloned().collect();
        let victim = &names[rng.range(0, names.len() - 1)];
        let offset = manifest["tensors"][victim]["offset"].as_u64().unwrap();
        let shifts: Vec<i64> = vec![4, 1, 2, 3, data.len() as i64, -4];
        for shift in shifts {
            let new = offset as i64 + shift;
            if new < 0 {
                continue;
            }
            let mut m = manifest.clone();
            m["tensors"][victim]["offset"] = serde_json::json!(new as u64);
            let err = TensorArchive::from_bytes(&join_archive(&m, &data)).unwrap_err();
            assert!(matches!(err, Error::Integrity(_)), "shift {shift}: {err}");
            assert_eq!(err.class(), ErrorClass::Integrity);
        }
    }
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn(),
}

fn main() {
    let criteria = [
        Criterion {
            name: "combination enumeration (31 / 15 / 16 each)",
            limit: Duration::from_secs(1),
            run: combination_enumeration,
        },
        Criterion {
            name: "dice oracle equivalence (1000 pairs, exact)",
            limit: Duration::from_secs(10),
            run: dice_oracle_equivalence,
        },
        Criterion {
            name: "binned AUPR oracle equivalence (200 pairs, 1e-12)",
            limit: Duration::from_secs(30),
            run: aupr_oracle_equivalence,
        },
        Criterion {
            name: "weight averaging (1 ulp, idempotence, scope)",
            limit: Duration::from_secs(10),
            run: weight_averaging,
        },
        Criterion {
            name: "ensemble (p and 1-p -> 0.5, permutation stable)",
            limit: Duration::from_secs(5),
            run: ensemble_criterion,
        },
        Criterion {
            name: "connected components (500 masks, 4 and 8)",
            limit: Duration::from_secs(20),
            run: connected_components_criterion,
        },
        Criterion {
            name: "characterization separation (coarse vs fine)",
            limit: Duration::from_secs(60),
            run: characterization_separation,
        },
        Criterion {
            name: "split protocol (119/21/60, partitions)",
            limit: Duration::from_secs(5),
            run: split_protocol,
        },
        Criterion {
            name: "end-to-end rehearsal and published-table fixture",
            limit: Duration::from_secs(120),
            run: end_to_end_rehearsal,
        },
        Criterion {
            name: "archive format (1000 round trips, corrupted offsets)",
            limit: Duration::from_secs(10),
            run: archive_format,
        },
    ];
    let mut failures = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let status = match (&outcome, elapsed <= c.limit) {
            (Ok(()), true) => "PASS",
            (Ok(()), false) => "FAIL (time)",
            (Err(_), _) => "FAIL",
        };
        println!(
            "{status:<11} {:<55} {:>7.2}s (limit {}s)",
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        if status != "PASS" {
            failures.push(c.name);
        }
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
