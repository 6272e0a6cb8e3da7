//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use binfm::binfm::{interaction_partial, Optimizer};
use binfm::dataio::{gen_circles, gen_moons, split, Dataset, Sample};
use binfm::experiment::{fit, mean_std, repeated_split, HyperParams, Method};
use binfm::fm::factor_partial;
use binfm::packed::{memory_report, signed_sum, words_for, FORMAT_MAGIC};
use binfm::{ActiveMask, BinFmModel, BinStrategy, BinningSpec, FmModel, PackedModel, Sign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 5000;
/// Circles noise for the accuracy gates; see the note printed with criterion 1.
const CIRCLES_NOISE: f64 = 0.05;
const MOONS_NOISE: f64 = 0.1;
const REPEATS: usize = 10;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn binfm_hp() -> HyperParams {
    HyperParams {
        bins: 30,
        rank: 16,
        ..HyperParams::for_method(Method::BinFm)
    }
}

fn sefm_hp() -> HyperParams {
    HyperParams {
        bins: 30,
        rank: 16,
        ..HyperParams::for_method(Method::Sefm)
    }
}

fn mean_accuracy(method: Method, ds: &Dataset, hp: &HyperParams) -> (f64, f64) {
    let runs = repeated_split(method, ds, hp, REPEATS, 0.7, 0).expect("repeated split");
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    mean_std(&accs)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn circles() -> Dataset {
    gen_circles(N, CIRCLES_NOISE, 0).unwrap()
}

fn moons() -> Dataset {
    gen_moons(N, MOONS_NOISE, 0).unwrap()
}

fn c1_circles() -> Outcome {
    let start = Instant::now();
    let (mean, std) = mean_accuracy(Method::BinFm, &circles(), &binfm_hp());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mean >= 0.990 && secs < 60.0,
        format!("binfm circles (noise {CIRCLES_NOISE}) acc {mean:.4} ± {std:.4} over {REPEATS} seeds in {secs:.1}s"),
    )
}

fn c2_moons_and_fm_gap() -> Outcome {
    let (moons_acc, _) = mean_accuracy(Method::BinFm, &moons(), &binfm_hp());
    let (fm_acc, _) = mean_accuracy(Method::Fm, &circles(), &HyperParams::for_method(Method::Fm));
    outcome(
        moons_acc >= 0.990 && fm_acc <= 0.60,
        format!("binfm moons acc {moons_acc:.4}; fm raw circles acc {fm_acc:.4}"),
    )
}

fn c3_sefm_parity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, ds) in [("circles", circles()), ("moons", moons())] {
        let (s, _) = mean_accuracy(Method::Sefm, &ds, &sefm_hp());
        let (b, _) = mean_accuracy(Method::BinFm, &ds, &binfm_hp());
        ok &= (s - b).abs() <= 0.01;
        parts.push(format!("{name}: sefm {s:.4} binfm {b:.4}"));
    }
    outcome(ok, parts.join("; "))
}

fn c4_memory() -> Outcome {
    let mut ok = true;
    for d in 1..=40u64 {
        for b in [2, 10, 20, 30, 40, 50] {
            for m in [1, 16, 32, 64, 128] {
                let r = memory_report(d, b, m);
                let fm = 32 * (d + m * d);
                ok &= r.row("FM").unwrap().bits == fm;
                ok &= r.row("SEFM").unwrap().bits == 32 * (d * b + m * d * b);
                ok &= r.row("DFM").unwrap().bits == 32 * d + m * d;
                ok &= r.row("Binarized FM").unwrap().bits == d * b + m * d * b;
                ok &= r.row("Binarized FM").unwrap().ratio == b as f64 / 32.0;
                ok &= r.row("SEFM").unwrap().ratio == b as f64;
            }
        }
    }
    let r30 = memory_report(2, 30, 16).row("Binarized FM").unwrap().ratio;
    ok &= r30 == 0.9375;
    outcome(
        ok,
        format!("memory formulas over 1200 (d,b,m); b=30 ratio {r30}"),
    )
}

/// Explicit pairwise double sum over `(index, value)` entries.
fn fm_brute(w: &[f64], v: &[f64], m: usize, x: &[(usize, f64)]) -> f64 {
    let mut f: f64 = x.iter().map(|&(j, xj)| w[j] * xj).sum();
    for (a, &(j, xj)) in x.iter().enumerate() {
        for &(k, xk) in &x[a + 1..] {
            let dot: f64 = (0..m).map(|t| v[j * m + t] * v[k * m + t]).sum();
            f += dot * xj * xk;
        }
    }
    f
}

/// Binarized score from signs as reals, pairwise over the active set.
fn binfm_brute(model: &BinFmModel<f64>, active: &[usize]) -> f64 {
    let m = model.rank();
    let w: Vec<f64> = model.sign_w().iter().map(|s| s.value()).collect();
    let v: Vec<f64> = model.sign_v().iter().map(|s| s.value()).collect();
    let lin: f64 = active.iter().map(|&j| w[j]).sum();
    let mut pair = 0.0;
    for (a, &j) in active.iter().enumerate() {
        for &k in &active[a + 1..] {
            pair += (0..m).map(|t| v[j * m + t] * v[k * m + t]).sum::<f64>();
        }
    }
    model.alpha() * lin + model.beta() * model.beta() * pair
}

fn unit_spec(d: usize, b: usize) -> BinningSpec {
    let cuts = (0..d).flat_map(|_| (1..b).map(|h| h as f64)).collect();
    BinningSpec::from_cuts(d, b, BinStrategy::EqualWidth, cuts).unwrap()
}

fn random_active(rng: &mut impl Rng, d: usize, b: usize) -> Vec<usize> {
    (0..d).map(|j| j * b + rng.random_range(0..b)).collect()
}

fn random_binfm(rng: &mut impl Rng, p: usize, m: usize) -> BinFmModel<f64> {
    let w = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = (0..p * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut model = BinFmModel::from_proxies(p, m, w, v).unwrap();
    model.set_scales(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
    model
}

fn c5_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = Vec::new();

    // factorized FM against the double sum
    let mut fm_ok = true;
    for _ in 0..1000 {
        let p = rng.random_range(1..=12);
        let m = rng.random_range(1..=8);
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..p * m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut x = Vec::new();
        for j in 0..p {
            if rng.random_bool(0.7) {
                x.push((j, rng.random_range(-3.0..3.0)));
            }
        }
        let model = FmModel::from_parts(p, m, w.clone(), v.clone()).unwrap();
        fm_ok &= rel_close(model.predict(&x), fm_brute(&w, &v, m, &x), 1e-9);
    }
    notes.push(format!(
        "fm factorized {}",
        if fm_ok { "ok" } else { "MISMATCH" }
    ));

    // popcount against the float score
    let mut pc_ok = true;
    for _ in 0..1000 {
        let d = rng.random_range(1..=16);
        let b = rng.random_range(2..=(512 / d).max(2));
        let m = rng.random_range(1..=8);
        let spec = unit_spec(d, b);
        let model = random_binfm(&mut rng, d * b, m);
        let packed = PackedModel::pack(&model, &spec).unwrap();
        let active = random_active(&mut rng, d, b);
        let mask = ActiveMask::from_active(&active, d * b).unwrap();
        let got = packed.popcount_predict(&mask).unwrap();
        pc_ok &= rel_close(got, binfm_brute(&model, &active), 1e-9);
        pc_ok &= rel_close(got, model.predict(&active), 1e-9);
    }
    notes.push(format!(
        "popcount {}",
        if pc_ok { "ok" } else { "MISMATCH" }
    ));

    // every mask against every sign word, p <= 12
    let mut ex_ok = true;
    for p in 1..=12usize {
        for mask in 0u64..(1 << p) {
            let d = mask.count_ones() as usize;
            for bits in 0u64..(1 << p) {
                let naive: i64 = (0..p)
                    .filter(|k| mask >> k & 1 == 1)
                    .map(|k| if bits >> k & 1 == 1 { 1 } else { -1 })
                    .sum();
                ex_ok &= signed_sum(&[mask], &[bits], d) == naive;
            }
        }
    }
    // every w sign pattern and every one-hot mask for small models up to p = 16
    for (d, b, m) in [
        (2, 2, 3),
        (4, 2, 1),
        (1, 8, 1),
        (2, 4, 1),
        (2, 8, 2),
        (4, 4, 1),
        (8, 2, 1),
    ] {
        let p = d * b;
        let spec = unit_spec(d, b);
        let v: Vec<f64> = (0..p * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n_masks = b.pow(d as u32);
        for wbits in 0u64..(1 << p) {
            let w = (0..p)
                .map(|k| if wbits >> k & 1 == 1 { 0.5 } else { -0.5 })
                .collect();
            let mut model = BinFmModel::from_proxies(p, m, w, v.clone()).unwrap();
            model.set_scales(0.7, 1.3);
            let packed = PackedModel::pack(&model, &spec).unwrap();
            for code in 0..n_masks {
                let active: Vec<usize> =
                    (0..d).map(|j| j * b + code / b.pow(j as u32) % b).collect();
                let mask = ActiveMask::from_active(&active, p).unwrap();
                ex_ok &= rel_close(
                    packed.popcount_predict(&mask).unwrap(),
                    binfm_brute(&model, &active),
                    1e-12,
                );
            }
        }
    }
    notes.push(format!(
        "exhaustive {}",
        if ex_ok { "ok" } else { "MISMATCH" }
    ));

    // closed-form scales against a grid
    let mut sc_ok = true;
    let objective = |x: &[f64], s: f64| {
        x.iter()
            .map(|&t| (t - s * if t >= 0.0 { 1.0 } else { -1.0 }).powi(2))
            .sum::<f64>()
    };
    for _ in 0..100 {
        let p = rng.random_range(1..40);
        let m = rng.random_range(1..6);
        let spread = 10f64.powf(rng.random_range(-2.0..2.0));
        let w: Vec<f64> = (0..p)
            .map(|_| spread * rng.random_range(-1.0..1.0))
            .collect();
        let v: Vec<f64> = (0..p * m)
            .map(|_| spread * rng.random_range(-1.0..1.0))
            .collect();
        let mut model = BinFmModel::from_proxies(p, m, w.clone(), v.clone()).unwrap();
        let (alpha, beta) = model.refresh_scaling();
        for (x, s) in [(&w, alpha), (&v, beta)] {
            let top = 2.0 * x.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let best = objective(x, s);
            sc_ok &= (0..10_000)
                .all(|k| best <= objective(x, top * k as f64 / 9999.0) * (1.0 + 1e-12) + 1e-300);
        }
    }
    notes.push(format!("scales {}", if sc_ok { "ok" } else { "BEATEN" }));

    outcome(fm_ok && pc_ok && ex_ok && sc_ok, notes.join(", "))
}

fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn c6_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-5;
    let mut worst_fm = 0.0f64;
    let mut worst_bin = 0.0f64;
    for _ in 0..100 {
        let p = rng.random_range(2..=12);
        let m = rng.random_range(1..=8);
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..p * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<(usize, f64)> = (0..p).map(|j| (j, rng.random_range(-2.0..2.0))).collect();
        let model = FmModel::from_parts(p, m, w.clone(), v.clone()).unwrap();
        let mut sums = vec![0.0; m];
        model.factor_sums(&x, &mut sums);
        for &(j, xj) in &x {
            let mut wp = w.clone();
            wp[j] += h;
            let mut wm = w.clone();
            wm[j] -= h;
            let num = (fm_brute(&wp, &v, m, &x) - fm_brute(&wm, &v, m, &x)) / (2.0 * h);
            worst_fm = worst_fm.max(grad_rel_err(xj, num));
            for f in 0..m {
                let mut vp = v.clone();
                vp[j * m + f] += h;
                let mut vm = v.clone();
                vm[j * m + f] -= h;
                let num = (fm_brute(&w, &vp, m, &x) - fm_brute(&w, &vm, m, &x)) / (2.0 * h);
                worst_fm =
                    worst_fm.max(grad_rel_err(factor_partial(xj, v[j * m + f], sums[f]), num));
            }
        }

        // relaxed binarized interaction: one-hot input, real V
        let active: Vec<usize> = (0..p).filter(|_| rng.random_bool(0.6)).collect();
        let beta: f64 = rng.random_range(0.1..2.0);
        let relaxed = |v: &[f64]| {
            let x: Vec<(usize, f64)> = active.iter().map(|&j| (j, 1.0)).collect();
            beta * beta * fm_brute(&vec![0.0; p], v, m, &x)
        };
        for &j in &active {
            for f in 0..m {
                let cached: f64 = active.iter().map(|&k| v[k * m + f]).sum();
                let mut vp = v.clone();
                vp[j * m + f] += h;
                let mut vm = v.clone();
                vm[j * m + f] -= h;
                let num = (relaxed(&vp) - relaxed(&vm)) / (2.0 * h);
                worst_bin = worst_bin.max(grad_rel_err(
                    interaction_partial(beta, cached, v[j * m + f]),
                    num,
                ));
            }
        }
    }
    outcome(
        worst_fm <= 1e-5 && worst_bin <= 1e-5,
        format!("worst relative error fm {worst_fm:.2e}, relaxed binarized {worst_bin:.2e}"),
    )
}

fn c7_clipping() -> Outcome {
    let values: [f64; 12] = [
        -1e6,
        -2.0,
        -1.0 - 1e-12,
        -1.0,
        -0.5,
        -0.0,
        0.0,
        0.5,
        1.0,
        1.0 + 1e-12,
        2.0,
        1e6,
    ];
    let mut checked = 0usize;
    let mut ok = true;
    for &wv in &values {
        for &vv in &values {
            let mut model =
                BinFmModel::from_proxies(2, 2, vec![wv, 0.3], vec![vv, 0.2, -0.4, vv]).unwrap();
            model.set_scales(0.8, 1.5);
            for dldf in [-1.0, -0.25, 0.0, 0.6] {
                for lambda in [0.0, 0.1] {
                    for cached in [-2.0, 0.0, 2.0] {
                        let gw = model.ste_grad_w(dldf, lambda, 0);
                        let gv0 = model.ste_grad_v(dldf, lambda, 0, 0, cached);
                        let gv3 = model.ste_grad_v(dldf, lambda, 1, 1, cached);
                        let expect_w = if wv.abs() > 1.0 {
                            0.0
                        } else {
                            dldf * 0.8 + lambda * 0.8 * Sign::of(wv).value::<f64>()
                        };
                        let sv = Sign::of(vv).value::<f64>();
                        let expect_v = if vv.abs() > 1.0 {
                            0.0
                        } else {
                            dldf * 1.5 * 1.5 * (cached - sv) + lambda * 1.5 * sv
                        };
                        ok &= gw == expect_w && gv0 == expect_v && gv3 == expect_v;
                        checked += 3;
                    }
                }
            }
        }
    }
    outcome(ok, format!("{checked} proxy/gradient combinations"))
}

fn c8_adagrad_vs_sgd() -> Outcome {
    let ds = gen_circles(N, 0.1, 0).unwrap();
    let (train, _) = split(&ds, 0.7, 0).unwrap();
    let run = |optimizer| {
        let hp = HyperParams {
            optimizer,
            ..HyperParams::for_method(Method::BinFm)
        };
        fit(Method::BinFm, &train, &hp).unwrap()
    };
    let ada = run(Optimizer::Adagrad);
    let sgd = run(Optimizer::Sgd);
    let (a5, s5) = (ada.epoch_losses[4], sgd.epoch_losses[4]);
    let a_last = *ada.epoch_losses.last().unwrap();
    let faster = a5 <= s5;
    let halves = a_last < 0.5 * ada.initial_loss;
    let below = a5 < ada.initial_loss && s5 < sgd.initial_loss;
    outcome(
        faster && halves && below,
        format!(
            "epoch-5 loss adagrad {a5:.4} vs sgd {s5:.4} ({}); adagrad final {a_last:.4} vs initial {:.4} ({})",
            if faster { "ok" } else { "adagrad slower" },
            ada.initial_loss,
            if halves { "ok" } else { "not halved" }
        ),
    )
}

/// Overlapping crescents with the second feature on a 100x larger scale.
fn banana_like(seed: u64) -> Dataset {
    let ds = gen_moons(N, 0.3, seed).unwrap();
    let samples = ds
        .samples()
        .iter()
        .map(|s| Sample::new(vec![(0, s.value(0)), (1, 100.0 * s.value(1))], s.label))
        .collect();
    Dataset::with_numeric_labels(samples, 2, 2).unwrap()
}

fn c9_scaling() -> Outcome {
    let ds = banana_like(11);
    let with = mean_accuracy(Method::BinFm, &ds, &HyperParams::for_method(Method::BinFm));
    let without = mean_accuracy(
        Method::BinFm,
        &ds,
        &HyperParams {
            use_scaling: false,
            ..HyperParams::for_method(Method::BinFm)
        },
    );
    outcome(
        with.0 >= without.0,
        format!(
            "with scaling {:.4} ± {:.4}, without {:.4} ± {:.4}",
            with.0, with.1, without.0, without.1
        ),
    )
}

fn c10_serialization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok = true;
    for _ in 0..50 {
        let d = rng.random_range(1..=6);
        let b = rng.random_range(2..=50);
        let m = rng.random_range(1..=20);
        let spec = unit_spec(d, b);
        let packed = PackedModel::pack(&random_binfm(&mut rng, d * b, m), &spec).unwrap();
        let bytes = packed.to_bytes();
        let back = PackedModel::from_bytes(&bytes).unwrap();
        ok &= back == packed && back.to_bytes() == bytes;
        ok &= packed.sign_payload_bits() == (d * b * (1 + m)) as u64;
        ok &= packed.w_bits().len() + packed.v_bits().len() == (1 + m) * words_for(d * b);

        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xff;
        let mut bad_version = bytes.clone();
        bad_version[4] = 0xee;
        let mut bad_p = bytes.clone();
        bad_p[8] ^= 1;
        ok &= bytes.starts_with(&FORMAT_MAGIC);
        ok &= PackedModel::from_bytes(&bad_magic).is_err();
        ok &= PackedModel::from_bytes(&bad_version).is_err();
        ok &= PackedModel::from_bytes(&bad_p).is_err();
        ok &= PackedModel::from_bytes(&bytes[..bytes.len() - 1]).is_err();
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bfm");
    let trained = fit(
        Method::BinFm,
        &gen_circles(400, 0.05, 1).unwrap(),
        &HyperParams {
            epochs: 3,
            ..binfm_hp()
        },
    )
    .unwrap()
    .model;
    trained.save(&path).unwrap();
    let loaded = binfm::modelfile::SavedModel::load(&path).unwrap();
    ok &= loaded.to_bytes() == trained.to_bytes()
        && std::fs::read(&path).unwrap() == trained.to_bytes();
    outcome(
        ok,
        "roundtrip, header corruption, truncation, payload size, file roundtrip",
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 circles accuracy", c1_circles),
        ("2 moons accuracy and FM gap", c2_moons_and_fm_gap),
        ("3 SEFM/BinFM parity", c3_sefm_parity),
        ("4 memory accounting", c4_memory),
        ("5 oracle equivalences", c5_oracles),
        ("6 gradient checks", c6_gradients),
        ("7 STE clipping", c7_clipping),
        ("8 Adagrad vs SGD", c8_adagrad_vs_sgd),
        ("9 scaling ablation", c9_scaling),
        ("10 serialization", c10_serialization),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        println!(
            "[{}] criterion {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(name);
        }
    }
    let reference = mean_accuracy(Method::BinFm, &gen_circles(N, 0.1, 0).unwrap(), &binfm_hp());
    println!(
        "[INFO] circles at noise 0.1 (not gated): binfm {:.4} ± {:.4}",
        reference.0, reference.1
    );
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        ExitCode::FAILURE
    }
}
