//! The real-data recipe on a synthetic table with the RHC column layout: latent severity
//! drives treatment, the four physiologic proxies and length of stay; the true effect is zero.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use proxidist::pipeline::{run, qte_grid, RunConfig, RunOutcome, ESTIMATE_OUTPUTS};

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn write_synthetic_rhc(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = move |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let mut text = String::from(
        ",ptid,sadmdte,dschdte,dthdte,swang1,pafi1,paco21,ph1,hema1,age,sex,cat1,meanbp1,wtkilo1,aps1,death\n",
    );
    let cats = ["ARF", "CHF", "MOSF w/Sepsis"];
    for i in 0..n {
        let u = gauss(&mut rng);
        let age = 60.0 + 12.0 * gauss(&mut rng);
        let age_s = (age - 60.0) / 12.0;
        let male = rng.random::<f64>() < 0.55;
        let cat = cats[rng.random_range(0..3)];
        let a = rng.random::<f64>() < expit(-0.45 + 1.1 * u + 0.2 * age_s);
        let pafi = 230.0 - 45.0 * u + 35.0 * gauss(&mut rng);
        let paco = 38.0 + 4.0 * u + 4.0 * gauss(&mut rng);
        let ph = 7.39 - 0.05 * u + 0.04 * gauss(&mut rng);
        let hema = 31.0 - 2.5 * u + 2.5 * gauss(&mut rng);
        let meanbp = 78.0 - 6.0 * u + 20.0 * gauss(&mut rng);
        let wt = if rng.random::<f64>() < 0.05 { String::new() } else { format!("{:.1}", 70.0 + 15.0 * gauss(&mut rng)) };
        let aps = 55.0 + 8.0 * u + 20.0 * gauss(&mut rng);
        let log_days = 3.4 + 0.6 * u + 0.08 * age_s + 0.5 * gauss(&mut rng);
        let days = log_days.exp().round().max(1.0);
        let start = 11_000 + rng.random_range(0..500);
        let (dsc, dth) = if rng.random::<f64>() < 0.03 { (String::new(), (start + days as i64).to_string()) } else { ((start + days as i64).to_string(), String::new()) };
        let trt = if a { "RHC" } else { "No RHC" };
        let sex = if male { "Male" } else { "Female" };
        writeln!(
            text,
            "{},{},{start},{dsc},{dth},{trt},{pafi:.2},{paco:.1},{ph:.3},{hema:.1},{age:.1},{sex},{cat},{meanbp:.0},{wt},{aps:.0},No",
            i + 1,
            5000 + i
        )
        .unwrap();
    }
    std::fs::write(path, text).unwrap();
}

fn config(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::rhc(data);
    cfg.estimator.multipliers = 300;
    cfg.out = Some(out.to_path_buf());
    cfg
}

#[test]
fn recipe_emits_the_seventeen_row_grid_and_attenuates_the_naive_shift() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rhc.csv");
    write_synthetic_rhc(&data, 4000, 5);
    let (outcome, out) = run(&config(&data, &dir.path().join("a"))).unwrap();
    let RunOutcome::Estimate(est) = outcome else { panic!("estimate outcome expected") };
    for f in ESTIMATE_OUTPUTS {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(est.qte.len(), 17);
    assert_eq!(est.qte.iter().map(|r| r.tau).collect::<Vec<_>>(), qte_grid());
    let d = &est.diagnostics;
    assert_eq!(d.screened.len(), 5);
    // 1 + 5 + 2 + 2 + 1 + 10.
    assert_eq!((d.d_w, d.d_z), (21, 21));
    assert!(d.grid_points <= 61 && d.grid_points > 10);
    let qte = std::fs::read_to_string(out.join("qte.csv")).unwrap();
    assert_eq!(qte.lines().count(), 2 + 17);
    assert_eq!(qte.lines().nth(1).unwrap(), "tau,naive,por,pipw,pdr,pdr_lower,pdr_upper");

    let mid = est.qte.iter().find(|r| r.tau == 0.5).unwrap();
    assert!(mid.naive > 0.1, "confounding should push the naive median QTE up: {}", mid.naive);
    let attenuated = est.qte.iter().filter(|r| r.pdr.abs() < r.naive.abs()).count();
    assert!(attenuated >= 14, "attenuated at {attenuated} of 17");
    assert!(est.qte.iter().all(|r| r.pdr_lower <= r.pdr_upper));
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rhc.csv");
    write_synthetic_rhc(&data, 1500, 9);
    let first = dir.path().join("first");
    run(&config(&data, &first)).unwrap();
    let manifest = std::fs::read_to_string(first.join("manifest.json")).unwrap();
    let mut again = RunConfig::from_json(&manifest).unwrap();
    let second = dir.path().join("second");
    again.out = Some(second.clone());
    run(&again).unwrap();
    for f in ESTIMATE_OUTPUTS.iter().filter(|f| **f != "timing.json") {
        let (a, b) = (std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap());
        assert!(a == b, "{f} differs after manifest rerun");
    }
}
