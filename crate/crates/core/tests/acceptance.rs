//! End-to-end acceptance criteria. Every criterion prints one PASS/FAIL
//! line; the test fails if any criterion does.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tizx::detector::{detect_block, DetectionWindow, Detector, PolarityChaining};
use tizx::harness::{ber_sweep, empirical_psd, item_rng, BerCurve, FrameGeometry, SweepConfig};
use tizx::mimosim::{generate_channel, transmit_frame, NoiseModel, NoiseSpec};
use tizx::optimizer::{evaluate, solve, verify_table, DesignProblem, SearchConfig};
use tizx::spectrum::{autocorrelation_adaptive, psd_at, simpson, total_power, FilterSpec, DEFAULT_TRUNCATION_EPS};
use tizx::zxmap::{build_machine, published_table, sign_codebook, table4, table5, ComplexPilot, Encoder};
use tizx::{CoefficientSet64, Sign, ZxParams};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn params(m_rx: usize) -> ZxParams {
    ZxParams::new(m_rx).unwrap()
}

fn table(m_rx: usize) -> CoefficientSet64 {
    published_table(m_rx).unwrap()
}

fn table_feasibility() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (m_rx, set, check_norm) in [(3, table5::<f64>(), true), (2, table4::<f64>(), false)] {
        let problem = DesignProblem::new(params(m_rx));
        let r = verify_table(&problem, &set).unwrap();
        let norm_ok = !check_norm || (0.999..=1.001).contains(&r.norm_sq);
        let ok =
            norm_ok && (r.gamma - 0.1).abs() < 1e-12 && r.eta >= 0.95 && set.as_flat().len() == params(m_rx).m_coeff();
        pass &= ok;
        notes.push(format!(
            "m_rx={m_rx}: norm_sq={:.6} gamma={:.4} eta={:.5}",
            r.norm_sq, r.gamma, r.eta
        ));
    }
    verdict(pass, notes.join("; "))
}

fn autocorrelation_oracle() -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for m_rx in [3, 2] {
        let p = params(m_rx);
        let coeffs = table(m_rx);
        let analytic = autocorrelation_adaptive(&build_machine(p, &coeffs).unwrap(), DEFAULT_TRUNCATION_EPS);
        let blocks = 1_000_000usize.div_ceil(p.q());
        let mut rng = ChaCha8Rng::seed_from_u64(0xac0 + m_rx as u64);
        let bits: Vec<u8> = (0..blocks * p.bits_per_block())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        let s = Encoder::new(p).encode(&bits, Sign::Plus, &coeffs).unwrap().coeffs;
        let mut worst = 0.0f64;
        for lag in 0..=4 * p.q() {
            let n = s.len() - lag;
            let emp = s[..n].iter().zip(&s[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            worst = worst.max((emp - analytic.at(lag as i64)).abs());
        }
        pass &= worst <= 1e-3;
        notes.push(format!("m_rx={m_rx}: {} samples, max |err|={worst:.2e}", s.len()));
        if m_rx == 3 {
            let closed = coeffs.norm_sq() / 12.0;
            let err = (analytic.c0() - closed).abs();
            pass &= err <= 1e-12;
            notes.push(format!("c0 - |G|^2/12 = {err:.1e}"));
        }
    }
    verdict(pass, notes.join("; "))
}

fn sweep(grid: &[f64], min_bits: u64) -> SweepConfig {
    SweepConfig {
        snr_grid_db: grid.to_vec(),
        min_bits,
        min_errors: 200,
        ..SweepConfig::default()
    }
}

fn ber_reproduction() -> Verdict {
    // (m_rx, snr_db, target, relative tolerance)
    let targets = [
        (3, 0.0, 0.292, 0.05),
        (3, 10.0, 0.0627, 0.10),
        (3, 16.0, 3.43e-3, 0.15),
        (2, 0.0, 0.260, 0.05),
        (2, 10.0, 6.99e-3, 0.15),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for m_rx in [3, 2] {
        let grid: Vec<f64> = targets.iter().filter(|t| t.0 == m_rx).map(|t| t.1).collect();
        let curve = ber_sweep(&sweep(&grid, 2_000_000), &table(m_rx)).unwrap();
        for (&(_, snr, target, tol), p) in targets.iter().filter(|t| t.0 == m_rx).zip(&curve.points) {
            let ratio = p.ber / target;
            let ok = (ratio - 1.0).abs() <= tol && p.bits >= 2_000_000 && p.errors >= 200;
            pass &= ok;
            notes.push(format!(
                "m_rx={m_rx} {snr} dB: {:.4e} vs {target:.3e} (x{ratio:.3}, {})",
                p.ber,
                if ok { "ok" } else { "out of tolerance" }
            ));
        }
    }
    verdict(pass, notes.join("; "))
}

fn ber_ordering() -> Verdict {
    let grid = [0.0, 4.0, 8.0, 12.0];
    let curves: Vec<BerCurve> = [2, 3]
        .iter()
        .map(|&m| ber_sweep(&sweep(&grid, 1_000_000), &table(m)).unwrap())
        .collect();
    let mut pass = true;
    let mut notes = Vec::new();
    for (a, b) in curves[0].points.iter().zip(&curves[1].points) {
        pass &= a.ber <= b.ber && a.bits >= 1_000_000 && b.bits >= 1_000_000;
        notes.push(format!("{} dB: {:.3e} <= {:.3e}", a.snr_db, a.ber, b.ber));
    }
    verdict(pass, notes.join("; "))
}

fn psd_agreement() -> Verdict {
    let coeffs = table(3);
    let psd = empirical_psd(&coeffs, 10_000, 30, 0x95d).unwrap();
    let dev = psd.max_deviation_db(0.65);

    let filter = FilterSpec::rectangular(3, 1.0);
    let autocorr = autocorrelation_adaptive(&build_machine(params(3), &coeffs).unwrap(), DEFAULT_TRUNCATION_EPS);
    let edge = 400.0;
    let numeric = simpson(|f| psd_at(&autocorr, &filter, f), -edge, edge, 800_000);
    let closed = total_power(&autocorr, &filter);
    let rel = (numeric - closed).abs() / closed;
    verdict(
        dev <= 1.0 && rel <= 5e-3,
        format!("{} frames, max deviation {dev:.3} dB over |f| <= 0.65; power over |f| <= {edge}: {numeric:.6} vs {closed:.6} ({:.3}%)", psd.frames, rel * 100.0),
    )
}

fn optimizer_reproduction() -> Verdict {
    let problem = DesignProblem::<f64>::new(params(3));
    let outcome = solve(&problem, &SearchConfig::default()).unwrap();
    let sol = outcome.solution();
    let check = evaluate(&sol.coeffs, &problem).unwrap();
    verdict(
        outcome.is_feasible() && check.feasible && sol.gamma >= 0.0999,
        format!(
            "gamma={:.5} eta={:.5} norm_sq={:.6}",
            sol.gamma, check.eta, check.norm_sq
        ),
    )
}

fn noiseless_loopback() -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for m_rx in [3, 2] {
        let p = params(m_rx);
        let coeffs = table(m_rx);
        let geom = FrameGeometry::new(p, 30).unwrap();
        let encoder = Encoder::new(p);
        let detector = Detector::new(p, PolarityChaining::Raw);
        let noise = NoiseSpec::<f64>::noiseless();
        let pilot = ComplexPilot::default();
        let (bits, errors) = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = item_rng(0x1005e, m_rx as u64, i);
                let sent: Vec<Vec<u8>> = (0..2)
                    .map(|_| (0..geom.bits_per_user).map(|_| rng.random_range(0..2u8)).collect())
                    .collect();
                let frames: Vec<_> = sent
                    .iter()
                    .map(|b| encoder.encode_complex(b, pilot, &coeffs).unwrap())
                    .collect();
                let channel = generate_channel::<f64, _>(&mut rng, 2, 8).unwrap().channel;
                let rx = transmit_frame(&frames, &channel, &noise, NoiseModel::Direct, 1.0, &mut rng).unwrap();
                sent.iter().zip(&rx.users).fold((0u64, 0u64), |(n, e), (b, got)| {
                    let d = detector.detect_complex(got, pilot).unwrap();
                    (
                        n + b.len() as u64,
                        e + b.iter().zip(&d).filter(|(x, y)| x != y).count() as u64,
                    )
                })
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        pass &= errors == 0;
        notes.push(format!("m_rx={m_rx}: {errors} errors in {bits} bits"));
    }
    verdict(pass, notes.join("; "))
}

fn detector_enumeration() -> Verdict {
    let mut pass = true;
    let mut checked = 0;
    for m_rx in [3, 2] {
        let p = params(m_rx);
        let q = p.q();
        for entering in [Sign::Plus, Sign::Minus] {
            let book = sign_codebook(p, entering);
            for pattern in 0..1usize << q {
                let block: Vec<Sign> = (0..q)
                    .map(|j| if pattern >> j & 1 == 1 { Sign::Minus } else { Sign::Plus })
                    .collect();
                let window = DetectionWindow {
                    rho_prev: entering,
                    block_signs: block.clone(),
                };
                let a = detect_block(&window, &book).unwrap();
                let b = detect_block(&window, &book).unwrap();
                // brute-force: first row at minimal distance
                let dists: Vec<usize> = book
                    .entries
                    .iter()
                    .map(|e| e.codeword.iter().zip(&block).filter(|(x, y)| x != y).count())
                    .collect();
                let min = *dists.iter().min().unwrap();
                let first = dists.iter().position(|&d| d == min).unwrap();
                let valid = book.entries.iter().any(|e| e.codeword == block);
                pass &= a == b && a.distance == min && a.row == book.entries[first].row && ((a.distance == 0) == valid);
                let lut = Detector::new(p, PolarityChaining::Raw)
                    .detect_rail(&block, entering)
                    .unwrap();
                pass &= lut.bits == a.label;
                checked += 1;
            }
        }
    }
    verdict(pass, format!("{checked} sign blocks checked"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("table feasibility", table_feasibility),
        ("autocorrelation oracle", autocorrelation_oracle),
        ("BER reproduction", ber_reproduction),
        ("BER ordering", ber_ordering),
        ("PSD agreement", psd_agreement),
        ("optimizer reproduction", optimizer_reproduction),
        ("noiseless loopback", noiseless_loopback),
        ("detector enumeration", detector_enumeration),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let v = run();
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
