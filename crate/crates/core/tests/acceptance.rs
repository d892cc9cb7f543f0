//! One pass/fail line per acceptance criterion; exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use icl_lab::harness::sweep::parity_ratio_table;
use icl_lab::harness::ParityParams;
use icl_lab::numerics::{make_rng, Matrix, SpectralCovariance, Vector};
use icl_lab::parity::coverage::all_tasks;
use icl_lab::parity::{
    bruteforce_min_heads, build_optimal, decomposition_residual, exact_loss_breakdown,
    exact_population_loss, forward_infinite_n, hinge, loglog_slope, projection_energy_ratio,
    task_sets, uncovered_patterns, Dictionary, ModelSize, ParityConfig, ResidualMode,
};
use icl_lab::regression::{
    behavior_gap_closed, empirical_pretrain_risk, eval_loss_closed, eval_loss_mc, fit_rank_r,
    label_moment_mc, optimal_rank_r, simplified_loss, GdHyper, ReducedLsa, RegressionSetting,
    WeightDecomposition,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn setting(d: usize, n: usize, seed: u64) -> RegressionSetting {
    let spectrum: Vec<f64> = (0..d).map(|i| 0.5f64.powi(i as i32)).collect();
    let cov = SpectralCovariance::with_random_basis(&mut make_rng(seed).split("basis"), spectrum).unwrap();
    RegressionSetting::new(cov, n).unwrap()
}

fn gd_optimality() -> Outcome {
    let s = setting(4, 8, 11);
    let hyper = GdHyper::default_for(&s);
    let mut worst_rel = 0.0f64;
    let mut worst_frob = 0.0f64;
    for r in 1..=4 {
        let star = optimal_rank_r(&s, r).unwrap();
        let closed = simplified_loss(star.kq(), star.pv(), &s);
        let fit = fit_rank_r(&make_rng(1).split_index(r as u64), &s, r, &hyper).unwrap();
        worst_rel = worst_rel.max((fit.loss - closed).abs() / closed.abs());
        worst_frob = worst_frob.max((fit.model.effective() - star.effective()).norm());
    }
    check(
        worst_rel <= 1e-6 && worst_frob <= 1e-3 && hyper.restarts == 20,
        format!("worst rel loss err {worst_rel:.2e}, worst Frobenius err {worst_frob:.2e}, {} restarts", hyper.restarts),
    )
}

fn pretraining_shift() -> Outcome {
    let s = setting(4, 16, 12);
    let half_trace = 0.5 * (0..4).map(|i| 0.5f64.powi(i)).sum::<f64>();
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, model) in [ReducedLsa::zero(4), optimal_rank_r(&s, 4).unwrap()].into_iter().enumerate() {
        let target = simplified_loss(model.kq(), model.pv(), &s) + half_trace;
        let est = empirical_pretrain_risk(&make_rng(2).split_index(k as u64), &model.embed(), &s, 100_000).unwrap();
        ok &= est.within(target, 3.0);
        lines.push(format!("z={:.2}", est.z_score(target)));
    }
    check(ok, format!("zero model {}, full-rank optimum {}", lines[0], lines[1]))
}

fn evaluation_loss() -> Outcome {
    let s = setting(4, 8, 13);
    let w = icl_lab::regression::sample_task_weight(&mut make_rng(3).split("w"), 4).unwrap();
    let coords = s.cov().basis().transpose() * &w;
    let mut worst_z = 0.0f64;
    let mut cells = 0;
    for m in [4, 16] {
        for r in [1, 2, 4] {
            let lsa = optimal_rank_r(&s, r).unwrap();
            let decomp = WeightDecomposition::from_coordinates(&coords, r).unwrap();
            for sigma in [0.0, 0.5] {
                let closed = eval_loss_closed(&s, m, r, &decomp, sigma).unwrap();
                let rng = make_rng(3).split(&format!("{m}/{r}/{sigma}"));
                let est = eval_loss_mc(&rng, &lsa, &s, &w, m, sigma, 100_000).unwrap();
                worst_z = worst_z.max(est.z_score(closed).abs());
                cells += 1;
            }
        }
    }
    check(worst_z <= 3.0, format!("{cells} cells, largest |z| {worst_z:.2}"))
}

fn behavior_gap() -> Outcome {
    let s = setting(4, 8, 14);
    let lam = s.eigenvalues().clone();
    let n = 8.0;
    let tr: f64 = lam.iter().sum();
    let coords = Vector::from_vec(vec![0.9, -0.4, 0.7, 0.3]);
    let mut worst_diff = 0.0f64;
    let mut min_gap = f64::INFINITY;
    let mut worst_slope = 0.0f64;
    for m in [1, 4, 16, 64] {
        for r in 0..=4 {
            let signal = WeightDecomposition::from_coordinates(&coords, r).unwrap().signal;
            for rp in r..=4 {
                for sigma in [0.0, 0.5, 1.0, 2.0] {
                    let gap = behavior_gap_closed(&s, m, r, rp, &signal, sigma).unwrap();
                    let a = eval_loss_closed(&s, m, rp, &WeightDecomposition::from_coordinates(&signal, rp).unwrap(), sigma).unwrap();
                    let b = eval_loss_closed(&s, m, r, &WeightDecomposition::from_coordinates(&signal, r).unwrap(), sigma).unwrap();
                    worst_diff = worst_diff.max((gap - (a - b)).abs());
                    min_gap = min_gap.min(gap);
                }
                let (s1, s2) = (0.5, 1.5);
                let g1 = behavior_gap_closed(&s, m, r, rp, &signal, s1).unwrap();
                let g2 = behavior_gap_closed(&s, m, r, rp, &signal, s2).unwrap();
                let slope = (g2 - g1) / (s2 * s2 - s1 * s1);
                let expected: f64 =
                    (r..rp).map(|i| (n * lam[i] / ((n + 1.0) * lam[i] + tr)).powi(2)).sum::<f64>() / m as f64;
                worst_slope = worst_slope.max((slope - expected).abs());
            }
        }
    }
    check(
        worst_diff <= 1e-12 && min_gap >= 0.0 && worst_slope <= 1e-10,
        format!("worst |gap - diff| {worst_diff:.2e}, min gap {min_gap:.2e}, worst slope err {worst_slope:.2e}"),
    )
}

fn fourth_moment() -> Outcome {
    let s = setting(3, 1, 15);
    let w = Vector::from_vec(vec![0.8, -1.1, 0.4]);
    let sigma = 0.7;
    let lambda = s.cov().materialize();
    let lw = &lambda * &w;
    let target: Matrix = &lambda * (sigma * sigma + w.dot(&lw)) + (&lw * lw.transpose()) * 2.0;
    let (mean, stderr) = label_moment_mc(&make_rng(5), &s, &w, sigma, 1_000_000).unwrap();
    let worst = (0..9).map(|k| ((mean[k] - target[k]) / stderr[k]).abs()).fold(0.0, f64::max);
    check(worst <= 3.0, format!("largest entrywise |z| {worst:.2} at 10^6 samples"))
}

fn parity_large_zero_loss() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for nu2 in 1..=3u32 {
        for gamma in [0.05, 0.1, 0.2] {
            let probe = ParityConfig::new(1, nu2, gamma, 0.0).unwrap();
            let cfg = if nu2 > 1 { probe.with_p_t(probe.threshold() / 2.0).unwrap() } else { probe };
            let large = build_optimal(&cfg, ModelSize::Large);
            let loss = exact_population_loss(&large, &cfg);
            // independent enumeration over every ordered task and sign cell
            let probs = [0.25 + gamma, 0.25, 0.25, 0.25 - gamma];
            let mut enumerated = 0.0;
            for t in all_tasks(cfg.d()) {
                for (k, (a, b)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                    enumerated += probs[k] * hinge(a * b * forward_infinite_n(&large, t, a, b, gamma));
                }
            }
            let uncovered = uncovered_patterns(&large, &all_tasks(cfg.d())).len();
            ok &= loss == 0.0 && enumerated == 0.0 && uncovered == 0;
            if loss != 0.0 || uncovered != 0 {
                details.push(format!("nu2={nu2} gamma={gamma}: loss {loss}, {uncovered} uncovered"));
            }
        }
    }
    let report = bruteforce_min_heads(4).unwrap();
    let five = report.by_size.iter().find(|r| r.0 == 5).copied();
    ok &= report.min_heads == 6 && five.is_some_and(|r| r.2 == 0);
    details.push(format!(
        "9 settings with exact zero loss and full coverage, min heads {}, size-5 multisets {} none complete",
        report.min_heads,
        five.map_or(0, |r| r.1)
    ));
    check(ok, details.join("; "))
}

fn parity_small_regime() -> Outcome {
    let mut ok = true;
    let mut worst = String::new();
    for (nu1, nu2) in [(1, 2), (1, 3), (2, 3)] {
        for gamma in [0.05, 0.1, 0.2] {
            let probe = ParityConfig::new(nu1, nu2, gamma, 0.0).unwrap();
            let cfg = probe.with_p_t(probe.threshold() / 2.0).unwrap();
            let small = build_optimal(&cfg, ModelSize::Small);
            let (s1, s2) = task_sets(cfg.k(), cfg.d()).unwrap();
            let probs = [0.25 + gamma, 0.25, 0.25, 0.25 - gamma];
            let set_loss = |tasks: &[icl_lab::parity::Task]| {
                tasks
                    .iter()
                    .map(|&t| {
                        [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                            .into_iter()
                            .enumerate()
                            .map(|(k, (a, b))| probs[k] * hinge(a * b * forward_infinite_n(&small, t, a, b, gamma)))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / tasks.len() as f64
            };
            let l1 = set_loss(&s1);
            let l2 = set_loss(&s2);
            let b = exact_loss_breakdown(&small, &cfg);
            let this = l1 == 0.0 && b.important == 0.0 && l2 > 0.0 && b.total == cfg.p_t() * l2;
            if !this {
                worst = format!("nu=({nu1},{nu2}) gamma={gamma}: S1 {l1}, S2 {l2}, total {}", b.total);
            }
            ok &= this;
        }
    }
    check(ok, if ok { "9 settings: S1 loss 0, total = p_T x S2 loss > 0".into() } else { worst })
}

fn energy_ratio() -> Outcome {
    let m = 64;
    let mut ok = true;
    let mut parts = Vec::new();
    for (nu1, nu2) in [(1u32, 2u32), (1, 3), (2, 3)] {
        let cfg = ParityConfig::new(nu1, nu2, 0.1, 0.0).unwrap();
        let est = projection_energy_ratio(&make_rng(8).split_index(u64::from(nu1 * 10 + nu2)), &cfg, m, 100_000).unwrap();
        let formula = f64::from(nu1 + 1) / f64::from(nu2 + 1);
        let e1 = f64::from(nu1 + 1) / m as f64;
        let e2 = f64::from(nu2 + 1) / m as f64;
        let r = (est.ratio / formula - 1.0).abs();
        let r1 = (est.small.mean / e1 - 1.0).abs();
        let r2 = (est.large.mean / e2 - 1.0).abs();
        ok &= r <= 0.05 && r1 <= 0.02 && r2 <= 0.02;
        parts.push(format!("({nu1},{nu2}) ratio err {:.1}%, energy errs {:.1}%/{:.1}%", 100.0 * r, 100.0 * r1, 100.0 * r2));
    }
    check(ok, parts.join("; "))
}

fn residual_scaling() -> Outcome {
    let cfg = ParityConfig::new(1, 3, 0.1, 0.0).unwrap();
    let dict = Dictionary::random(&mut make_rng(9).split("dict"), cfg.d()).unwrap();
    let ms = [16usize, 64, 256, 1024];
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let mut rms = Vec::new();
    for which in [ModelSize::Small, ModelSize::Large] {
        let row: Vec<f64> = ms
            .iter()
            .map(|&m| {
                let rng = make_rng(9).split(which.label()).split_index(m as u64);
                decomposition_residual(&rng, &cfg, &dict, which, m, 20_000, ResidualMode::Idealized).unwrap().rms
            })
            .collect();
        rms.push(row);
    }
    let s1 = loglog_slope(&xs, &rms[0]);
    let s2 = loglog_slope(&xs, &rms[1]);
    let ordered = rms[0].iter().zip(&rms[1]).all(|(a, b)| a <= b);
    check(
        (s1 + 0.5).abs() <= 0.1 && (s2 + 0.5).abs() <= 0.1 && ordered,
        format!("slopes small {s1:.3}, large {s2:.3}; small <= large at every M: {ordered}"),
    )
}

fn thesis() -> Outcome {
    let s = setting(4, 8, 16);
    let coords = Vector::from_vec(vec![1.0, 0.5, 0.25, 0.125]);
    let ranks = [1usize, 2, 4];
    let mut regression_ok = true;
    for m in [4, 16] {
        for &r in &ranks {
            let signal = WeightDecomposition::from_coordinates(&coords, r).unwrap().signal;
            let losses: Vec<f64> = ranks
                .iter()
                .filter(|&&rp| rp >= r)
                .map(|&rp| eval_loss_closed(&s, m, rp, &WeightDecomposition::from_coordinates(&signal, rp).unwrap(), 0.5).unwrap())
                .collect();
            regression_ok &= losses.windows(2).all(|w| w[1] >= w[0]);
        }
    }
    let params = ParityParams::default();
    let table = parity_ratio_table(&params, &make_rng(10), 10).unwrap();
    let mut parity_ok = true;
    for &m in &params.m_list {
        let mut by_nu: Vec<(u32, f64)> = Vec::new();
        for row in table.rows.iter().filter(|r| r[3] == m.to_string()) {
            by_nu.push((row[1].parse().unwrap(), row[6].parse().unwrap()));
            by_nu.push((row[2].parse().unwrap(), row[7].parse().unwrap()));
        }
        for nu in 1..3u32 {
            let lo = by_nu.iter().filter(|e| e.0 == nu).map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
            let hi = by_nu.iter().filter(|e| e.0 == nu + 1).map(|e| e.1).fold(f64::INFINITY, f64::min);
            parity_ok &= lo < hi;
        }
    }
    check(
        regression_ok && parity_ok,
        format!("regression loss non-decreasing in rank: {regression_ok}; noise energy strictly increasing in nu: {parity_ok}"),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_icl-lab");
    let run = |threads: &str| {
        Command::new(bin)
            .args(["verify", "--seed", "0"])
            .env("ICL_LAB_THREADS", threads)
            .output()
            .expect("run icl-lab")
    };
    let outputs = [run("1"), run("1"), run("8"), run("8")];
    let codes: Vec<Option<i32>> = outputs.iter().map(|o| o.status.code()).collect();
    let identical = outputs.windows(2).all(|w| w[0].stdout == w[1].stdout) && !outputs[0].stdout.is_empty();
    check(
        identical && codes.iter().all(|c| *c == Some(0)),
        format!("exit codes {codes:?}, reports byte-identical: {identical}"),
    )
}

fn within(limit: Option<Duration>, elapsed: Duration, outcome: Outcome) -> Outcome {
    match (limit, outcome) {
        (Some(l), Ok(d)) if elapsed > l => Err(format!("{d}; runtime {elapsed:.1?} over {l:?}")),
        (_, o) => o,
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("rank-r optimum recovered by gradient descent", Some(60), gd_optimality),
        ("pretraining risk equals trace loss plus tr(Λ)/2", Some(30), pretraining_shift),
        ("evaluation loss closed form vs Monte Carlo", Some(120), evaluation_loss),
        ("behavior gap identity, sign and sigma² slope", None, behavior_gap),
        ("fourth moment E[y² x xᵀ]", None, fourth_moment),
        ("large parity model: zero loss, coverage, 6 heads minimal", Some(120), parity_large_zero_loss),
        ("small parity model pays only on less-important tasks", None, parity_small_regime),
        ("projected noise energy ratio", Some(60), energy_ratio),
        ("finite-prompt residual scaling", None, residual_scaling),
        ("larger models are worse under noise", None, thesis),
        ("verify report is deterministic across thread counts", None, determinism),
    ];
    let mut failed = 0;
    for (k, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = within(limit.map(Duration::from_secs), elapsed, outcome);
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} ({:.1}s)", k + 1, elapsed.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} ({:.1}s)", k + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
