//! Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each.
//! Runs as a plain binary so the lines are printed under `cargo test`.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use osm_hedge::closed_form::{bs_vanilla, OptionKind};
use osm_hedge::contracts::{ContractSpec, Payoff, PortfolioSpec};
use osm_hedge::experiment::{self, hedge_stage, margrabe_check, preset, train_stage, ExperimentConfig, GreeksMode};
use osm_hedge::hedging::{lsqr_solve, run_hedge, ClosedFormGreeks, CooMatrix, GreekSource, HedgeConfig, LsqrOptions, Strategy};
use osm_hedge::market::{simulate_paths, ModelSpec, TimeGrid};
use osm_hedge::nn::{Mlp, MlpSpec};
use osm_hedge::risk::{pnl, risk_measures};
use osm_hedge::solver::{train, TrainConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(())
    } else {
        Err(format!("took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
    }
}

/// Desk-scale solver budget: 2000 iterations at the last step, 500 at every other.
fn desk_budget(seed: u64) -> TrainConfig {
    TrainConfig { iters_last: 2000, iters: 500, batch: 256, batch_norm: false, seed, ..TrainConfig::default() }
}

/// Variance per strategy and frequency for the one-asset call ladder with closed-form Greeks.
fn call_ladder(n_paths: usize, ns: &[usize]) -> Result<Vec<(usize, f64, f64)>, String> {
    let cfg = preset("fig1-bs-1d").map_err(|e| e.to_string())?;
    let src = ClosedFormGreeks::new(cfg.portfolio.clone(), cfg.grid().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let paths = simulate_paths(src.model(), src.grid(), n_paths, 2024);
    let mut out = Vec::new();
    for &n in ns {
        let mut var = [0.0; 2];
        for (k, plan) in cfg.hedges.iter().enumerate() {
            let hc = plan.at(n);
            let inst = hc.resolve_instruments(src.model(), 1.0).map_err(|e| e.to_string())?;
            let ledger = run_hedge(&hc, &src, &inst, &paths, false).map_err(|e| e.to_string())?;
            let sample = pnl(&ledger).map_err(|e| e.to_string())?;
            var[k] = risk_measures(&sample.values, &[0.95]).map_err(|e| e.to_string())?.variance;
        }
        out.push((n, var[0], var[1]));
    }
    Ok(out)
}

fn ladder() -> Outcome {
    let start = Instant::now();
    let rows = call_ladder(10_000, &[1, 2, 5, 10, 20, 100])?;
    within(start, Duration::from_secs(60))?;
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1 && w[1].2 < w[0].2);
    let ratios: Vec<f64> = rows.iter().filter(|r| r.0 >= 5).map(|r| r.1 / r.2).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let table: Vec<String> = rows.iter().map(|(n, a, b)| format!("N={n}: {a:.2e}/{b:.2e}")).collect();
    check(
        decreasing && min_ratio >= 5.0,
        format!("variance delta/delta-gamma {}; min ratio at N>=5 {min_ratio:.1}", table.join(", ")),
    )
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / n, points.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn rates() -> Outcome {
    let start = Instant::now();
    let rows = call_ladder(100_000, &[5, 10, 20, 100])?;
    within(start, Duration::from_secs(300))?;
    let h = |n: usize| (1.0 / n as f64).ln();
    let delta = slope(&rows.iter().map(|r| (h(r.0), r.1.ln())).collect::<Vec<_>>());
    let gamma = slope(&rows.iter().map(|r| (h(r.0), r.2.ln())).collect::<Vec<_>>());
    check(
        (delta - 1.0).abs() <= 0.3 && (gamma - 1.5).abs() <= 0.3,
        format!("variance slopes delta {delta:.3} (target 1.0), delta-gamma {gamma:.3} (target 1.5)"),
    )
}

fn pricing_oracle() -> Outcome {
    let start = Instant::now();
    let model = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0);
    let p = PortfolioSpec { model, maturity: 1.0, contracts: vec![ContractSpec::european(Payoff::VanillaCall { strike: 100.0, asset: 0 })] };
    let art = train(&p, TimeGrid::new(1.0, 20).unwrap(), &desk_budget(11)).map_err(|e| e.to_string())?;
    let g = art.evaluate(0, &[100.0]).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(900))?;
    let (y, delta, gamma) = (g.y[0], g.delta[0], g.gamma.as_ref().map_or(f64::NAN, |v| v[0]));
    let (ey, eg) = ((y - 9.947645).abs() / 9.947645, (gamma - 0.0158335).abs() / 0.0158335);
    let ed = (delta - 0.549738).abs();
    check(
        ey < 0.01 && ed < 0.02 && eg < 0.10,
        format!("Y0 {y:.4} (rel err {:.2}%), Delta0 {delta:.4} (err {ed:.4}), Gamma0 {gamma:.5} (rel err {:.1}%)", 100.0 * ey, 100.0 * eg),
    )
}

fn bermudan_premium() -> Outcome {
    let (strike, sigma, r) = (100.0, 0.25, 0.05);
    let model = ModelSpec::black_scholes_uniform(1, 100.0, r, sigma, 0.0, r, 0.0);
    let put = ContractSpec::bermudan(Payoff::VanillaPut { strike, asset: 0 }, 10);
    let p = PortfolioSpec { model, maturity: 1.0, contracts: vec![put.clone()] };
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let art = train(&p, grid, &desk_budget(5)).map_err(|e| e.to_string())?;
    let y0 = art.initial_prices().map_err(|e| e.to_string())?[0];
    let european = bs_vanilla(100.0, strike, r, 0.0, sigma, 1.0, OptionKind::Put).map_err(|e| e.to_string())?.price;
    let n_paths = 10_000;
    let paths = simulate_paths(art.model(), &grid, n_paths, 99);
    let mut stopped = vec![f64::NAN; n_paths];
    let mut floor_ok = true;
    for n in 1..=grid.n_steps() {
        if !(put.exercisable_at(&grid, n) || n == grid.n_steps()) {
            continue;
        }
        let xs = paths.slice_at(n);
        let g = art.evaluate_values(n, &xs).map_err(|e| e.to_string())?;
        for (i, x) in xs.iter().enumerate() {
            let payoff = put.payoff.value(&[*x], 1);
            floor_ok &= g.y[i] >= payoff;
            let exercise = n == grid.n_steps() || payoff > g.y_tilde[i];
            if stopped[i].is_nan() && exercise {
                stopped[i] = (-r * grid.t(n)).exp() * payoff;
            }
        }
    }
    let mean = stopped.iter().sum::<f64>() / n_paths as f64;
    let sd = (stopped.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64).sqrt();
    let se = sd / (n_paths as f64).sqrt();
    check(
        floor_ok && y0 >= european - se,
        format!("Bermudan {y0:.4} vs European {european:.4} (MC s.e. {se:.4}, stopped-payoff mean {mean:.4}); Y >= g on all reflection dates: {floor_ok}"),
    )
}

fn small_basket() -> Outcome {
    let start = Instant::now();
    let mut cfg = preset("ex2-basket-d5").map_err(|e| e.to_string())?;
    cfg.portfolio.contracts[0].exercise_count = 1;
    cfg.grid_steps = 20;
    cfg.train = desk_budget(0);
    cfg.evaluation.n_paths = 4096;
    for plan in &mut cfg.hedges {
        plan.rebalances = vec![10];
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    train_stage(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let rows = hedge_stage(&cfg, dir.path()).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(7200))?;
    let var = |s: &str| rows.iter().find(|r| r.strategy == s).map_or(f64::NAN, |r| r.report.variance);
    let (d, g) = (var("delta"), var("delta-gamma"));
    check(g <= d / 10.0, format!("N=10 variance delta {d:.3e}, delta-gamma {g:.3e}, ratio {:.1}", d / g))
}

fn margrabe_suite() -> Outcome {
    let start = Instant::now();
    let c = margrabe_check(50, 7).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(1))?;
    check(
        c.passed(),
        format!(
            "50 draws: max FD rel err {:.1e}, symmetry {:.1e}, homogeneity {:.1e}",
            c.max_fd_error, c.max_symmetry_error, c.max_homogeneity_error
        ),
    )
}

fn lsqr_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let opts = LsqrOptions { atol: 1e-15, btol: 1e-15, max_iter: Some(2000) };
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let over = k % 2 == 0;
        let (rows, cols) = if over {
            let c = rng.random_range(1..=80);
            (rng.random_range((3 * c / 2).max(2)..=200), c)
        } else {
            let r = rng.random_range(1..=80);
            (r, rng.random_range((3 * r / 2).max(2)..=120))
        };
        let mut a = CooMatrix::new(rows, cols);
        for i in 0..rows {
            for c in 0..cols {
                if rng.random_bool(0.1) {
                    a.push(i, c, rng.random_range(-1.0..1.0)).map_err(|e| e.to_string())?;
                }
            }
        }
        let b: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = lsqr_solve(&a, &b, &opts).map_err(|e| e.to_string())?.x;
        let dense = DMatrix::from_row_slice(rows, cols, &a.to_dense());
        let pinv = dense.pseudo_inverse(1e-12).map_err(|e| e.to_string())?;
        let oracle = pinv * nalgebra::DVector::from_column_slice(&b);
        let err = oracle.iter().zip(&x).map(|(o, v)| (o - v).abs()).fold(0.0, f64::max) / oracle.amax().max(1.0);
        worst = worst.max(err);
    }
    within(start, Duration::from_secs(10))?;
    check(worst <= 1e-8, format!("100 systems, worst scaled deviation from pseudoinverse {worst:.1e}"))
}

fn risk_oracle() -> Outcome {
    let start = Instant::now();
    let grid: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
    let r = risk_measures(&grid, &[0.95]).map_err(|e| e.to_string())?;
    let t = r.tail(0.95).ok_or("missing level")?;
    let worked = t.var == 0.05 && t.es == 0.025;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(20..400);
        let sample: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * rng.random_range(0.0..3.0)).collect();
        let rep = risk_measures(&sample, &[0.95, 0.99]).map_err(|e| e.to_string())?;
        let mut sorted = sample.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = sample.iter().sum::<f64>() / n as f64;
        let below: Vec<f64> = sample.iter().filter(|x| **x < mean).map(|x| (x - mean).powi(2)).collect();
        let semi = if below.is_empty() { 0.0 } else { below.iter().sum::<f64>() / below.len() as f64 };
        let mut ok = (rep.semivariance - semi).abs() <= 1e-12 * semi.max(1.0);
        for (pct, level) in [(5usize, 0.95), (1, 0.99)] {
            let k = (n * pct).div_ceil(100).max(1);
            let var = sorted[k - 1];
            let tail: Vec<f64> = sorted.iter().copied().filter(|x| *x < var).collect();
            let es = if tail.is_empty() { var } else { tail.iter().sum::<f64>() / tail.len() as f64 };
            let got = rep.tail(level).ok_or("missing level")?;
            ok &= got.var == var && (got.es - es).abs() <= 1e-12 * es.abs().max(1.0);
        }
        mismatches += usize::from(!ok);
    }
    within(start, Duration::from_secs(1))?;
    check(worked && mismatches == 0, format!("worked example VaR95 {} ES95 {}; {mismatches} mismatches in 1000 samples", t.var, t.es))
}

fn loss_of(net: &Mlp, input: &[f64], weights: &[f64]) -> f64 {
    let out = net.eval_train(input).expect("valid input");
    out.iter().zip(weights).map(|(o, w)| w * o + 0.5 * o * o).sum()
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let mut shapes = 0;
    for d in 1..=5 {
        for j in 1..=3 {
            for out_dim in [j, j * d, j * d * d] {
                for batch_norm in [false, true] {
                    let spec = MlpSpec { input_dim: d, hidden_layers: 4, hidden_width: 50, output_dim: out_dim, batch_norm };
                    let mut net = Mlp::new(spec, &mut rng).map_err(|e| e.to_string())?;
                    let batch = 16;
                    let input: Vec<f64> = (0..batch * d).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let weights: Vec<f64> = (0..batch * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let (out, cache) = net.forward_train(&input).map_err(|e| e.to_string())?;
                    let upstream: Vec<f64> = out.iter().zip(&weights).map(|(o, w)| w + o).collect();
                    let grad = net.backward(&cache, &upstream);
                    let base = net.clone();
                    let h = 1e-6;
                    let probe = |dir: &[f64]| -> f64 {
                        let mut plus = base.clone();
                        let mut minus = base.clone();
                        for (k, v) in dir.iter().enumerate() {
                            plus.params[k] += h * v;
                            minus.params[k] -= h * v;
                        }
                        let fd = (loss_of(&plus, &input, &weights) - loss_of(&minus, &input, &weights)) / (2.0 * h);
                        let an: f64 = grad.iter().zip(dir).map(|(g, v)| g * v).sum();
                        (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8)
                    };
                    let n = base.n_params();
                    for _ in 0..3 {
                        let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                        worst = worst.max(probe(&dir));
                    }
                    for _ in 0..20 {
                        let k = rng.random_range(0..n);
                        if grad[k].abs() < 1e-6 {
                            continue;
                        }
                        let mut dir = vec![0.0; n];
                        dir[k] = 1.0;
                        worst = worst.max(probe(&dir));
                    }
                    shapes += 1;
                }
            }
        }
    }
    within(start, Duration::from_secs(30))?;
    check(worst <= 1e-4, format!("{shapes} network shapes, worst relative backprop/FD gap {worst:.1e}"))
}

fn report_bytes(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<u8>, String> {
    hedge_stage(cfg, dir).map_err(|e| e.to_string())?;
    let mut bytes = std::fs::read(experiment::OutputLayout::new(dir).report()).map_err(|e| e.to_string())?;
    bytes.extend(std::fs::read(experiment::OutputLayout::new(dir).kde("delta-gamma", 10)).map_err(|e| e.to_string())?);
    Ok(bytes)
}

fn degeneracy_and_determinism() -> Outcome {
    let mut cfg = preset("fig1-bs-1d").map_err(|e| e.to_string())?;
    cfg.greeks = GreeksMode::ClosedForm;
    cfg.evaluation.n_paths = 2000;
    let src = ClosedFormGreeks::new(cfg.portfolio.clone(), cfg.grid().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let paths = simulate_paths(src.model(), src.grid(), 2000, 4);
    let delta = run_hedge(&HedgeConfig::new(Strategy::Delta, 10), &src, &[], &paths, true).map_err(|e| e.to_string())?;
    let gamma = run_hedge(&HedgeConfig::new(Strategy::DeltaGamma, 10), &src, &[], &paths, true).map_err(|e| e.to_string())?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    delta.write_csv(&mut a).map_err(|e| e.to_string())?;
    gamma.write_csv(&mut b).map_err(|e| e.to_string())?;
    let same_ledger = a == b && delta.paths.iter().zip(&gamma.paths).all(|(x, y)| x.value.to_bits() == y.value.to_bits());

    let (d1, d2) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let same_report = report_bytes(&cfg, d1.path())? == report_bytes(&cfg, d2.path())?;

    let model = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0);
    let p = PortfolioSpec { model, maturity: 1.0, contracts: vec![ContractSpec::european(Payoff::VanillaCall { strike: 100.0, asset: 0 })] };
    let small = TrainConfig { iters_last: 60, iters: 20, batch: 64, ..desk_budget(3) };
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let hashes: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            train(&p, grid, &small).and_then(|a| a.save(dir.path())).map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()?;
    let same_artifact = hashes[0] == hashes[1];
    check(
        same_ledger && same_report && same_artifact,
        format!("empty-I ledger identical: {same_ledger}; reports identical: {same_report}; artifact hashes identical: {same_artifact}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed-form hedging ladder", ladder),
        ("variance convergence rates", rates),
        ("OSM pricing oracle", pricing_oracle),
        ("Bermudan premium and reflection floor", bermudan_premium),
        ("five-asset basket end to end", small_basket),
        ("exchange option closed form", margrabe_suite),
        ("LSQR against pseudoinverse", lsqr_suite),
        ("risk measure oracle", risk_oracle),
        ("network gradient checks", gradient_checks),
        ("degeneracy and determinism", degeneracy_and_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("acceptance {:>2} PASS {name} ({secs:.1}s): {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("acceptance {:>2} FAIL {name} ({secs:.1}s): {msg}", k + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
