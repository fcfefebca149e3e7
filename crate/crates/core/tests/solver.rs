//! Solver behaviour on small training budgets: terminal conditions, the
//! reflection floor, determinism, persistence and scheme capabilities.

use osm_hedge::contracts::{ContractSpec, Payoff, PortfolioSpec};
use osm_hedge::error::Error;
use osm_hedge::hedging::{run_hedge, stopping_time, HedgeConfig, Strategy};
use osm_hedge::market::{simulate_paths, ModelSpec, TimeGrid};
use osm_hedge::solver::{train, Scheme, SolverArtifact, TrainConfig, MANIFEST_FILE};

fn quick(seed: u64) -> TrainConfig {
    TrainConfig { iters_last: 80, iters: 30, batch: 64, batch_norm: false, seed, ..TrainConfig::default() }
}

fn bermudan_put() -> PortfolioSpec {
    let model = ModelSpec::black_scholes_uniform(1, 100.0, 0.05, 0.25, 0.0, 0.05, 0.0);
    PortfolioSpec { model, maturity: 1.0, contracts: vec![ContractSpec::bermudan(Payoff::VanillaPut { strike: 100.0, asset: 0 }, 4)] }
}

fn basket_book() -> PortfolioSpec {
    let model = ModelSpec::black_scholes_uniform(2, 100.0, 0.05, 0.2, 0.0, 0.0, 0.3);
    PortfolioSpec {
        model,
        maturity: 1.0,
        contracts: vec![ContractSpec::european(ContractSpec::geometric_call(100.0)), ContractSpec::european(Payoff::VanillaPut { strike: 95.0, asset: 1 })],
    }
}

fn grid() -> TimeGrid {
    TimeGrid::new(1.0, 8).unwrap()
}

#[test]
fn terminal_greeks_are_the_payoff_and_its_derivatives() {
    let p = basket_book();
    let art = train(&p, grid(), &quick(1)).unwrap();
    let states = [110.0, 90.0, 80.0, 120.0];
    let g = art.evaluate(8, &states).unwrap();
    for (b, x) in states.chunks(2).enumerate() {
        for (c, contract) in p.contracts.iter().enumerate() {
            assert_eq!(g.y[b * 2 + c], contract.payoff.value(x, 2));
            let mut grad = [0.0; 2];
            contract.payoff.gradient(x, 2, &mut grad);
            assert_eq!(art.evaluate(8, x).unwrap().delta_row(0, c), &grad);
        }
    }
}

#[test]
fn bermudan_value_never_falls_below_payoff_on_exercise_dates() {
    let p = bermudan_put();
    let art = train(&p, grid(), &quick(2)).unwrap();
    let paths = simulate_paths(art.model(), art.grid(), 500, 8);
    for n in [2, 4, 6, 8] {
        let xs = paths.slice_at(n);
        let g = art.evaluate_values(n, &xs).unwrap();
        for (i, x) in xs.iter().enumerate() {
            assert!(g.y[i] >= p.contracts[0].payoff.value(&[*x], 1), "n={n} x={x}");
        }
    }
}

#[test]
fn same_seed_gives_same_artifact_and_different_seed_does_not() {
    let p = basket_book();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let hash = |seed, k: usize| train(&p, grid(), &quick(seed)).unwrap().save(dirs[k].path()).unwrap();
    let (a, b, c) = (hash(5, 0), hash(5, 1), hash(6, 2));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn saved_artifact_evaluates_identically_after_load() {
    let p = basket_book();
    let art = train(&p, grid(), &quick(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let hash = art.save(dir.path()).unwrap();
    assert_eq!(SolverArtifact::manifest_hash(dir.path()).unwrap(), hash);
    let back = SolverArtifact::load(dir.path()).unwrap();
    let states = [101.0, 99.0, 95.0, 104.0, 120.0, 85.0];
    for n in 0..8 {
        let (g1, g2) = (art.evaluate(n, &states).unwrap(), back.evaluate(n, &states).unwrap());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&g1.y), bits(&g2.y));
        assert_eq!(bits(&g1.delta), bits(&g2.delta));
        assert_eq!(bits(g1.gamma.as_deref().unwrap()), bits(g2.gamma.as_deref().unwrap()));
    }
}

#[test]
fn tampered_artifact_is_rejected() {
    let p = basket_book();
    let dir = tempfile::tempdir().unwrap();
    train(&p, grid(), &quick(4)).unwrap().save(dir.path()).unwrap();
    let weights = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| !p.ends_with(MANIFEST_FILE))
        .expect("a network file");
    let mut bytes = std::fs::read(&weights).unwrap();
    bytes.push(b' ');
    std::fs::write(&weights, bytes).unwrap();
    assert!(SolverArtifact::load(dir.path()).is_err());
}

#[test]
fn first_order_scheme_cannot_drive_second_order_hedges() {
    let p = bermudan_put();
    let art = train(&p, grid(), &TrainConfig { scheme: Scheme::Rdbdp, ..quick(5) }).unwrap();
    assert!(!art.has_gamma());
    assert!(art.evaluate(0, &[100.0]).unwrap().gamma.is_none());
    let paths = simulate_paths(art.model(), art.grid(), 50, 1);
    assert!(run_hedge(&HedgeConfig::new(Strategy::Delta, 4), &art, &[], &paths, false).is_ok());
    let err = run_hedge(&HedgeConfig::new(Strategy::DeltaGamma, 4), &art, &[], &paths, false).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_)), "{err}");
}

#[test]
fn ledger_stopping_times_match_the_exercise_rule() {
    let p = bermudan_put();
    let art = train(&p, grid(), &quick(6)).unwrap();
    let paths = simulate_paths(art.model(), art.grid(), 200, 2);
    let ledger = run_hedge(&HedgeConfig::new(Strategy::Delta, 8), &art, &[], &paths, false).unwrap();
    for (i, path) in ledger.paths.iter().enumerate() {
        assert_eq!(path.stopping[0], stopping_time(&art, &paths, i, 0, &ledger.dates).unwrap());
    }
    assert!(ledger.paths.iter().any(|p| p.stopping[0] < 8), "some paths should exercise early");
}
