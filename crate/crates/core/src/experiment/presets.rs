//! Built-in experiment documents reproducing the published setups.

use std::path::PathBuf;

use super::config::{Evaluation, ExperimentConfig, GreeksMode, HedgePlan, InstrumentSolver, CONFIG_VERSION};
use crate::closed_form::OptionKind;
use crate::contracts::{ContractSpec, Payoff, PortfolioSpec};
use crate::error::{Error, Result};
use crate::hedging::{Horizon, IndexSet, InstrumentSpec, LsqrOptions, Strategy};
use crate::market::{HestonParams, ModelSpec};
use crate::solver::TrainConfig;

/// Rebalancing frequencies: yearly, quarterly, monthly, fortnightly, weekly, daily.
pub const STANDARD_REBALANCES: [usize; 6] = [1, 2, 5, 10, 20, 100];
/// Rebalancing frequencies of the stochastic volatility example.
pub const HESTON_REBALANCES: [usize; 6] = [1, 2, 5, 10, 25, 50];

/// Name and one-line description of every preset.
pub const CATALOG: &[(&str, &str)] = &[
    ("fig1-bs-1d", "1-d Black–Scholes ATM call, delta versus delta-gamma with a put"),
    ("ex1-heston", "Heston Bermudan put, delta, delta-vega and second-order hedges"),
    ("ex2-basket-k90", "50-d geometric call, ITM strike 90"),
    ("ex2-basket-k100", "50-d geometric call, ATM strike 100"),
    ("ex2-basket-k110", "50-d geometric call, OTM strike 110"),
    ("ex2-basket-vol25", "50-d geometric call, volatility 0.25"),
    ("ex2-basket-vol50", "50-d geometric call, volatility 0.5"),
    ("ex2-basket-vol75", "50-d geometric call, volatility 0.75"),
    ("ex2-basket-r1", "50-d geometric call, European"),
    ("ex2-basket-r5", "50-d Bermudan geometric call, 5 exercise dates"),
    ("ex2-basket-r20", "50-d Bermudan geometric call, 20 exercise dates"),
    ("ex2-basket-r100", "50-d Bermudan geometric call, 100 exercise dates"),
    ("ex2-basket-d1", "1-d Bermudan geometric call, 100 exercise dates"),
    ("ex2-basket-d5", "5-d Bermudan geometric call, 100 exercise dates"),
    ("ex2-basket-d20", "20-d Bermudan geometric call, 100 exercise dates"),
    ("ex2-basket-d50", "50-d Bermudan geometric call, 100 exercise dates"),
    ("ex2-basket-d100", "100-d Bermudan geometric call, 100 exercise dates"),
    ("ex3-portfolio-case1", "20-d portfolio of 25 ATM European contracts"),
    ("ex3-portfolio-case2", "20-d portfolio of 25 contracts, mixed strikes, 5 exercise dates"),
    ("ex3-portfolio-case3", "20-d portfolio of 25 contracts, mixed strikes and exercise dates"),
];

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "fig1-bs-1d" => fig1(),
        "ex1-heston" => ex1(),
        "ex3-portfolio-case1" => ex3(1),
        "ex3-portfolio-case2" => ex3(2),
        "ex3-portfolio-case3" => ex3(3),
        other => match other.strip_prefix("ex2-basket-") {
            Some(variant) => ex2(variant)?,
            None => return Err(unknown(name)),
        },
    };
    Ok(ExperimentConfig { name: name.to_string(), ..cfg })
}

fn unknown(name: &str) -> Error {
    Error::Config(format!("unknown preset {name:?}; run `presets list`"))
}

fn base(portfolio: PortfolioSpec, grid_steps: usize, hedges: Vec<HedgePlan>) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        name: String::new(),
        seed: 0,
        portfolio,
        grid_steps,
        train: TrainConfig::default(),
        greeks: GreeksMode::Solver,
        instrument_solvers: Vec::new(),
        hedges,
        evaluation: Evaluation::default(),
        output_dir: None,
    }
}

fn plan(label: Option<&str>, strategy: Strategy, rebalances: &[usize], index_set: IndexSet, instruments: Vec<InstrumentSpec>, horizon: Horizon) -> HedgePlan {
    HedgePlan {
        label: label.map(str::to_string),
        strategy,
        rebalances: rebalances.to_vec(),
        index_set,
        instruments,
        horizon,
        lsqr: LsqrOptions::default(),
    }
}

fn fig1() -> ExperimentConfig {
    let model = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0);
    let call = ContractSpec::european(Payoff::VanillaCall { strike: 100.0, asset: 0 });
    let put = InstrumentSpec::BsVanilla { option: OptionKind::Put, strike: 100.0, asset: 0, maturity: 2.0 };
    let hedges = vec![
        plan(None, Strategy::Delta, &STANDARD_REBALANCES, IndexSet::Empty, Vec::new(), Horizon::Maturity),
        plan(None, Strategy::DeltaGamma, &STANDARD_REBALANCES, IndexSet::Diagonal, vec![put], Horizon::Maturity),
    ];
    base(PortfolioSpec { model, maturity: 1.0, contracts: vec![call] }, 100, hedges)
}

fn ex1() -> ExperimentConfig {
    let params = HestonParams { kappa: 5.0, nu_bar: 0.16, rho: 0.1, eta: 0.9 };
    let model = ModelSpec::heston(10.0, 0.0625, 0.1, 0.0, 0.1, params);
    let put = |strike: f64| Payoff::VanillaPut { strike, asset: 0 };
    let portfolio = PortfolioSpec { model: model.clone(), maturity: 0.25, contracts: vec![ContractSpec::bermudan(put(10.0), 10)] };
    // (name, maturity, strike, grid) of the vega, gamma, vomma and vanna instruments.
    let table = [("vega", 0.3, 10.0, 60), ("gamma", 0.4, 10.0, 80), ("vomma", 0.3, 9.0, 60), ("vanna", 0.25, 11.0, 60)];
    let instrument_solvers = table
        .iter()
        .map(|&(name, maturity, strike, grid_steps)| InstrumentSolver {
            name: name.to_string(),
            portfolio: PortfolioSpec { model: model.clone(), maturity, contracts: vec![ContractSpec::european(put(strike))] },
            grid_steps,
        })
        .collect();
    let inst: Vec<InstrumentSpec> = table
        .iter()
        .map(|&(name, maturity, ..)| InstrumentSpec::SolverPriced { artifact: PathBuf::from("instruments").join(name), maturity })
        .collect();
    let so = Strategy::DeltaVegaSecondOrder;
    let n = &HESTON_REBALANCES;
    let tau = Horizon::Tau;
    let hedges = vec![
        plan(None, Strategy::Delta, n, IndexSet::Empty, Vec::new(), tau),
        plan(None, Strategy::DeltaVega, n, IndexSet::Empty, inst[..1].to_vec(), tau),
        plan(Some("gamma"), so, n, IndexSet::Pairs(vec![[1, 1]]), inst[..2].to_vec(), tau),
        plan(Some("gamma-vomma"), so, n, IndexSet::Pairs(vec![[1, 1], [2, 2]]), inst[..3].to_vec(), tau),
        plan(Some("gamma-vomma-vanna"), so, n, IndexSet::Full, inst, tau),
    ];
    ExperimentConfig { instrument_solvers, ..base(portfolio, 50, hedges) }
}

/// Diagonal puts at `strike` and cross exchange calls, all maturing at `maturity`,
/// ordered like the upper-triangular index set.
pub fn basket_instruments(d: usize, strike: f64, maturity: f64) -> Vec<InstrumentSpec> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for l in i..d {
            out.push(if i == l {
                InstrumentSpec::BsVanilla { option: OptionKind::Put, strike, asset: i, maturity }
            } else {
                InstrumentSpec::Margrabe { ratio: 1.0, long: i, short: l, maturity }
            });
        }
    }
    out
}

fn first_and_second_order(d: usize, strike: f64, maturity: f64, horizon: Horizon) -> Vec<HedgePlan> {
    vec![
        plan(None, Strategy::Delta, &STANDARD_REBALANCES, IndexSet::Empty, Vec::new(), horizon),
        plan(None, Strategy::DeltaGamma, &STANDARD_REBALANCES, IndexSet::Upper, basket_instruments(d, strike, maturity), horizon),
    ]
}

/// Geometric basket call on `d` assets.
pub fn basket_portfolio(d: usize, strike: f64, sigma: f64, exercise_count: usize) -> PortfolioSpec {
    let model = ModelSpec::black_scholes_uniform(d, 100.0, 0.05, sigma, 0.02, 0.0, 0.75);
    let contract = ContractSpec::bermudan(ContractSpec::geometric_call(strike), exercise_count);
    PortfolioSpec { model, maturity: 2.0, contracts: vec![contract] }
}

fn ex2(variant: &str) -> Result<ExperimentConfig> {
    let (d, strike, sigma, r) = match variant {
        "k90" => (50, 90.0, 0.25, 1),
        "k100" | "vol25" | "r1" => (50, 100.0, 0.25, 1),
        "k110" => (50, 110.0, 0.25, 1),
        "vol50" => (50, 100.0, 0.5, 1),
        "vol75" => (50, 100.0, 0.75, 1),
        "r5" => (50, 100.0, 0.25, 5),
        "r20" => (50, 100.0, 0.25, 20),
        "r100" | "d50" => (50, 100.0, 0.25, 100),
        "d1" => (1, 100.0, 0.25, 100),
        "d5" => (5, 100.0, 0.25, 100),
        "d20" => (20, 100.0, 0.25, 100),
        "d100" => (100, 100.0, 0.25, 100),
        _ => return Err(unknown(&format!("ex2-basket-{variant}"))),
    };
    Ok(base(basket_portfolio(d, strike, sigma, r), 100, first_and_second_order(d, strike, 4.0, Horizon::Tau)))
}

/// The 25-contract portfolio on 20 assets in one of its three versions.
pub fn portfolio_case(case: u8) -> PortfolioSpec {
    let d = 20;
    let mu: Vec<f64> = (0..d).map(|i| 0.2 - 0.01 * i as f64).collect();
    let sigma: Vec<f64> = (0..d).map(|i| [0.4, 0.25, 0.2, 0.15, 0.1][i % 5]).collect();
    let model = ModelSpec { mu_bar: mu, sigma_bar: sigma, ..ModelSpec::black_scholes_uniform(d, 100.0, 0.0, 0.25, 0.0, 0.04, 0.25) };
    let atm = case == 1;
    let k = |mixed: f64| if atm { 100.0 } else { mixed };
    let (low, high): (Vec<usize>, Vec<usize>) = ((0..d / 2).collect(), (d / 2..d).collect());
    let mut payoffs = vec![
        ContractSpec::geometric_put(k(100.0)),
        Payoff::ArithmeticPutOnSubset { strike: k(120.0), assets: low },
        Payoff::CallOnMax { strike: k(80.0), assets: high.clone() },
        Payoff::CashOrNothing { lower: 50.0, upper: 150.0 },
        Payoff::PutOnMin { strike: k(50.0), assets: high },
    ];
    payoffs.extend((0..d).map(|asset| Payoff::VanillaCall { strike: k(150.0), asset }));
    const CASE3: [usize; 25] = [20, 5, 2, 1, 10, 5, 5, 10, 10, 100, 100, 100, 100, 100, 100, 2, 20, 20, 20, 100, 100, 100, 100, 100, 100];
    let contracts = payoffs
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            let r = match case {
                1 => 1,
                2 => 5,
                _ => CASE3[j],
            };
            ContractSpec::bermudan(p, r)
        })
        .collect();
    PortfolioSpec { model, maturity: 1.0, contracts }
}

fn ex3(case: u8) -> ExperimentConfig {
    base(portfolio_case(case), 100, first_and_second_order(20, 100.0, 2.0, Horizon::Maturity))
}
