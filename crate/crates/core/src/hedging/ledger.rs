//! Self-financing hedging ledger. Each path holds the short option
//! portfolio, `α` units of the tradeables, `β` units of the instruments and
//! a bank account. Between rebalancing dates the bank accrues interest and
//! collects dividends on the held assets; exercised contracts are settled
//! from the bank and drop out of the weights.

use std::io::Write;

use rayon::prelude::*;

use super::instruments::{Instrument, QuoteBatch};
use super::weights::{delta_weights, gamma_weights, LocalQuote, PortfolioGreeks, RowLabel};
use super::{GreekSource, HedgeConfig, Horizon, Strategy};
use crate::error::{Error, Result};
use crate::market::PathEnsemble;
use crate::solver::GreekBatch;

/// Holdings and values of one path on one rebalancing date, after settlement and rebalancing.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    /// Grid index.
    pub step: usize,
    pub t: f64,
    /// Portfolio value `P`.
    pub value: f64,
    pub bank: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub exercised: Vec<bool>,
    /// Model value of the still-active short contracts.
    pub liabilities: f64,
    pub instrument_prices: Vec<f64>,
}

/// Result of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLedger {
    /// `P` at the reporting horizon.
    pub value: f64,
    /// Time at which `value` is read.
    pub horizon_time: f64,
    /// Settlement grid index `τ^j` per contract.
    pub stopping: Vec<usize>,
    /// True when some Greek, quote or weight computation failed on this path.
    pub excluded: bool,
    /// Per-date rows, when recording was requested.
    pub rows: Vec<LedgerRow>,
}

/// Ledgers of all paths of one hedging run.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeLedger {
    pub strategy: Strategy,
    pub n_rebalance: usize,
    pub horizon: Horizon,
    pub rate: f64,
    /// Grid indices of the rebalancing dates, maturity appended.
    pub dates: Vec<usize>,
    /// Model prices `Ŷ_0` per contract.
    pub initial_prices: Vec<f64>,
    pub paths: Vec<PathLedger>,
}

impl HedgeLedger {
    pub fn excluded(&self) -> usize {
        self.paths.iter().filter(|p| p.excluded).count()
    }

    /// Finite-difference charm of the asset weights of `path` between consecutive recorded dates.
    pub fn charm(&self, path: usize) -> Vec<Vec<f64>> {
        self.paths[path]
            .rows
            .windows(2)
            .filter(|w| w[1].exercised.iter().any(|e| !e))
            .map(|w| super::charm_estimate(&w[1].alpha, &w[0].alpha, w[1].t - w[0].t))
            .collect()
    }

    /// Writes `path,step,t,P,B,alpha_1..alpha_m,beta_1..beta_K,exercised_mask`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let first = self.paths.iter().find_map(|p| p.rows.first());
        let (m, k) = first.map_or((0, 0), |r| (r.alpha.len(), r.beta.len()));
        write!(w, "path,step,t,P,B")?;
        for i in 1..=m {
            write!(w, ",alpha_{i}")?;
        }
        for i in 1..=k {
            write!(w, ",beta_{i}")?;
        }
        writeln!(w, ",exercised_mask")?;
        for (p, ledger) in self.paths.iter().enumerate() {
            for row in &ledger.rows {
                write!(w, "{p},{},{},{},{}", row.step, row.t, row.value, row.bank)?;
                for v in row.alpha.iter().chain(&row.beta) {
                    write!(w, ",{v}")?;
                }
                let mask: String = row.exercised.iter().map(|e| if *e { '1' } else { '0' }).collect();
                writeln!(w, ",{mask}")?;
            }
        }
        Ok(())
    }
}

/// Results of a batched evaluation, falling back to one state at a time
/// when the batch fails so that only the offending states are lost.
enum Evaluated<T> {
    Whole(T),
    Single(Vec<Option<T>>),
}

impl<T> Evaluated<T> {
    fn run<F>(states: &[f64], d: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<T> + Sync,
        T: Send,
    {
        match f(states) {
            Ok(v) => Evaluated::Whole(v),
            Err(_) => Evaluated::Single(states.par_chunks(d).map(|x| f(x).ok()).collect()),
        }
    }

    /// The batch holding slot `s`, and the row of `s` inside it.
    fn get(&self, s: usize) -> Option<(&T, usize)> {
        match self {
            Evaluated::Whole(v) => Some((v, s)),
            Evaluated::Single(v) => v[s].as_ref().map(|t| (t, 0)),
        }
    }
}

struct PathState {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    bank: f64,
    active: Vec<bool>,
    stopping: Vec<usize>,
    liquidated: bool,
    excluded: bool,
    value: f64,
    horizon_time: f64,
    rows: Vec<LedgerRow>,
}

/// Everything a path needs from one date's evaluations.
struct DateView<'a> {
    greeks: &'a Evaluated<GreekBatch>,
    quotes: &'a [Evaluated<QuoteBatch>],
    d: usize,
}

impl<'a> DateView<'a> {
    fn greeks(&self, s: usize) -> Option<(&'a GreekBatch, usize)> {
        let (g, i) = self.greeks.get(s)?;
        let ok = (0..g.j).all(|c| g.y[i * g.j + c].is_finite() && g.delta_row(i, c).iter().all(|v| v.is_finite()));
        ok.then_some((g, i))
    }

    fn quotes(&self, s: usize) -> Option<Vec<LocalQuote<'a>>> {
        let (d, dd) = (self.d, self.d * self.d);
        self.quotes
            .iter()
            .map(|q| {
                q.get(s).map(|(b, i)| LocalQuote {
                    price: b.price[i],
                    grad: &b.grad[i * d..(i + 1) * d],
                    hess: &b.hess[i * dd..(i + 1) * dd],
                })
            })
            .collect()
    }
}

struct Plan<'a> {
    cfg: &'a HedgeConfig,
    instruments: &'a [Instrument],
    rows: Vec<RowLabel>,
    m: usize,
    record: bool,
}

impl Plan<'_> {
    fn weights(&self, g: &GreekBatch, s: usize, active: &[bool], quotes: &[LocalQuote<'_>]) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.cfg.strategy == Strategy::Delta {
            return Some((delta_weights(g, s, active, self.m), Vec::new()));
        }
        let target = PortfolioGreeks::collect(g, s, active);
        if target.gamma.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let w = gamma_weights(&self.rows, self.instruments, quotes, &target, self.m, &self.cfg.lsqr).ok()?;
        Some((w.alpha, w.beta))
    }
}

fn holdings(alpha: &[f64], beta: &[f64], x: &[f64], quotes: &[LocalQuote<'_>]) -> f64 {
    let assets: f64 = alpha.iter().zip(x).map(|(a, s)| a * s).sum();
    let inst: f64 = beta.iter().zip(quotes).map(|(b, q)| b * q.price).sum();
    assets + inst
}

/// Runs the hedging backtest of `source`'s portfolio along every path of `paths`.
///
/// `instruments` must come from [`HedgeConfig::resolve_instruments`]. With
/// `record` set, every path keeps its per-date [`LedgerRow`]s.
pub fn run_hedge(
    cfg: &HedgeConfig,
    source: &dyn GreekSource,
    instruments: &[Instrument],
    paths: &PathEnsemble,
    record: bool,
) -> Result<HedgeLedger> {
    let grid = *source.grid();
    let model = source.model();
    let portfolio = source.portfolio();
    let (d, m, j) = (model.d(), model.m(), portfolio.j());
    if paths.grid != grid || paths.d != d {
        return Err(Error::Incompatible("hedging paths and Greek source use different grids or dimensions".into()));
    }
    if cfg.strategy.needs_gamma() && !source.has_gamma() {
        return Err(Error::Incompatible(format!(
            "strategy {} needs second-order Greeks, which this source does not provide (RDBDP artifacts carry no Γ networks)",
            cfg.strategy.as_str()
        )));
    }
    if cfg.strategy.needs_gamma() && instruments.iter().any(|i| !i.has_gamma()) {
        return Err(Error::Incompatible("a second-order strategy needs instruments with second derivatives".into()));
    }
    let expected = if cfg.strategy.uses_instruments() { cfg.instruments.len() } else { 0 };
    if instruments.len() != expected {
        return Err(Error::Config(format!("{} resolved instruments for {expected} configured", instruments.len())));
    }
    let mut dates = grid.rebalance_indices(cfg.rebalances)?;
    let steps = grid.n_steps();
    dates.push(steps);
    let initial_prices = source.initial_prices()?;
    let rate = model.r();
    let q = model.q().to_vec();
    let plan = Plan { cfg, instruments, rows: cfg.rows(d, m)?, m, record };
    let k = instruments.len();

    let mut state: Vec<PathState> = (0..paths.n_paths)
        .map(|_| PathState {
            alpha: vec![0.0; m],
            beta: vec![0.0; k],
            bank: 0.0,
            active: vec![true; j],
            stopping: vec![steps; j],
            liquidated: false,
            excluded: false,
            value: 0.0,
            horizon_time: grid.horizon(),
            rows: Vec::new(),
        })
        .collect();

    for (r, &n) in dates.iter().enumerate() {
        let t = grid.t(n);
        let live: Vec<usize> = (0..paths.n_paths).filter(|&p| !state[p].excluded && !state[p].liquidated).collect();
        let mut slot = vec![usize::MAX; paths.n_paths];
        let mut states = Vec::with_capacity(live.len() * d);
        for (s, &p) in live.iter().enumerate() {
            slot[p] = s;
            states.extend_from_slice(paths.state(p, n));
        }
        let (greeks, quotes) = if live.is_empty() {
            (Evaluated::Single(Vec::new()), Vec::new())
        } else {
            let g = Evaluated::run(&states, d, |x| source.greeks(n, x));
            let qs = instruments.iter().map(|inst| Evaluated::run(&states, d, |x| inst.quote(t, x, d))).collect();
            (g, qs)
        };
        let view = DateView { greeks: &greeks, quotes: &quotes, d };
        let prev = if r > 0 { Some((dates[r - 1], grid.t(dates[r - 1]))) } else { None };

        state.par_iter_mut().enumerate().for_each(|(p, st)| {
            if st.excluded {
                return;
            }
            let x = paths.state(p, n);
            if let Some((n_prev, t_prev)) = prev {
                let dtau = t - t_prev;
                let x_prev = paths.state(p, n_prev);
                let dividends: f64 = (0..m).map(|i| st.alpha[i] * q[i] * x_prev[i] * dtau).sum();
                st.bank = st.bank * (rate * dtau).exp() + dividends;
            }
            if st.liquidated {
                if cfg.horizon == Horizon::Maturity {
                    st.value = st.bank;
                    st.horizon_time = t;
                }
                if plan.record {
                    push_row(st, n, t, 0.0, Vec::new());
                }
                return;
            }
            let s = slot[p];
            let (Some((g, i)), Some(local)) = (view.greeks(s), view.quotes(s)) else {
                st.excluded = true;
                return;
            };
            if r > 0 {
                for (c, contract) in portfolio.contracts.iter().enumerate() {
                    if !st.active[c] {
                        continue;
                    }
                    let payoff = contract.payoff.value(x, m);
                    if n == steps || (contract.exercisable_at(&grid, n) && payoff > g.y_tilde[i * j + c]) {
                        st.bank -= payoff;
                        st.active[c] = false;
                        st.stopping[c] = n;
                    }
                }
            }
            let any_active = st.active.iter().any(|a| *a);
            if any_active && n < steps {
                let Some((alpha, beta)) = plan.weights(g, i, &st.active, &local) else {
                    st.excluded = true;
                    return;
                };
                let old = holdings(&st.alpha, &st.beta, x, &local);
                let new = holdings(&alpha, &beta, x, &local);
                if r == 0 {
                    st.bank = initial_prices.iter().sum::<f64>() - new;
                } else {
                    st.bank -= new - old;
                }
                st.alpha = alpha;
                st.beta = beta;
            } else if !any_active {
                st.bank += holdings(&st.alpha, &st.beta, x, &local);
                st.alpha.fill(0.0);
                st.beta.fill(0.0);
                st.liquidated = true;
                st.horizon_time = t;
            }
            let liabilities: f64 = (0..j).filter(|&c| st.active[c]).map(|c| g.y[i * j + c]).sum();
            st.value = if r == 0 { 0.0 } else { -liabilities + holdings(&st.alpha, &st.beta, x, &local) + st.bank };
            if plan.record {
                push_row(st, n, t, liabilities, local.iter().map(|lq| lq.price).collect());
            }
        });
    }

    let paths = state
        .into_iter()
        .map(|st| PathLedger {
            value: st.value,
            horizon_time: st.horizon_time,
            stopping: st.stopping,
            excluded: st.excluded,
            rows: st.rows,
        })
        .collect();
    Ok(HedgeLedger {
        strategy: cfg.strategy,
        n_rebalance: cfg.rebalances,
        horizon: cfg.horizon,
        rate,
        dates,
        initial_prices,
        paths,
    })
}

fn push_row(st: &mut PathState, step: usize, t: f64, liabilities: f64, instrument_prices: Vec<f64>) {
    let row = LedgerRow {
        step,
        t,
        value: st.value,
        bank: st.bank,
        alpha: st.alpha.clone(),
        beta: st.beta.clone(),
        exercised: st.active.iter().map(|a| !a).collect(),
        liabilities,
        instrument_prices,
    };
    st.rows.push(row);
}

/// First date `n` in `dates \ {0}` at which contract `contract` may be
/// exercised and its payoff exceeds the continuation value `Ỹ_n` along
/// path `path`; maturity when no such date exists.
pub fn stopping_time(source: &dyn GreekSource, paths: &PathEnsemble, path: usize, contract: usize, dates: &[usize]) -> Result<usize> {
    let grid = source.grid();
    let m = source.model().m();
    let spec = source
        .portfolio()
        .contracts
        .get(contract)
        .ok_or_else(|| Error::Domain(format!("no contract {contract}")))?;
    for &n in dates.iter().filter(|&&n| n > 0 && n < grid.n_steps()) {
        if !spec.exercisable_at(grid, n) {
            continue;
        }
        let x = paths.state(path, n);
        let g = source.greeks(n, x)?;
        if spec.payoff.value(x, m) > g.y_tilde[contract] {
            return Ok(n);
        }
    }
    Ok(grid.n_steps())
}
