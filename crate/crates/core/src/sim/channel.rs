use rand::RngCore;

use super::params::{ChannelParams, IciCoupling};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, standard_normal, unit_open, CounterRng};
use crate::stats::NormalLaplaceParams;
use crate::types::{CellGrid, PECycle, ProgramLevel, VoltageLevel};

/// Uniform i.i.d. program levels, a pure function of `seed` and the cell
/// coordinates.
pub fn program_pseudorandom(seed: u64, rows: usize, cols: usize) -> CellGrid<ProgramLevel> {
    let rng = CounterRng::new(seed, domain::PROGRAM);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let mut s = rng.row_stream(r);
        for _ in 0..cols {
            cells.push(ProgramLevel::from_index((s.next_u64() >> 61) as usize));
        }
    }
    CellGrid::new(rows, cols, cells).expect("length matches")
}

/// The level's Normal-Laplace law after `pe` cycles of wear.
pub fn level_params_at(params: &ChannelParams, level: ProgramLevel, pe: PECycle) -> NormalLaplaceParams<f64> {
    let lp = &params.level[level.index()];
    let pe_ref = params.pe_ref();
    NormalLaplaceParams {
        mu: lp.mu + lp.wear.delta_mu(pe, pe_ref),
        sigma: lp.sigma + lp.wear.delta_sigma(pe, pe_ref),
        alpha: lp.alpha,
        beta: lp.beta,
    }
}

#[inline]
fn nl_from_words(p: &NormalLaplaceParams<f64>, w: [u64; 4]) -> f64 {
    let z = standard_normal(w[0], w[1]);
    let e = -unit_open(w[3]).ln();
    let lap = if unit_open(w[2]) < p.beta / (p.alpha + p.beta) {
        e / p.alpha
    } else {
        -e / p.beta
    };
    p.mu + p.sigma * z + lap
}

/// One Normal-Laplace variate; consumes four 64-bit words from `rng`.
///
/// The Laplace part is positive (rate `alpha`) with probability
/// `beta / (alpha + beta)` and negative (rate `beta`) otherwise.
pub fn sample_normal_laplace<R: RngCore + ?Sized>(p: &NormalLaplaceParams<f64>, rng: &mut R) -> f64 {
    let w = [rng.next_u64(), rng.next_u64(), rng.next_u64(), rng.next_u64()];
    nl_from_words(p, w)
}

/// Adds the neighbor interference term to `base`. Neighbors outside the grid
/// contribute nothing.
pub fn apply_ici(base: &CellGrid<f64>, pl: &CellGrid<ProgramLevel>, coupling: &IciCoupling) -> Result<CellGrid<f64>> {
    if base.dims() != pl.dims() {
        return Err(Error::DimensionMismatch(format!(
            "voltage grid {:?} vs program grid {:?}",
            base.dims(),
            pl.dims()
        )));
    }
    let (rows, cols) = pl.dims();
    let f = |r: usize, c: usize| coupling.f(pl.at(r, c));
    Ok(CellGrid::from_fn(rows, cols, |r, c| {
        let mut bl = 0.0;
        if r > 0 {
            bl += f(r - 1, c);
        }
        if r + 1 < rows {
            bl += f(r + 1, c);
        }
        let mut wl = 0.0;
        if c > 0 {
            wl += f(r, c - 1);
        }
        if c + 1 < cols {
            wl += f(r, c + 1);
        }
        base.at(r, c) + coupling.gamma_bl * bl + coupling.gamma_wl * wl
    }))
}

/// Unquantized read voltages: per-cell wear-adjusted draws plus interference.
pub fn simulate_voltages(
    pl: &CellGrid<ProgramLevel>,
    pe: PECycle,
    params: &ChannelParams,
    seed: u64,
) -> CellGrid<f64> {
    let laws: Vec<_> = ProgramLevel::all().map(|l| level_params_at(params, l, pe)).collect();
    let rng = CounterRng::new(seed, domain::READ_NOISE);
    let (rows, cols) = pl.dims();
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let mut s = rng.row_stream(r);
        for c in 0..cols {
            cells.push(sample_normal_laplace(&laws[pl.at(r, c).index()], &mut s));
        }
    }
    let base = CellGrid::new(rows, cols, cells).expect("length matches");
    apply_ici(&base, pl, &params.coupling).expect("same dimensions")
}

/// Simulated read: [`simulate_voltages`], then clamped to the ADC range and
/// rounded half up to bins.
pub fn simulate_read(
    pl: &CellGrid<ProgramLevel>,
    pe: PECycle,
    params: &ChannelParams,
    seed: u64,
) -> CellGrid<VoltageLevel> {
    simulate_voltages(pl, pe, params, seed).map(|&v| VoltageLevel::quantize(v))
}

/// Programs and reads one block. Block `index` under `seed` at `pe` has its
/// own program and noise seeds.
pub fn simulate_block(
    seed: u64,
    index: u64,
    rows: usize,
    cols: usize,
    pe: PECycle,
    params: &ChannelParams,
) -> (CellGrid<ProgramLevel>, CellGrid<VoltageLevel>) {
    let pl = program_pseudorandom(derive_seed(seed, &[domain::PROGRAM, index]), rows, cols);
    let vl = simulate_read(&pl, pe, params, derive_seed(seed, &[domain::READ_NOISE, pe.0 as u64, index]));
    (pl, vl)
}
