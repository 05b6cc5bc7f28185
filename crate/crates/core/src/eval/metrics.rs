use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::is_interior;
use crate::types::{
    CellGrid, ChannelRecord, Direction, Histogram, NeighborPattern, PECycle, ProgramLevel, ThresholdSet,
    VoltageLevel,
};

/// Histogram of read voltages over cells programmed to `level` in records
/// stamped `pe`. No matching cell gives an empty histogram.
pub fn estimate_pdf(records: &[ChannelRecord], level: ProgramLevel, pe: PECycle) -> Histogram {
    let mut h = Histogram::voltage();
    for rec in records.iter().filter(|r| r.pe == pe) {
        for (l, v) in rec.pl.cells().iter().zip(rec.vl.cells()) {
            if *l == level {
                h.add(v.bin() as usize);
            }
        }
    }
    h
}

/// Half the ℓ1 distance between two probability vectors.
pub fn total_variation_probs(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} bins", p.len(), q.len())));
    }
    let d = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}

/// Total variation distance between two normalized histograms.
pub fn total_variation(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.total() == 0 || q.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    total_variation_probs(&p.normalized(), &q.normalized())
}

fn check_shapes(pl: &CellGrid<ProgramLevel>, vl: &CellGrid<VoltageLevel>) -> Result<()> {
    if pl.dims() != vl.dims() {
        return Err(Error::DimensionMismatch(format!(
            "program grid {:?} vs voltage grid {:?}",
            pl.dims(),
            vl.dims()
        )));
    }
    Ok(())
}

/// Per-level hard-read error counts under fixed thresholds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelErrorTable {
    pub pe: u32,
    pub errors: [u64; 8],
    /// Cells programmed to each level; the normalization base for rates.
    pub cells: [u64; 8],
}

impl LevelErrorTable {
    pub fn new(pe: PECycle) -> Self {
        LevelErrorTable {
            pe: pe.0,
            ..Default::default()
        }
    }

    pub fn merge(&mut self, other: &LevelErrorTable) {
        for k in 0..8 {
            self.errors[k] += other.errors[k];
            self.cells[k] += other.cells[k];
        }
    }

    /// Errors stacked over levels 1–7.
    pub fn total_errors(&self) -> u64 {
        self.errors[1..].iter().sum()
    }

    pub fn total_cells(&self) -> u64 {
        self.cells[1..].iter().sum()
    }

    /// Errors over levels 1–7 per cell of those levels.
    pub fn error_rate(&self) -> f64 {
        match self.total_cells() {
            0 => 0.0,
            n => self.total_errors() as f64 / n as f64,
        }
    }
}

/// Counts cells whose read falls outside their level's threshold window.
/// A read equal to a threshold is correct.
pub fn count_level_errors(pl: &CellGrid<ProgramLevel>, vl: &CellGrid<VoltageLevel>, th: &ThresholdSet) -> Result<LevelErrorTable> {
    check_shapes(pl, vl)?;
    let mut t = LevelErrorTable::default();
    for (&l, &v) in pl.cells().iter().zip(vl.cells()) {
        let k = l.index();
        t.cells[k] += 1;
        t.errors[k] += th.is_error(l, v) as u64;
    }
    Ok(t)
}

/// Neighbor-pair counts around erased victims that read above the first
/// threshold, for one direction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFrequencyTable {
    pub direction: Direction,
    /// Indexed by `prev * 8 + next`.
    pub counts: Vec<u64>,
    pub total_errors: u64,
}

impl PatternFrequencyTable {
    pub const PATTERNS: usize = 64;

    pub fn new(direction: Direction) -> Self {
        PatternFrequencyTable {
            direction,
            counts: vec![0; Self::PATTERNS],
            total_errors: 0,
        }
    }

    pub fn merge(&mut self, other: &PatternFrequencyTable) -> Result<()> {
        if self.direction != other.direction {
            return Err(Error::InvalidParameter("merging tables of different directions".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_errors += other.total_errors;
        Ok(())
    }

    pub fn pattern(&self, index: usize) -> NeighborPattern {
        NeighborPattern {
            prev: ProgramLevel::from_index(index / 8),
            center: ProgramLevel::from_index(0),
            next: ProgramLevel::from_index(index % 8),
            direction: self.direction,
        }
    }

    /// Relative frequencies; all zeros when there are no errors.
    pub fn frequencies(&self) -> Vec<f64> {
        if self.total_errors == 0 {
            return vec![0.0; Self::PATTERNS];
        }
        let t = self.total_errors as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn frequency(&self, prev: usize, next: usize) -> f64 {
        match self.total_errors {
            0 => 0.0,
            t => self.counts[prev * 8 + next] as f64 / t as f64,
        }
    }

    /// Pattern indices by decreasing count, ties by index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..Self::PATTERNS).collect();
        idx.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        idx
    }

    /// Most frequent pattern, if any error was seen.
    pub fn argmax(&self) -> Option<NeighborPattern> {
        (self.total_errors > 0).then(|| self.pattern(self.ranked()[0]))
    }
}

/// Tallies the neighbor pairs of interior level-0 cells reading above the
/// first threshold. Cells without both neighbors in `direction` are skipped.
pub fn ici_error_frequencies(
    pl: &CellGrid<ProgramLevel>,
    vl: &CellGrid<VoltageLevel>,
    th: &ThresholdSet,
    direction: Direction,
) -> Result<PatternFrequencyTable> {
    check_shapes(pl, vl)?;
    let (rows, cols) = pl.dims();
    let (dr, dc) = crate::grid::step(direction);
    let (dr, dc) = (dr as usize, dc as usize);
    let first = th.between(0);
    let mut t = PatternFrequencyTable::new(direction);
    for r in 0..rows {
        for c in 0..cols {
            if pl.at(r, c).index() != 0 || vl.at(r, c).bin() <= first || !is_interior(rows, cols, r, c, direction) {
                continue;
            }
            let prev = pl.at(r - dr, c - dc).index();
            let next = pl.at(r + dr, c + dc).index();
            t.counts[prev * 8 + next] += 1;
            t.total_errors += 1;
        }
    }
    Ok(t)
}

/// Combined mass of the `k` most frequent patterns; `k` is clamped to 64.
pub fn top_pattern_share(table: &PatternFrequencyTable, k: usize) -> f64 {
    let f = table.frequencies();
    table.ranked().iter().take(k.min(PatternFrequencyTable::PATTERNS)).map(|&i| f[i]).sum()
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman correlation of two tables' frequencies over the reference
/// table's `k` most frequent patterns.
pub fn rank_correlation_top_k(reference: &PatternFrequencyTable, other: &PatternFrequencyTable, k: usize) -> Option<f64> {
    let (fr, fo) = (reference.frequencies(), other.frequencies());
    let top: Vec<usize> = reference.ranked().into_iter().take(k).collect();
    let a: Vec<f64> = top.iter().map(|&i| fr[i]).collect();
    let b: Vec<f64> = top.iter().map(|&i| fo[i]).collect();
    spearman(&a, &b)
}

/// Everything the report needs from one set of records at one stamp,
/// gathered in a single pass.
#[derive(Clone, Debug)]
pub struct StampStats {
    pub pe: PECycle,
    pub records: usize,
    pub pdf: Vec<Histogram>,
    pub errors: LevelErrorTable,
    pub wl: PatternFrequencyTable,
    pub bl: PatternFrequencyTable,
}

impl StampStats {
    pub fn new(pe: PECycle) -> Self {
        StampStats {
            pe,
            records: 0,
            pdf: vec![Histogram::voltage(); ProgramLevel::COUNT],
            errors: LevelErrorTable::new(pe),
            wl: PatternFrequencyTable::new(Direction::Wordline),
            bl: PatternFrequencyTable::new(Direction::Bitline),
        }
    }

    pub fn add(&mut self, rec: &ChannelRecord, th: &ThresholdSet) -> Result<()> {
        if rec.pe != self.pe {
            return Err(Error::StampMismatch(format!("record at {} added to {} statistics", rec.pe, self.pe)));
        }
        for (l, v) in rec.pl.cells().iter().zip(rec.vl.cells()) {
            self.pdf[l.index()].add(v.bin() as usize);
        }
        self.errors.merge(&count_level_errors(&rec.pl, &rec.vl, th)?);
        self.wl.merge(&ici_error_frequencies(&rec.pl, &rec.vl, th, Direction::Wordline)?)?;
        self.bl.merge(&ici_error_frequencies(&rec.pl, &rec.vl, th, Direction::Bitline)?)?;
        self.records += 1;
        Ok(())
    }

    /// Statistics for each stamp in `stamps`; records at other stamps are
    /// ignored.
    pub fn collect(records: &[ChannelRecord], stamps: &[PECycle], th: &ThresholdSet) -> Result<Vec<StampStats>> {
        let mut out: Vec<StampStats> = stamps.iter().map(|&pe| StampStats::new(pe)).collect();
        for rec in records {
            if let Some(s) = out.iter_mut().find(|s| s.pe == rec.pe) {
                s.add(rec, th)?;
            }
        }
        Ok(out)
    }

    pub fn table(&self, direction: Direction) -> &PatternFrequencyTable {
        match direction {
            Direction::Wordline => &self.wl,
            Direction::Bitline => &self.bl,
        }
    }
}
