//! Domain types shared across the toolkit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Program level of a TLC cell, `0..=7`. Level 0 is the erased state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ProgramLevel(u8);

impl ProgramLevel {
    pub const COUNT: usize = 8;
    pub const ERASED: ProgramLevel = ProgramLevel(0);
    pub const MAX: ProgramLevel = ProgramLevel(7);

    pub fn new(value: u8) -> Result<Self> {
        if (value as usize) < Self::COUNT {
            Ok(ProgramLevel(value))
        } else {
            Err(Error::LevelOutOfRange(value as u32))
        }
    }

    /// # Panics
    /// If `value > 7`.
    pub const fn from_index(value: usize) -> Self {
        assert!(value < Self::COUNT, "program level out of range");
        ProgramLevel(value as u8)
    }

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ProgramLevel> + Clone {
        (0..Self::COUNT as u8).map(ProgramLevel)
    }
}

impl TryFrom<u8> for ProgramLevel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        ProgramLevel::new(v)
    }
}

impl From<ProgramLevel> for u8 {
    fn from(l: ProgramLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for ProgramLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Quantized soft read voltage: a 10-bit ADC bin in `0..=1023`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct VoltageLevel(u16);

impl VoltageLevel {
    pub const BIN_COUNT: usize = 1024;
    pub const MAX_BIN: u16 = 1023;

    pub fn new(bin: u16) -> Result<Self> {
        if bin <= Self::MAX_BIN {
            Ok(VoltageLevel(bin))
        } else {
            Err(Error::VoltageOutOfRange(bin as u32))
        }
    }

    /// Clamps to the ADC range and rounds half up.
    pub fn quantize(v: f64) -> Self {
        if v.is_nan() {
            return VoltageLevel(0);
        }
        let clamped = v.clamp(0.0, Self::MAX_BIN as f64);
        VoltageLevel((clamped + 0.5).floor().min(Self::MAX_BIN as f64) as u16)
    }

    #[inline]
    pub const fn bin(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for VoltageLevel {
    type Error = Error;
    fn try_from(v: u16) -> Result<Self> {
        VoltageLevel::new(v)
    }
}

impl From<VoltageLevel> for u16 {
    fn from(v: VoltageLevel) -> u16 {
        v.0
    }
}

/// Program/erase cycle count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PECycle(pub u32);

impl PECycle {
    #[inline]
    pub const fn count(self) -> u32 {
        self.0
    }
}

impl fmt::Display for PECycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Row-major 2-D array of per-cell values. Rows index wordlines, columns
/// index bitlines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellGrid<T> {
    rows: usize,
    cols: usize,
    cells: Vec<T>,
}

impl<T> CellGrid<T> {
    pub const DEFAULT_SIZE: usize = 64;

    pub fn new(rows: usize, cols: usize, cells: Vec<T>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} cells for a {rows}x{cols} grid",
                cells.len()
            )));
        }
        Ok(CellGrid { rows, cols, cells })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                cells.push(f(r, c));
            }
        }
        CellGrid { rows, cols, cells }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    #[inline]
    pub fn cells_mut(&mut self) -> &mut [T] {
        &mut self.cells
    }

    pub fn into_cells(self) -> Vec<T> {
        self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<&T> {
        if row < self.rows && col < self.cols {
            self.cells.get(row * self.cols + col)
        } else {
            None
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> CellGrid<U> {
        CellGrid {
            rows: self.rows,
            cols: self.cols,
            cells: self.cells.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> CellGrid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        CellGrid {
            rows,
            cols,
            cells: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        assert!(row < self.rows && col < self.cols, "cell ({row}, {col}) out of bounds");
        self.cells[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        assert!(row < self.rows && col < self.cols, "cell ({row}, {col}) out of bounds");
        self.cells[row * self.cols + col] = value;
    }
}

/// Pattern direction. `Wordline` patterns run along a row (left, center,
/// right); `Bitline` patterns run along a column (above, center, below).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "WL")]
    Wordline,
    #[serde(rename = "BL")]
    Bitline,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Wordline, Direction::Bitline];

    pub fn short(self) -> &'static str {
        match self {
            Direction::Wordline => "WL",
            Direction::Bitline => "BL",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WL" | "WORDLINE" => Ok(Direction::Wordline),
            "BL" | "BITLINE" => Ok(Direction::Bitline),
            _ => Err(Error::Parse(format!("unknown direction {s:?}"))),
        }
    }
}

/// Program levels of three consecutive cells along one direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeighborPattern {
    pub prev: ProgramLevel,
    pub center: ProgramLevel,
    pub next: ProgramLevel,
    pub direction: Direction,
}

impl NeighborPattern {
    /// Dense index of the `(prev, next)` pair, `prev * 8 + next`, used by
    /// pattern tables with a fixed center.
    #[inline]
    pub fn pair_index(&self) -> usize {
        self.prev.index() * ProgramLevel::COUNT + self.next.index()
    }

    /// Compact label such as `"707"`.
    pub fn label(&self) -> String {
        format!("{}{}{}", self.prev, self.center, self.next)
    }
}

impl fmt::Display for NeighborPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{} {}", self.prev, self.center, self.next, self.direction)
    }
}

/// One paired channel instance: program levels, read voltages and the P/E
/// stamp at which the read happened.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelRecord {
    pub pl: CellGrid<ProgramLevel>,
    pub vl: CellGrid<VoltageLevel>,
    pub pe: PECycle,
}

impl ChannelRecord {
    pub fn new(pl: CellGrid<ProgramLevel>, vl: CellGrid<VoltageLevel>, pe: PECycle) -> Result<Self> {
        if pl.dims() != vl.dims() {
            return Err(Error::DimensionMismatch(format!(
                "PL is {:?} but VL is {:?}",
                pl.dims(),
                vl.dims()
            )));
        }
        Ok(ChannelRecord { pl, vl, pe })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.pl.dims()
    }
}

/// A 3-bit TLC bit string, most significant bit first when rendered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TlcBits(u8);

impl TlcBits {
    pub fn new(bits: u8) -> Result<Self> {
        if bits < 8 {
            Ok(TlcBits(bits))
        } else {
            Err(Error::UnknownBits(format!("{bits:#b}")))
        }
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for TlcBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03b}", self.0)
    }
}

impl FromStr for TlcBits {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 3 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::UnknownBits(s.to_string()));
        }
        let v = u8::from_str_radix(s, 2).map_err(|_| Error::UnknownBits(s.to_string()))?;
        Ok(TlcBits(v))
    }
}

/// Bijective map from program level to its 3-bit representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelBitMapping {
    table: [u8; 8],
}

impl Default for LevelBitMapping {
    /// Gray code with level 0 as `111` and level 7 as `011`.
    fn default() -> Self {
        LevelBitMapping {
            table: [0b111, 0b110, 0b100, 0b101, 0b001, 0b000, 0b010, 0b011],
        }
    }
}

impl LevelBitMapping {
    pub fn new(table: [u8; 8]) -> Result<Self> {
        let mut seen = [false; 8];
        for &b in &table {
            if b >= 8 {
                return Err(Error::InvalidMapping(format!("{b:#b} is not a 3-bit value")));
            }
            if std::mem::replace(&mut seen[b as usize], true) {
                return Err(Error::InvalidMapping(format!("{b:03b} appears twice")));
            }
        }
        Ok(LevelBitMapping { table })
    }

    /// True when consecutive levels differ in exactly one bit.
    pub fn is_gray(&self) -> bool {
        self.table.windows(2).all(|w| (w[0] ^ w[1]).count_ones() == 1)
    }

    pub fn level_to_bits(&self, level: ProgramLevel) -> TlcBits {
        TlcBits(self.table[level.index()])
    }

    pub fn bits_to_level(&self, bits: TlcBits) -> Result<ProgramLevel> {
        self.table
            .iter()
            .position(|&b| b == bits.0)
            .map(ProgramLevel::from_index)
            .ok_or_else(|| Error::UnknownBits(bits.to_string()))
    }

    /// Parses a bit string such as `"101"` and maps it back to its level.
    pub fn parse_level(&self, bits: &str) -> Result<ProgramLevel> {
        self.bits_to_level(bits.parse()?)
    }
}

/// Seven strictly ascending hard-read thresholds; entry `k` separates level
/// `k` from level `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u16>", into = "Vec<u16>")]
pub struct ThresholdSet {
    thresholds: [VoltageLevel; 7],
}

impl ThresholdSet {
    pub fn new(bins: [u16; 7]) -> Result<Self> {
        let mut thresholds = [VoltageLevel::default(); 7];
        for (slot, &b) in thresholds.iter_mut().zip(&bins) {
            *slot = VoltageLevel::new(b)?;
        }
        if !bins.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "thresholds must be strictly increasing: {bins:?}"
            )));
        }
        Ok(ThresholdSet { thresholds })
    }

    /// Rounds real-valued boundaries to bins (half up).
    pub fn from_voltages(v: [f64; 7]) -> Result<Self> {
        let mut bins = [0u16; 7];
        for (b, &x) in bins.iter_mut().zip(&v) {
            *b = VoltageLevel::quantize(x).bin();
        }
        Self::new(bins)
    }

    /// Threshold between `level` and `level + 1`.
    #[inline]
    pub fn between(&self, level: usize) -> u16 {
        self.thresholds[level].bin()
    }

    pub fn bins(&self) -> [u16; 7] {
        self.thresholds.map(|t| t.bin())
    }

    /// Whether a cell programmed to `level` that reads `vl` is a level error.
    /// Reads equal to a threshold count as correct.
    #[inline]
    pub fn is_error(&self, level: ProgramLevel, vl: VoltageLevel) -> bool {
        let k = level.index();
        let v = vl.bin();
        (k > 0 && v < self.between(k - 1)) || (k < 7 && v > self.between(k))
    }

    /// Hard-decision level for a read voltage.
    pub fn hard_read(&self, vl: VoltageLevel) -> ProgramLevel {
        let v = vl.bin();
        let k = self.thresholds.iter().take_while(|t| v > t.bin()).count();
        ProgramLevel::from_index(k)
    }
}

impl TryFrom<Vec<u16>> for ThresholdSet {
    type Error = Error;
    fn try_from(v: Vec<u16>) -> Result<Self> {
        let arr: [u16; 7] = v
            .try_into()
            .map_err(|v: Vec<u16>| Error::InvalidParameter(format!("expected 7 thresholds, got {}", v.len())))?;
        ThresholdSet::new(arr)
    }
}

impl From<ThresholdSet> for Vec<u16> {
    fn from(t: ThresholdSet) -> Vec<u16> {
        t.bins().to_vec()
    }
}

/// Counts over voltage bins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(bin_count: usize) -> Self {
        Histogram {
            counts: vec![0; bin_count],
            total: 0,
        }
    }

    /// Histogram over the full 1024-bin voltage range.
    pub fn voltage() -> Self {
        Self::new(VoltageLevel::BIN_COUNT)
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Histogram { counts, total }
    }

    #[inline]
    pub fn add(&mut self, bin: usize) {
        self.counts[bin] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.counts.len() != other.counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} bins",
                self.counts.len(),
                other.counts.len()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    #[inline]
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Relative frequencies; all zeros when the histogram is empty.
    pub fn normalized(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Sample mean and standard deviation of the bin index.
    pub fn moments(&self) -> Option<(f64, f64)> {
        if self.total == 0 {
            return None;
        }
        let t = self.total as f64;
        let mean = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| i as f64 * c as f64)
            .sum::<f64>()
            / t;
        let var = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 - mean).powi(2) * c as f64)
            .sum::<f64>()
            / t;
        Some((mean, var.sqrt()))
    }
}
