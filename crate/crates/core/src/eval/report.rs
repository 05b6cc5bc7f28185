use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{rank_correlation_top_k, top_pattern_share, total_variation_probs, StampStats};
use crate::error::{Error, Result};
use crate::stats::{discretize, Family, FitReport};
use crate::types::{ChannelRecord, Direction, PECycle, ProgramLevel, ThresholdSet, VoltageLevel};

/// Where a distribution in the report comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Oracle,
    Generated,
    Gaussian,
    NormalLaplace,
    StudentT,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Oracle,
        Source::Generated,
        Source::Gaussian,
        Source::NormalLaplace,
        Source::StudentT,
    ];

    fn family(self) -> Option<Family> {
        match self {
            Source::Gaussian => Some(Family::Gaussian),
            Source::NormalLaplace => Some(Family::NormalLaplace),
            Source::StudentT => Some(Family::StudentT),
            _ => None,
        }
    }
}

/// One conditional PDF: summary in the report, full curve in `pdf.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdfRow {
    pub level: u8,
    pub pe: u32,
    pub source: Source,
    /// Cells behind an empirical curve; zero for fitted models.
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    /// Total variation distance to the oracle curve at the same level and stamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtv_oracle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub source: Source,
    pub pe: u32,
    pub errors: Vec<u64>,
    pub cells: Vec<u64>,
    /// Errors over levels 1–7.
    pub total_errors: u64,
    pub error_rate: f64,
    /// Error rate relative to the oracle's rate at the reference stamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IciRow {
    pub source: Source,
    pub pe: u32,
    pub direction: Direction,
    pub total_errors: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax: Option<String>,
    pub top9_share: f64,
    pub top23_share: f64,
    /// Rank correlation with the oracle over the oracle's nine most frequent
    /// patterns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_top9: Option<f64>,
}

/// Distances to the oracle PDF for one level and stamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtvRow {
    pub level: u8,
    pub pe: u32,
    pub generated: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_laplace: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_t: Option<f64>,
}

/// Oracle drift between the first and last stamp at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtvReference {
    pub level: u8,
    pub from_pe: u32,
    pub to_pe: u32,
    pub oracle: f64,
}

#[derive(Clone, Debug, Serialize)]
struct CurvePoint {
    level: u8,
    pe: u32,
    source: Source,
    bin: u16,
    probability: f64,
}

#[derive(Clone, Debug, Serialize)]
struct DtvPoint {
    level: u8,
    pe: u32,
    generated: f64,
    gaussian: Option<f64>,
    normal_laplace: Option<f64>,
    student_t: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct ErrorPoint {
    source: Source,
    pe: u32,
    level: u8,
    errors: u64,
    cells: u64,
}

#[derive(Clone, Debug, Serialize)]
struct PatternPoint {
    source: Source,
    pe: u32,
    direction: Direction,
    pattern: String,
    count: u64,
    frequency: f64,
}

/// The evaluation report. The TOML document holds the `pdf`, `errors`, `ici`
/// and `dtv` sections; [`Report::write_dir`] adds one CSV per section with
/// plot data.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub stamps: Vec<u32>,
    pub reference_pe: u32,
    pub thresholds: Vec<u16>,
    pub pdf: Vec<PdfRow>,
    pub errors: Vec<ErrorRow>,
    pub ici: Vec<IciRow>,
    pub dtv: Vec<DtvRow>,
    pub dtv_reference: Vec<DtvReference>,
    #[serde(skip)]
    curves: Vec<(u8, u32, Source, Vec<f64>)>,
    #[serde(skip)]
    patterns: Vec<PatternPoint>,
}

fn moments(p: &[f64]) -> (f64, f64) {
    let mean = p.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>();
    let var = p.iter().enumerate().map(|(i, w)| (i as f64 - mean).powi(2) * w).sum::<f64>();
    (mean, var.sqrt())
}

/// Compares oracle and generated records at `stamps` against each other and
/// against the fitted families. The first stamp is the normalization
/// reference for error rates.
pub fn build_report(
    oracle: &[ChannelRecord],
    generated: &[ChannelRecord],
    fits: &FitReport,
    th: &ThresholdSet,
    stamps: &[PECycle],
) -> Result<Report> {
    if stamps.is_empty() {
        return Err(Error::StampMismatch("no stamps requested".into()));
    }
    let ors = StampStats::collect(oracle, stamps, th)?;
    let gen = StampStats::collect(generated, stamps, th)?;
    for (o, g) in ors.iter().zip(&gen) {
        if o.records == 0 || g.records == 0 {
            return Err(Error::StampMismatch(format!(
                "stamp {} has {} oracle and {} generated records",
                o.pe, o.records, g.records
            )));
        }
    }

    let mut rep = Report {
        stamps: stamps.iter().map(|s| s.0).collect(),
        reference_pe: stamps[0].0,
        thresholds: th.bins().to_vec(),
        ..Default::default()
    };

    for (o, g) in ors.iter().zip(&gen) {
        let pe = o.pe.0;
        for level in 1..ProgramLevel::COUNT as u8 {
            let k = level as usize;
            let oracle_p = o.pdf[k].normalized();
            let mut row = DtvRow {
                level,
                pe,
                generated: 0.0,
                gaussian: None,
                normal_laplace: None,
                student_t: None,
            };
            for source in Source::ALL {
                let (curve, samples) = match source {
                    Source::Oracle => (Some(oracle_p.clone()), o.pdf[k].total()),
                    Source::Generated => (Some(g.pdf[k].normalized()), g.pdf[k].total()),
                    s => {
                        let fam = s.family().expect("fitted source");
                        let params = fits.find(level, pe, fam).and_then(|r| r.params());
                        (params.map(|p| discretize(&p, VoltageLevel::BIN_COUNT)), 0)
                    }
                };
                let empirical_empty = samples == 0 && source.family().is_none();
                let curve = curve.filter(|_| !empirical_empty);
                let dtv = match &curve {
                    Some(c) if o.pdf[k].total() > 0 => Some(total_variation_probs(&oracle_p, c)?),
                    _ => None,
                };
                let mom = curve.as_deref().map(moments);
                match source {
                    Source::Generated => row.generated = dtv.unwrap_or(1.0),
                    Source::Gaussian => row.gaussian = dtv,
                    Source::NormalLaplace => row.normal_laplace = dtv,
                    Source::StudentT => row.student_t = dtv,
                    Source::Oracle => {}
                }
                rep.pdf.push(PdfRow {
                    level,
                    pe,
                    source,
                    samples,
                    mean: mom.map(|m| m.0),
                    std: mom.map(|m| m.1),
                    dtv_oracle: dtv,
                });
                if let Some(c) = curve {
                    rep.curves.push((level, pe, source, c));
                }
            }
            rep.dtv.push(row);
        }
    }

    let (first, last) = (&ors[0], &ors[ors.len() - 1]);
    for level in 1..ProgramLevel::COUNT as u8 {
        let k = level as usize;
        let d = if first.pdf[k].total() > 0 && last.pdf[k].total() > 0 {
            total_variation_probs(&first.pdf[k].normalized(), &last.pdf[k].normalized())?
        } else {
            0.0
        };
        rep.dtv_reference.push(DtvReference {
            level,
            from_pe: first.pe.0,
            to_pe: last.pe.0,
            oracle: d,
        });
    }

    let ref_rate = ors[0].errors.error_rate();
    for (source, stats) in [(Source::Oracle, &ors), (Source::Generated, &gen)] {
        for (s, o) in stats.iter().zip(&ors) {
            let e = &s.errors;
            rep.errors.push(ErrorRow {
                source,
                pe: s.pe.0,
                errors: e.errors.to_vec(),
                cells: e.cells.to_vec(),
                total_errors: e.total_errors(),
                error_rate: e.error_rate(),
                normalized: (ref_rate > 0.0).then(|| e.error_rate() / ref_rate),
            });
            for direction in Direction::BOTH {
                let t = s.table(direction);
                let f = t.frequencies();
                rep.ici.push(IciRow {
                    source,
                    pe: s.pe.0,
                    direction,
                    total_errors: t.total_errors,
                    argmax: t.argmax().map(|p| p.label()),
                    top9_share: top_pattern_share(t, 9),
                    top23_share: top_pattern_share(t, 23),
                    spearman_top9: rank_correlation_top_k(o.table(direction), t, 9),
                });
                for (i, &count) in t.counts.iter().enumerate() {
                    rep.patterns.push(PatternPoint {
                        source,
                        pe: s.pe.0,
                        direction,
                        pattern: t.pattern(i).label(),
                        count,
                        frequency: f[i],
                    });
                }
            }
        }
    }
    Ok(rep)
}

impl Report {
    pub fn dtv_at(&self, level: u8, pe: u32) -> Option<&DtvRow> {
        self.dtv.iter().find(|r| r.level == level && r.pe == pe)
    }

    pub fn errors_of(&self, source: Source) -> impl Iterator<Item = &ErrorRow> {
        self.errors.iter().filter(move |r| r.source == source)
    }

    pub fn ici_of(&self, source: Source, pe: u32, direction: Direction) -> Option<&IciRow> {
        self.ici
            .iter()
            .find(|r| r.source == source && r.pe == pe && r.direction == direction)
    }

    /// One-line summary of the headline distances.
    pub fn headline(&self) -> String {
        let worst = self
            .dtv
            .iter()
            .max_by(|a, b| a.generated.total_cmp(&b.generated));
        let drift = self
            .dtv_reference
            .iter()
            .map(|r| r.oracle)
            .fold(f64::INFINITY, f64::min);
        match worst {
            Some(w) => format!(
                "max d_TV(generated, oracle) = {:.4} (level {}, pe {}); min oracle drift d_TV({}, {}) = {:.4}",
                w.generated,
                w.level,
                w.pe,
                self.stamps.first().copied().unwrap_or(0),
                self.stamps.last().copied().unwrap_or(0),
                drift
            ),
            None => "empty report".into(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    /// Writes `report.toml`, `pdf.csv`, `errors.csv`, `ici.csv` and `dtv.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::write(dir.join("report.toml"), self.to_toml()?)?;

        let mut w = csv::Writer::from_path(dir.join("pdf.csv"))?;
        for (level, pe, source, curve) in &self.curves {
            for (bin, &probability) in curve.iter().enumerate() {
                w.serialize(CurvePoint {
                    level: *level,
                    pe: *pe,
                    source: *source,
                    bin: bin as u16,
                    probability,
                })?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
        for row in &self.errors {
            for level in 0..ProgramLevel::COUNT {
                w.serialize(ErrorPoint {
                    source: row.source,
                    pe: row.pe,
                    level: level as u8,
                    errors: row.errors[level],
                    cells: row.cells[level],
                })?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("ici.csv"))?;
        for p in &self.patterns {
            w.serialize(p)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("dtv.csv"))?;
        for r in &self.dtv {
            w.serialize(DtvPoint {
                level: r.level,
                pe: r.pe,
                generated: r.generated,
                gaussian: r.gaussian,
                normal_laplace: r.normal_laplace,
                student_t: r.student_t,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
