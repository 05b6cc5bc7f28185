use flashchan::eval::{
    build_report, count_level_errors, estimate_pdf, ici_error_frequencies, rank_correlation_top_k, spearman,
    top_pattern_share, total_variation, total_variation_probs, PatternFrequencyTable, Source,
};
use flashchan::rng::{derive_seed, CounterRng};
use flashchan::sim::{program_pseudorandom, simulate_block, simulate_read, ChannelParams};
use flashchan::stats::{fit_level_distribution, Family, FitRecord, FitReport};
use flashchan::{CellGrid, ChannelRecord, Direction, Histogram, PECycle, ProgramLevel, ThresholdSet, VoltageLevel};
use proptest::prelude::*;
use rand::RngCore;

fn level(k: usize) -> ProgramLevel {
    ProgramLevel::from_index(k)
}

fn random_pair(seed: u64, rows: usize, cols: usize) -> (CellGrid<ProgramLevel>, CellGrid<VoltageLevel>) {
    let pl = program_pseudorandom(seed, rows, cols);
    let vl = simulate_read(&pl, PECycle(10_000), &ChannelParams::default(), seed.wrapping_add(1));
    (pl, vl)
}

#[test]
fn pdf_of_constant_grid() {
    let rec = ChannelRecord::new(
        CellGrid::filled(64, 64, level(3)),
        CellGrid::filled(64, 64, VoltageLevel::new(500).unwrap()),
        PECycle(4000),
    )
    .unwrap();
    let h = estimate_pdf(std::slice::from_ref(&rec), level(3), PECycle(4000));
    assert_eq!(h.total(), 4096);
    assert_eq!(h.occupied_bins(), 1);
    assert_eq!(h.counts()[500], 4096);
    assert_eq!(estimate_pdf(&[rec.clone()], level(2), PECycle(4000)).total(), 0);
    assert_eq!(estimate_pdf(&[rec], level(3), PECycle(7000)).total(), 0);
}

#[test]
fn tv_examples() {
    let p = Histogram::from_counts(vec![2, 2, 0]);
    let q = Histogram::from_counts(vec![1, 1, 2]);
    assert!((total_variation(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(total_variation(&p, &p).unwrap(), 0.0);
    let r = Histogram::from_counts(vec![0, 0, 7]);
    assert_eq!(total_variation(&p, &r).unwrap(), 1.0);
    assert!(total_variation(&p, &Histogram::new(3)).is_err());
}

#[test]
fn threshold_boundary_is_correct_read() {
    let th = ChannelParams::default().default_thresholds().unwrap();
    let pl = CellGrid::filled(1, 3, level(1));
    let vl = CellGrid::new(
        1,
        3,
        vec![
            VoltageLevel::new(th.between(0)).unwrap(),
            VoltageLevel::new(th.between(0) - 1).unwrap(),
            VoltageLevel::new(th.between(1) + 1).unwrap(),
        ],
    )
    .unwrap();
    let t = count_level_errors(&pl, &vl, &th).unwrap();
    assert_eq!(t.errors[1], 2);
    assert_eq!(t.cells[1], 3);
}

#[test]
fn noiseless_channel_has_no_errors() {
    let mut p = ChannelParams::default();
    p.coupling = flashchan::sim::IciCoupling::none();
    for lp in &mut p.level {
        lp.sigma = 1e-9;
        lp.alpha = 1e12;
        lp.beta = 1e12;
        lp.wear = flashchan::sim::WearLaw::NONE;
    }
    let th = ThresholdSet::from_voltages(std::array::from_fn(|k| 0.5 * (p.level[k].mu + p.level[k + 1].mu))).unwrap();
    let (pl, vl) = simulate_block(4, 0, 64, 64, PECycle(10_000), &p);
    let t = count_level_errors(&pl, &vl, &th).unwrap();
    assert_eq!(t.errors, [0; 8]);
}

#[test]
fn single_707_error() {
    let th = ChannelParams::default().default_thresholds().unwrap();
    let mut pl = CellGrid::filled(5, 5, level(3));
    let mut vl = CellGrid::filled(5, 5, VoltageLevel::new(th.between(2) + 5).unwrap());
    pl.set(2, 2, level(0));
    pl.set(1, 2, level(7));
    pl.set(3, 2, level(7));
    vl.set(2, 2, VoltageLevel::new(th.between(0) + 1).unwrap());
    // an erased cell reading low is not an ICI error
    pl.set(0, 0, level(0));
    vl.set(0, 0, VoltageLevel::new(10).unwrap());
    let t = ici_error_frequencies(&pl, &vl, &th, Direction::Bitline).unwrap();
    assert_eq!(t.total_errors, 1);
    assert_eq!(t.frequency(7, 7), 1.0);
    assert_eq!(t.argmax().unwrap().label(), "707");
    assert_eq!(top_pattern_share(&t, 1), 1.0);
    let empty = ici_error_frequencies(&pl, &CellGrid::filled(5, 5, VoltageLevel::new(0).unwrap()), &th, Direction::Wordline).unwrap();
    assert_eq!(empty.total_errors, 0);
    assert!(empty.argmax().is_none());
}

#[test]
fn top_share_examples() {
    let mut t = PatternFrequencyTable::new(Direction::Wordline);
    t.counts[5] = 6;
    t.counts[9] = 4;
    t.total_errors = 10;
    assert!((top_pattern_share(&t, 1) - 0.6).abs() < 1e-15);
    assert!((top_pattern_share(&t, 64) - 1.0).abs() < 1e-15);
    assert!((top_pattern_share(&t, 1000) - 1.0).abs() < 1e-15);
}

#[test]
fn spearman_examples() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    // ties take the average rank
    let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!((r - 0.948_683_298).abs() < 1e-8, "{r}");
}

fn naive_levels(pl: &CellGrid<ProgramLevel>, vl: &CellGrid<VoltageLevel>, th: &ThresholdSet) -> ([u64; 8], [u64; 8]) {
    let t = th.bins();
    let mut errors = [0; 8];
    let mut cells = [0; 8];
    for r in 0..pl.rows() {
        for c in 0..pl.cols() {
            let k = pl.get(r, c).unwrap().index();
            let v = vl.get(r, c).unwrap().bin();
            cells[k] += 1;
            let low = k > 0 && v < t[k - 1];
            let high = k < 7 && v > t[k];
            if low || high {
                errors[k] += 1;
            }
        }
    }
    (errors, cells)
}

fn naive_patterns(pl: &CellGrid<ProgramLevel>, vl: &CellGrid<VoltageLevel>, th: &ThresholdSet, bl: bool) -> [u64; 64] {
    let mut out = [0; 64];
    let (rows, cols) = (pl.rows() as isize, pl.cols() as isize);
    for r in 0..rows {
        for c in 0..cols {
            let (a, b) = if bl { ((r - 1, c), (r + 1, c)) } else { ((r, c - 1), (r, c + 1)) };
            let inside = |(x, y): (isize, isize)| x >= 0 && y >= 0 && x < rows && y < cols;
            if !inside(a) || !inside(b) {
                continue;
            }
            let lv = |(x, y): (isize, isize)| pl.get(x as usize, y as usize).unwrap().index();
            if lv((r, c)) == 0 && vl.get(r as usize, c as usize).unwrap().bin() > th.bins()[0] {
                out[lv(a) * 8 + lv(b)] += 1;
            }
        }
    }
    out
}

#[test]
fn metrics_match_naive_scans_on_100_grids() {
    let th = ChannelParams::default().default_thresholds().unwrap();
    for i in 0..100u64 {
        let seed = derive_seed(2024, &[i]);
        let rows = 8 + (seed % 40) as usize;
        let cols = 8 + ((seed >> 8) % 40) as usize;
        let (pl, vl) = random_pair(seed, rows, cols);
        let t = count_level_errors(&pl, &vl, &th).unwrap();
        assert_eq!((t.errors, t.cells), naive_levels(&pl, &vl, &th));
        for (dir, bl) in [(Direction::Bitline, true), (Direction::Wordline, false)] {
            let f = ici_error_frequencies(&pl, &vl, &th, dir).unwrap();
            let naive = naive_patterns(&pl, &vl, &th, bl);
            assert_eq!(f.counts, naive.to_vec());
            assert_eq!(f.total_errors, naive.iter().sum::<u64>());
            if f.total_errors > 0 {
                assert!((f.frequencies().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let rec = ChannelRecord::new(pl.clone(), vl.clone(), PECycle(10_000)).unwrap();
        for k in 0..8 {
            let h = estimate_pdf(std::slice::from_ref(&rec), level(k), PECycle(10_000));
            let mut naive = vec![0u64; 1024];
            for (l, v) in pl.cells().iter().zip(vl.cells()) {
                if l.index() == k {
                    naive[v.bin() as usize] += 1;
                }
            }
            assert_eq!(h.counts(), &naive[..]);
            assert_eq!(h.total(), naive.iter().sum::<u64>());
        }
    }
}

fn random_hist(seed: u64, bins: usize) -> Vec<f64> {
    let mut s = CounterRng::new(seed, 77).stream(0);
    let mut v: Vec<f64> = (0..bins)
        .map(|_| if s.next_u32() % 3 == 0 { 0.0 } else { (s.next_u32() % 100) as f64 })
        .collect();
    v[0] += 1.0;
    let t: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= t);
    v
}

#[test]
fn tv_metric_axioms_on_1000_triples() {
    for i in 0..1000u64 {
        let bins = 2 + (i % 30) as usize;
        let (p, q, r) = (random_hist(3 * i, bins), random_hist(3 * i + 1, bins), random_hist(3 * i + 2, bins));
        let pq = total_variation_probs(&p, &q).unwrap();
        let qp = total_variation_probs(&q, &p).unwrap();
        let pr = total_variation_probs(&p, &r).unwrap();
        let rq = total_variation_probs(&r, &q).unwrap();
        assert_eq!(pq, qp);
        assert!((0.0..=1.0).contains(&pq));
        assert!(pq <= pr + rq + 1e-12);
        assert_eq!(total_variation_probs(&p, &p).unwrap(), 0.0);
        if p != q {
            assert!(pq > 0.0);
        }
    }
}

#[test]
fn calibrated_ici_statistics_at_7000() {
    let p = ChannelParams::default();
    let th = p.default_thresholds().unwrap();
    let mut bl = PatternFrequencyTable::new(Direction::Bitline);
    let mut wl = PatternFrequencyTable::new(Direction::Wordline);
    // 10^7 cells
    for b in 0..153 {
        let (pl, vl) = simulate_block(7, b, 256, 256, PECycle(7000), &p);
        bl.merge(&ici_error_frequencies(&pl, &vl, &th, Direction::Bitline).unwrap()).unwrap();
        wl.merge(&ici_error_frequencies(&pl, &vl, &th, Direction::Wordline).unwrap()).unwrap();
    }
    assert_eq!(bl.argmax().unwrap().label(), "707");
    let share = top_pattern_share(&bl, 23);
    assert!((0.55..=0.85).contains(&share), "{share}");
    assert!(wl.total_errors > 0);
}

fn tiny_dataset(seed: u64, stamps: &[u32], n: u64) -> Vec<ChannelRecord> {
    let p = ChannelParams::default();
    let mut out = Vec::new();
    for &pe in stamps {
        for b in 0..n {
            let (pl, vl) = simulate_block(seed, b, 64, 64, PECycle(pe), &p);
            out.push(ChannelRecord::new(pl, vl, PECycle(pe)).unwrap());
        }
    }
    out
}

fn fits_for(records: &[ChannelRecord], stamps: &[u32]) -> FitReport {
    let mut report = FitReport::default();
    for &pe in stamps {
        for k in 1..8u8 {
            let h = estimate_pdf(records, level(k as usize), PECycle(pe));
            for fam in Family::ALL {
                let out = fit_level_distribution::<f64>(&h, fam);
                report.fit.push(FitRecord::from_outcome(k, pe, fam, h.total(), &out));
            }
        }
    }
    report
}

#[test]
fn self_comparison_report() {
    let stamps = [4000, 7000, 10_000];
    let data = tiny_dataset(1, &stamps, 6);
    let fits = fits_for(&data, &stamps);
    let th = ChannelParams::default().default_thresholds().unwrap();
    let pes: Vec<PECycle> = stamps.iter().map(|&s| PECycle(s)).collect();
    let rep = build_report(&data, &data, &fits, &th, &pes).unwrap();
    assert_eq!(rep.pdf.len(), 7 * 3 * 5);
    assert_eq!(rep.dtv.len(), 21);
    assert!(rep.dtv.iter().all(|r| r.generated == 0.0));
    let oracle_ref = rep.errors_of(Source::Oracle).find(|r| r.pe == 4000).unwrap();
    assert_eq!(oracle_ref.normalized, Some(1.0));
    let gen_ref = rep.errors_of(Source::Generated).find(|r| r.pe == 4000).unwrap();
    assert_eq!(gen_ref.normalized, Some(1.0));
    assert!(rep.dtv.iter().all(|r| r.normal_laplace.is_some()));
    let row = rep.ici_of(Source::Generated, 7000, Direction::Bitline).unwrap();
    let r = row.spearman_top9.unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");
    assert_eq!(rank_correlation_top_k(&PatternFrequencyTable::new(Direction::Bitline), &PatternFrequencyTable::new(Direction::Bitline), 9), None);
    assert!(rep.headline().contains("0.0000"));

    let dir = tempfile::tempdir().unwrap();
    rep.write_dir(dir.path()).unwrap();
    for f in ["report.toml", "pdf.csv", "errors.csv", "ici.csv", "dtv.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = flashchan::eval::Report::from_toml(&std::fs::read_to_string(dir.path().join("report.toml")).unwrap()).unwrap();
    assert_eq!(back.dtv, rep.dtv);
    assert_eq!(back.pdf, rep.pdf);
    let ici = std::fs::read_to_string(dir.path().join("ici.csv")).unwrap();
    assert_eq!(ici.lines().count(), 1 + 2 * 3 * 2 * 64);

    let missing = tiny_dataset(1, &[4000], 1);
    assert!(matches!(
        build_report(&data, &missing, &fits, &th, &pes),
        Err(flashchan::Error::StampMismatch(_))
    ));
}

proptest! {
    #[test]
    fn tv_is_symmetric_and_bounded(a in prop::collection::vec(0u64..50, 1..40), seed in any::<u64>()) {
        let mut b = a.clone();
        let mut s = CounterRng::new(seed, 1).stream(0);
        for x in &mut b { *x = s.next_u64() % 50; }
        let (ha, hb) = (Histogram::from_counts(a), Histogram::from_counts(b));
        if ha.total() > 0 && hb.total() > 0 {
            let d = total_variation(&ha, &hb).unwrap();
            prop_assert_eq!(d, total_variation(&hb, &ha).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn pattern_tables_have_unit_mass(seed in any::<u64>()) {
        let th = ChannelParams::default().default_thresholds().unwrap();
        let (pl, vl) = random_pair(seed, 20, 20);
        for dir in Direction::BOTH {
            let t = ici_error_frequencies(&pl, &vl, &th, dir).unwrap();
            prop_assert!(t.counts.iter().filter(|&&c| c > 0).count() <= 64);
            if t.total_errors > 0 {
                prop_assert!((t.frequencies().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
