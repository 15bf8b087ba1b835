use gridedge::dataio::{
    clean, impute, read_csv, split, CleanAction, Dataset, Target, DEFAULT_MAX_GAP,
};
use gridedge::synth::{self, SynthConfig};

fn month(cfg: &SynthConfig) -> Dataset {
    let mut buf = Vec::new();
    synth::write_csv(&mut buf, cfg).unwrap();
    read_csv(buf.as_slice(), &synth::schema(cfg.capacity)).unwrap()
}

fn violations(d: &Dataset) -> usize {
    let mut count = 0;
    for rec in &d.records {
        for (j, v) in rec.values.iter().enumerate() {
            let (lo, hi) = d.schema.bounds(j);
            if let Some(v) = v {
                if lo.is_some_and(|lo| *v < lo) || hi.is_some_and(|hi| *v > hi) {
                    count += 1;
                }
            }
        }
    }
    count
}

#[test]
fn generated_month_is_clean_and_ordered() {
    let d = month(&SynthConfig::default());
    assert_eq!(d.len(), 30 * 96);
    assert!(d
        .records
        .windows(2)
        .all(|w| w[0].timestamp < w[1].timestamp));
    let (cleaned, log) = clean(&d);
    assert!(log.is_empty(), "{:?}", &log[..log.len().min(3)]);
    assert_eq!(cleaned, d);
}

#[test]
fn corrupted_cells_are_all_removed() {
    let d = month(&SynthConfig {
        corrupt_fraction: 0.05,
        seed: 7,
        ..SynthConfig::default()
    });
    let before = violations(&d);
    // 8 of 13 columns are bounded; expect roughly 5% of those cells
    let bounded_cells = 8 * d.len();
    assert!(
        before as f64 > 0.03 * bounded_cells as f64,
        "only {before} corrupted cells"
    );
    let (cleaned, log) = clean(&d);
    assert_eq!(violations(&cleaned), 0);
    let rejected = log
        .iter()
        .filter(|a| matches!(a, CleanAction::CellRejected { .. }))
        .count();
    assert_eq!(rejected, before);
    let (again, log2) = clean(&cleaned);
    assert_eq!(again, cleaned);
    assert!(log2.is_empty());
}

#[test]
fn imputation_stays_between_neighbours() {
    let d = month(&SynthConfig {
        missing_fraction: 0.03,
        seed: 11,
        ..SynthConfig::default()
    });
    let filled = impute(&d, DEFAULT_MAX_GAP);
    let n = d.len();
    let mut n_filled = 0;
    for j in 0..d.schema.columns.len() {
        let col: Vec<Option<f64>> = d.records.iter().map(|r| r.values[j]).collect();
        let out: Vec<Option<f64>> = filled.records.iter().map(|r| r.values[j]).collect();
        for i in 0..n {
            match (col[i], out[i]) {
                (Some(a), b) => assert_eq!(Some(a), b, "observed cell changed at row {i}"),
                (None, Some(v)) => {
                    n_filled += 1;
                    let left = (0..i).rev().find(|&k| col[k].is_some()).unwrap();
                    let right = (i + 1..n).find(|&k| col[k].is_some()).unwrap();
                    assert!(right - left - 1 <= DEFAULT_MAX_GAP);
                    let (a, b) = (col[left].unwrap(), col[right].unwrap());
                    assert!(
                        v >= a.min(b) && v <= a.max(b),
                        "row {i}: {v} outside [{a}, {b}]"
                    );
                }
                (None, None) => {
                    let left = (0..i).rev().find(|&k| col[k].is_some());
                    let right = (i + 1..n).find(|&k| col[k].is_some());
                    if let (Some(l), Some(r)) = (left, right) {
                        assert!(
                            r - l - 1 > DEFAULT_MAX_GAP,
                            "fillable gap left open at row {i}"
                        );
                    }
                }
            }
        }
    }
    assert!(n_filled > 500);
}

#[test]
fn chronological_split_partitions_rows() {
    let d = month(&SynthConfig::default());
    let (train, test) = split(&d, 0.8).unwrap();
    assert_eq!(train.len(), 2304);
    assert_eq!(test.len(), 576);
    assert!(train.records.last().unwrap().timestamp < test.records[0].timestamp);
    let joined: Vec<_> = train.records.iter().chain(&test.records).cloned().collect();
    assert_eq!(joined, d.records);
}

#[test]
fn targets_never_leak_into_features() {
    let d = month(&SynthConfig {
        days: 2,
        ..SynthConfig::default()
    });
    let names = d.schema.feature_names();
    assert_eq!(names.len(), 12);
    assert!(!names.iter().any(|n| n == "p" || n == "q"));
    let (xp, yp) = d.matrix(Target::Active).unwrap();
    let (xq, yq) = d.matrix(Target::Reactive).unwrap();
    assert_eq!(xp, xq);
    assert_ne!(yp, yq);
    let p_col = d.column_index("p").unwrap();
    for (i, rec) in d.records.iter().enumerate() {
        assert_eq!(Some(yp[i]), rec.values[p_col]);
        assert!(!xp.row(i).contains(&yp[i]) || yp[i] == 0.0);
    }
}
