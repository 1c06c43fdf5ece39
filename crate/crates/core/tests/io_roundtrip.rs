use proxyaudit::io::{read_dataset, split_dataset, write_dataset, SplitSizes, SplitSpec};
use proxyaudit::simulate::{sample_records, SimParams};
use proxyaudit::{Error, PredictionRecord};

#[test]
fn simulated_records_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.csv");
    let mut recs = sample_records(&SimParams::default(), 500).unwrap();
    recs[3].a = None;
    recs[4].score = None;
    recs[5].a_hat = None;
    write_dataset(&path, &recs).unwrap();
    let ds = read_dataset(&path).unwrap();
    assert_eq!(ds.records, recs);
    assert_eq!(ds.file.record_count, 500);
    assert!(ds.file.has_a && ds.file.has_a_hat && ds.file.has_score);
}

#[test]
fn paper_sized_split() {
    let recs: Vec<_> = (0..2883)
        .map(|i| PredictionRecord::new(format!("{i:05}"), i % 3 == 0, i % 2 == 0).with_a_hat(i % 5 == 0))
        .collect();
    let spec = SplitSpec { sizes: SplitSizes::Counts([1500, 1133, 250]), seed: 3 };
    let parts = split_dataset(&recs, &spec).unwrap();
    assert_eq!((parts.train.len(), parts.evaluation.len(), parts.common.len()), (1500, 1133, 250));
    let mut ids: Vec<_> = parts.train.iter().chain(&parts.evaluation).chain(&parts.common).map(|r| r.id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 2883);
    assert_eq!(split_dataset(&recs, &spec).unwrap(), parts);
    let bad = SplitSpec { sizes: SplitSizes::Counts([1500, 1133, 251]), seed: 3 };
    assert!(matches!(split_dataset(&recs, &bad), Err(Error::InfeasibleSplit(_))));
}

#[test]
fn malformed_rows_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,y,y_hat,a_hat\nx1,1,0,1\nx2,1,2,0\n").unwrap();
    match read_dataset(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
}
