use asap_cli::config::ModelKind;
use asap_cli::table::TrajectoryTable;
use proptest::prelude::*;

fn table(n: usize, rows: Vec<Vec<f64>>) -> TrajectoryTable {
    let mut columns = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            columns.push(format!("a_{i}_{j}"));
        }
    }
    columns.extend((1..=n).map(|i| format!("w_{i}")));
    columns.push("diag:spread".into());
    TrajectoryTable { model: ModelKind::Full, n, columns, rows }
}

fn any_bits() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits).prop_filter("NaN payloads are not preserved", |x| !x.is_nan())
}

proptest! {
    #[test]
    fn every_non_nan_float_survives_a_round_trip(
        n in 1usize..4,
        seed in prop::collection::vec(prop::collection::vec(any_bits(), 22), 1..6),
    ) {
        let width = 1 + n * n + n + 1;
        let rows: Vec<Vec<f64>> = seed.into_iter().map(|r| r[..width].to_vec()).collect();
        let original = table(n, rows);
        let text = original.to_text();
        let parsed = TrajectoryTable::read(text.as_bytes()).unwrap();
        prop_assert_eq!(parsed.columns.clone(), original.columns.clone());
        for (a, b) in parsed.rows.iter().zip(&original.rows) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(parsed.to_text(), text);
    }
}
