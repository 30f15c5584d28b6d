use cirlt::config::{ExperimentConfig, Tag};
use cirlt::io::{fmt_f64, table_csv};
use proptest::prelude::*;

proptest! {
    #[test]
    fn float_text_roundtrips_bitwise(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), bits);
    }

    #[test]
    fn csv_cells_survive_a_read(values in prop::collection::vec(-1e300f64..1e300, 1..50)) {
        let rows: Vec<Vec<String>> = values.iter().map(|&v| vec![fmt_f64(v)]).collect();
        let bytes = table_csv(&["x"], &rows).unwrap();
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let back: Vec<f64> = r.records().map(|rec| rec.unwrap()[0].parse().unwrap()).collect();
        prop_assert_eq!(back, values);
    }

    #[test]
    fn config_json_roundtrips(tag_ix in 0usize..Tag::ALL.len(), seed in any::<u64>(), steps in 1usize..1_000_000) {
        let mut c = ExperimentConfig::default_for(Tag::ALL[tag_ix]);
        c.seed = seed;
        c.grid.steps = steps;
        prop_assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
