mod common;

use std::collections::HashSet;

use mltle::data::{aggregate_median, filter_records, parse_table_reader, split_three_way, write_partition, DtaRecord};
use mltle::metrics::concordance_index;
use mltle::mol::{parse_smiles, tokenize_smiles};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn generated_smiles() -> impl Strategy<Value = (String, usize, usize)> {
    any::<u64>().prop_map(|seed| common::random_smiles(&mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #[test]
    fn cyclomatic_identity((smiles, atoms, rings) in generated_smiles()) {
        let g = parse_smiles(&smiles).unwrap();
        prop_assert_eq!(g.n_atoms(), atoms);
        prop_assert_eq!(g.ring_closures, rings);
        prop_assert_eq!(g.bonds.len() + 1, g.n_atoms() + g.ring_closures);
    }

    #[test]
    fn tokens_concatenate_to_input((smiles, _, _) in generated_smiles()) {
        let tokens = tokenize_smiles(&smiles).unwrap();
        prop_assert_eq!(tokens.concat(), smiles);
    }

    #[test]
    fn parser_is_total(s in "[CNOcn()=#\\[\\]1-9%+@./\\\\Hl]{0,24}") {
        let _ = parse_smiles(&s);
        if let Ok(tokens) = tokenize_smiles(&s) {
            prop_assert_eq!(tokens.concat(), s);
        }
    }

    #[test]
    fn ci_antisymmetry(values in prop::collection::vec((-50i32..50, -1000i32..1000), 2..60)) {
        let truth: Vec<f64> = values.iter().map(|v| v.0 as f64).collect();
        let mut seen = HashSet::new();
        let pred: Vec<f64> = values.iter().map(|v| v.1 as f64).filter(|p| seen.insert(p.to_bits())).collect();
        prop_assume!(pred.len() == truth.len());
        if let Ok(ci) = concordance_index(&truth, &pred) {
            let neg: Vec<f64> = pred.iter().map(|p| -p).collect();
            let back = concordance_index(&truth, &neg).unwrap();
            prop_assert!((ci + back - 1.0).abs() < 1e-12);
        }
    }
}

fn pipeline(table: &str, seed: u64) -> (Vec<DtaRecord>, [Vec<u8>; 3]) {
    let raw = parse_table_reader(table.as_bytes()).unwrap();
    let records = aggregate_median(&filter_records(&raw));
    let split = split_three_way(records.clone(), seed, "all", "digest").unwrap();
    let bytes = |r: &[DtaRecord]| {
        let mut out = Vec::new();
        write_partition(&mut out, r).unwrap();
        out
    };
    (records, [bytes(&split.train), bytes(&split.validation), bytes(&split.tests[0].1)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_is_deterministic_and_disjoint(table_seed in any::<u64>(), split_seed in any::<u64>()) {
        let table = common::synthetic_raw_table(120, table_seed);
        let (records, parts) = pipeline(&table, split_seed);
        let (_, again) = pipeline(&table, split_seed);
        prop_assert_eq!(&parts, &again);

        let split = split_three_way(records.clone(), split_seed, "all", "digest").unwrap();
        let pairs = |r: &[DtaRecord]| r.iter().map(|x| (x.smiles.clone(), x.protein.clone())).collect::<HashSet<_>>();
        let (a, b, c) = (pairs(&split.train), pairs(&split.validation), pairs(&split.tests[0].1));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        prop_assert_eq!(a.len() + b.len() + c.len(), records.len());

        prop_assert_eq!(aggregate_median(&records), records.clone());
        prop_assert!(records.iter().all(DtaRecord::is_valid));
    }
}
