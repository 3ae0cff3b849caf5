use std::path::{Path, PathBuf};

use proptest::prelude::*;
use qta_core::backends::solve_exact_heldkarp;
use qta_core::fixtures::{data_dir, random_instance};
use qta_core::tsplib::{parse_instance, read_instance, write_instance};
use qta_core::{tour_cost, AtspInstance};

fn test_data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Numbers after EDGE_WEIGHT_SECTION, counted without the library parser.
fn count_matrix_entries(text: &str) -> usize {
    text.split("EDGE_WEIGHT_SECTION")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .take_while(|t| *t != "EOF")
        .filter(|t| t.parse::<i64>().is_ok())
        .count()
}

fn read_tour(path: &Path) -> Vec<usize> {
    let text = std::fs::read_to_string(path).unwrap();
    text.split("TOUR_SECTION")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse::<i64>().unwrap())
        .take_while(|&v| v != -1)
        .map(|v| v as usize - 1)
        .collect()
}

fn same_matrix(a: &AtspInstance, b: &AtspInstance) -> bool {
    let n = a.dimension();
    n == b.dimension() && (0..n).all(|i| (0..n).all(|j| i == j || a.cost(i, j) == b.cost(i, j)))
}

#[test]
fn br17_dimension_matches_header_and_entry_count() {
    let path = data_dir().join("br17.atsp");
    let text = std::fs::read_to_string(&path).unwrap();
    let inst = parse_instance(&text).unwrap();
    assert_eq!(inst.dimension(), 17);
    assert_eq!(count_matrix_entries(&text), 17 * 17);
    assert_eq!(inst.name(), "br17");
}

#[test]
fn br17_is_asymmetric_and_solves_to_39() {
    let inst = read_instance(data_dir().join("br17.atsp")).unwrap();
    let (i, j) = inst.asymmetry_witness().expect("br17 is asymmetric");
    assert_ne!(inst.cost(i, j), inst.cost(j, i));
    let all: Vec<usize> = (0..17).collect();
    assert_eq!(solve_exact_heldkarp(&inst, &all).unwrap().cost(), 39);
}

#[test]
fn br17_write_parse_is_a_fixed_point() {
    let inst = read_instance(data_dir().join("br17.atsp")).unwrap();
    let once = write_instance(&inst);
    let again = parse_instance(&once).unwrap();
    assert!(same_matrix(&inst, &again));
    assert_eq!(write_instance(&again), once);
}

#[test]
fn gr17_lower_diagonal_matrix_has_known_optimum() {
    let inst = read_instance(test_data("gr17.tsp")).unwrap();
    assert_eq!(inst.dimension(), 17);
    assert!(inst.asymmetry_witness().is_none());
    let all: Vec<usize> = (0..17).collect();
    assert_eq!(solve_exact_heldkarp(&inst, &all).unwrap().cost(), 2085);
}

#[test]
fn pcb442_optimal_tour_has_published_length() {
    let inst = read_instance(test_data("pcb442.tsp")).unwrap();
    let tour = read_tour(&test_data("pcb442.opt.tour"));
    assert_eq!(tour.len(), 442);
    assert_eq!(tour_cost(&inst, &tour).unwrap(), 50778);
}

#[test]
fn gr666_geographic_tour_has_published_length() {
    let inst = read_instance(test_data("gr666.tsp")).unwrap();
    let tour = read_tour(&test_data("gr666.opt.tour"));
    assert_eq!(tour.len(), 666);
    assert_eq!(tour_cost(&inst, &tour).unwrap(), 294358);
}

#[test]
fn missing_file_names_the_path() {
    let err = read_instance("/nonexistent/nowhere.atsp").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/nowhere.atsp"), "{err}");
}

#[test]
fn ten_node_random_instance_round_trips() {
    let inst = random_instance(10, 42, 0, 1000);
    let back = parse_instance(&write_instance(&inst)).unwrap();
    assert!(same_matrix(&inst, &back));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn explicit_matrices_round_trip(n in 2usize..14, seed in any::<u64>(), hi in 1i64..100_000) {
        let inst = random_instance(n, seed, 0, hi);
        let text = write_instance(&inst);
        let back = parse_instance(&text).unwrap();
        prop_assert!(same_matrix(&inst, &back));
        prop_assert_eq!(count_matrix_entries(&text), n * n);
        prop_assert_eq!(write_instance(&back), text);
    }
}
