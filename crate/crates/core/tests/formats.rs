use insert_nco::data::{parse_cvrplib, parse_tsplib, read_dataset, write_dataset, write_tsplib, DatasetRecord};
use insert_nco::solution::CyclicSolution;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn one_based(tour: &[usize]) -> CyclicSolution {
    CyclicSolution::new(tour.iter().map(|v| v - 1).collect())
}

#[test]
fn eil51_known_optimum() {
    let inst = parse_tsplib(&fixture("eil51.tsp")).unwrap();
    assert_eq!(inst.len(), 51);
    assert_eq!(inst.name(), "eil51");
    let tour = one_based(&[
        1, 22, 8, 26, 31, 28, 3, 36, 35, 20, 2, 29, 21, 16, 50, 34, 30, 9, 49, 10, 39, 33, 45, 15, 44, 42, 40, 19, 41,
        13, 25, 14, 24, 43, 7, 23, 48, 6, 27, 51, 46, 12, 47, 18, 4, 17, 37, 5, 38, 11, 32,
    ]);
    assert_eq!(tour.tsplib_length(&inst).unwrap(), 426.0);
    // continuous length sits just below the rounded one
    let exact = tour.length(&inst).unwrap();
    assert!(exact > 420.0 && exact < 430.0, "{exact}");
}

#[test]
fn berlin52_known_optimum() {
    let inst = parse_tsplib(&fixture("berlin52.tsp")).unwrap();
    assert_eq!(inst.len(), 52);
    let tour = one_based(&[
        1, 49, 32, 45, 19, 41, 8, 9, 10, 43, 33, 51, 11, 52, 14, 13, 47, 26, 27, 28, 12, 25, 4, 6, 15, 5, 24, 48, 38,
        37, 40, 39, 36, 35, 34, 44, 46, 16, 29, 50, 20, 23, 30, 2, 7, 42, 21, 17, 3, 18, 31, 22,
    ]);
    assert_eq!(tour.tsplib_length(&inst).unwrap(), 7542.0);
}

#[test]
fn eil22_counts() {
    let inst = parse_cvrplib(&fixture("eil22.vrp")).unwrap();
    assert!(inst.is_cvrp());
    assert_eq!(inst.len(), 22);
    assert_eq!(inst.customer_count(), 21);
    assert_eq!(inst.depot(), Some(0));
    assert_eq!(inst.demand(0), 0.0);
    assert_eq!(inst.capacity(), 6000.0);
    assert!(inst.customers().all(|c| inst.demand(c) > 0.0));
}

#[test]
fn tsplib_write_parse_round_trip() {
    let inst = parse_tsplib(&fixture("eil51.tsp")).unwrap();
    let text = write_tsplib(&inst);
    let back = parse_tsplib(&text).unwrap();
    assert_eq!(back.coords(), inst.coords());
    assert_eq!(write_tsplib(&back), text);
}

#[test]
fn benchmark_instances_in_dataset_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let recs = vec![
        DatasetRecord { instance: parse_tsplib(&fixture("berlin52.tsp")).unwrap(), label: None },
        DatasetRecord { instance: parse_cvrplib(&fixture("eil22.vrp")).unwrap(), label: None },
    ];
    write_dataset(&path, &recs).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), recs);
}
