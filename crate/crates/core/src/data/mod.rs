//! Instance generation, labeling oracles, benchmark-file parsing and dataset
//! files.

mod dataset;
mod exact;
mod generate;
mod local_search;
mod tsplib;

pub use dataset::{
    read_dataset, read_instances, read_solutions, write_dataset, write_instances, write_solutions,
    DatasetRecord, SolutionRecord,
};
pub use exact::{brute_force_tsp, held_karp, HELD_KARP_MAX_NODES};
pub use generate::{default_capacity, gen_uniform_cvrp, gen_uniform_tsp};
pub use local_search::{local_search, local_search_label, LabelBudget};
pub use tsplib::{parse_cvrplib, parse_tsplib, write_tsplib};
