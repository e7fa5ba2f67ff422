//! Builds a state model from replayed seeds and prints it as DOT.

use statefuzz::harness::{resolve_vars, schema_for, toy_ftp, Executor, ToyFtp};
use statefuzz::StateModel;

fn main() {
    let target = ToyFtp::new();
    let vars = resolve_vars(&target, &["session_state".into()]).unwrap();
    let schema = schema_for(&target, &vars);
    let mut exec = Executor::new(Box::new(target), vars);
    let mut model = StateModel::new(exec.initial_state()).with_schema(schema);
    for seed in toy_ftp::reference_seeds() {
        let out = exec.run(&seed.messages);
        model.update(&out.state_seq);
    }
    let stats = model.stats();
    println!(
        "// {} states, {} transitions",
        stats.n_vertices, stats.n_edges
    );
    print!("{}", model.to_dot());
}
