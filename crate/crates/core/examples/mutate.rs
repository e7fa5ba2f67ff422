//! Classical and field-aware mutations of the message that drives a state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statefuzz::harness::{toy_tlv, Executor, ToyTlv};
use statefuzz::mutation::{mutate, MutationConfig, MutationPlan};
use statefuzz::scheduler::split_regions;

fn main() {
    let grammar = toy_tlv::ground_truth_grammar();
    let mut seed = toy_tlv::reference_seeds().remove(0);

    // regions come from the states the seed visits, so run it first
    let mut exec = Executor::new(Box::new(ToyTlv::new()), vec![0]);
    seed.state_seq = exec.run(&seed.messages).state_seq;
    let target_state = seed.state_seq[0].clone();
    let regions = split_regions(&seed, &target_state).unwrap();
    println!(
        "state {target_state}: prefix {:?} target {:?} suffix {:?}",
        regions.prefix, regions.target, regions.suffix
    );

    let plan = MutationPlan::new(regions, Some(&grammar));
    let cfg = MutationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..6 {
        let (child, kind) = mutate(&seed, &plan, &cfg, &mut rng);
        let m = &child.messages[plan.regions.target.start.min(child.messages.len() - 1)];
        println!("{kind:?}: {}", hex::encode(&m.bytes()[..m.len().min(16)]));
    }
}
