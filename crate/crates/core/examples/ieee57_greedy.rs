//! Greedy and lazy greedy on the 57-bus system with Monte Carlo failures.
//!
//! `cargo run --release -p pmuplace --example ieee57_greedy -- 34 2000`

use std::time::Instant;

use pmuplace::prelude::*;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map_or(Ok(34), |a| a.parse()).expect("budget");
    let samples: usize = args.next().map_or(Ok(2000), |a| a.parse()).expect("sample count");

    let case = pmuplace::fixtures::ieee57();
    let model = build_susceptance(&case)?;
    let cands = enumerate_candidates(&case, &CandidateOptions::default())?;
    let info = InfoConfig {
        failure_mode: FailureMode::MonteCarlo { samples, seed: 0 },
        ..InfoConfig::default()
    };
    let spec = ObjectiveSpec::f1(InjectionProfile::nominal(&case), info);
    let objective = PlacementObjective::new(&spec, &model, cands)?;

    let t = Instant::now();
    let greedy = greedy_place(&objective, k)?;
    println!("greedy  {:?}", greedy.order);
    println!("        {:.4} nats, {} evaluations, {:.2?}", greedy.value(), greedy.evaluations, t.elapsed());

    let t = Instant::now();
    let lazy = lazy_greedy_place(&objective, k)?;
    let same = lazy.order == greedy.order && lazy.values == greedy.values;
    println!("lazy    identical: {same}, {} evaluations, {:.2?}", lazy.evaluations, t.elapsed());
    Ok(())
}
