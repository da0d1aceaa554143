//! The plain-text model format: parse, lint, and write back with rate
//! constants preserved verbatim.
//!
//! ```text
//! cargo run --release --example model_files
//! ```

use tauhybrid::model_file::{model_hash, parse};

fn main() {
    let text = "\
# two-species toy model with one explicit-polynomial channel
species A = 50
species B = 10
reaction A -> B @ 0.250
reaction 2 B -> A @ 1e-3
reaction [ -1 0 ] @ 0.02 A B
time 2.0
observable 1 A + 2 B
";
    let parsed = parse(text).unwrap();
    let model = &parsed.model;
    println!(
        "parsed {} species, {} reactions, T = {}, hash {}",
        model.network.num_species(),
        model.network.num_reactions(),
        model.t_final,
        &model_hash(text)[..12]
    );
    let x = [5, 4];
    println!("propensities at {:?}: {:?}", x, model.network.propensities(&x));
    match model.network.validate(&model.x0, true) {
        Ok(notes) if notes.is_empty() => println!("lints: clean"),
        Ok(notes) => {
            for n in notes {
                println!("lint: {n}");
            }
        }
        Err(e) => println!("validation error: {e}"),
    }
    println!();
    println!("written back (rates verbatim):");
    print!("{}", parsed.to_text());
}
