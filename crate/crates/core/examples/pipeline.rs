//! Runs every stage of the toy configuration into a scratch directory, then
//! runs again to show that unchanged stages are skipped.
//!
//! cargo run --example pipeline

use std::path::Path;

use synthrr::pipeline::Overrides;
use synthrr::{Pipeline, Stage};

fn main() -> synthrr::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy/config.toml");
    let out = std::env::temp_dir().join("synthrr-example-pipeline");
    let overrides = Overrides {
        output_dir: Some(out.clone()),
        rng_seed: None,
    };
    let pipeline = Pipeline::from_file(&config, &overrides, false)?;
    println!("plan: {:?}", pipeline.plan().iter().map(|s| s.as_str()).collect::<Vec<_>>());
    for pass in 1..=2 {
        println!("-- pass {pass}");
        for r in pipeline.run(Stage::All)? {
            println!("{:<11} {}", r.stage.as_str(), if r.skipped { "up to date" } else { "done" });
            if !r.skipped {
                for note in &r.notes {
                    println!("    {}", note.replace('\n', "\n    "));
                }
            }
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
