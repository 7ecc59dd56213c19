//! Renders one prompt per mode with a built-in task template.
//!
//! cargo run --example prompts

use synthrr::prompt::Shots;
use synthrr::{render_prompt, IclPair, PromptMode, SeedExample, TaskTemplates};

fn main() -> synthrr::Result<()> {
    let t = TaskTemplates::builtin("ag_news")?;
    println!("built-in tasks: {}", TaskTemplates::builtin_names().collect::<Vec<_>>().join(", "));

    let pairs = [IclPair {
        doc_text: "The chipmaker reported record quarterly revenue on strong demand.".into(),
        exemplar_text: "Chipmaker posts record revenue".into(),
        label: "Business".into(),
    }];
    let seeds = [SeedExample {
        id: "s0".into(),
        text: "Rates held steady as inflation cools".into(),
        label: "Business".into(),
    }];
    let doc = "Shares of the airline jumped after it raised its full-year forecast.";

    for (mode, doc, shots) in [
        (PromptMode::Retricl, Some(doc), Shots::Icl(&pairs)),
        (PromptMode::NonRetricl, Some(doc), Shots::Seeds(&seeds)),
        (PromptMode::Fewgen, None, Shots::Seeds(&seeds)),
    ] {
        let prompt = render_prompt(mode, t.template(mode), &t.verbalizer, "Business", doc, shots)?;
        println!("===== {mode} =====\n{prompt}\n");
    }
    Ok(())
}
