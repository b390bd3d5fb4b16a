// Pulling forecasts out of messy model output: the last answer block wins,
// overlong answers are truncated, unmarked answers are recovered by a
// fallback scan, and short answers trigger a corrective re-prompt.
//
// `cargo run --example answer_parsing`

use std::convert::Infallible;
use std::error::Error;

use slowcast::parser::{parse_with_repair, RepairError};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let horizon = 4;
    let responses = [
        "Thinking... maybe <FORECAST>9, 9, 9, 9</FORECAST>? No, revise.\n<FORECAST>1.5, 2, 2.5, 3</FORECAST>",
        "<FORECAST>[1, 2, 3, 4, 5, 6]</FORECAST>",
        "The pattern continues, so the values are 10.1, 10.4, 10.2, 9.9 for the next steps.",
        "<FORECAST>7, 8</FORECAST>",
    ];
    for raw in responses {
        let mut reprompts = Vec::new();
        let parsed = parse_with_repair(raw, horizon, 2, |instruction: &str| {
            reprompts.push(instruction.to_string());
            Ok::<_, Infallible>("<FORECAST>7, 8, 9, 10</FORECAST>".to_string())
        });
        match parsed {
            Ok(answer) => println!(
                "{:?} repairs={:?} re-prompts={}",
                answer.values,
                answer.repairs_applied,
                reprompts.len()
            ),
            Err(RepairError::Parse(failure)) => println!("gave up: {failure}"),
            Err(RepairError::Reprompt(never)) => match never {},
        }
        if let Some(instruction) = reprompts.first() {
            println!("  corrective instruction: {instruction}");
        }
    }

    let hopeless = parse_with_repair("I cannot forecast this.", horizon, 1, |_: &str| {
        Ok::<_, Infallible>("still no numbers".to_string())
    });
    match hopeless {
        Err(RepairError::Parse(failure)) => {
            println!(
                "after {} attempts: {}",
                failure.attempts, failure.last_error
            )
        }
        other => return Err(format!("expected a parse failure, got {other:?}").into()),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
