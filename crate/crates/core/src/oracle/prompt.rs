//! Prompt assembly.
//!
//! Every oracle query is rendered as a fixed sequence of titled sections.
//! Section order is frozen per query kind; a section with no content renders
//! the sentinel `none` rather than disappearing, so prompts for the same
//! kind always have the same shape. The deterministic provider answers from
//! the structured fields instead, but transcripts digest the prompt text, so
//! its byte-stability matters as much as its wording.

use crate::gui::ActionKind;

/// Sentinel rendered for sections with no content.
pub const SENTINEL_NONE: &str = "none";

fn assemble(sections: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (i, (title, body)) in sections.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str("## ");
        out.push_str(title);
        out.push('\n');
        let body = body.trim();
        out.push_str(if body.is_empty() { SENTINEL_NONE } else { body });
    }
    out
}

fn join_or_empty(lines: &[String]) -> String {
    lines.join("\n")
}

pub fn understanding_prompt(command: &str) -> String {
    assemble(&[
        (
            "Purpose",
            "Extract the user's intent phrase and the parameter values embedded in the \
             command. The intent phrase is the command with parameter values removed; \
             parameter values must be verbatim substrings of the command."
                .to_string(),
        ),
        ("Context", format!("Command: {command}")),
        (
            "Output template",
            "{\"intent\": \"...\", \"parameters\": {\"parameter name\": \"value\"}}".to_string(),
        ),
    ])
}

pub struct LikertPromptInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub task_knowledge: &'a [String],
    pub lessons: &'a [String],
    pub page: &'a str,
    pub action: ActionKind,
    pub candidate_text: &'a str,
    pub candidate_desc: &'a str,
    pub candidate_siblings: &'a [String],
    pub candidate_targets: &'a [String],
}

pub fn likert_prompt(inp: &LikertPromptInputs<'_>) -> String {
    let candidate = format!(
        "Action: {}\nElement text: {}\nElement description: {}\nSibling texts: {}\nReachable targets: {}",
        inp.action,
        inp.candidate_text,
        inp.candidate_desc,
        inp.candidate_siblings.join("; "),
        inp.candidate_targets.join("; "),
    );
    assemble(&[
        (
            "Purpose",
            "Rate on a 1-7 scale how much executing the candidate operation on the \
             current page would help accomplish the command."
                .to_string(),
        ),
        ("Task knowledge", join_or_empty(inp.task_knowledge)),
        ("Execution knowledge", join_or_empty(inp.lessons)),
        (
            "Context",
            format!("Command: {}\nIntent: {}", inp.command, inp.intent),
        ),
        ("Current GUI", inp.page.to_string()),
        ("Candidate operation", candidate),
        (
            "Output template",
            "A single integer between 1 and 7.".to_string(),
        ),
    ])
}

pub struct TextParameterPromptInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub task_knowledge: &'a [String],
    pub textbox_text: &'a str,
    pub textbox_desc: &'a str,
    pub parameters: &'a [(String, String)],
}

pub fn text_parameter_prompt(inp: &TextParameterPromptInputs<'_>) -> String {
    let params = inp
        .parameters
        .iter()
        .map(|(n, v)| format!("{n}: {v}"))
        .collect::<Vec<_>>();
    assemble(&[
        (
            "Purpose",
            "Choose which parameter value, if any, should be typed into the textbox. \
             Answer with the value only, or 'none' if no parameter belongs there."
                .to_string(),
        ),
        ("Task knowledge", join_or_empty(inp.task_knowledge)),
        (
            "Context",
            format!(
                "Command: {}\nIntent: {}\nKnown parameters:\n{}",
                inp.command,
                inp.intent,
                params.join("\n")
            ),
        ),
        (
            "Textbox to be edited",
            format!("Text: {}\nDescription: {}", inp.textbox_text, inp.textbox_desc),
        ),
        ("Output template", "The value to type, or none.".to_string()),
    ])
}

pub fn completeness_prompt(command: &str, intent: &str, page: &str) -> String {
    assemble(&[
        (
            "Purpose",
            "Decide whether the command has already been fully accomplished, judging \
             by the current GUI."
                .to_string(),
        ),
        ("Context", format!("Command: {command}\nIntent: {intent}")),
        ("Current GUI", page.to_string()),
        ("Output template", "yes or no.".to_string()),
    ])
}

pub struct CorrectnessPromptInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub last_op: &'a str,
    pub page_before: &'a str,
    pub page_after: &'a str,
}

pub fn correctness_prompt(inp: &CorrectnessPromptInputs<'_>) -> String {
    assemble(&[
        (
            "Purpose",
            "Decide whether the last operation kept the task on track: is the current \
             GUI still relevant to the command? If not, assign a penalty from 0 to 9 \
             (9 = an obviously better operation was available, 0 = the page was \
             already off track before the operation)."
                .to_string(),
        ),
        ("Context", format!("Command: {}\nIntent: {}", inp.command, inp.intent)),
        ("GUI before last operation", inp.page_before.to_string()),
        ("Current GUI", inp.page_after.to_string()),
        ("Last operation", inp.last_op.to_string()),
        (
            "Output template",
            "{\"correct\": true|false, \"penalty\": 0-9}".to_string(),
        ),
    ])
}

pub struct LessonPromptInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub experiences: &'a [String],
    pub erroneous_step: &'a str,
    pub ground_truth: &'a [String],
}

pub fn lesson_prompt(inp: &LessonPromptInputs<'_>) -> String {
    assemble(&[
        (
            "Purpose",
            "Write one short reusable lesson about the erroneous step, so future runs \
             avoid repeating it."
                .to_string(),
        ),
        ("Context", format!("Command: {}\nIntent: {}", inp.command, inp.intent)),
        ("Experiences", join_or_empty(inp.experiences)),
        ("Erroneous step", inp.erroneous_step.to_string()),
        ("Ground truth", join_or_empty(inp.ground_truth)),
        ("Output template", "One sentence.".to_string()),
    ])
}
