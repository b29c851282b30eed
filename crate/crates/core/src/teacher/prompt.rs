use serde::{Deserialize, Serialize};

use crate::data::{format_tuples, AnnotatedExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "zero_shot" | "zero-shot" => Ok(PromptMode::ZeroShot),
            "few" | "few_shot" | "few-shot" => Ok(PromptMode::FewShot),
            other => Err(Error::ConfigInvalid(format!("unknown prompt mode {other:?}"))),
        }
    }
}

pub const TASK_DESCRIPTION: &str = "[Task Description]
You are a sentence splitting expert. You will be provided with a review sentence and a few [aspect, category, sentiment, opinion] quadruplets from that review sentence. Here is the definition of each element in the quadruplet:
- The ‘aspect’ refers to a specific feature, attribute, or aspect of a product or service that a user may express an opinion about. The aspect term might be ‘null’ for an implicit aspect.
- The ‘opinion’ refers to the sentiment or attitude expressed by a user towards a particular aspect or feature of a product or service. The opinion term might be ‘null’ for an implicit opinion.
- The ‘category’ refers to the category that the aspect belongs to (e.g. food quality, restaurant general, etc.).
- The ‘sentiment’ refers to the sentiment class of the aspect (e.g. positive, negative, neutral).

You need to split the sentence into shorter sentences such that each short sentence contains one aspect term. When splitting, sentences connected by conjunctions must be divided into individual sentences along with their conjunctions. This process must specify the subject in every sentence. This process must retain the existing spellings exactly as in the original sentence. This process must also retain the existing spacings exactly as in the original sentence. If the sentence is too short to split or does not need to be split, use the original sentence as is. No numbering, line breaks, or explanations are needed.
";

const ORIGINAL: &str = "Original sentence: ";
const QUADS: &str = "Quadruplets: ";
const SPLIT: &str = "Split sentence:";

fn push_block(out: &mut String, example: &AnnotatedExample, split: Option<&str>) {
    out.push_str(ORIGINAL);
    out.push_str(&example.text);
    out.push_str("\n\n");
    out.push_str(QUADS);
    out.push_str(&format_tuples(example, false));
    out.push_str("\n\n");
    out.push_str(SPLIT);
    if let Some(split) = split {
        out.push(' ');
        out.push_str(split);
        out.push_str("\n\n");
    }
}

/// Builds the teacher prompt. Both modes end with the target sentence and
/// its gold tuples; few-shot inserts numbered demonstrations first.
pub fn render_prompt(mode: PromptMode, example: &AnnotatedExample, demos: &[(AnnotatedExample, String)]) -> Result<String> {
    let mut out = String::from(TASK_DESCRIPTION);
    out.push('\n');
    if mode == PromptMode::FewShot {
        if demos.is_empty() {
            return Err(Error::MissingDemos);
        }
        for (i, (demo, split)) in demos.iter().enumerate() {
            out.push_str(&format!("[Example {}]\n", i + 1));
            push_block(&mut out, demo, Some(split));
        }
        out.push_str("[Target]\n");
    }
    push_block(&mut out, example, None);
    Ok(out)
}

/// Recovers the target sentence from a rendered prompt.
pub fn target_sentence(prompt: &str) -> Option<&str> {
    let block = prompt.rsplit_once(ORIGINAL)?.1;
    block.lines().next()
}
