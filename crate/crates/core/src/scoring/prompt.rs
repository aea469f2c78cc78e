use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::scoring::QuestionId;

const PREAMBLE: &str = "The following text is an excerpt from a company's earnings call transcripts. \
You are a finance expert. Based on this text only, please answer the following question.";

const INSTRUCTIONS: &str = "There are five choices: Increase substantially, increase, no change, \
decrease, and decrease substantially. Please select one of the above five choices for each question \
and provide a one-sentence explanation of your choice for each question. The format for the answer \
to each question should be \"choice - explanation.\" If no relevant information is provided related \
to the question, answer \"no information is provided.\"";

pub fn question_sentence(q: QuestionId) -> String {
    format!("Over the next quarter, how does the firm anticipate a change in {}?", q.clause())
}

/// One question per prompt; the chunk text follows the instructions after a blank line.
pub fn build_prompt(q: QuestionId, chunk: &Chunk) -> Result<String> {
    if chunk.text.trim().is_empty() {
        return Err(Error::invalid(format!("chunk {} of call `{}` is empty", chunk.index, chunk.call_id)));
    }
    Ok(format!("{PREAMBLE} {} {INSTRUCTIONS}\n\n{}", question_sentence(q), chunk.text))
}
