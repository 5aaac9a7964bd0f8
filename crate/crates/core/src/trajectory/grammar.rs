//! The assistant turn grammar:
//!
//! ```text
//! ws <think> text </think> ws ( <tool_call> json </tool_call> | <answer> text </answer> ) ws
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Step, StepAction};
use crate::tools::ToolCall;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const CALL_OPEN: &str = "<tool_call>";
const CALL_CLOSE: &str = "</tool_call>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseErrorKind {
    MissingThink,
    UnclosedThink,
    MissingAction,
    UnexpectedText,
    UnclosedToolCall,
    UnclosedAnswer,
    MalformedPayload,
    MultipleToolCalls,
    MultipleActions,
    TrailingGarbage,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorKind::MissingThink => "missing-think",
            ParseErrorKind::UnclosedThink => "unclosed-think",
            ParseErrorKind::MissingAction => "missing-action",
            ParseErrorKind::UnexpectedText => "unexpected-text",
            ParseErrorKind::UnclosedToolCall => "unclosed-tool-call",
            ParseErrorKind::UnclosedAnswer => "unclosed-answer",
            ParseErrorKind::MalformedPayload => "malformed-payload",
            ParseErrorKind::MultipleToolCalls => "multiple-tool-calls",
            ParseErrorKind::MultipleActions => "multiple-actions",
            ParseErrorKind::TrailingGarbage => "trailing-garbage",
        }
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `position` is a byte offset into the raw turn.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at byte {position}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TurnAction {
    Tool(ToolCall),
    Answer(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTurn {
    pub thought: String,
    pub action: TurnAction,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, tag: &str) -> bool {
        if self.rest().starts_with(tag) {
            self.pos += tag.len();
            true
        } else {
            false
        }
    }

    /// Content up to `close`, leaving the cursor after it.
    fn until(&mut self, close: &str) -> Option<&'a str> {
        let rest = self.rest();
        let end = rest.find(close)?;
        self.pos += end + close.len();
        Some(&rest[..end])
    }

    fn fail(&self, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            position: self.pos,
            message: message.into(),
        }
    }
}

pub fn parse_assistant_turn(raw: &str) -> Result<ParsedTurn, ParseError> {
    use ParseErrorKind::*;
    let mut cur = Cursor { src: raw, pos: 0 };
    cur.skip_ws();
    if !cur.eat(THINK_OPEN) {
        return Err(cur.fail(MissingThink, "turn must start with <think>"));
    }
    let open_at = cur.pos;
    let Some(thought) = cur.until(THINK_CLOSE) else {
        cur.pos = open_at;
        return Err(cur.fail(UnclosedThink, "no </think> after <think>"));
    };
    cur.skip_ws();

    let action = if cur.eat(CALL_OPEN) {
        let payload_at = cur.pos;
        let Some(payload) = cur.until(CALL_CLOSE) else {
            return Err(cur.fail(UnclosedToolCall, "no </tool_call> after <tool_call>"));
        };
        let call: ToolCall = serde_json::from_str(payload).map_err(|e| ParseError {
            kind: MalformedPayload,
            position: payload_at,
            message: format!("tool call payload is not a {{name, arguments}} record: {e}"),
        })?;
        TurnAction::Tool(call)
    } else if cur.eat(ANSWER_OPEN) {
        let Some(answer) = cur.until(ANSWER_CLOSE) else {
            return Err(cur.fail(UnclosedAnswer, "no </answer> after <answer>"));
        };
        TurnAction::Answer(answer.to_string())
    } else if cur.rest().trim().is_empty() {
        return Err(cur.fail(MissingAction, "expected <tool_call> or <answer> after </think>"));
    } else {
        return Err(cur.fail(UnexpectedText, "only whitespace may separate </think> from the action"));
    };

    cur.skip_ws();
    let rest = cur.rest();
    if !rest.is_empty() {
        let second_call = rest.starts_with(CALL_OPEN);
        return Err(match (&action, second_call) {
            (TurnAction::Tool(_), true) => cur.fail(MultipleToolCalls, "only one <tool_call> per turn"),
            _ if second_call || rest.starts_with(ANSWER_OPEN) => {
                cur.fail(MultipleActions, "a turn carries either one tool call or one answer")
            }
            _ => cur.fail(TrailingGarbage, "unexpected text after the action"),
        });
    }
    Ok(ParsedTurn {
        thought: thought.to_string(),
        action,
    })
}

/// Canonical text of a step. Masking is metadata and does not show up.
pub fn render_turn(step: &Step) -> String {
    match &step.action {
        StepAction::Tool { call, .. } => format!(
            "{THINK_OPEN}{}{THINK_CLOSE}{CALL_OPEN}{}{CALL_CLOSE}",
            step.thought,
            call.to_json()
        ),
        StepAction::Answer(a) => {
            format!("{THINK_OPEN}{}{THINK_CLOSE}{ANSWER_OPEN}{a}{ANSWER_CLOSE}", step.thought)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Color, Sketch};
    use crate::trajectory::Observation;
    use ParseErrorKind::*;

    fn kind(raw: &str) -> ParseErrorKind {
        parse_assistant_turn(raw).unwrap_err().kind
    }

    #[test]
    fn canonical_forms() {
        let t = parse_assistant_turn(
            "<think>zoom in</think><tool_call>{\"name\":\"crop_image\",\"arguments\":{\"bbox\":[0,0,500,500]}}</tool_call>",
        )
        .unwrap();
        assert_eq!(t.thought, "zoom in");
        assert_eq!(t.action, TurnAction::Tool(ToolCall::crop_image([0.0, 0.0, 500.0, 500.0])));
        let t = parse_assistant_turn("  <think>done</think>\n<answer>270</answer>\n").unwrap();
        assert_eq!(t.action, TurnAction::Answer("270".into()));
    }

    #[test]
    fn error_kinds() {
        let call = r#"<tool_call>{"name":"crop_image","arguments":{}}</tool_call>"#;
        assert_eq!(kind(call), MissingThink);
        assert_eq!(kind("<think>abc"), UnclosedThink);
        assert_eq!(kind("<think>a</think>  "), MissingAction);
        assert_eq!(kind("<think>a</think> so <answer>1</answer>"), UnexpectedText);
        assert_eq!(kind("<think>a</think><tool_call>{}"), UnclosedToolCall);
        assert_eq!(kind("<think>a</think><answer>1"), UnclosedAnswer);
        assert_eq!(kind("<think>a</think><tool_call>{nope}</tool_call>"), MalformedPayload);
        assert_eq!(kind(&format!("<think>a</think>{call}{call}")), MultipleToolCalls);
        assert_eq!(kind(&format!("<think>a</think>{call}<answer>1</answer>")), MultipleActions);
        assert_eq!(kind("<think>a</think><answer>1</answer><answer>2</answer>"), MultipleActions);
        assert_eq!(kind("<think>a</think><answer>1</answer>ok"), TrailingGarbage);
    }

    #[test]
    fn error_position_points_at_problem() {
        let e = parse_assistant_turn("<think>a</think><answer>1</answer>xx").unwrap_err();
        assert_eq!(e.position, 34);
        let e = parse_assistant_turn("  junk").unwrap_err();
        assert_eq!(e.position, 2);
    }

    #[test]
    fn masked_render_is_identical() {
        let s = Sketch::new_blank(2, 2, Color::WHITE).unwrap();
        let mut step = Step::tool("t", ToolCall::rotate_image(90.0), Observation::Sketch(s));
        let plain = render_turn(&step);
        step.masked = true;
        assert_eq!(render_turn(&step), plain);
    }
}
