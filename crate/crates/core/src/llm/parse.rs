//! Turns a raw model response into `(description, program)`.
//!
//! Expected shape: a line starting with `Algorithm:` followed (anywhere
//! later) by a fenced code block. The first fenced block wins. When no
//! `Algorithm:` line exists, the first prose paragraph outside code is
//! used as the description.

use serde::{Deserialize, Serialize};

use super::program::CandidateProgram;
use crate::prompt::TaskSpec;

/// Stored descriptions keep at most this many sentences.
pub const MAX_DESCRIPTION_SENTENCES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("response contains no fenced code block")]
    NoCodeBlock,
    #[error("code block does not define `{expected}` with {arity} positional inputs ({found})")]
    WrongFunctionSignature {
        expected: String,
        arity: usize,
        found: String,
    },
    #[error("response has no algorithm description")]
    EmptyDescription,
    #[error("malformed native program: {0}")]
    InvalidNativeProgram(String),
}

impl ParseError {
    /// Short stable label used when counting failure modes.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::NoCodeBlock => "no_code_block",
            ParseError::WrongFunctionSignature { .. } => "wrong_function_signature",
            ParseError::EmptyDescription => "empty_description",
            ParseError::InvalidNativeProgram(_) => "invalid_native_program",
        }
    }
}

pub fn parse_individual(
    raw: &str,
    task: &TaskSpec,
) -> Result<(String, CandidateProgram), ParseError> {
    let (code, outside) = split_first_block(raw).ok_or(ParseError::NoCodeBlock)?;
    if code.trim().is_empty() {
        return Err(ParseError::NoCodeBlock);
    }
    let description = extract_description(&outside)
        .map(|d| truncate_sentences(&d, MAX_DESCRIPTION_SENTENCES))
        .filter(|d| !d.is_empty())
        .ok_or(ParseError::EmptyDescription)?;
    let program = match CandidateProgram::parse_native(&code) {
        Some(Ok(native)) => native,
        Some(Err(msg)) => return Err(ParseError::InvalidNativeProgram(msg)),
        None => {
            check_signature(&code, &task.function_name, task.inputs.len())?;
            CandidateProgram::GuestSource(code.trim_end().to_string())
        }
    };
    Ok((description, program))
}

/// Returns the first fenced block's body and the response's lines outside
/// any fenced block.
fn split_first_block(raw: &str) -> Option<(String, Vec<String>)> {
    let mut outside = Vec::new();
    let mut first: Option<String> = None;
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            Some(body) => {
                let closing = if trimmed.starts_with("```") {
                    true
                } else if let Some(before) = line.trim_end().strip_suffix("```") {
                    body.push(before);
                    true
                } else {
                    body.push(line);
                    false
                };
                if closing {
                    let block = current.take().unwrap_or_default().join("\n");
                    if first.is_none() {
                        first = Some(block);
                    }
                }
            }
            None => {
                let Some(rest) = trimmed.strip_prefix("```") else {
                    outside.push(line.to_string());
                    continue;
                };
                // Code never continues a prose paragraph.
                outside.push(String::new());
                if let Some(inline) = rest.strip_suffix("```") {
                    // ```scored c1=1 ...``` on one line
                    if first.is_none() {
                        first = Some(inline.trim().to_string());
                    }
                    continue;
                }
                let mut body = Vec::new();
                let looks_like_code =
                    rest.contains(char::is_whitespace) || rest.contains('=') || rest.contains('(');
                if looks_like_code {
                    body.push(rest);
                }
                current = Some(body);
            }
        }
    }
    // An unterminated fence is treated as no block at all.
    first.map(|block| (block, outside))
}

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['#', '*', '>', '-', '_'])
        .trim_start()
}

fn extract_description(lines: &[String]) -> Option<String> {
    for (i, line) in lines.iter().enumerate() {
        let stripped = strip_markup(line);
        let Some(head) = stripped.get(..10) else {
            continue;
        };
        if !head.eq_ignore_ascii_case("algorithm:") {
            continue;
        }
        let mut text = stripped[10..]
            .trim_start_matches(['*', '_'])
            .trim()
            .to_string();
        for next in &lines[i + 1..] {
            let t = next.trim();
            if t.is_empty() {
                break;
            }
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(t);
        }
        return Some(clean_description(&text));
    }
    let mut para = Vec::new();
    for line in lines {
        let t = line.trim();
        if t.is_empty() {
            if !para.is_empty() {
                break;
            }
            continue;
        }
        para.push(strip_markup(t).to_string());
    }
    if para.is_empty() {
        None
    } else {
        Some(clean_description(&para.join(" ")))
    }
}

fn clean_description(text: &str) -> String {
    let t = text.trim();
    let t = t
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .unwrap_or(t);
    t.trim_matches(|c: char| c == '*' || c == '"')
        .trim()
        .to_string()
}

/// Keeps the first `max` sentences. A sentence ends at `.`, `!` or `?`
/// followed by whitespace (so decimals like `0.5` are not split).
pub fn truncate_sentences(text: &str, max: usize) -> String {
    let mut count = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                Some((_, next)) if next.is_whitespace() => {
                    count += 1;
                    if count == max {
                        return text[..=i].trim().to_string();
                    }
                }
                _ => {}
            }
        }
    }
    text.trim().to_string()
}

/// Checks that `code` defines `name` and that it can be called with
/// exactly `arity` positional arguments (extra parameters need defaults).
fn check_signature(code: &str, name: &str, arity: usize) -> Result<(), ParseError> {
    let mut found = Vec::new();
    let mut offset = 0;
    for line in code.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim_start();
        let Some(rest) = trimmed.strip_prefix("def ") else {
            continue;
        };
        let ident: String = rest
            .trim_start()
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        if ident != name {
            found.push(ident);
            continue;
        }
        let after_def = start + (line.len() - trimmed.len()) + 4;
        let Some(open) = code[after_def..].find('(').map(|p| p + after_def) else {
            found.push(format!("{ident} (no parameter list)"));
            continue;
        };
        let params = match balanced_params(&code[open + 1..]) {
            Some(p) => p,
            None => {
                found.push(format!("{ident} (unbalanced parameter list)"));
                continue;
            }
        };
        let mut positional = 0;
        let mut required = 0;
        let mut variadic = false;
        for p in split_top_level(params) {
            let p = p.trim();
            if p.is_empty() || p == "/" || p == "*" {
                continue;
            }
            if p.starts_with("**") {
                continue;
            }
            if p.starts_with('*') {
                variadic = true;
                continue;
            }
            positional += 1;
            if !has_default(p) {
                required += 1;
            }
        }
        if required <= arity && (positional >= arity || variadic) {
            return Ok(());
        }
        found.push(format!(
            "{ident} with {required} required of {positional} positional"
        ));
    }
    Err(ParseError::WrongFunctionSignature {
        expected: name.to_string(),
        arity,
        found: if found.is_empty() {
            "no function definitions".into()
        } else {
            format!("found: {}", found.join(", "))
        },
    })
}

fn balanced_params(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' if depth == 0 => return Some(&s[..i]),
            ')' | ']' | '}' => depth = depth.checked_sub(1)?,
            _ => {}
        }
    }
    None
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut last = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[last..i]);
                last = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[last..]);
    parts
}

fn has_default(param: &str) -> bool {
    // `x: Dict[str, int] = {}` has a default; `x: int` does not.
    let mut depth = 0i32;
    for c in param.chars() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '=' if depth == 0 => return true,
            _ => {}
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::ScoredParams;

    fn task() -> TaskSpec {
        TaskSpec::tsp_next_node()
    }

    #[test]
    fn greedy_response_parses_to_guest_source() {
        let raw = "Algorithm: Select the unvisited node nearest to the current node.\n\n```python\ndef select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    next_node = min(unvisited_nodes, key=lambda j: distance_matrix[current_node][j])\n    return next_node\n```\n";
        let (desc, prog) = parse_individual(raw, &task()).unwrap();
        assert_eq!(
            desc,
            "Select the unvisited node nearest to the current node."
        );
        match prog {
            CandidateProgram::GuestSource(src) => {
                assert!(src.starts_with("def select_next_node("));
                assert!(src.ends_with("return next_node"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inline_dsl_block() {
        let raw = "Algorithm: pick nearest.\n```scored c1=1 c2=0 c3=0 c4=0 tau=inf```";
        let (desc, prog) = parse_individual(raw, &task()).unwrap();
        assert_eq!(desc, "pick nearest.");
        assert_eq!(prog, CandidateProgram::NativeScored(ScoredParams::GREEDY));
        let raw = "Algorithm: nearest.\n```\ngreedy\n```";
        assert_eq!(
            parse_individual(raw, &task()).unwrap().1,
            CandidateProgram::NativeGreedy
        );
    }

    #[test]
    fn description_is_truncated_to_two_sentences() {
        let raw = "Algorithm: One. Two uses 0.5 weights! Three? Four.\n```\ngreedy\n```";
        assert_eq!(
            parse_individual(raw, &task()).unwrap().0,
            "One. Two uses 0.5 weights!"
        );
    }

    #[test]
    fn markdown_decorated_description_and_fallback_paragraph() {
        let raw = "**Algorithm:** Weighted nearest.\n```\ngreedy\n```";
        assert_eq!(
            parse_individual(raw, &task()).unwrap().0,
            "Weighted nearest."
        );
        let raw = "Here is my idea: go to the closest node\nthat is unvisited.\n\nMore prose.\n```\ngreedy\n```";
        assert_eq!(
            parse_individual(raw, &task()).unwrap().0,
            "Here is my idea: go to the closest node that is unvisited."
        );
        let raw = "{The new algorithm picks the nearest node.}\n```\ngreedy\n```";
        assert_eq!(
            parse_individual(raw, &task()).unwrap().0,
            "The new algorithm picks the nearest node."
        );
    }

    #[test]
    fn prose_after_the_block_is_not_description() {
        let raw = "Algorithm: Nearest first.\n```\ngreedy\n```\nThis code is simple.";
        assert_eq!(parse_individual(raw, &task()).unwrap().0, "Nearest first.");
    }

    #[test]
    fn first_block_wins() {
        let raw = "Algorithm: two blocks.\n```\nscored c1=1 c2=0 c3=0 c4=0 tau=1\n```\nand\n```\ngreedy\n```";
        assert!(matches!(
            parse_individual(raw, &task()).unwrap().1,
            CandidateProgram::NativeScored(_)
        ));
    }

    #[test]
    fn typed_errors() {
        assert_eq!(
            parse_individual("Algorithm: nothing here.", &task()),
            Err(ParseError::NoCodeBlock)
        );
        assert_eq!(
            parse_individual("Algorithm: x.\n```python\ndef f(", &task()),
            Err(ParseError::NoCodeBlock)
        );
        assert_eq!(
            parse_individual("```\ngreedy\n```", &task()),
            Err(ParseError::EmptyDescription)
        );
        assert_eq!(
            parse_individual("Algorithm:   \n```\ngreedy\n```", &task()),
            Err(ParseError::EmptyDescription)
        );
        assert!(matches!(
            parse_individual(
                "Algorithm: x.\n```python\ndef choose(a, b, c, d):\n    return c[0]\n```",
                &task()
            ),
            Err(ParseError::WrongFunctionSignature { .. })
        ));
        assert!(matches!(
            parse_individual(
                "Algorithm: x.\n```python\ndef select_next_node(a, b, c):\n    return c[0]\n```",
                &task()
            ),
            Err(ParseError::WrongFunctionSignature { .. })
        ));
        assert!(matches!(
            parse_individual("Algorithm: x.\n```\nscored c1=oops\n```", &task()),
            Err(ParseError::InvalidNativeProgram(_))
        ));
    }

    #[test]
    fn signature_rules() {
        let ok = |sig: &str| check_signature(sig, "select_next_node", 4).is_ok();
        assert!(ok("def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):"));
        assert!(ok("def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix, threshold=float('inf')):"));
        assert!(ok("def select_next_node(\n    current_node: int,\n    destination_node: int,\n    unvisited_nodes: list,\n    distance_matrix: np.ndarray,\n    weights: Tuple[float, float] = (0.4, 0.3),\n) -> int:"));
        assert!(ok("import numpy as np\n\ndef helper(x):\n    return x\n\ndef select_next_node(a, b, c, d, *args, **kwargs):"));
        assert!(ok("def select_next_node(a, b, *rest):"));
        assert!(!ok("def select_next_node(a, b, c, d, e):"));
        assert!(!ok("def select_next_node(a, b, c):"));
        assert!(!ok("select_next_node = lambda a, b, c, d: c[0]"));
    }
}
