use std::collections::BTreeMap;

use super::PromptError;

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Text(String),
    Slot(String),
}

/// A text template with `{name}` placeholders. `{{` and `}}` produce
/// literal braces.
///
/// A line that consists of nothing but one placeholder disappears
/// entirely when that placeholder renders empty, so optional sections
/// leave no blank residue.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    lines: Vec<Vec<Segment>>,
}

impl Template {
    pub fn parse(name: &str, text: &str, allowed: &[&str]) -> Result<Self, PromptError> {
        let mut lines = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            lines.push(parse_line(line).map_err(|msg| PromptError::Template {
                template: name.to_string(),
                line: lineno + 1,
                msg,
            })?);
        }
        for (lineno, line) in lines.iter().enumerate() {
            for seg in line {
                if let Segment::Slot(slot) = seg {
                    if !allowed.contains(&slot.as_str()) {
                        return Err(PromptError::Template {
                            template: name.to_string(),
                            line: lineno + 1,
                            msg: format!("unknown placeholder {{{slot}}}"),
                        });
                    }
                }
            }
        }
        Ok(Template {
            name: name.to_string(),
            lines,
        })
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().flatten().filter_map(|s| match s {
            Segment::Slot(n) => Some(n.as_str()),
            Segment::Text(_) => None,
        })
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let lookup = |slot: &str| {
            vars.get(slot).ok_or_else(|| PromptError::Template {
                template: self.name.clone(),
                line: 0,
                msg: format!("no value bound for {{{slot}}}"),
            })
        };
        let mut out = String::new();
        for line in &self.lines {
            if let [Segment::Slot(slot)] = line.as_slice() {
                let value = lookup(slot)?;
                if value.is_empty() {
                    if out.ends_with("\n\n") {
                        out.pop();
                    }
                    continue;
                }
            }
            for seg in line {
                match seg {
                    Segment::Text(t) => out.push_str(t),
                    Segment::Slot(slot) => out.push_str(lookup(slot)?),
                }
            }
            out.push('\n');
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
        Ok(out)
    }
}

fn parse_line(line: &str) -> Result<Vec<Segment>, String> {
    let mut segs = Vec::new();
    let mut text = String::new();
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut slot = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => slot.push(ch),
                        Some(ch) => return Err(format!("invalid character {ch:?} in placeholder")),
                        None => return Err("unterminated placeholder".into()),
                    }
                }
                if slot.is_empty() {
                    return Err("empty placeholder".into());
                }
                if !text.is_empty() {
                    segs.push(Segment::Text(std::mem::take(&mut text)));
                }
                segs.push(Segment::Slot(slot));
            }
            '}' => return Err("unmatched `}` (write `}}` for a literal brace)".into()),
            other => text.push(other),
        }
    }
    if !text.is_empty() {
        segs.push(Segment::Text(text));
    }
    Ok(segs)
}
