use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tsp::ScoredParams;

/// The code half of an individual.
///
/// Guest sources are run by an external guest runtime. The two native
/// variants are interpreted in-process and have a one-line canonical text
/// form (`greedy`, `scored c1=… c2=… c3=… c4=… tau=…`) so they can travel
/// through prompts, responses and checkpoints exactly like source code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum CandidateProgram {
    GuestSource(String),
    NativeScored(ScoredParams),
    NativeGreedy,
}

pub const GREEDY_KEYWORD: &str = "greedy";
pub const SCORED_KEYWORD: &str = "scored";

impl CandidateProgram {
    pub fn canonical_text(&self) -> Cow<'_, str> {
        match self {
            CandidateProgram::GuestSource(src) => Cow::Borrowed(src),
            CandidateProgram::NativeScored(p) => Cow::Owned(p.to_string()),
            CandidateProgram::NativeGreedy => Cow::Borrowed(GREEDY_KEYWORD),
        }
    }

    /// Inverse of [`canonical_text`](Self::canonical_text): a well-formed
    /// mini-DSL line becomes the native variant, anything else is guest
    /// source.
    pub fn from_canonical(text: &str) -> Self {
        match Self::parse_native(text) {
            Some(Ok(native)) => native,
            _ => CandidateProgram::GuestSource(text.to_string()),
        }
    }

    /// `None` if `text` does not look like a mini-DSL line at all,
    /// `Some(Err)` if it starts with a DSL keyword but is malformed.
    pub fn parse_native(text: &str) -> Option<Result<Self, String>> {
        let line = text.trim();
        if line.contains('\n') {
            return None;
        }
        if line == GREEDY_KEYWORD {
            return Some(Ok(CandidateProgram::NativeGreedy));
        }
        let keyword = line.split_whitespace().next()?;
        if keyword != SCORED_KEYWORD {
            return None;
        }
        Some(
            line.parse::<ScoredParams>()
                .map(CandidateProgram::NativeScored),
        )
    }

    pub fn is_native(&self) -> bool {
        !matches!(self, CandidateProgram::GuestSource(_))
    }

    /// Fence language tag used when the program is shown to a model.
    pub fn fence_language(&self) -> &'static str {
        if self.is_native() {
            ""
        } else {
            "python"
        }
    }
}

impl fmt::Display for CandidateProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

impl From<CandidateProgram> for String {
    fn from(p: CandidateProgram) -> String {
        p.canonical_text().into_owned()
    }
}

impl From<String> for CandidateProgram {
    fn from(s: String) -> Self {
        CandidateProgram::from_canonical(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn native_texts() {
        assert_eq!(CandidateProgram::NativeGreedy.canonical_text(), "greedy");
        assert_eq!(
            CandidateProgram::from_canonical("scored c1=1 c2=0 c3=0 c4=0 tau=inf"),
            CandidateProgram::NativeScored(ScoredParams::GREEDY)
        );
        assert!(matches!(
            CandidateProgram::parse_native("scored c1=1"),
            Some(Err(_))
        ));
        assert!(CandidateProgram::parse_native(
            "def select_next_node(a, b, c, d):\n    return c[0]"
        )
        .is_none());
        assert!(CandidateProgram::parse_native("scoredness = 3").is_none());
    }

    #[test]
    fn serde_uses_canonical_text() {
        let p = CandidateProgram::NativeScored(ScoredParams {
            c1: 0.5,
            c2: 0.25,
            c3: 0.0,
            c4: 1.0,
            tau: 0.125,
        });
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"scored c1=0.5 c2=0.25 c3=0 c4=1 tau=0.125\"");
        assert_eq!(serde_json::from_str::<CandidateProgram>(&json).unwrap(), p);
    }

    fn arb_program() -> impl Strategy<Value = CandidateProgram> {
        let weight =
            proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL;
        let tau = prop_oneof![weight, Just(f64::INFINITY), Just(f64::NEG_INFINITY)];
        prop_oneof![
            Just(CandidateProgram::NativeGreedy),
            (weight, weight, weight, weight, tau).prop_map(|(c1, c2, c3, c4, tau)| {
                CandidateProgram::NativeScored(ScoredParams {
                    c1,
                    c2,
                    c3,
                    c4,
                    tau,
                })
            }),
            "def [a-z_]{1,12}\\(a, b, c, d\\):\n    return c\\[[0-9]\\]"
                .prop_map(CandidateProgram::GuestSource),
        ]
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(p in arb_program()) {
            let back = CandidateProgram::from_canonical(&p.canonical_text());
            match (&p, &back) {
                (CandidateProgram::NativeScored(a), CandidateProgram::NativeScored(b)) => {
                    prop_assert_eq!(a.c1.to_bits(), b.c1.to_bits());
                    prop_assert_eq!(a.c2.to_bits(), b.c2.to_bits());
                    prop_assert_eq!(a.c3.to_bits(), b.c3.to_bits());
                    prop_assert_eq!(a.c4.to_bits(), b.c4.to_bits());
                    prop_assert_eq!(a.tau.to_bits(), b.tau.to_bits());
                }
                _ => prop_assert_eq!(&p, &back),
            }
        }
    }
}
