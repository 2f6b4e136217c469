//! JSON documents tagged by `kind`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comb::QuantumComb;
use crate::commitment::ProtocolSpec;
use crate::conditional::ConditionalComb;
use crate::error::Result;
use crate::tester::Tester;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Document {
    Comb(QuantumComb),
    Conditional(ConditionalComb),
    Tester(Tester),
    TesterList { testers: Vec<Tester> },
    Protocol(ProtocolSpec),
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Comb(_) => "comb",
            Document::Conditional(_) => "conditional",
            Document::Tester(_) => "tester",
            Document::TesterList { .. } => "tester-list",
            Document::Protocol(_) => "protocol",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::demo;

    #[test]
    fn tagged_round_trip() {
        let d = Document::Protocol(demo("epr").unwrap());
        let s = d.to_json().unwrap();
        assert!(s.contains("\"kind\": \"protocol\""));
        let back = Document::parse(&s).unwrap();
        assert_eq!(back.kind(), "protocol");
        assert_eq!(back.to_json().unwrap(), s);
        assert!(Document::parse(&s[..s.len() / 2]).is_err());
    }
}
