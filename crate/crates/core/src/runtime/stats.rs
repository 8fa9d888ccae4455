use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Communication phases that carry counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "A-Broadcast")]
    ABroadcast,
    #[serde(rename = "B-Broadcast")]
    BBroadcast,
    #[serde(rename = "AllToAll-Fiber")]
    AllToAllFiber,
    #[serde(rename = "Symbolic-A-Bcast")]
    SymbolicABcast,
    #[serde(rename = "Symbolic-B-Bcast")]
    SymbolicBBcast,
    #[serde(rename = "AllReduce")]
    AllReduce,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::ABroadcast,
        Phase::BBroadcast,
        Phase::AllToAllFiber,
        Phase::SymbolicABcast,
        Phase::SymbolicBBcast,
        Phase::AllReduce,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounters {
    pub messages: u64,
    /// One word is one stored nonzero (or one integer for reductions).
    pub words: u64,
    pub bytes: u64,
}

/// Exact message, word and byte counts per phase. Counting is sender-side:
/// every point-to-point send increments its phase once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    phases: BTreeMap<Phase, PhaseCounters>,
}

impl Default for CommStats {
    fn default() -> Self {
        CommStats {
            phases: Phase::ALL.iter().map(|&p| (p, PhaseCounters::default())).collect(),
        }
    }
}

impl CommStats {
    pub fn get(&self, phase: Phase) -> PhaseCounters {
        self.phases[&phase]
    }

    pub fn words(&self, phase: Phase) -> u64 {
        self.get(phase).words
    }

    pub fn messages(&self, phase: Phase) -> u64 {
        self.get(phase).messages
    }

    pub(crate) fn record(&mut self, phase: Phase, words: u64, record_bytes: u64, header_bytes: u64) {
        let c = self.phases.get_mut(&phase).expect("all phases present");
        c.messages += 1;
        c.words += words;
        c.bytes += words * record_bytes + header_bytes;
    }

    pub fn merge(&mut self, other: &CommStats) {
        for (phase, c) in &other.phases {
            let mine = self.phases.get_mut(phase).expect("all phases present");
            mine.messages += c.messages;
            mine.words += c.words;
            mine.bytes += c.bytes;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, PhaseCounters)> + '_ {
        self.phases.iter().map(|(&p, &c)| (p, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_by_label() {
        let mut s = CommStats::default();
        s.record(Phase::ABroadcast, 10, 24, 16);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["phases"]["A-Broadcast"]["words"], 10);
        assert_eq!(json["phases"]["A-Broadcast"]["bytes"], 256);
        assert_eq!(json["phases"]["AllToAll-Fiber"]["messages"], 0);
        let back: CommStats = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }
}
