use serde::Serialize;

/// Local-to-global index translation as an ordered list of contiguous runs.
///
/// Plain block layouts are a single run; block-cyclic batch pieces have one
/// run per block.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct IndexMap {
    runs: Vec<(usize, usize)>,
}

impl IndexMap {
    pub fn contiguous(start: usize, len: usize) -> Self {
        let mut m = IndexMap::default();
        m.push_run(start, len);
        m
    }

    pub fn from_runs(runs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = IndexMap::default();
        for (s, len) in runs {
            m.push_run(s, len);
        }
        m
    }

    fn push_run(&mut self, start: usize, len: usize) {
        if len == 0 {
            return;
        }
        if let Some(last) = self.runs.last_mut() {
            if last.0 + last.1 == start {
                last.1 += len;
                return;
            }
        }
        self.runs.push((start, len));
    }

    pub fn runs(&self) -> &[(usize, usize)] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.iter().map(|r| r.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn to_global(&self, mut local: usize) -> usize {
        for &(s, len) in &self.runs {
            if local < len {
                return s + local;
            }
            local -= len;
        }
        panic!("local index out of range for index map");
    }

    /// Global indices in local order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs.iter().flat_map(|&(s, len)| s..s + len)
    }

    /// Maps local runs of this map's index space through it.
    pub fn compose(&self, local: &IndexMap) -> IndexMap {
        let mut out = IndexMap::default();
        for &(ls, llen) in &local.runs {
            let mut pos = ls;
            let end = ls + llen;
            let mut base = 0;
            for &(gs, glen) in &self.runs {
                if pos >= end {
                    break;
                }
                if pos < base + glen {
                    let take = (base + glen).min(end) - pos;
                    out.push_run(gs + (pos - base), take);
                    pos += take;
                }
                base += glen;
            }
            assert!(pos == end, "local run exceeds index map");
        }
        out
    }

    /// Appends another map's runs after this one.
    pub fn concat(maps: &[IndexMap]) -> IndexMap {
        IndexMap::from_runs(maps.iter().flat_map(|m| m.runs.iter().copied()))
    }

    pub fn intersects(&self, other: &IndexMap) -> bool {
        self.runs.iter().any(|&(a, al)| {
            other
                .runs
                .iter()
                .any(|&(b, bl)| a < b + bl && b < a + al)
        })
    }
}
