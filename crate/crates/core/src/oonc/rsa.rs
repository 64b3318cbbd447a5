//! Routing and spectrum assignment.
//!
//! Candidates are (path, channel) pairs carrying the highest format the
//! L-PCE allows there, ordered by format cardinality, then path order
//! (shortest first), then channel index. The search walks subsets in that
//! order, so its first complete plan is the greedy first-fit one; bounding
//! on the best remaining rate then proves it minimal or finds a plan with
//! fewer lightpaths.

use serde::{Deserialize, Serialize};

use super::abstraction::RouteEntry;
use crate::lpce::{ModulationFormat, PathFormatMap};
use crate::topology::PhyPath;

/// Search nodes explored before settling for the best plan found so far.
pub const SEARCH_NODE_LIMIT: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// Index into the ordered path list.
    pub path: usize,
    pub channel: usize,
    pub format: ModulationFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedLightpath {
    pub path: PhyPath,
    pub channel: usize,
    pub format: ModulationFormat,
}

impl PlannedLightpath {
    pub fn rate_gbps(&self) -> u32 {
        self.format.rate_gbps()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RsaPlan {
    pub lightpaths: Vec<PlannedLightpath>,
    pub planned_gbps: u32,
    pub shortfall_gbps: u32,
}

/// Paths present in both the format maps and the routing entry, in format
/// map order, with their feasible, free candidates in policy order.
pub fn candidates(format_maps: &[PathFormatMap], entry: &RouteEntry) -> (Vec<PhyPath>, Vec<Candidate>) {
    let mut paths = Vec::new();
    let mut cands = Vec::new();
    for fm in format_maps {
        let Some(avail) = entry.paths.iter().find(|p| p.path.id == fm.path.id) else {
            continue;
        };
        let idx = paths.len();
        paths.push(avail.path.clone());
        for &c in &avail.available {
            if let Some(format) = fm.max_format(c) {
                cands.push(Candidate {
                    path: idx,
                    channel: c,
                    format,
                });
            }
        }
    }
    cands.sort_by(|a, b| {
        b.format
            .cardinality()
            .cmp(&a.format.cardinality())
            .then(a.path.cmp(&b.path))
            .then(a.channel.cmp(&b.channel))
    });
    (paths, cands)
}

/// Two candidates clash when they share a channel and a link.
pub fn conflicts(a: &Candidate, b: &Candidate, paths: &[PhyPath]) -> bool {
    a.channel == b.channel && paths[a.path].lines.iter().any(|l| paths[b.path].lines.contains(l))
}

struct Search<'a> {
    cands: &'a [Candidate],
    paths: &'a [PhyPath],
    need: u32,
    budget: usize,
    best_rate: u32,
    best: Vec<usize>,
    nodes: usize,
}

impl Search<'_> {
    fn rate(&self, i: usize) -> u32 {
        self.cands[i].format.rate_gbps()
    }

    /// No extension using rates of at most `r` can beat the incumbent.
    fn hopeless(&self, rate: u32, count: usize, r: u32) -> bool {
        let slots = (self.budget - count) as u32;
        let reach = (rate + r * slots).min(self.need);
        if reach < self.best_rate {
            return true;
        }
        if reach == self.best_rate {
            let extra = (self.best_rate.saturating_sub(rate)).div_ceil(r.max(1)) as usize;
            return count + extra >= self.best.len();
        }
        false
    }

    fn dfs(&mut self, start: usize, chosen: &mut Vec<usize>, rate: u32) {
        let capped = rate.min(self.need);
        if capped > self.best_rate || (capped == self.best_rate && chosen.len() < self.best.len()) {
            self.best_rate = capped;
            self.best = chosen.clone();
        }
        if rate >= self.need || chosen.len() >= self.budget || self.nodes >= SEARCH_NODE_LIMIT {
            return;
        }
        self.nodes += 1;
        for i in start..self.cands.len() {
            if self.hopeless(rate, chosen.len(), self.rate(i)) {
                break;
            }
            if chosen
                .iter()
                .any(|&j| conflicts(&self.cands[i], &self.cands[j], self.paths))
            {
                continue;
            }
            chosen.push(i);
            let r = self.rate(i);
            self.dfs(i + 1, chosen, rate + r);
            chosen.pop();
        }
    }
}

/// Fewest lightpaths reaching `need_gbps` with at most `budget` of them;
/// when that is impossible, the largest reachable rate with the fewest
/// lightpaths.
pub fn select(need_gbps: u32, paths: &[PhyPath], cands: &[Candidate], budget: usize) -> Vec<Candidate> {
    if need_gbps == 0 || budget == 0 {
        return Vec::new();
    }
    let mut s = Search {
        cands,
        paths,
        need: need_gbps,
        budget,
        best_rate: 0,
        best: Vec::new(),
        nodes: 0,
    };
    s.dfs(0, &mut Vec::new(), 0);
    s.best.iter().map(|&i| cands[i]).collect()
}

pub fn rsa(need_gbps: u32, format_maps: &[PathFormatMap], entry: &RouteEntry, trx_budget: usize) -> RsaPlan {
    let (paths, cands) = candidates(format_maps, entry);
    let chosen = select(need_gbps, &paths, &cands, trx_budget);
    let lightpaths: Vec<PlannedLightpath> = chosen
        .into_iter()
        .map(|c| PlannedLightpath {
            path: paths[c.path].clone(),
            channel: c.channel,
            format: c.format,
        })
        .collect();
    let planned_gbps = lightpaths.iter().map(|l| l.rate_gbps()).sum();
    RsaPlan {
        lightpaths,
        planned_gbps,
        shortfall_gbps: need_gbps.saturating_sub(planned_gbps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModulationFormat::*;

    fn path(id: &str, lines: &[&str]) -> PhyPath {
        PhyPath {
            id: id.into(),
            lines: lines.iter().map(|s| s.to_string()).collect(),
            roadms: Vec::new(),
            length_km: lines.len() as f64,
        }
    }

    #[test]
    fn prefers_high_format_then_short_path_then_low_channel() {
        let paths = vec![path("p0", &["L1"]), path("p1", &["L2", "L3"])];
        let mut cands = vec![
            Candidate {
                path: 1,
                channel: 0,
                format: DpQpsk,
            },
            Candidate {
                path: 0,
                channel: 3,
                format: Dp16Qam,
            },
            Candidate {
                path: 0,
                channel: 1,
                format: Dp16Qam,
            },
        ];
        cands.sort_by(|a, b| {
            b.format
                .cardinality()
                .cmp(&a.format.cardinality())
                .then(a.path.cmp(&b.path))
                .then(a.channel.cmp(&b.channel))
        });
        let got = select(400, &paths, &cands, 4);
        assert_eq!(got.iter().map(|c| c.channel).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn beats_greedy_when_one_path_blocks_two() {
        // X comes first in path order but shares a link with each of Y and
        // Z; greedy stops at 200G, the search finds Y + Z.
        let paths = vec![path("x", &["L1", "L2"]), path("y", &["L1"]), path("z", &["L2"])];
        let cands = vec![
            Candidate {
                path: 0,
                channel: 0,
                format: Dp16Qam,
            },
            Candidate {
                path: 1,
                channel: 0,
                format: Dp16Qam,
            },
            Candidate {
                path: 2,
                channel: 0,
                format: Dp16Qam,
            },
        ];
        let got = select(400, &paths, &cands, 3);
        assert_eq!(got.iter().map(|c| c.path).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn shortfall_when_capacity_runs_out() {
        let paths = vec![path("p", &["L1"])];
        let cands = vec![Candidate {
            path: 0,
            channel: 2,
            format: DpQpsk,
        }];
        let got = select(400, &paths, &cands, 4);
        assert_eq!(got.len(), 1);
        assert!(select(100, &paths, &[], 4).is_empty());
    }

    #[test]
    fn budget_caps_the_plan() {
        let paths = vec![path("p", &["L1"])];
        let cands: Vec<_> = (0..5)
            .map(|c| Candidate {
                path: 0,
                channel: c,
                format: DpQpsk,
            })
            .collect();
        assert_eq!(select(400, &paths, &cands, 2).len(), 2);
    }
}
