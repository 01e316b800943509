//! Per-episode records, their file formats, and suboptimality counting.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Slack allowed on `V* >= V^pi` before a record is considered broken.
pub const GAP_TOLERANCE: f64 = 1e-9;

/// One episode of the online protocol, evaluated exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: usize,
    pub context: Vec<f64>,
    pub v_star: f64,
    pub v_policy: f64,
    pub gap: f64,
    pub suboptimal: bool,
    pub known_states: usize,
    /// Cumulative accepted estimator updates after this episode.
    pub updates: u64,
}

impl EpisodeRecord {
    pub fn new(t: usize, context: Vec<f64>, v_star: f64, v_policy: f64, epsilon: f64, known_states: usize, updates: u64) -> Self {
        let gap = v_star - v_policy;
        Self {
            t,
            context,
            v_star,
            v_policy,
            gap,
            suboptimal: gap > epsilon,
            known_states,
            updates,
        }
    }
}

/// Count of non-`epsilon`-optimal episodes and the running count after each.
#[derive(Clone, Debug, PartialEq)]
pub struct SuboptimalCount {
    pub count: usize,
    pub cumulative: Vec<usize>,
}

pub fn count_suboptimal(gaps: &[f64], epsilon: f64) -> SuboptimalCount {
    let mut count = 0;
    let cumulative = gaps
        .iter()
        .map(|&g| {
            if g > epsilon {
                count += 1;
            }
            count
        })
        .collect();
    SuboptimalCount { count, cumulative }
}

pub fn record_gaps(records: &[EpisodeRecord]) -> Vec<f64> {
    records.iter().map(|r| r.gap).collect()
}

/// Suboptimal rate over consecutive non-overlapping windows; a short final
/// window is kept.
pub fn windowed_rates(gaps: &[f64], epsilon: f64, window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    gaps.chunks(window).map(|w| rate(w, epsilon)).collect()
}

/// Suboptimal rate of a slice of gaps; 0 for an empty slice.
pub fn rate(gaps: &[f64], epsilon: f64) -> f64 {
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.iter().filter(|&&g| g > epsilon).count() as f64 / gaps.len() as f64
}

/// First episode count `t` after which the trailing `window` episodes have a
/// suboptimal rate at most `target`, or `None` if that never happens.
pub fn episodes_to_rate(gaps: &[f64], epsilon: f64, window: usize, target: f64) -> Option<usize> {
    if window == 0 || gaps.len() < window {
        return None;
    }
    let flags: Vec<usize> = gaps.iter().map(|&g| usize::from(g > epsilon)).collect();
    let mut bad: usize = flags[..window].iter().sum();
    for end in window..=gaps.len() {
        if end > window {
            bad = bad + flags[end - 1] - flags[end - 1 - window];
        }
        if bad as f64 <= target * window as f64 {
            return Some(end);
        }
    }
    None
}

pub fn write_jsonl<W: Write>(records: &[EpisodeRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}

#[derive(Serialize)]
struct CsvRow {
    t: usize,
    gap: f64,
    suboptimal: bool,
    known_states: usize,
    updates: u64,
}

/// CSV summary with columns `t, gap, suboptimal, known_states, updates`.
pub fn write_csv<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(CsvRow {
            t: r.t,
            gap: r.gap,
            suboptimal: r.suboptimal,
            known_states: r.known_states,
            updates: r.updates,
        })?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, gap: f64) -> EpisodeRecord {
        EpisodeRecord::new(t, vec![0.5], 1.0, 1.0 - gap, 0.1, 3, t as u64)
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_suboptimal(&[0.0, 0.0, 0.0], 0.1).count, 0);
        let c = count_suboptimal(&[0.2, 0.05], 0.1);
        assert_eq!(c.count, 1);
        assert_eq!(c.cumulative, vec![1, 1]);
        // exactly epsilon is not suboptimal
        assert_eq!(count_suboptimal(&[0.1], 0.1).count, 0);
    }

    #[test]
    fn windows() {
        let gaps = [0.5, 0.5, 0.0, 0.5, 0.0];
        assert_eq!(windowed_rates(&gaps, 0.1, 2), vec![1.0, 0.5, 0.0]);
        assert_eq!(rate(&[], 0.1), 0.0);
    }

    #[test]
    fn reach_rate() {
        let gaps = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(episodes_to_rate(&gaps, 0.1, 2, 0.0), Some(5));
        assert_eq!(episodes_to_rate(&gaps, 0.1, 2, 0.5), Some(4));
        assert_eq!(episodes_to_rate(&gaps, 0.1, 3, 0.0), Some(6));
        assert_eq!(episodes_to_rate(&[1.0; 4], 0.1, 2, 0.0), None);
        assert_eq!(episodes_to_rate(&[0.0], 0.1, 2, 0.0), None);
    }

    #[test]
    fn jsonl_roundtrip() {
        let records = vec![record(0, 0.2), record(1, 0.0)];
        let mut buf = Vec::new();
        write_jsonl(&records, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(read_jsonl(&buf[..]).unwrap(), records);
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        write_csv(&[record(0, 0.25)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,gap,suboptimal,known_states,updates"));
        assert_eq!(lines.next(), Some("0,0.25,true,3,0"));
    }
}
