//! m-extended adjacency matrices from (measured or inferred) hop counts.
//!
//! `A^(m)[i][j] = 1` iff the hop metric of `{i,j}` lies in `(m − 0.5, m + 0.5]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{pair_count, Pair, PairTable};

/// Symmetric, zero-diagonal binary matrix stored as one flag per unordered pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedAdjacency {
    m: u32,
    n: usize,
    flags: Vec<bool>,
}

impl ExtendedAdjacency {
    pub fn from_pairs(m: u32, n: usize, pairs: impl IntoIterator<Item = Pair>) -> Result<Self> {
        let mut flags = vec![false; pair_count(n)];
        for p in pairs {
            if p.hi() >= n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: p.hi() + 1,
                });
            }
            flags[p.index(n)] = true;
        }
        Ok(Self { m, n, flags })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        a != b && self.flags[Pair::new(a, b).expect("distinct").index(self.n)]
    }

    pub fn nonzero_pairs(&self) -> Vec<Pair> {
        crate::pairs::all_pairs(self.n)
            .zip(&self.flags)
            .filter(|(_, &f)| f)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// `# m=<m> n=<n>` header followed by one `i j` line per nonzero pair.
    pub fn to_text(&self) -> String {
        let mut out = format!("# m={} n={}\n", self.m, self.n);
        for p in self.nonzero_pairs() {
            let _ = writeln!(out, "{} {}", p.lo(), p.hi());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::Parse {
            path: "<adjacency>".into(),
            line,
            message: message.into(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let mut m = None;
        let mut n = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("m=") {
                m = v.parse().ok();
            } else if let Some(v) = tok.strip_prefix("n=") {
                n = v.parse().ok();
            }
        }
        let (m, n) = m.zip(n).ok_or_else(|| bad(1, "expected header `# m=<m> n=<n>`"))?;
        let mut pairs = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => pairs.push(Pair::new(a, b)?),
                _ => return Err(bad(i + 1, "expected `i j`")),
            }
        }
        Self::from_pairs(m, n, pairs)
    }
}

/// Whether `value` falls in the half-open bin `(m − 0.5, m + 0.5]`.
pub fn in_bin(value: f64, m: u32) -> bool {
    let m = m as f64;
    value > m - 0.5 && value <= m + 0.5
}

pub fn reconstruct(metrics: &PairTable<f64>, m: u32) -> ExtendedAdjacency {
    ExtendedAdjacency {
        m,
        n: metrics.node_count(),
        flags: metrics.values().iter().map(|&v| in_bin(v, m)).collect(),
    }
}

/// Measured values verbatim for measured pairs, inferred values elsewhere.
pub fn merge_metrics(n: usize, measured: &[(Pair, f64)], inferred: &[(Pair, f64)]) -> Result<PairTable<f64>> {
    let mut table = PairTable::filled(n, f64::NAN);
    for &(p, v) in inferred {
        table.set(p, v);
    }
    for &(p, v) in measured {
        table.set(p, v);
    }
    if let Some((p, _)) = table.iter().find(|(_, v)| v.is_nan()) {
        return Err(Error::invalid(format!("no measured or inferred value for pair {p}")));
    }
    Ok(table)
}

/// How matrix entries are counted when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// `n(n−1)/2` unordered off-diagonal pairs.
    #[default]
    UnorderedPairs,
    /// All `n²` ordered entries, diagonal included.
    OrderedEntries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionScore {
    pub m: u32,
    /// `None` when every entry is a true nonzero.
    pub fpr: Option<f64>,
    /// `None` when there are no true nonzeros.
    pub fnr: Option<f64>,
    /// True nonzero count under `mode`.
    pub tau: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub mode: CountingMode,
}

pub fn score(predicted: &ExtendedAdjacency, truth: &ExtendedAdjacency) -> Result<ReconstructionScore> {
    score_with_mode(predicted, truth, CountingMode::UnorderedPairs)
}

pub fn score_with_mode(
    predicted: &ExtendedAdjacency,
    truth: &ExtendedAdjacency,
    mode: CountingMode,
) -> Result<ReconstructionScore> {
    if predicted.n != truth.n || predicted.m != truth.m {
        return Err(Error::invalid(format!(
            "cannot score A^({}) on {} nodes against A^({}) on {} nodes",
            predicted.m, predicted.n, truth.m, truth.n
        )));
    }
    let mut fp = 0;
    let mut fneg = 0;
    let mut tau = 0;
    for (&p, &t) in predicted.flags.iter().zip(&truth.flags) {
        tau += usize::from(t);
        fp += usize::from(p && !t);
        fneg += usize::from(!p && t);
    }
    let (total, scale) = match mode {
        CountingMode::UnorderedPairs => (pair_count(truth.n), 1),
        CountingMode::OrderedEntries => (truth.n * truth.n, 2),
    };
    let (tau, fp, fneg) = (tau * scale, fp * scale, fneg * scale);
    let negatives = total - tau;
    Ok(ReconstructionScore {
        m: truth.m,
        fpr: (negatives > 0).then(|| fp as f64 / negatives as f64),
        fnr: (tau > 0).then(|| fneg as f64 / tau as f64),
        tau,
        false_positives: fp,
        false_negatives: fneg,
        mode,
    })
}
