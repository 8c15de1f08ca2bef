//! Closed-form upper bounds on the minimum number of beamformers.
//!
//! All square roots are evaluated with exact integer arithmetic, so the
//! floors never suffer from rounding at perfect squares.

use serde::{Deserialize, Serialize};

use crate::channel::multitarget_d;

/// Integer square root `⌊√n⌋`.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u64;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Modified sum bound `⌊K + √d⌋` (interference cancellation).
pub fn bound_sum(k: usize, d: usize) -> usize {
    assert!(d >= 1, "d must be at least 1");
    k + isqrt(d as u64) as usize
}

/// Modified hypotenuse bound `⌊√(K² + d)⌋` (no interference cancellation).
pub fn bound_hypotenuse(k: usize, d: usize) -> usize {
    assert!(d >= 1, "d must be at least 1");
    isqrt((k * k + d) as u64) as usize
}

/// Smallest `K` with `K ≥ d/2`; from there on exactly `K` beamformers
/// suffice without interference cancellation.
pub fn no_extra_beams_threshold(d: usize) -> usize {
    assert!(d >= 1, "d must be at least 1");
    d.div_ceil(2)
}

/// Number of distinct BFIM entries for `L` parameters, `L(L+1)/2`.
pub fn bfim_d(l: usize) -> usize {
    l * (l + 1) / 2
}

/// Which bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundMode {
    /// Sum bound (interference cancellation).
    #[serde(rename = "ic")]
    Ic,
    /// Hypotenuse bound (no interference cancellation).
    #[serde(rename = "nic")]
    Nic,
    /// Sensing only (`K = 0`).
    #[serde(rename = "radar")]
    Radar,
}

/// Options of the general bound calculator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundOptions {
    /// Return exactly `K` in NIC mode once `K ≥ ⌈d/2⌉`.
    pub no_extra_beams_shortcut: bool,
    /// Transmit antennas; caps the NIC bound at `n_tx`.
    pub n_tx: Option<usize>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            no_extra_beams_shortcut: true,
            n_tx: None,
        }
    }
}

fn nic_bound(k: usize, d: usize, opts: BoundOptions) -> usize {
    let mut b = bound_hypotenuse(k, d);
    if opts.no_extra_beams_shortcut && k >= no_extra_beams_threshold(d) {
        b = b.min(k);
    }
    if let Some(n) = opts.n_tx {
        b = b.min(n.max(k));
    }
    b
}

/// Bound for BCRB-based designs with `L` parameters (`d = L(L+1)/2`).
pub fn bound_bcrb(k: usize, l: usize, mode: BoundMode) -> usize {
    bound_bcrb_with(k, l, mode, BoundOptions::default())
}

/// [`bound_bcrb`] with explicit options.
pub fn bound_bcrb_with(k: usize, l: usize, mode: BoundMode, opts: BoundOptions) -> usize {
    assert!(l >= 1, "L must be at least 1");
    bound_for_d(k, bfim_d(l), mode, opts)
}

/// Bound for a d-quadratic metric in the given mode.
pub fn bound_for_d(k: usize, d: usize, mode: BoundMode, opts: BoundOptions) -> usize {
    match mode {
        BoundMode::Ic => bound_sum(k, d),
        BoundMode::Nic => nic_bound(k, d, opts),
        BoundMode::Radar => bound_sum(0, d),
    }
}

/// Sensing metric families with a known number of quadratic terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    /// Whole channel matrix unknown: `d = n_tx²`.
    FullChannel { n_tx: usize },
    /// Path losses and angles of `N_tr` LoS targets: `d = 7/2·N_tr² + N_tr/2`.
    MultiTargetLos { n_targets: usize },
    /// Angles only, zero-mean independent path losses: `d = N_tr`.
    AoaOnlyZeroMean { n_targets: usize },
    /// Radar SNR or SCNR: `d = 1`.
    SnrScnr,
    /// Beam-pattern matching on `n_grid` angles: `d = n_grid`.
    BeamPattern { n_grid: usize },
}

impl MetricKind {
    pub fn d(&self) -> usize {
        match *self {
            Self::FullChannel { n_tx } => n_tx * n_tx,
            Self::MultiTargetLos { n_targets } => multitarget_d(n_targets),
            Self::AoaOnlyZeroMean { n_targets } => n_targets,
            Self::SnrScnr => 1,
            Self::BeamPattern { n_grid } => n_grid,
        }
    }
}

/// Sensing-only bound `⌊√d⌋`.
pub fn bound_radar(kind: MetricKind) -> usize {
    let d = kind.d();
    assert!(d >= 1, "metric must have at least one quadratic term");
    isqrt(d as u64) as usize
}

/// How the size of the sensing metric is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sizing {
    QuadTerms(usize),
    Params(usize),
    Targets(usize),
    Metric(MetricKind),
}

/// A bound query: `K` users plus exactly one sizing field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub k_users: usize,
    pub sizing: Sizing,
}

impl BoundQuery {
    /// Structural number of quadratic terms.
    pub fn d(&self) -> usize {
        match self.sizing {
            Sizing::QuadTerms(d) => d,
            Sizing::Params(l) => bfim_d(l),
            Sizing::Targets(n) => multitarget_d(n),
            Sizing::Metric(kind) => kind.d(),
        }
    }

    /// Evaluates the bound in the given mode.
    pub fn evaluate(&self, mode: BoundMode, opts: BoundOptions) -> usize {
        let opts = match (opts.n_tx, self.sizing) {
            (None, Sizing::Metric(MetricKind::FullChannel { n_tx })) => BoundOptions {
                n_tx: Some(n_tx),
                ..opts
            },
            _ => opts,
        };
        bound_for_d(self.k_users, self.d(), mode, opts)
    }
}

/// The sum bound is known to be loose by one for the radar SNR with `K ≥ 1`;
/// reported as information only.
pub fn sum_bound_loose_by_one(k: usize, d: usize) -> bool {
    d == 1 && k >= 1
}

/// Bound table for LoS targets as CSV: `k,n_tr,d,ic,nic`.
pub fn multitarget_bound_table(ks: &[usize], n_targets: &[usize]) -> String {
    let mut out = String::from("k,n_tr,d,ic,nic\n");
    for &n in n_targets {
        for &k in ks {
            let d = multitarget_d(n);
            out.push_str(&format!(
                "{k},{n},{d},{},{}\n",
                bound_sum(k, d),
                bound_hypotenuse(k, d)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isqrt_matches_perfect_squares() {
        for x in 0u64..2000 {
            assert_eq!(isqrt(x * x), x);
            if x > 0 {
                assert_eq!(isqrt(x * x - 1), x - 1);
            }
        }
    }
}
