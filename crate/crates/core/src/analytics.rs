//! Outcome statistics: descriptive summaries, rank correlation, paired
//! outcome transitions with the Stuart-Maxwell test, and corrective-action
//! metrics for perturbation studies.

use std::io::{self, Write};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::env::episode::EpisodeRecord;
use crate::env::action::Action;
use crate::env::{Outcome, ACT_DIM};
use crate::error::StatsError;

/// Five-number summary plus mean, as drawn in a box plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data, `p` in [0, 1].
fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Summary of a sample; `None` when empty or any value is NaN.
pub fn describe(xs: &[f64]) -> Option<BoxStats> {
    if xs.is_empty() || xs.iter().any(|x| x.is_nan()) {
        return None;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    Some(BoxStats {
        count: s.len(),
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

/// One-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(StatsError::Invalid("NaN in input".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`: power series for the lower
/// function below `x = a + 1`, modified Lentz continued fraction above.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q needs a > 0 and x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    let ln_pre = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        return (1.0 - sum * ln_pre.exp()).max(0.0);
    }
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (ln_pre.exp() * h).min(1.0)
}

/// Upper tail probability of a chi-square variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    gamma_q(0.5 * dof as f64, 0.5 * x.max(0.0))
}

/// Paired outcome counts; rows are condition A, columns condition B, both in
/// (success, slip, tip) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl TransitionMatrix {
    pub fn row_marginals(&self) -> [u64; 3] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn col_marginals(&self) -> [u64; 3] {
        std::array::from_fn(|j| self.counts.iter().map(|r| r[j]).sum())
    }

    pub fn total(&self) -> u64 {
        self.row_marginals().iter().sum()
    }

    /// Same matrix with categories reordered: entry `(i, j)` moves to `(p[i], p[j])`.
    pub fn permuted(&self, p: [usize; 3]) -> TransitionMatrix {
        let mut out = TransitionMatrix::default();
        for i in 0..3 {
            for j in 0..3 {
                out.counts[p[i]][p[j]] = self.counts[i][j];
            }
        }
        out
    }
}

pub fn build_transition_matrix(
    a: &[Outcome],
    b: &[Outcome],
) -> Result<TransitionMatrix, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let mut t = TransitionMatrix::default();
    for (x, y) in a.iter().zip(b) {
        match (x.category(), y.category()) {
            (Some(i), Some(j)) => t.counts[i][j] += 1,
            _ => {
                return Err(StatsError::Invalid(format!(
                    "outcome pair ({}, {}) is not a task outcome",
                    x.label(),
                    y.label()
                )))
            }
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuartMaxwell {
    pub chi2: f64,
    pub dof: usize,
    pub p: f64,
}

/// Relative singular-value cutoff for the pseudo-inverse.
const PINV_RTOL: f64 = 1e-12;

/// Stuart-Maxwell test of marginal homogeneity. A singular covariance is
/// handled with the pseudo-inverse and `dof` = its rank.
pub fn stuart_maxwell(t: &TransitionMatrix) -> StuartMaxwell {
    let n = t.counts.map(|r| r.map(|c| c as f64));
    let rows = t.row_marginals().map(|c| c as f64);
    let cols = t.col_marginals().map(|c| c as f64);
    let d = Vector2::new(rows[0] - cols[0], rows[1] - cols[1]);
    let mut s = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            s[(i, j)] = if i == j {
                rows[i] + cols[i] - 2.0 * n[i][i]
            } else {
                -(n[i][j] + n[j][i])
            };
        }
    }
    let svd = s.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return StuartMaxwell { chi2: 0.0, dof: 0, p: 1.0 };
    }
    let cut = smax * PINV_RTOL;
    let dof = svd.singular_values.iter().filter(|&&v| v > cut).count();
    let pinv = svd.pseudo_inverse(cut).expect("svd computed with both factors");
    let chi2 = d.dot(&(pinv * d)).max(0.0);
    StuartMaxwell {
        chi2,
        dof,
        p: chi2_sf(chi2, dof),
    }
}

/// Normalizer for corrective action: the norm of an all-ones action.
pub fn action_norm_scale() -> f64 {
    (ACT_DIM as f64).sqrt()
}

/// `100 * |a_u - a_p| / sqrt(13)`, percent.
pub fn corrective_action(a_unperturbed: &Action, a_perturbed: &Action) -> f64 {
    let sq: f64 = a_unperturbed
        .iter()
        .zip(a_perturbed)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    100.0 * sq.sqrt() / action_norm_scale()
}

/// Per-step corrective action over the common prefix of two action logs.
pub fn corrective_series(unperturbed: &[Action], perturbed: &[Action]) -> Vec<f64> {
    unperturbed
        .iter()
        .zip(perturbed)
        .map(|(a, b)| corrective_action(a, b))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

pub const DEFAULT_WINDOW: usize = 100;

/// Statistics of `series[onset..onset + window]`.
pub fn window_stats(series: &[f64], onset: usize, window: usize) -> Result<WindowStats, StatsError> {
    let end = onset + window;
    if window == 0 || end > series.len() {
        return Err(StatsError::Window {
            start: onset,
            end,
            len: series.len(),
        });
    }
    let s = describe(&series[onset..end]).ok_or(StatsError::Invalid("NaN in series".into()))?;
    Ok(WindowStats {
        mean: s.mean,
        median: s.median,
        max: s.max,
    })
}

/// One row of the corrective-action table, grouped by outcome transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectiveRow {
    pub from: Outcome,
    pub to: Outcome,
    pub count: usize,
    pub stats: WindowStats,
}

/// Paired trial: outcomes without and with perturbation and the per-step
/// corrective action series.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrial {
    pub unperturbed: Outcome,
    pub perturbed: Outcome,
    pub series: Vec<f64>,
}

/// Groups trials by transition and pools the window samples of each group.
/// Trials whose series do not cover the window are skipped and counted in
/// the second return value.
pub fn corrective_table(
    trials: &[PairedTrial],
    onset: usize,
    window: usize,
) -> (Vec<CorrectiveRow>, usize) {
    let mut rows = Vec::new();
    let mut skipped = 0;
    for from in Outcome::CATEGORIES {
        for to in Outcome::CATEGORIES {
            let mut pooled = Vec::new();
            let mut count = 0;
            for t in trials.iter().filter(|t| t.unperturbed == from && t.perturbed == to) {
                if t.series.len() < onset + window {
                    skipped += 1;
                    continue;
                }
                pooled.extend_from_slice(&t.series[onset..onset + window]);
                count += 1;
            }
            if count > 0 {
                let stats = window_stats(&pooled, 0, pooled.len()).expect("non-empty window");
                rows.push(CorrectiveRow { from, to, count, stats });
            }
        }
    }
    (rows, skipped)
}

/// Variables available to the correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    XSize,
    YSize,
    ZSize,
    Mass,
    Success,
    Slip,
    Tip,
    Length,
}

impl Variable {
    pub const ALL: [Variable; 8] = [
        Variable::XSize,
        Variable::YSize,
        Variable::ZSize,
        Variable::Mass,
        Variable::Success,
        Variable::Slip,
        Variable::Tip,
        Variable::Length,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::XSize => "xsize",
            Variable::YSize => "ysize",
            Variable::ZSize => "zsize",
            Variable::Mass => "mass",
            Variable::Success => "success",
            Variable::Slip => "slip",
            Variable::Tip => "tip",
            Variable::Length => "length",
        }
    }

    pub fn value(self, r: &EpisodeRecord) -> f64 {
        let ind = |o: Outcome| if r.outcome == o { 1.0 } else { 0.0 };
        match self {
            Variable::XSize => r.box_spec.size[0],
            Variable::YSize => r.box_spec.size[1],
            Variable::ZSize => r.box_spec.size[2],
            Variable::Mass => r.box_spec.mass,
            Variable::Success => ind(Outcome::Lift),
            Variable::Slip => ind(Outcome::Slip),
            Variable::Tip => ind(Outcome::Tip),
            Variable::Length => r.length as f64,
        }
    }
}

/// Pairwise Spearman matrix over named columns; `None` where undefined.
pub fn correlation_columns(cols: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>, StatsError> {
    let n = cols.first().map_or(0, Vec::len);
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    if let Some(c) = cols.iter().find(|c| c.len() != n) {
        return Err(StatsError::LengthMismatch(n, c.len()));
    }
    let ranks: Vec<Vec<f64>> = cols.iter().map(|c| average_ranks(c)).collect();
    Ok((0..cols.len())
        .map(|i| {
            (0..cols.len())
                .map(|j| pearson(&ranks[i], &ranks[j]).ok())
                .collect()
        })
        .collect())
}

pub fn correlation_matrix(
    records: &[EpisodeRecord],
    vars: &[Variable],
) -> Result<Vec<Vec<Option<f64>>>, StatsError> {
    let cols: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| records.iter().map(|r| v.value(r)).collect())
        .collect();
    correlation_columns(&cols)
}

/// Outcome histogram in (success, slip, tip, aborted) order.
pub fn outcome_counts(outcomes: &[Outcome]) -> [usize; 4] {
    let mut c = [0; 4];
    for o in outcomes {
        c[o.category().unwrap_or(3)] += 1;
    }
    c
}

pub fn write_summary_csv<W: Write>(mut out: W, rows: &[(String, [usize; 4])]) -> io::Result<()> {
    writeln!(out, "policy,episodes,success,slip,tip,aborted,success_rate,slip_rate,tip_rate")?;
    for (name, c) in rows {
        let n: usize = c.iter().sum();
        let rate = |k: usize| if n == 0 { 0.0 } else { c[k] as f64 / n as f64 };
        writeln!(
            out,
            "{name},{n},{},{},{},{},{},{},{}",
            c[0],
            c[1],
            c[2],
            c[3],
            rate(0),
            rate(1),
            rate(2)
        )?;
    }
    Ok(())
}

pub fn write_transition_csv<W: Write>(
    mut out: W,
    t: &TransitionMatrix,
    test: &StuartMaxwell,
) -> io::Result<()> {
    let names = ["success", "slip", "tip"];
    writeln!(out, "a_outcome,success,slip,tip,total")?;
    let rows = t.row_marginals();
    for (i, name) in names.iter().enumerate() {
        let c = t.counts[i];
        writeln!(out, "{name},{},{},{},{}", c[0], c[1], c[2], rows[i])?;
    }
    let cols = t.col_marginals();
    writeln!(out, "total,{},{},{},{}", cols[0], cols[1], cols[2], t.total())?;
    writeln!(out, "# stuart_maxwell chi2={} dof={} p={}", test.chi2, test.dof, test.p)
}

pub fn write_corrective_csv<W: Write>(mut out: W, rows: &[CorrectiveRow]) -> io::Result<()> {
    writeln!(out, "transition,trials,mean_pct,median_pct,max_pct")?;
    for r in rows {
        writeln!(
            out,
            "{}->{},{},{},{},{}",
            r.from.label(),
            r.to.label(),
            r.count,
            r.stats.mean,
            r.stats.median,
            r.stats.max
        )?;
    }
    Ok(())
}

pub fn write_correlation_csv<W: Write>(
    mut out: W,
    names: &[&str],
    m: &[Vec<Option<f64>>],
) -> io::Result<()> {
    writeln!(out, "variable,{}", names.join(","))?;
    for (name, row) in names.iter().zip(m) {
        let cells: Vec<String> = row
            .iter()
            .map(|v| v.map_or("undefined".to_string(), |x| x.to_string()))
            .collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_small_sample() {
        let s = describe(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.max, s.median, s.mean), (1.0, 4.0, 2.5, 2.5));
        assert_eq!((s.q1, s.q3), (1.75, 3.25));
        assert!(describe(&[]).is_none());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn gamma_q_known_values() {
        // Q(1, x) = exp(-x)
        for x in [0.1, 1.0, 5.0, 30.0] {
            assert!((gamma_q(1.0, x) / (-x).exp() - 1.0).abs() < 1e-13);
        }
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn diagonal_table_has_no_evidence() {
        let t = TransitionMatrix {
            counts: [[5, 0, 0], [0, 3, 0], [0, 0, 2]],
        };
        let r = stuart_maxwell(&t);
        assert_eq!((r.chi2, r.p), (0.0, 1.0));
    }

    #[test]
    fn window_checks_bounds() {
        let s = vec![1.0; 150];
        assert!(window_stats(&s, 60, 100).is_err());
        let w = window_stats(&s, 50, 100).unwrap();
        assert_eq!((w.mean, w.median, w.max), (1.0, 1.0, 1.0));
    }
}
