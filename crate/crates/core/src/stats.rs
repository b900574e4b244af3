//! Object-level evaluation metrics and two-group comparison statistics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_N_PERM: usize = 10_000;
pub const DEFAULT_N_BOOT: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1; a metric whose denominator is zero is 0.
pub fn prf1(c: EvalCounts) -> Result<Prf1> {
    if c.tp == 0 && c.fp == 0 && c.fn_ == 0 {
        return Err(Error::Degenerate("precision/recall undefined for all-zero counts".into()));
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    // 2PR/(P+R) = 2tp/(2tp+fp+fn)
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    Ok(Prf1 { precision, recall, f1 })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn check_sample(x: &[f64], name: &str) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::param(format!("group {name} needs at least 2 values, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(format!("group {name} has non-finite values")));
    }
    Ok(())
}

fn welch_raw(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let se2 = va / a.len() as f64 + vb / b.len() as f64;
    (se2 > 0.0).then(|| (ma - mb) / se2.sqrt())
}

/// Welch's t statistic with n−1 sample variances.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sample(a, "A")?;
    check_sample(b, "B")?;
    welch_raw(a, b).ok_or_else(|| Error::Degenerate("both groups have zero variance".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub t_obs: f64,
    pub p: f64,
    /// Relabelings evaluated: all of them when `exhaustive`.
    pub n_perm: usize,
    pub exhaustive: bool,
    pub seed: u64,
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > usize::MAX as u128 {
            return None;
        }
    }
    Some(c as usize)
}

fn exceeds(t: Option<f64>, t_obs: f64) -> bool {
    // degenerate relabelings count against the observed statistic
    t.is_none_or(|t| t.abs() >= t_obs.abs() * (1.0 - 1e-12) - 1e-12)
}

/// Invoke `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn split(pooled: &[f64], chosen: &[usize], a: &mut Vec<f64>, b: &mut Vec<f64>) {
    a.clear();
    b.clear();
    let mut c = chosen.iter().peekable();
    for (i, &v) in pooled.iter().enumerate() {
        if c.peek() == Some(&&i) {
            c.next();
            a.push(v);
        } else {
            b.push(v);
        }
    }
}

/// Two-sided Studentized permutation test on Welch's t. When the number of
/// distinct relabelings is at most `n_perm` they are enumerated and
/// `p = #{|t*| ≥ |t|} / #relabelings`; otherwise `n_perm` uniform
/// relabelings give `p = (1 + #{|t*| ≥ |t|}) / (n_perm + 1)`. Replicate `k`
/// draws from stream `k` of a ChaCha8 generator seeded with `seed`.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<PermutationResult> {
    let t_obs = welch_t(a, b)?;
    if n_perm == 0 {
        return Err(Error::param("n_perm must be >= 1"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, na) = (pooled.len(), a.len());
    if let Some(total) = binomial(n, na).filter(|&t| t <= n_perm) {
        let mut count = 0usize;
        let (mut xa, mut xb) = (Vec::with_capacity(na), Vec::with_capacity(n - na));
        for_each_subset(n, na, |s| {
            split(&pooled, s, &mut xa, &mut xb);
            if exceeds(welch_raw(&xa, &xb), t_obs) {
                count += 1;
            }
        });
        return Ok(PermutationResult {
            t_obs,
            p: count as f64 / total as f64,
            n_perm: total,
            exhaustive: true,
            seed,
        });
    }
    let count: usize = (0..n_perm)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(na), Vec::with_capacity(n - na)),
            |(xa, xb), k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let mut chosen = index::sample(&mut rng, n, na).into_vec();
                chosen.sort_unstable();
                split(&pooled, &chosen, xa, xb);
                exceeds(welch_raw(xa, xb), t_obs) as usize
            },
        )
        .sum();
    Ok(PermutationResult {
        t_obs,
        p: (1 + count) as f64 / (n_perm + 1) as f64,
        n_perm,
        exhaustive: false,
        seed,
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Bias-corrected and accelerated percentile bootstrap interval for
/// `stat`. Endpoints are order statistics of the bootstrap distribution.
/// Replicate `k` draws from stream `k` of a ChaCha8 generator seeded with
/// `seed`.
pub fn bca_bootstrap_ci_with(
    values: &[f64],
    stat: impl Fn(&[f64]) -> f64 + Sync,
    n_boot: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    check_sample(values, "sample")?;
    if n_boot < 2 {
        return Err(Error::param("n_boot must be >= 2"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let n = values.len();
    let theta = stat(values);
    if values.iter().all(|&v| v == values[0]) {
        return Ok((theta, theta));
    }
    let mut boot: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                buf.clear();
                buf.extend((0..n).map(|_| values[rng.random_range(0..n)]));
                stat(buf)
            },
        )
        .collect();
    boot.sort_unstable_by(f64::total_cmp);
    let below = boot.iter().filter(|&&t| t < theta).count() as f64;
    let equal = boot.iter().filter(|&&t| t == theta).count() as f64;
    let b = n_boot as f64;
    let frac = ((below + 0.5 * equal) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let norm = Normal::standard();
    let z0 = norm.inverse_cdf(frac);
    let mut jack = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(n - 1);
    for i in 0..n {
        buf.clear();
        buf.extend(values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
        jack.push(stat(&buf));
    }
    let jm = mean(&jack);
    let num: f64 = jack.iter().map(|t| (jm - t).powi(3)).sum();
    let den: f64 = jack.iter().map(|t| (jm - t).powi(2)).sum();
    let acc = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };
    let level = |z: f64| norm.cdf(z0 + (z0 + z) / (1.0 - acc * (z0 + z)));
    let pick = |q: f64| {
        let k = ((q * b).ceil() as usize).clamp(1, n_boot) - 1;
        boot[k]
    };
    let lo = pick(level(norm.inverse_cdf(alpha / 2.0)));
    let hi = pick(level(norm.inverse_cdf(1.0 - alpha / 2.0)));
    Ok((lo, hi))
}

/// BCa interval of the mean.
pub fn bca_bootstrap_ci(values: &[f64], n_boot: usize, alpha: f64, seed: u64) -> Result<(f64, f64)> {
    bca_bootstrap_ci_with(values, mean, n_boot, alpha, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    pub n_perm: usize,
    pub n_boot: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            n_perm: DEFAULT_N_PERM,
            n_boot: DEFAULT_N_BOOT,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub parameter: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub ci_a: (f64, f64),
    pub mean_b: f64,
    pub ci_b: (f64, f64),
    pub tstat: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub params: CompareParams,
    /// Seeds used: bootstrap of A, bootstrap of B, permutations.
    pub seeds: [u64; 3],
}

pub const REPORT_HEADER: [&str; 9] = [
    "parameter", "mean_A", "ci_A_lo", "ci_A_hi", "mean_B", "ci_B_lo", "ci_B_hi", "tstat", "p",
];

/// Numeric columns of a CSV by header name; empty cells are skipped.
pub fn read_columns<R: Read>(r: R) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut cols: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        for (h, cell) in header.iter().zip(rec.iter()) {
            if cell.is_empty() {
                continue;
            }
            if let Ok(v) = cell.trim().parse::<f64>() {
                cols.get_mut(h).expect("header column").push(v);
            } else if h != "group" {
                return Err(Error::Csv(format!("line {}: column {h}: not a number: {cell:?}", k + 2)));
            }
        }
    }
    Ok(cols)
}

/// Group means, BCa intervals, Welch t and permutation p per parameter.
pub fn compare_samples(
    groups_a: &BTreeMap<String, Vec<f64>>,
    groups_b: &BTreeMap<String, Vec<f64>>,
    parameters: &[&str],
    p: &CompareParams,
) -> Result<ComparisonReport> {
    let seeds = [p.seed, p.seed.wrapping_add(1), p.seed.wrapping_add(2)];
    let mut rows = Vec::new();
    for &name in parameters {
        let col = |g: &BTreeMap<String, Vec<f64>>, which: &str| -> Result<Vec<f64>> {
            g.get(name)
                .cloned()
                .ok_or_else(|| Error::Csv(format!("table {which} has no column {name:?}")))
        };
        let a = col(groups_a, "A")?;
        let b = col(groups_b, "B")?;
        let tstat = welch_t(&a, &b)?;
        let perm = permutation_test(&a, &b, p.n_perm, seeds[2])?;
        rows.push(ComparisonRow {
            parameter: name.to_owned(),
            n_a: a.len(),
            n_b: b.len(),
            mean_a: mean(&a),
            ci_a: bca_bootstrap_ci(&a, p.n_boot, p.alpha, seeds[0])?,
            mean_b: mean(&b),
            ci_b: bca_bootstrap_ci(&b, p.n_boot, p.alpha, seeds[1])?,
            tstat,
            p: perm.p,
        });
    }
    Ok(ComparisonReport { rows, params: *p, seeds })
}

/// Compare two per-axon summary tables.
pub fn compare_groups<R1: Read, R2: Read>(
    table_a: R1,
    table_b: R2,
    parameters: &[&str],
    p: &CompareParams,
) -> Result<ComparisonReport> {
    compare_samples(&read_columns(table_a)?, &read_columns(table_b)?, parameters, p)
}

pub fn write_report_csv<W: Write>(w: W, r: &ComparisonReport) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::Csv(e.to_string());
    wr.write_record(REPORT_HEADER).map_err(e)?;
    for row in &r.rows {
        wr.write_record([
            row.parameter.clone(),
            row.mean_a.to_string(),
            row.ci_a.0.to_string(),
            row.ci_a.1.to_string(),
            row.mean_b.to_string(),
            row.ci_b.0.to_string(),
            row.ci_b.1.to_string(),
            row.tstat.to_string(),
            row.p.to_string(),
        ])
        .map_err(e)?;
    }
    wr.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Fixed-width table for terminals.
pub fn format_report(r: &ComparisonReport) -> String {
    let mut s = format!(
        "{:<14} {:>8} {:>20} {:>8} {:>20} {:>7} {:>7}\n",
        "parameter", "mean A", "95% CI A", "mean B", "95% CI B", "tstat", "p"
    );
    for row in &r.rows {
        s.push_str(&format!(
            "{:<14} {:>8.3} {:>20} {:>8.3} {:>20} {:>7.2} {:>7.3}\n",
            row.parameter,
            row.mean_a,
            format!("[{:.3}, {:.3}]", row.ci_a.0, row.ci_a.1),
            row.mean_b,
            format!("[{:.3}, {:.3}]", row.ci_b.0, row.ci_b.1),
            row.tstat,
            row.p
        ));
    }
    s.push_str(&format!(
        "n_perm={} n_boot={} alpha={} seeds: boot_A={} boot_B={} perm={}; p uncorrected\n",
        r.params.n_perm, r.params.n_boot, r.params.alpha, r.seeds[0], r.seeds[1], r.seeds[2]
    ));
    s
}
