//! Hypothesis tests used by the experiments. All tests are two-sided.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl From<ChiSquareResult> for TestResult {
    fn from(r: ChiSquareResult) -> Self {
        TestResult {
            statistic: r.statistic,
            p_value: r.p_value,
        }
    }
}

fn normal_two_sided(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).min(1.0)
}

/// `z = (estimate − target)/se`, with `z = 0` when both the error and the
/// discrepancy vanish.
pub fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    let d = estimate - target;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// One-sample proportion test of `hits/n` against `p0`.
pub fn prop_ztest(hits: u64, n: u64, p0: f64) -> TestResult {
    assert!(n >= 1, "proportion test needs n ≥ 1");
    let se = (p0 * (1.0 - p0) / n as f64).sqrt();
    let z = z_score(hits as f64 / n as f64, p0, se);
    TestResult {
        statistic: z,
        p_value: normal_two_sided(z),
    }
}

pub fn z_test(estimate: f64, target: f64, se: f64) -> TestResult {
    let z = z_score(estimate, target, se);
    TestResult {
        statistic: z,
        p_value: normal_two_sided(z),
    }
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance and its large-sample standard error
/// `√((m₄ − s⁴)/n)`.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (var, ((m4 - m2 * m2) / n).max(0.0).sqrt())
}

/// Kolmogorov survival function `Q(λ) = 2Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction).
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> TestResult {
    assert!(!xs.is_empty() && !ys.is_empty(), "KS test needs nonempty samples");
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    b.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).unwrap().sf(stat)
}

/// Merges runs of adjacent buckets until every merged bucket has expected
/// count ≥ 5; a short tail joins the last full bucket.
fn merge_buckets(observed: &[f64], expected: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(lo), Some(le)) => {
                *lo += o;
                *le += e;
            }
            _ => {
                obs.push(o);
                exp.push(e);
            }
        }
    }
    (obs, exp)
}

/// Pearson goodness of fit; buckets with expected count below 5 are merged
/// with their neighbors first. `df = buckets − 1`.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> ChiSquareResult {
    assert_eq!(observed.len(), expected.len());
    let (obs, exp) = merge_buckets(observed, expected);
    let statistic: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| if *e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let df = obs.len().saturating_sub(1);
    ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    }
}

/// Pearson test of independence on an `r × c` table of counts. Columns are
/// merged left to right until every cell's expected count is ≥ 5.
pub fn chi_square_contingency(table: &[Vec<u64>]) -> ChiSquareResult {
    let r = table.len();
    assert!(r >= 2, "contingency table needs two rows");
    let c = table[0].len();
    let row_tot: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let total: f64 = row_tot.iter().sum();
    let min_row = row_tot.iter().copied().fold(f64::INFINITY, f64::min);
    // merge columns
    let mut merged: Vec<Vec<f64>> = Vec::new();
    let mut acc = vec![0.0; r];
    for col in 0..c {
        for (i, row) in table.iter().enumerate() {
            acc[i] += row[col] as f64;
        }
        let col_tot: f64 = acc.iter().sum();
        if col_tot * min_row / total >= 5.0 {
            merged.push(std::mem::replace(&mut acc, vec![0.0; r]));
        }
    }
    if acc.iter().sum::<f64>() > 0.0 {
        match merged.last_mut() {
            Some(last) => last.iter_mut().zip(&acc).for_each(|(l, a)| *l += a),
            None => merged.push(acc),
        }
    }
    let mut statistic = 0.0;
    for col in &merged {
        let col_tot: f64 = col.iter().sum();
        for i in 0..r {
            let e = row_tot[i] * col_tot / total;
            if e > 0.0 {
                statistic += (col[i] - e).powi(2) / e;
            }
        }
    }
    let df = (r - 1) * merged.len().saturating_sub(1);
    ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    }
}

/// Two-sample homogeneity test for categorical samples given as counts over
/// the same categories.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquareResult {
    assert_eq!(a.len(), b.len());
    // Sort categories by pooled frequency so merging joins the rare ones.
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by_key(|&i| std::cmp::Reverse(a[i] + b[i]));
    let table = vec![idx.iter().map(|&i| a[i]).collect(), idx.iter().map(|&i| b[i]).collect()];
    chi_square_contingency(&table)
}

/// `min(1, m·p)` for each of `m` p-values.
pub fn bonferroni(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len() as f64;
    p_values.iter().map(|p| (p * m).min(1.0)).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Energy distance `2E|X−Y| − E|X−X′| − E|Y−Y′|` between two samples of
/// vectors, with a permutation p-value over `permutations` relabelings.
pub fn energy_test<R: Rng + ?Sized>(xs: &[Vec<f64>], ys: &[Vec<f64>], permutations: usize, rng: &mut R) -> TestResult {
    let pooled: Vec<&Vec<f64>> = xs.iter().chain(ys).collect();
    let n = pooled.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclid(pooled[i], pooled[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let stat = |labels: &[bool]| -> f64 {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let d = dist[i * n + j];
                match (labels[i], labels[j]) {
                    (true, true) => xx += d,
                    (false, false) => yy += d,
                    _ => xy += d,
                }
            }
        }
        let nx = labels.iter().filter(|&&l| l).count() as f64;
        let ny = n as f64 - nx;
        // xy counts each cross pair twice
        xy / (nx * ny) - xx / (nx * nx) - yy / (ny * ny)
    };
    let mut labels: Vec<bool> = (0..n).map(|i| i < xs.len()).collect();
    let observed = stat(&labels);
    let mut exceed = 0;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if stat(&labels) >= observed {
            exceed += 1;
        }
    }
    TestResult {
        statistic: observed,
        p_value: (exceed + 1) as f64 / (permutations + 1) as f64,
    }
}
