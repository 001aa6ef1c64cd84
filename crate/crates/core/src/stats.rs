//! k-NN classification with stratified cross-validation, vote baselines, and
//! the small set of inferential statistics used downstream: Kendall's tau-b,
//! the Wilcoxon signed-rank test, OLS goodness of fit and binomial standard
//! errors.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::{Party, Vote};
use crate::numerics::euclidean;
use crate::util::rng_from;

pub const DEFAULT_K_GRID: [usize; 5] = [1, 5, 9, 19, 49];
pub const DEFAULT_FOLDS: usize = 10;

/// Largest sample for which Kendall's p-value is computed by enumeration.
pub const KENDALL_EXACT_MAX_N: usize = 8;
/// Largest sample for which the signed-rank p-value is exact.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("k = {k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("only one label present")]
    SingleClass,
    #[error("statistic undefined: {0}")]
    Undefined(String),
    #[error("all differences are zero")]
    AllZeroDifferences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    KendallTauB,
    WilcoxonSignedRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n: usize,
    /// Whether the p-value came from exact enumeration.
    pub exact: bool,
}

// ---------------------------------------------------------------------------
// k-NN

/// Indices of the `k` nearest training rows, nearest first. Equal distances
/// keep the lower training index first.
fn nearest_indices(train_x: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, row)| (euclidean(row, query), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, i)| i).collect()
}

/// Majority vote over labels listed nearest first. A tie among the most
/// frequent labels goes to whichever of them appears first.
fn vote_nearest_first<L: Clone + PartialEq>(labels: &[&L]) -> L {
    let mut tally: Vec<(&L, usize)> = Vec::new();
    for &l in labels {
        match tally.iter_mut().find(|(seen, _)| *seen == l) {
            Some(entry) => entry.1 += 1,
            None => tally.push((l, 1)),
        }
    }
    let best = tally.iter().map(|(_, c)| *c).max().unwrap_or(0);
    // tally is in first-appearance order, so the first max is the tie winner
    tally
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(l, _)| l.clone())
        .expect("non-empty neighbour list")
}

pub fn knn_predict<L: Clone + PartialEq>(
    train_x: &[Vec<f64>],
    train_y: &[L],
    query: &[f64],
    k: usize,
) -> Result<L, StatsError> {
    if train_x.is_empty() {
        return Err(StatsError::Empty);
    }
    if train_x.len() != train_y.len() {
        return Err(StatsError::LengthMismatch(train_x.len(), train_y.len()));
    }
    if k == 0 {
        return Err(StatsError::ZeroK);
    }
    if k > train_x.len() {
        return Err(StatsError::KTooLarge { k, n: train_x.len() });
    }
    for row in train_x {
        if row.len() != query.len() {
            return Err(StatsError::DimensionMismatch {
                expected: query.len(),
                got: row.len(),
            });
        }
    }
    let idx = nearest_indices(train_x, query, k);
    let labels: Vec<&L> = idx.iter().map(|&i| &train_y[i]).collect();
    Ok(vote_nearest_first(&labels))
}

/// Stratified fold assignment. Each class is shuffled with a seeded RNG and
/// dealt round-robin, continuing the deal across classes so fold sizes
/// differ by at most one. Returns the fold index of every sample.
pub fn stratified_folds<L: Ord>(y: &[L], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    let mut by_class: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in y.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStats {
    pub mean_accuracy: f64,
    pub standard_error: f64,
    pub fold_accuracies: Vec<f64>,
}

impl KStats {
    pub fn from_folds(fold_accuracies: Vec<f64>) -> Self {
        let (mean_accuracy, standard_error) = mean_and_se(&fold_accuracies);
        KStats {
            mean_accuracy,
            standard_error,
            fold_accuracies,
        }
    }
}

/// Mean and standard error (sample standard deviation over √n).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / n.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub per_k: BTreeMap<usize, KStats>,
    pub best_k: usize,
    pub best_accuracy: f64,
    /// Grid values dropped because they exceeded some training fold.
    pub skipped_k: Vec<usize>,
    /// Labels with fewer members than folds (dealt best-effort).
    pub sparse_classes: Vec<String>,
    pub fold_of: Vec<usize>,
}

/// Seeded stratified k-fold cross-validation of k-NN over `k_grid`.
pub fn cv_knn<L: Clone + Ord + std::fmt::Debug>(
    x: &[Vec<f64>],
    y: &[L],
    k_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<CvReport, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if folds < 2 || x.len() < folds {
        return Err(StatsError::TooFewSamples {
            needed: folds.max(2),
            got: x.len(),
        });
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in y {
        *counts.entry(l).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(StatsError::SingleClass);
    }
    if k_grid.is_empty() || k_grid.contains(&0) {
        return Err(StatsError::ZeroK);
    }
    let sparse_classes = counts
        .iter()
        .filter(|(_, &c)| c < folds)
        .map(|(l, _)| format!("{l:?}"))
        .collect();
    let fold_of = stratified_folds(y, folds, seed);

    let smallest_train = (0..folds)
        .map(|f| fold_of.iter().filter(|&&g| g != f).count())
        .min()
        .unwrap_or(0);
    let mut grid: Vec<usize> = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let (usable, skipped_k): (Vec<usize>, Vec<usize>) = grid.into_iter().partition(|&k| k <= smallest_train);
    if usable.is_empty() {
        return Err(StatsError::KTooLarge {
            k: skipped_k[0],
            n: smallest_train,
        });
    }

    let mut per_fold: BTreeMap<usize, Vec<f64>> = usable.iter().map(|&k| (k, Vec::new())).collect();
    for f in 0..folds {
        let (mut tx, mut ty, mut qx, mut qy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if fold_of[i] == f {
                qx.push(&x[i]);
                qy.push(&y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i].clone());
            }
        }
        // one neighbour ordering per query serves every k
        let kmax = *usable.last().expect("non-empty grid");
        let orders: Vec<Vec<usize>> = qx.iter().map(|q| nearest_indices(&tx, q, kmax)).collect();
        for &k in &usable {
            let correct = orders
                .iter()
                .zip(&qy)
                .filter(|(order, truth)| {
                    let labels: Vec<&L> = order[..k].iter().map(|&i| &ty[i]).collect();
                    vote_nearest_first(&labels) == ***truth
                })
                .count();
            per_fold.get_mut(&k).expect("k in grid").push(correct as f64 / qy.len() as f64);
        }
    }
    let per_k: BTreeMap<usize, KStats> = per_fold.into_iter().map(|(k, a)| (k, KStats::from_folds(a))).collect();
    let (best_k, best_accuracy) = best_of(&per_k);
    Ok(CvReport {
        folds,
        seed,
        per_k,
        best_k,
        best_accuracy,
        skipped_k,
        sparse_classes,
        fold_of,
    })
}

/// Highest mean accuracy, smaller k on ties.
fn best_of(per_k: &BTreeMap<usize, KStats>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (&k, s) in per_k {
        if s.mean_accuracy > best.1 {
            best = (k, s.mean_accuracy);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Baselines

/// Modal vote among Yea/Nay entries; ties (including no entries) go to Yea.
pub fn baseline_majority(train_y: &[Vote]) -> Vote {
    let yea = train_y.iter().filter(|&&v| v == Vote::Yea).count();
    let nay = train_y.iter().filter(|&&v| v == Vote::Nay).count();
    if nay > yea {
        Vote::Nay
    } else {
        Vote::Yea
    }
}

/// Modal vote among training members of `query_party`, falling back to the
/// overall majority when the party is absent. Ties go to Yea.
pub fn baseline_party_line(train: &[(Party, Vote)], query_party: Party) -> Vote {
    let same: Vec<Vote> = train.iter().filter(|(p, _)| *p == query_party).map(|(_, v)| *v).collect();
    if same.is_empty() {
        let all: Vec<Vote> = train.iter().map(|(_, v)| *v).collect();
        baseline_majority(&all)
    } else {
        baseline_majority(&same)
    }
}

// ---------------------------------------------------------------------------
// Kendall's tau-b

fn count_tied_pairs<T: PartialEq>(sorted: &[T]) -> (i64, Vec<i64>) {
    let mut pairs = 0;
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as i64;
        if t > 1 {
            pairs += t * (t - 1) / 2;
            groups.push(t);
        }
        i = j;
    }
    (pairs, groups)
}

/// Counts inversions while merge-sorting `v` in place.
fn merge_sort_swaps(v: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_sort_swaps(&mut v[..mid]) + merge_sort_swaps(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            merged.push(v[j]);
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
    swaps
}

struct KendallParts {
    /// Concordant minus discordant pairs.
    s: i64,
    n0: i64,
    n1: i64,
    n2: i64,
    x_groups: Vec<i64>,
    y_groups: Vec<i64>,
}

/// Knight's O(n log n) pair accounting.
fn kendall_parts(x: &[f64], y: &[f64]) -> KendallParts {
    let n = x.len() as i64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (n1, x_groups) = count_tied_pairs(&xs);
    let (n3, _) = count_tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_sort_swaps(&mut ys);
    let (n2, y_groups) = count_tied_pairs(&ys);
    let n0 = n * (n - 1) / 2;
    KendallParts {
        s: n0 - n1 - n2 + n3 - 2 * swaps,
        n0,
        n1,
        n2,
        x_groups,
        y_groups,
    }
}

/// S statistic by direct pair comparison; used for permutation enumeration
/// where n is tiny.
fn s_statistic_pairs(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let a = (x[i] - x[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            let b = (y[i] - y[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            s += a * b;
        }
    }
    s
}

/// Rearranges `v` into its next lexicographic permutation of positions.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Two-sided permutation p-value: share of all n! orderings of `y` whose
/// |S| is at least the observed |S|.
fn kendall_exact_p(x: &[f64], y: &[f64], observed: i64) -> f64 {
    let n = x.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut shuffled = vec![0.0; n];
    let (mut hits, mut total) = (0u64, 0u64);
    loop {
        for (slot, &p) in shuffled.iter_mut().zip(&perm) {
            *slot = y[p];
        }
        if s_statistic_pairs(x, &shuffled).abs() >= observed.abs() {
            hits += 1;
        }
        total += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    hits as f64 / total as f64
}

/// Null variance of S with tie adjustment.
fn kendall_variance(n: i64, x_groups: &[i64], y_groups: &[i64]) -> f64 {
    let n = n as f64;
    let f = |g: &[i64], w: &dyn Fn(f64) -> f64| g.iter().map(|&t| w(t as f64)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = f(x_groups, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = f(y_groups, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = f(x_groups, &|t| t * (t - 1.0)) * f(y_groups, &|t| t * (t - 1.0));
    let v2 = f(x_groups, &|t| t * (t - 1.0) * (t - 2.0)) * f(y_groups, &|t| t * (t - 1.0) * (t - 2.0));
    let mut var = (v0 - vt - vu) / 18.0 + v1 / (2.0 * n * (n - 1.0));
    if n > 2.0 {
        var += v2 / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    var
}

/// Kendall's tau-b with a two-sided p-value: exact enumeration for
/// n ≤ [`KENDALL_EXACT_MAX_N`], tie-adjusted normal approximation above.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::Undefined("non-finite input".into()));
    }
    let parts = kendall_parts(x, y);
    if parts.n1 == parts.n0 || parts.n2 == parts.n0 {
        return Err(StatsError::Undefined("one variable is constant".into()));
    }
    let denom = (((parts.n0 - parts.n1) as f64) * ((parts.n0 - parts.n2) as f64)).sqrt();
    let tau = (parts.s as f64 / denom).clamp(-1.0, 1.0);
    let n = x.len();
    let (p, exact) = if n <= KENDALL_EXACT_MAX_N {
        (kendall_exact_p(x, y, parts.s), true)
    } else {
        let var = kendall_variance(n as i64, &parts.x_groups, &parts.y_groups);
        let z = parts.s as f64 / var.sqrt();
        (erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0), false)
    };
    Ok(TestResult {
        statistic: tau,
        p_value: p,
        method: TestMethod::KendallTauB,
        n,
        exact,
    })
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Null distribution of the positive-rank sum under random signs. Ranks
/// must be multiples of ½ (midranks are). Entry `s` is P(W⁺ = s/2).
pub fn signed_rank_distribution(ranks: &[f64]) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    let scale = 0.5f64.powi(ranks.len() as i32);
    counts.iter().map(|c| c * scale).collect()
}

/// Two-sided signed-rank test of `x − y`. Zero differences are dropped and
/// tied magnitudes get midranks. The statistic is min(W⁺, W⁻).
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::Undefined("non-finite difference".into()));
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&magnitudes);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let (p, exact) = if n <= WILCOXON_EXACT_MAX_N {
        let dist = signed_rank_distribution(&ranks);
        let cut = (2.0 * w).round() as usize;
        let tail: f64 = dist[..=cut].iter().sum();
        ((2.0 * tail).min(1.0), true)
    } else {
        let nf = n as f64;
        let mut tie_sum = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_sum += t * t * t - t;
            i = j;
        }
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum / 48.0;
        let z = (w - mean) / var.sqrt();
        (erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0), false)
    };
    Ok(TestResult {
        statistic: w,
        p_value: p,
        method: TestMethod::WilcoxonSignedRank,
        n,
        exact,
    })
}

// ---------------------------------------------------------------------------
// OLS and standard errors

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Simple least-squares line. A constant `y` yields r2 = 0.
pub fn ols_r2(x: &[f64], y: &[f64]) -> Result<LinearFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: x.len() });
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(StatsError::Undefined("x is constant".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

pub fn proportion_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}
