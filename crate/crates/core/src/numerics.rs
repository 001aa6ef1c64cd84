//! Geometric core: distance matrices, classical (Torgerson) MDS, automatic
//! dimension selection by profile likelihood, and Fisher's linear
//! discriminant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("empty input")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),
    #[error("requested {requested} dimensions from {n} points")]
    TooManyDimensions { requested: usize, n: usize },
    #[error("both classes must be present (class0 = {class0}, class1 = {class1})")]
    SingleClass { class0: usize, class1: usize },
    #[error("non-finite value in input")]
    NonFinite,
}

/// Symmetric, zero-diagonal, nonnegative n×n matrix (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, NumericsError> {
        if entries.len() != n * n {
            return Err(NumericsError::ShapeMismatch(format!(
                "{} entries for n = {n}",
                entries.len()
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(NumericsError::InvalidDistance(format!("d({i},{i}) != 0")));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(NumericsError::InvalidDistance(format!("d({i},{j}) = {v}")));
                }
                if v != entries[j * n + i] {
                    return Err(NumericsError::InvalidDistance(format!("d({i},{j}) != d({j},{i})")));
                }
            }
        }
        Ok(DistanceMatrix { n, entries })
    }

    /// Builds a matrix from a pairwise function evaluated once per unordered pair.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, NumericsError> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self::new(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.n.max(1))
    }

    /// Multiplies every entry by `s > 0`.
    pub fn scaled(&self, s: f64) -> DistanceMatrix {
        DistanceMatrix {
            n: self.n,
            entries: self.entries.iter().map(|x| x * s).collect(),
        }
    }
}

fn check_uniform(points: &[Vec<f64>]) -> Result<usize, NumericsError> {
    let dim = points.first().ok_or(NumericsError::Empty)?.len();
    for p in points {
        if p.len() != dim {
            return Err(NumericsError::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
    }
    Ok(dim)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn pairwise_euclidean(points: &[Vec<f64>]) -> Result<DistanceMatrix, NumericsError> {
    check_uniform(points)?;
    DistanceMatrix::from_fn(points.len(), |i, j| euclidean(&points[i], &points[j]))
}

/// `‖A − B‖_F` for two matrices given as equal-shape row lists.
pub fn frobenius_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::ShapeMismatch(format!("{} vs {} rows", a.len(), b.len())));
    }
    let mut acc = 0.0;
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        if ra.len() != rb.len() {
            return Err(NumericsError::ShapeMismatch(format!(
                "row {i}: {} vs {} columns",
                ra.len(),
                rb.len()
            )));
        }
        acc += ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsResult {
    /// n rows of `d` coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Full spectrum of the doubly centred matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub d: usize,
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue, each
/// eigenvector sign-normalized so its largest-magnitude entry is positive
/// (lowest index wins near-ties).
pub fn symmetric_eigen_descending(m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let pivot = v
                .iter()
                .position(|x| x.abs() >= max * (1.0 - 1e-9))
                .unwrap_or(0);
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    (values, vectors)
}

/// `−½ J (D∘D) J` with `J = I − 11ᵀ/n`.
pub fn double_center(d: &DistanceMatrix) -> DMatrix<f64> {
    let n = d.n();
    let sq = DMatrix::from_fn(n, n, |i, j| d.get(i, j) * d.get(i, j));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    // exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

/// Classical multidimensional scaling. With `dim = None` the dimension is
/// chosen by [`select_dim_profile_likelihood`] on the positive spectrum.
pub fn classical_mds(d: &DistanceMatrix, dim: Option<usize>) -> Result<MdsResult, NumericsError> {
    let n = d.n();
    if n == 0 {
        return Err(NumericsError::Empty);
    }
    if let Some(k) = dim {
        if k == 0 || k > n {
            return Err(NumericsError::TooManyDimensions { requested: k, n });
        }
    }
    let b = double_center(d);
    let (values, vectors) = symmetric_eigen_descending(&b);
    // Eigenvalues below this are numerical zero.
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = scale * 1e-10;
    let positive: Vec<f64> = values.iter().copied().take_while(|&v| v > floor).collect();
    let k = match dim {
        Some(k) => k,
        None if positive.is_empty() => 1,
        None => select_dim_profile_likelihood(&positive),
    };
    let coords = (0..n)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if values[j] > floor {
                        values[j].sqrt() * vectors[j][i]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(MdsResult {
        coords,
        eigenvalues: values,
        d: k,
    })
}

/// Profile log-likelihood of every split `q = 1..n-1` of a descending list
/// into two Gaussian groups with separate means and a pooled ML variance.
/// Entry `q - 1` holds the value for split `q`.
pub fn profile_log_likelihood(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let ss = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (1..n)
        .map(|q| {
            let (a, b) = values.split_at(q);
            let (ma, mb) = (mean(a), mean(b));
            let total = ss(a, ma) + ss(b, mb);
            let var = (total / n as f64).max(1e-12);
            -0.5 * n as f64 * (2.0 * std::f64::consts::PI * var).ln() - total / (2.0 * var)
        })
        .collect()
}

/// Elbow of a descending spectrum: the split maximizing the profile
/// likelihood (earliest split on ties). A single value selects 1.
pub fn select_dim_profile_likelihood(values: &[f64]) -> usize {
    if values.len() <= 1 {
        return 1;
    }
    let profile = profile_log_likelihood(values);
    let mut best = 0;
    for (i, &v) in profile.iter().enumerate() {
        if v > profile[best] {
            best = i;
        }
    }
    best + 1
}

/// Two-class Fisher discriminant. Predicts class 0 iff `w·x >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FldModel {
    pub w: Vec<f64>,
    pub threshold: f64,
    pub class0_label: String,
    pub class1_label: String,
}

impl FldModel {
    pub fn project(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `true` means class 1.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.project(x) < self.threshold
    }
}

fn class_means(x: &[Vec<f64>], labels: &[bool], dim: usize) -> (DVector<f64>, DVector<f64>, usize, usize) {
    let mut m0 = DVector::zeros(dim);
    let mut m1 = DVector::zeros(dim);
    let (mut n0, mut n1) = (0, 0);
    for (row, &y) in x.iter().zip(labels) {
        let v = DVector::from_column_slice(row);
        if y {
            m1 += v;
            n1 += 1;
        } else {
            m0 += v;
            n0 += 1;
        }
    }
    if n0 > 0 {
        m0 /= n0 as f64;
    }
    if n1 > 0 {
        m1 /= n1 as f64;
    }
    (m0, m1, n0, n1)
}

/// Fits `w = (S_W + εI)⁻¹(μ₀ − μ₁)` with pooled within-class scatter `S_W`
/// and ridge `ε = max(1e-6·tr(S_W)/d, 1e-12)`; threshold `w·(μ₀ + μ₁)/2`.
/// `labels[i] == true` marks class 1.
pub fn fld_fit(x: &[Vec<f64>], labels: &[bool]) -> Result<FldModel, NumericsError> {
    fld_fit_named(x, labels, "class0", "class1")
}

pub fn fld_fit_named(
    x: &[Vec<f64>],
    labels: &[bool],
    class0_label: &str,
    class1_label: &str,
) -> Result<FldModel, NumericsError> {
    let dim = check_uniform(x)?;
    if labels.len() != x.len() {
        return Err(NumericsError::ShapeMismatch(format!(
            "{} rows, {} labels",
            x.len(),
            labels.len()
        )));
    }
    let (m0, m1, n0, n1) = class_means(x, labels, dim);
    if n0 == 0 || n1 == 0 {
        return Err(NumericsError::SingleClass { class0: n0, class1: n1 });
    }
    let mut sw = DMatrix::<f64>::zeros(dim, dim);
    for (row, &y) in x.iter().zip(labels) {
        let centered = DVector::from_column_slice(row) - if y { &m1 } else { &m0 };
        sw.syger(1.0, &centered, &centered, 1.0);
    }
    sw.fill_lower_triangle_with_upper_triangle();
    let eps = (1e-6 * sw.trace() / dim as f64).max(1e-12);
    for i in 0..dim {
        sw[(i, i)] += eps;
    }
    let diff = &m0 - &m1;
    let w = match sw.clone().cholesky() {
        Some(ch) => ch.solve(&diff),
        None => sw
            .lu()
            .solve(&diff)
            .ok_or(NumericsError::NonFinite)?,
    };
    let mid = (&m0 + &m1) * 0.5;
    Ok(FldModel {
        threshold: w.dot(&mid),
        w: w.iter().copied().collect(),
        class0_label: class0_label.to_string(),
        class1_label: class1_label.to_string(),
    })
}

/// Fraction of rows whose predicted class differs from the label.
pub fn fld_risk(model: &FldModel, x: &[Vec<f64>], labels: &[bool]) -> Result<f64, NumericsError> {
    if x.is_empty() {
        return Err(NumericsError::Empty);
    }
    if labels.len() != x.len() {
        return Err(NumericsError::ShapeMismatch(format!(
            "{} rows, {} labels",
            x.len(),
            labels.len()
        )));
    }
    for row in x {
        if row.len() != model.w.len() {
            return Err(NumericsError::DimensionMismatch {
                expected: model.w.len(),
                got: row.len(),
            });
        }
    }
    let wrong = x
        .iter()
        .zip(labels)
        .filter(|(row, &y)| model.predict(row) != y)
        .count();
    Ok(wrong as f64 / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use crate::util::rng_from;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect()
    }

    fn max_reconstruction_error(points: &[Vec<f64>], coords: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..points.len() {
            for j in 0..points.len() {
                let a = euclidean(&points[i], &points[j]);
                let b = euclidean(&coords[i], &coords[j]);
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    #[test]
    fn pairwise_small_cases() {
        let d = pairwise_euclidean(&[vec![0.0], vec![3.0]]).unwrap();
        assert_eq!(d.rows().map(|r| r.to_vec()).collect::<Vec<_>>(), vec![vec![0.0, 3.0], vec![3.0, 0.0]]);
        let d = pairwise_euclidean(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.get(0, 0), 0.0);
        assert!(matches!(
            pairwise_euclidean(&[vec![1.0], vec![1.0, 2.0]]),
            Err(NumericsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pairwise_matches_reference() {
        let pts = random_points(20, 5, 1);
        let d = pairwise_euclidean(&pts).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += (pts[i][k] - pts[j][k]).powi(2);
                }
                assert!((d.get(i, j) - s.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn frobenius_cases() {
        let a = random_points(4, 3, 2);
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(frobenius_distance(&[vec![1.0]], &[vec![4.0]]).unwrap(), 3.0);
        assert!(frobenius_distance(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
        let a = random_points(20, 768, 3);
        let b = random_points(20, 768, 4);
        let flat_a: Vec<f64> = a.concat();
        let flat_b: Vec<f64> = b.concat();
        assert!((frobenius_distance(&a, &b).unwrap() - euclidean(&flat_a, &flat_b)).abs() < 1e-9);
    }

    #[test]
    fn two_point_mds() {
        let d = DistanceMatrix::new(2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let r = classical_mds(&d, Some(1)).unwrap();
        let mut xs: Vec<f64> = r.coords.iter().map(|c| c[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((xs[0] + 1.0).abs() < 1e-12 && (xs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equilateral_triangle() {
        let d = DistanceMatrix::new(3, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let r = classical_mds(&d, Some(2)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((euclidean(&r.coords[i], &r.coords[j]) - d.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn round_trip_three_dimensions() {
        let pts = random_points(20, 3, 42);
        let r = classical_mds(&pairwise_euclidean(&pts).unwrap(), Some(3)).unwrap();
        assert!(max_reconstruction_error(&pts, &r.coords) < 1e-8);
        assert_eq!(r.eigenvalues.len(), 20);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn mds_rejects_bad_dimension() {
        let d = pairwise_euclidean(&random_points(3, 2, 0)).unwrap();
        assert!(classical_mds(&d, Some(4)).is_err());
        assert!(classical_mds(&d, Some(0)).is_err());
    }

    #[test]
    fn mds_output_centered_and_sign_stable() {
        let pts = random_points(15, 4, 8);
        let d = pairwise_euclidean(&pts).unwrap();
        let r = classical_mds(&d, Some(4)).unwrap();
        for j in 0..4 {
            let mean: f64 = r.coords.iter().map(|c| c[j]).sum::<f64>() / 15.0;
            assert!(mean.abs() < 1e-9);
            let col: Vec<f64> = r.coords.iter().map(|c| c[j]).collect();
            let max = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let pivot = col.iter().position(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap();
            assert!(col[pivot] > 0.0);
        }
        assert_eq!(r, classical_mds(&d, Some(4)).unwrap());
    }

    #[test]
    fn negative_spectrum_gives_zero_columns() {
        // violates the triangle inequality, so the centred matrix is indefinite
        let d = DistanceMatrix::new(3, vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]).unwrap();
        let r = classical_mds(&d, Some(3)).unwrap();
        assert!(r.eigenvalues[2] < 0.0);
        assert!(r.coords.iter().all(|c| c[2] == 0.0));
    }

    #[test]
    fn eigen_residual_contract() {
        let pts = random_points(30, 6, 77);
        let b = double_center(&pairwise_euclidean(&pts).unwrap());
        let (vals, vecs) = symmetric_eigen_descending(&b);
        let bnorm = b.norm();
        for (lambda, v) in vals.iter().zip(&vecs) {
            let v = DVector::from_column_slice(v);
            let residual = (&b * &v - &v * *lambda).norm();
            assert!(residual <= 1e-8 * bnorm, "residual {residual}");
        }
    }

    /// Profile likelihood by direct evaluation of Gaussian log-densities.
    fn brute_select(values: &[f64]) -> usize {
        let n = values.len();
        if n == 1 {
            return 1;
        }
        let mut best = (1, f64::NEG_INFINITY);
        for q in 1..n {
            let m1 = values[..q].iter().sum::<f64>() / q as f64;
            let m2 = values[q..].iter().sum::<f64>() / (n - q) as f64;
            let mut s = 0.0;
            for (i, x) in values.iter().enumerate() {
                let m = if i < q { m1 } else { m2 };
                s += (x - m) * (x - m);
            }
            let var = (s / n as f64).max(1e-12);
            let ll: f64 = values
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let m = if i < q { m1 } else { m2 };
                    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - m).powi(2) / (2.0 * var)
                })
                .sum();
            if ll > best.1 {
                best = (q, ll);
            }
        }
        best.0
    }

    #[test]
    fn profile_likelihood_examples() {
        assert_eq!(brute_select(&[10.0, 10.0, 10.0, 1.0, 1.0, 1.0]), 3);
        assert_eq!(select_dim_profile_likelihood(&[10.0, 10.0, 10.0, 1.0, 1.0, 1.0]), 3);
        assert_eq!(brute_select(&[5.0, 1.0]), 1);
        assert_eq!(select_dim_profile_likelihood(&[5.0, 1.0]), 1);
        assert_eq!(select_dim_profile_likelihood(&[2.0]), 1);
    }

    #[test]
    fn profile_likelihood_matches_brute_force() {
        let mut rng = rng_from(13);
        for _ in 0..200 {
            let n = rng.gen_range(2..30);
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..50.0)).collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(select_dim_profile_likelihood(&v), brute_select(&v));
        }
    }

    #[test]
    fn planted_elbow_recovered() {
        let big = Normal::new(10.0, 0.1).unwrap();
        let small = Normal::new(1.0, 0.1).unwrap();
        let mut rng = rng_from(5);
        for q in [2, 3, 5] {
            let mut v: Vec<f64> = (0..q).map(|_| big.sample(&mut rng)).collect();
            v.extend((q..20).map(|_| small.sample(&mut rng)));
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(select_dim_profile_likelihood(&v), q);
        }
    }

    #[test]
    fn fld_separated_means() {
        let x = vec![vec![-1.0, 0.0], vec![-1.0, 0.1], vec![1.0, 0.0], vec![1.0, -0.1]];
        let y = vec![false, false, true, true];
        let m = fld_fit(&x, &y).unwrap();
        assert_eq!(fld_risk(&m, &x, &y).unwrap(), 0.0);
        let flipped: Vec<bool> = y.iter().map(|b| !b).collect();
        assert_eq!(fld_risk(&m, &x, &flipped).unwrap(), 1.0);
    }

    #[test]
    fn fld_identical_classes_tie_to_class0() {
        let pts = random_points(5, 3, 9);
        let mut x = pts.clone();
        x.extend(pts);
        let y: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let m = fld_fit(&x, &y).unwrap();
        for row in &x {
            assert_eq!(m.project(row), m.threshold);
            assert!(!m.predict(row));
        }
        assert_eq!(fld_risk(&m, &x, &y).unwrap(), 0.5);
    }

    #[test]
    fn fld_one_dimensional_direction() {
        let mut rng = rng_from(31);
        let n0 = Normal::new(2.0, 1.0).unwrap();
        let n1 = Normal::new(-1.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            x.push(vec![n0.sample(&mut rng)]);
            y.push(false);
            x.push(vec![n1.sample(&mut rng)]);
            y.push(true);
        }
        let m = fld_fit(&x, &y).unwrap();
        let mu0: f64 = x.iter().zip(&y).filter(|(_, &c)| !c).map(|(r, _)| r[0]).sum::<f64>() / 50.0;
        let mu1: f64 = x.iter().zip(&y).filter(|(_, &c)| c).map(|(r, _)| r[0]).sum::<f64>() / 50.0;
        assert_eq!(m.w[0].signum(), (mu0 - mu1).signum());
        // 1-d closed form: w = (mu0 - mu1) / (S_W + eps)
        let sw: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, &c)| (r[0] - if c { mu1 } else { mu0 }).powi(2))
            .sum();
        let expected = (mu0 - mu1) / (sw + 1e-6 * sw);
        assert!((m.w[0] - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn fld_single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(fld_fit(&x, &[false, false]), Err(NumericsError::SingleClass { .. })));
    }

    #[test]
    fn fld_risk_counts_misclassifications() {
        let mut rng = rng_from(4);
        for _ in 0..20 {
            let x = random_points(30, 3, rng.gen());
            let y: Vec<bool> = (0..30).map(|_| rng.gen()).collect();
            if y.iter().all(|&b| b) || y.iter().all(|&b| !b) {
                continue;
            }
            let m = fld_fit(&x, &y).unwrap();
            let mut wrong = 0;
            for (row, &label) in x.iter().zip(&y) {
                let s: f64 = m.w.iter().zip(row).map(|(a, b)| a * b).sum();
                let predicted_class1 = !(s >= m.threshold);
                if predicted_class1 != label {
                    wrong += 1;
                }
            }
            assert_eq!(fld_risk(&m, &x, &y).unwrap(), wrong as f64 / 30.0);
        }
    }
}
