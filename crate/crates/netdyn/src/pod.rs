//! Proper orthogonal decomposition of snapshot matrices: thin SVD, mode
//! selection, projection onto the dominant modes, and reconstruction.
//!
//! The thin SVD is computed in two stages. For `min(N, K) <= 64` the
//! eigendecomposition of the smaller Gram matrix provides a warm start;
//! larger problems start cold. Either way, one-sided Jacobi orthogonalization
//! then rotates pairs of columns until they are mutually orthogonal at
//! machine precision, so both paths satisfy identical postconditions:
//!
//! - `||X - U diag(sigma) V^T||_F <= 1e-10 ||X||_F`,
//! - `U`, `V` have orthonormal columns,
//! - `sigma` sorted descending,
//! - deterministic sign convention: the largest-magnitude entry of every
//!   left-singular vector is positive.
//!
//! Snapshots are decomposed raw, without mean-centering, so the projection
//! coefficients are plain inner products with the modes. Centering, when
//! wanted, is the caller's preprocessing step.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::linalg;
use crate::scalar::{format_sig17, Scalar};
use crate::{Error, Result};

/// Gram-matrix warm start is used up to this side length.
const GRAM_LIMIT: usize = 64;

/// N x K matrix of equidistant nodal-state observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix<T: Scalar> {
    x: Array2<T>,
    dt: T,
}

impl<T: Scalar> SnapshotMatrix<T> {
    pub fn new(x: Array2<T>, dt: T) -> Result<Self> {
        if x.ncols() < 2 {
            return Err(Error::InsufficientData(format!(
                "a snapshot matrix needs at least 2 columns, got {}",
                x.ncols()
            )));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Domain(format!("dt = {dt} must be positive")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("snapshot matrix"));
        }
        Ok(Self { x, dt })
    }

    /// All snapshots of a trajectory.
    pub fn from_trajectory(traj: &Trajectory<T>) -> Self {
        Self { x: traj.states().clone(), dt: traj.dt() }
    }

    /// First `k_obs` snapshots of a trajectory.
    pub fn from_window(traj: &Trajectory<T>, k_obs: usize) -> Result<Self> {
        let w = traj.window(k_obs)?;
        Ok(Self { x: w.states().clone(), dt: w.dt() })
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Snapshot count K.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Observation span `(K - 1) dt`.
    pub fn t_obs(&self) -> T {
        self.dt * T::of((self.len() - 1) as f64)
    }
}

/// Thin singular value decomposition `X = U diag(sigma) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd<T: Scalar> {
    /// N x r left-singular vectors.
    pub u: Array2<T>,
    /// r singular values, descending.
    pub sigma: Array1<T>,
    /// K x r right-singular vectors.
    pub v: Array2<T>,
}

/// Thin SVD with `r = min(N, K)` retained triplets.
pub fn thin_svd<T: Scalar>(x: &Array2<T>) -> Result<ThinSvd<T>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVD input"));
    }
    let (n, k) = x.dim();
    if n == 0 || k == 0 {
        return Err(Error::DimMismatch("SVD input must be nonempty".into()));
    }
    let transposed = n < k;
    let work = if transposed { x.t().to_owned() } else { x.clone() };
    let r = work.ncols();

    let (mut w, mut v) = if r <= GRAM_LIMIT {
        // Gram warm start: eigenvectors of the r x r Gram matrix.
        let gram = work.t().dot(&work);
        let (_, vecs) = linalg::jacobi_eigh(&gram)?;
        // Eigenvalues come ascending; flip to put dominant columns first.
        let mut vdesc = Array2::<T>::zeros((r, r));
        for j in 0..r {
            for i in 0..r {
                vdesc[[i, j]] = vecs[[i, r - 1 - j]];
            }
        }
        (work.dot(&vdesc), vdesc)
    } else {
        (work.clone(), Array2::<T>::eye(r))
    };

    onesided_orthogonalize(&mut w, &mut v);

    // Column norms are the singular values; normalize what can be normalized
    // and complete the rest to an orthonormal set.
    let rows = w.nrows();
    let mut sigma = Array1::<T>::zeros(r);
    let mut deficient = Vec::new();
    for j in 0..r {
        let norm = scaled_column_norm(&w, j);
        sigma[j] = norm;
        if norm > T::zero() {
            for i in 0..rows {
                w[[i, j]] /= norm;
            }
        } else {
            deficient.push(j);
        }
    }
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("finite singular values"));
    let mut u_sorted = Array2::<T>::zeros((rows, r));
    let mut v_sorted = Array2::<T>::zeros((v.nrows(), r));
    let mut sigma_sorted = Array1::<T>::zeros(r);
    let mut deficient_sorted = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sigma_sorted[dst] = sigma[src];
        u_sorted.column_mut(dst).assign(&w.column(src));
        v_sorted.column_mut(dst).assign(&v.column(src));
        if deficient.contains(&src) {
            deficient_sorted.push(dst);
        }
    }
    linalg::complete_orthonormal(&mut u_sorted, &deficient_sorted);

    let (mut u, mut v) = if transposed { (v_sorted, u_sorted) } else { (u_sorted, v_sorted) };
    let flips = linalg::dominant_sign_flips(&u);
    linalg::flip_columns(&mut u, &flips);
    linalg::flip_columns(&mut v, &flips);

    Ok(ThinSvd { u, sigma: sigma_sorted, v })
}

/// One-sided Jacobi sweeps: rotate column pairs of `w` (and the matching
/// columns of `v`) until every pair is orthogonal to within a few ulps.
fn onesided_orthogonalize<T: Scalar>(w: &mut Array2<T>, v: &mut Array2<T>) {
    let rows = w.nrows();
    let r = w.ncols();
    let vrows = v.nrows();
    let tol2 = T::epsilon() * T::epsilon() * T::of(16.0);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..r.saturating_sub(1) {
            for q in (p + 1)..r {
                let mut a = T::zero();
                let mut b = T::zero();
                let mut d = T::zero();
                for i in 0..rows {
                    let wp = w[[i, p]];
                    let wq = w[[i, q]];
                    a += wp * wp;
                    b += wq * wq;
                    d += wp * wq;
                }
                if d == T::zero() || d * d <= tol2 * a * b {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (d + d);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let wp = w[[i, p]];
                    let wq = w[[i, q]];
                    w[[i, p]] = c * wp - s * wq;
                    w[[i, q]] = s * wp + c * wq;
                }
                for i in 0..vrows {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Overflow-safe Euclidean norm of one column.
fn scaled_column_norm<T: Scalar>(w: &Array2<T>, j: usize) -> T {
    let mut mx = T::zero();
    for i in 0..w.nrows() {
        mx = mx.max(w[[i, j]].abs());
    }
    if mx == T::zero() {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..w.nrows() {
        let e = w[[i, j]] / mx;
        acc += e * e;
    }
    mx * acc.sqrt()
}

/// Subtracts the temporal mean state from every snapshot. Off by default in
/// the pipeline (the projection contract works on raw states); callers who
/// want fluctuation modes apply this first and keep the mean for
/// reconstruction.
pub fn mean_center<T: Scalar>(snaps: &SnapshotMatrix<T>) -> (SnapshotMatrix<T>, Array1<T>) {
    let (n, k) = snaps.matrix().dim();
    let inv = T::one() / T::of(k as f64);
    let mut mean = Array1::<T>::zeros(n);
    for i in 0..n {
        mean[i] = snaps.matrix().row(i).iter().copied().sum::<T>() * inv;
    }
    let mut x = snaps.matrix().clone();
    for i in 0..n {
        for col in 0..k {
            x[[i, col]] -= mean[i];
        }
    }
    (SnapshotMatrix { x, dt: snaps.dt }, mean)
}

/// Mode-count selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModePolicy {
    /// Keep exactly `m` modes (clipped to the available rank).
    Fixed(usize),
    /// Keep the smallest m with cumulative squared singular-value energy
    /// at least `1 - epsilon` of the total.
    Energy(f64),
}

/// Applies a [`ModePolicy`] to a descending singular-value sequence.
pub fn select_modes<T: Scalar>(sigma: &Array1<T>, policy: &ModePolicy) -> Result<usize> {
    let r = sigma.len();
    if r == 0 {
        return Err(Error::DimMismatch("empty singular-value sequence".into()));
    }
    match *policy {
        ModePolicy::Fixed(m) => {
            if m == 0 {
                return Err(Error::InvalidSpec("fixed mode count must be >= 1".into()));
            }
            Ok(m.min(r))
        }
        ModePolicy::Energy(eps) => {
            if !(0.0 < eps && eps < 1.0) {
                return Err(Error::InvalidSpec(format!("energy threshold {eps} outside (0, 1)")));
            }
            let total: T = sigma.iter().map(|&s| s * s).sum();
            let target = T::of(1.0 - eps) * total;
            let mut cum = T::zero();
            for (idx, &s) in sigma.iter().enumerate() {
                cum += s * s;
                if cum >= target {
                    return Ok(idx + 1);
                }
            }
            Ok(r)
        }
    }
}

/// Retained POD modes: the first `m` left-singular vectors of the snapshot
/// matrix, plus the full singular-value sequence for energy accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis<T: Scalar> {
    modes: Array2<T>,
    sigma: Array1<T>,
}

impl<T: Scalar> PodBasis<T> {
    /// Keeps the first `m` modes of a decomposition.
    pub fn from_svd(svd: &ThinSvd<T>, m: usize) -> Result<Self> {
        let r = svd.sigma.len();
        if m == 0 || m > r {
            return Err(Error::InvalidSpec(format!("mode count {m} outside 1..={r}")));
        }
        Ok(Self {
            modes: svd.u.slice(s![.., ..m]).to_owned(),
            sigma: svd.sigma.clone(),
        })
    }

    /// N x m mode matrix.
    pub fn modes(&self) -> &Array2<T> {
        &self.modes
    }

    /// All `min(N, K)` singular values, descending.
    pub fn sigma(&self) -> &Array1<T> {
        &self.sigma
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }

    /// Retained mode count.
    pub fn m(&self) -> usize {
        self.modes.ncols()
    }

    /// Fraction of squared singular-value energy captured by the retained
    /// modes; 1 when the spectrum is all zero.
    pub fn captured_energy(&self) -> T {
        let total: T = self.sigma.iter().map(|&s| s * s).sum();
        if total == T::zero() {
            return T::one();
        }
        let kept: T = self.sigma.iter().take(self.m()).map(|&s| s * s).sum();
        kept / total
    }

    /// Frobenius norm of the discarded tail, `sqrt(sum_{p>m} sigma_p^2)`.
    pub fn truncation_residual(&self) -> T {
        self.sigma.iter().skip(self.m()).map(|&s| s * s).sum::<T>().sqrt()
    }
}

/// Time history of the projection coefficients: row `p` tracks mode `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSeries<T: Scalar> {
    c: Array2<T>,
    dt: T,
}

impl<T: Scalar> CoeffSeries<T> {
    pub fn new(c: Array2<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Domain(format!("dt = {dt} must be positive")));
        }
        Ok(Self { c, dt })
    }

    /// m x K coefficient matrix.
    pub fn matrix(&self) -> &Array2<T> {
        &self.c
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Snapshot count K.
    pub fn len(&self) -> usize {
        self.c.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.c.ncols() == 0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Coefficient vector at column `k`.
    pub fn column(&self, k: usize) -> Array1<T> {
        self.c.column(k).to_owned()
    }
}

/// Projects every snapshot onto the retained modes: `C = Y^T X`.
pub fn project<T: Scalar>(basis: &PodBasis<T>, snaps: &SnapshotMatrix<T>) -> Result<CoeffSeries<T>> {
    if snaps.n() != basis.n() {
        return Err(Error::DimMismatch(format!(
            "snapshots have {} rows, basis has {}",
            snaps.n(),
            basis.n()
        )));
    }
    CoeffSeries::new(basis.modes.t().dot(snaps.matrix()), snaps.dt())
}

/// Projects a single state vector: `c_p = y_p^T x`.
pub fn project_state<T: Scalar>(basis: &PodBasis<T>, x: &Array1<T>) -> Result<Array1<T>> {
    if x.len() != basis.n() {
        return Err(Error::DimMismatch(format!(
            "state length {} for basis over {} nodes",
            x.len(),
            basis.n()
        )));
    }
    Ok(basis.modes.t().dot(x))
}

/// Reconstructs states from coefficients: `X_hat = Y C`.
pub fn reconstruct<T: Scalar>(basis: &PodBasis<T>, coeffs: &CoeffSeries<T>) -> Result<Array2<T>> {
    if coeffs.m() != basis.m() {
        return Err(Error::DimMismatch(format!(
            "{} coefficient rows for {} modes",
            coeffs.m(),
            basis.m()
        )));
    }
    Ok(basis.modes.dot(coeffs.matrix()))
}

/// Reconstructs one state vector: `x_hat = Y c`.
pub fn reconstruct_state<T: Scalar>(basis: &PodBasis<T>, c: &Array1<T>) -> Result<Array1<T>> {
    if c.len() != basis.m() {
        return Err(Error::DimMismatch(format!(
            "{} coefficients for {} modes",
            c.len(),
            basis.m()
        )));
    }
    Ok(basis.modes.dot(c))
}

/// Serializes a basis: a JSON header line with the shape metadata, then a
/// sigma block and the mode matrix (one CSV row per node).
pub fn basis_to_csv<T: Scalar>(basis: &PodBasis<T>, k: usize, dt: T) -> String {
    let t_obs = dt * T::of((k.max(1) - 1) as f64);
    let mut out = format!(
        "{}\n",
        serde_json::json!({
            "n": basis.n(),
            "k": k,
            "m": basis.m(),
            "dt": dt.to_f64(),
            "t_obs": t_obs.to_f64(),
        })
    );
    out.push_str("# sigma\n");
    for s in basis.sigma.iter() {
        out.push_str(&format_sig17(*s));
        out.push('\n');
    }
    out.push_str("# modes\n");
    for i in 0..basis.n() {
        let row: Vec<String> = (0..basis.m()).map(|j| format_sig17(basis.modes[[i, j]])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn random_matrix(n: usize, k: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::seeded(seed);
        Array2::from_shape_fn((n, k), |_| crate::rng::unit_f64(&mut rng) * 2.0 - 1.0)
    }

    fn check_postconditions(x: &Array2<f64>, svd: &ThinSvd<f64>) {
        let (n, k) = x.dim();
        let r = n.min(k);
        assert_eq!(svd.u.dim(), (n, r));
        assert_eq!(svd.v.dim(), (k, r));
        // reconstruction
        let mut recon = Array2::<f64>::zeros((n, k));
        for p in 0..r {
            for i in 0..n {
                for j in 0..k {
                    recon[[i, j]] += svd.sigma[p] * svd.u[[i, p]] * svd.v[[j, p]];
                }
            }
        }
        let num = linalg::frobenius(&(&recon - x));
        let den = linalg::frobenius(x).max(1e-300);
        assert!(num <= 1e-10 * den, "reconstruction residual {}", num / den);
        // descending sigma
        for p in 1..r {
            assert!(svd.sigma[p] <= svd.sigma[p - 1]);
        }
        // orthonormality of both factors
        for (mat, name) in [(&svd.u, "U"), (&svd.v, "V")] {
            let mat: &Array2<f64> = mat;
            let g = mat.t().dot(mat);
            for i in 0..r {
                for j in 0..r {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (g[[i, j]] - expect).abs() <= 1e-10,
                        "{name}'s Gram defect at ({i},{j}): {}",
                        (g[[i, j]] - expect).abs()
                    );
                }
            }
        }
        // sign convention
        for p in 0..r {
            let mut best = 0.0;
            let mut val = 0.0;
            for i in 0..n {
                if svd.u[[i, p]].abs() > best {
                    best = svd.u[[i, p]].abs();
                    val = svd.u[[i, p]];
                }
            }
            assert!(val >= 0.0, "column {p} dominant entry negative");
        }
    }

    #[test]
    fn svd_identity() {
        let x = Array2::<f64>::eye(3);
        let svd = thin_svd(&x).unwrap();
        for p in 0..3 {
            assert_abs_diff_eq!(svd.sigma[p], 1.0, epsilon = 1e-12);
        }
        check_postconditions(&x, &svd);
    }

    #[test]
    fn svd_rank_one_outer_product() {
        let u = array![0.6, 0.8, 0.0];
        let v = array![0.0, 1.0];
        let mut x = Array2::<f64>::zeros((3, 2));
        for i in 0..3 {
            for j in 0..2 {
                x[[i, j]] = u[i] * v[j];
            }
        }
        let svd = thin_svd(&x).unwrap();
        assert_abs_diff_eq!(svd.sigma[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(svd.sigma[1], 0.0, epsilon = 1e-12);
        check_postconditions(&x, &svd);
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        let x = random_matrix(6, 8, 2);
        let svd = thin_svd(&x).unwrap();
        let gram = x.dot(&x.t());
        let (vals, _) = linalg::jacobi_eigh(&gram).unwrap();
        // ascending eigenvalues of X X^T vs descending singular values
        for p in 0..6 {
            let expect = vals[5 - p].max(0.0).sqrt();
            assert_abs_diff_eq!(svd.sigma[p], expect, epsilon = 1e-9);
        }
        check_postconditions(&x, &svd);
    }

    #[test]
    fn svd_zero_matrix_completes_basis() {
        let x = Array2::<f64>::zeros((4, 3));
        let svd = thin_svd(&x).unwrap();
        for p in 0..3 {
            assert_eq!(svd.sigma[p], 0.0);
        }
        check_postconditions(&x, &svd);
    }

    #[test]
    fn svd_wide_and_tall_orientations() {
        for (n, k) in [(3usize, 9usize), (9, 3), (5, 5), (1, 4), (4, 1)] {
            let x = random_matrix(n, k, (n * 100 + k) as u64);
            let svd = thin_svd(&x).unwrap();
            check_postconditions(&x, &svd);
        }
    }

    #[test]
    fn svd_deterministic() {
        let x = random_matrix(7, 5, 3);
        let a = thin_svd(&x).unwrap();
        let b = thin_svd(&x).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut x = Array2::<f64>::zeros((2, 2));
        x[[0, 0]] = f64::NAN;
        assert!(matches!(thin_svd(&x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn svd_ill_conditioned_snapshots_keep_orthonormal_modes() {
        // Exponentially decaying spectrum, the realistic trajectory case.
        let n = 20;
        let k = 200;
        let mut rng = crate::rng::seeded(9);
        let mut x = Array2::<f64>::zeros((n, k));
        for p in 0..n {
            let scale = (10.0f64).powi(-(p as i32));
            let dir = Array1::from_iter((0..n).map(|_| crate::rng::unit_f64(&mut rng) - 0.5));
            let profile =
                Array1::from_iter((0..k).map(|j| (-(p as f64 + 1.0) * j as f64 / k as f64).exp()));
            for i in 0..n {
                for j in 0..k {
                    x[[i, j]] += scale * dir[i] * profile[j];
                }
            }
        }
        let svd = thin_svd(&x).unwrap();
        check_postconditions(&x, &svd);
    }

    #[test]
    fn select_modes_policies() {
        let sigma = array![1.0, 0.0, 0.0];
        assert_eq!(select_modes(&sigma, &ModePolicy::Energy(0.01)).unwrap(), 1);

        let sigma = array![2.0, 1.0, 1.0];
        // cumulative ratios 4/6, 5/6 both below 0.9, so all three are needed
        assert_eq!(select_modes(&sigma, &ModePolicy::Energy(0.1)).unwrap(), 3);

        assert_eq!(select_modes(&sigma, &ModePolicy::Fixed(2)).unwrap(), 2);
        assert_eq!(select_modes(&sigma, &ModePolicy::Fixed(9)).unwrap(), 3);
        assert!(matches!(
            select_modes(&sigma, &ModePolicy::Energy(1.5)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn project_reconstruct_basics() {
        let x = random_matrix(6, 10, 4);
        let svd = thin_svd(&x).unwrap();
        let basis = PodBasis::from_svd(&svd, 3).unwrap();

        // projecting a mode returns a unit coefficient vector
        let y1 = basis.modes().column(0).to_owned();
        let c = project_state(&basis, &y1).unwrap();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c[2], 0.0, epsilon = 1e-10);

        // zero coefficients reconstruct the zero state
        let zero = reconstruct_state(&basis, &array![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(zero, Array1::<f64>::zeros(6));

        // project -> reconstruct -> project is idempotent
        let snaps = SnapshotMatrix::new(x.clone(), 0.1).unwrap();
        let c1 = project(&basis, &snaps).unwrap();
        let xr = reconstruct(&basis, &c1).unwrap();
        let snaps2 = SnapshotMatrix::new(xr, 0.1).unwrap();
        let c2 = project(&basis, &snaps2).unwrap();
        let diff = linalg::max_abs(&(c1.matrix() - c2.matrix()));
        assert!(diff <= 1e-10, "idempotency defect {diff}");
    }

    #[test]
    fn reconstruct_rank_m_exactly() {
        // Build a rank-3 matrix and keep 3 modes: representation is exact.
        let a = random_matrix(8, 3, 5);
        let b = random_matrix(3, 12, 6);
        let x = a.dot(&b);
        let svd = thin_svd(&x).unwrap();
        let basis = PodBasis::from_svd(&svd, 3).unwrap();
        let snaps = SnapshotMatrix::new(x.clone(), 1.0).unwrap();
        let xr = reconstruct(&basis, &project(&basis, &snaps).unwrap()).unwrap();
        let err = linalg::frobenius(&(&xr - &x));
        assert!(err <= 1e-9 * linalg::frobenius(&x));
    }

    #[test]
    fn eckart_young_identity_per_mode_count() {
        let x = random_matrix(9, 14, 8);
        let svd = thin_svd(&x).unwrap();
        let norm = linalg::frobenius(&x);
        let snaps = SnapshotMatrix::new(x.clone(), 1.0).unwrap();
        for m in 1..=9 {
            let basis = PodBasis::from_svd(&svd, m).unwrap();
            let xr = reconstruct(&basis, &project(&basis, &snaps).unwrap()).unwrap();
            let residual = linalg::frobenius(&(&xr - &x));
            let expected = basis.truncation_residual();
            assert!(
                (residual - expected).abs() <= 1e-8 * norm,
                "m={m}: residual {residual} vs tail {expected}"
            );
        }
    }

    #[test]
    fn basis_csv_has_header_and_blocks() {
        let x = random_matrix(4, 6, 10);
        let svd = thin_svd(&x).unwrap();
        let basis = PodBasis::from_svd(&svd, 2).unwrap();
        let text = basis_to_csv(&basis, 6, 0.5);
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["n"], 4);
        assert_eq!(header["m"], 2);
        assert_eq!(header["t_obs"], 2.5);
        assert!(text.contains("# sigma"));
        assert!(text.contains("# modes"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        // Orthonormality and the Eckart-Young identity over random shapes.
        #[test]
        fn svd_invariants_random_shapes(n in 2usize..12, k in 2usize..12, seed in 0u64..1000) {
            let x = random_matrix(n, k, seed);
            let svd = thin_svd(&x).unwrap();
            let r = n.min(k);
            let g = svd.u.t().dot(&svd.u);
            for i in 0..r {
                for j in 0..r {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g[[i, j]] - expect).abs() <= 1e-10);
                }
            }
            let norm = linalg::frobenius(&x);
            let snaps = SnapshotMatrix::new(x.clone(), 1.0).unwrap();
            let m = 1 + seed as usize % r;
            let basis = PodBasis::from_svd(&svd, m).unwrap();
            let xr = reconstruct(&basis, &project(&basis, &snaps).unwrap()).unwrap();
            let residual = linalg::frobenius(&(&xr - &x));
            prop_assert!((residual - basis.truncation_residual()).abs() <= 1e-8 * norm.max(1e-12));
        }
    }
}
