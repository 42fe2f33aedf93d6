//! Sparse identification of the coefficient dynamics: derivative estimation,
//! candidate-function library, and the STLSQ / SR3 sparse-regression solvers.
//!
//! The regression target is `Cdot = Xi * Theta(C)` solved row by row, one
//! independent regression per retained mode. Both solvers share the same
//! column-normalization convention: candidate functions are rescaled to unit
//! 2-norm before regression and the coefficients rescaled back afterwards,
//! so thresholds are comparable across library functions of different
//! magnitudes. Raw-scale regression (`normalize = false`) is kept available
//! because projection coefficients are mutually orthogonal with strongly
//! decaying norms, a regime where raw-scale thresholds select structure
//! better.
//!
//! Both solvers run fixed iteration orders with no randomized steps, so
//! identical inputs give bit-identical models.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::pod::CoeffSeries;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Trigonometric candidate kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigKind {
    Sin,
    Cos,
}

/// One trigonometric block: `kind(omega * c_p)` for every mode `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub kind: TrigKind,
    pub omega: f64,
}

/// Candidate-function library layout.
///
/// Function ordering is fixed: the constant, then the order-1 block
/// (`c_1..c_m`), then the order-2 block (all `m^2` ordered products in
/// row-major pair order `c_1 c_1, c_1 c_2, ..., c_m c_m`), then one block of
/// `m` rows per trigonometric term in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub include_constant: bool,
    /// Polynomial block orders; 1 and 2 are supported.
    pub poly_orders: BTreeSet<u32>,
    #[serde(default)]
    pub trig: Vec<TrigTerm>,
}

impl LibrarySpec {
    /// Constant + order-1 + order-2 polynomials, no trig.
    pub fn poly2() -> Self {
        Self {
            include_constant: true,
            poly_orders: BTreeSet::from([1, 2]),
            trig: Vec::new(),
        }
    }

    /// Order-1 block only.
    pub fn linear() -> Self {
        Self {
            include_constant: false,
            poly_orders: BTreeSet::from([1]),
            trig: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&order) = self.poly_orders.iter().find(|&&o| o == 0 || o > 2) {
            return Err(Error::InvalidSpec(format!(
                "polynomial order {order} unsupported (only 1 and 2)"
            )));
        }
        for term in &self.trig {
            if !(term.omega > 0.0) || !term.omega.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "trig frequency {} must be positive",
                    term.omega
                )));
            }
        }
        if !self.include_constant && self.poly_orders.is_empty() && self.trig.is_empty() {
            return Err(Error::InvalidSpec("library has no candidate functions".into()));
        }
        Ok(())
    }

    /// Total function count `d` for `m` modes.
    pub fn dim(&self, m: usize) -> usize {
        let mut d = usize::from(self.include_constant);
        if self.poly_orders.contains(&1) {
            d += m;
        }
        if self.poly_orders.contains(&2) {
            d += m * m;
        }
        d + self.trig.len() * m
    }

    /// Human-readable function names in library order.
    pub fn function_names(&self, m: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim(m));
        if self.include_constant {
            names.push("1".to_string());
        }
        if self.poly_orders.contains(&1) {
            for p in 1..=m {
                names.push(format!("c{p}"));
            }
        }
        if self.poly_orders.contains(&2) {
            for i in 1..=m {
                for j in 1..=m {
                    names.push(format!("c{i}*c{j}"));
                }
            }
        }
        for term in &self.trig {
            let kind = match term.kind {
                TrigKind::Sin => "sin",
                TrigKind::Cos => "cos",
            };
            for p in 1..=m {
                names.push(format!("{kind}({}*c{p})", term.omega));
            }
        }
        names
    }

    fn fill_column<T: Scalar>(&self, c: &[T], out: &mut [T]) {
        let m = c.len();
        let mut row = 0;
        if self.include_constant {
            out[row] = T::one();
            row += 1;
        }
        if self.poly_orders.contains(&1) {
            for &v in c {
                out[row] = v;
                row += 1;
            }
        }
        if self.poly_orders.contains(&2) {
            for i in 0..m {
                for j in 0..m {
                    out[row] = c[i] * c[j];
                    row += 1;
                }
            }
        }
        for term in &self.trig {
            let omega = T::of(term.omega);
            for &v in c {
                out[row] = match term.kind {
                    TrigKind::Sin => (omega * v).sin(),
                    TrigKind::Cos => (omega * v).cos(),
                };
                row += 1;
            }
        }
        debug_assert_eq!(row, self.dim(m));
    }
}

/// Central-difference derivatives of a coefficient series. Both endpoint
/// snapshots are dropped; `valid_range` names the retained column indices of
/// the source series so the regression uses aligned pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeMatrix<T: Scalar> {
    cdot: Array2<T>,
    valid: std::ops::Range<usize>,
}

impl<T: Scalar> DerivativeMatrix<T> {
    /// m x (K - 2) derivative estimates.
    pub fn cdot(&self) -> &Array2<T> {
        &self.cdot
    }

    /// Source-column indices the derivatives correspond to (`1..K-1`).
    pub fn valid_range(&self) -> std::ops::Range<usize> {
        self.valid.clone()
    }

    /// Slices a matrix with K source columns down to the valid range.
    pub fn align(&self, full: &Array2<T>) -> Result<Array2<T>> {
        if full.ncols() < self.valid.end {
            return Err(Error::DimMismatch(format!(
                "cannot align {} columns to range {:?}",
                full.ncols(),
                self.valid
            )));
        }
        Ok(full.slice(ndarray::s![.., self.valid.clone()]).to_owned())
    }
}

/// Second-order central differences `(c(k+1) - c(k-1)) / (2 dt)` over the
/// interior columns `1..K-1`.
pub fn central_difference<T: Scalar>(c: &CoeffSeries<T>) -> Result<DerivativeMatrix<T>> {
    let k = c.len();
    if k < 3 {
        return Err(Error::InsufficientData(format!(
            "central differences need at least 3 snapshots, got {k}"
        )));
    }
    let m = c.m();
    let inv = T::one() / (T::of(2.0) * c.dt());
    let mat = c.matrix();
    let mut cdot = Array2::<T>::zeros((m, k - 2));
    for p in 0..m {
        for col in 1..k - 1 {
            cdot[[p, col - 1]] = (mat[[p, col + 1]] - mat[[p, col - 1]]) * inv;
        }
    }
    Ok(DerivativeMatrix { cdot, valid: 1..k - 1 })
}

/// Evaluates the library on every column of an m x K' coefficient block,
/// producing the d x K' candidate matrix.
pub fn build_library<T: Scalar>(c_cols: &Array2<T>, spec: &LibrarySpec) -> Result<Array2<T>> {
    spec.validate()?;
    let m = c_cols.nrows();
    let kp = c_cols.ncols();
    let d = spec.dim(m);
    let mut theta = Array2::<T>::zeros((d, kp));
    let mut point = vec![T::zero(); m];
    let mut out = vec![T::zero(); d];
    for col in 0..kp {
        for p in 0..m {
            point[p] = c_cols[[p, col]];
        }
        spec.fill_column(&point, &mut out);
        for row in 0..d {
            theta[[row, col]] = out[row];
        }
    }
    Ok(theta)
}

/// Evaluates the library on a single coefficient vector.
pub fn library_point<T: Scalar>(c: &Array1<T>, spec: &LibrarySpec) -> Array1<T> {
    let mut out = vec![T::zero(); spec.dim(c.len())];
    let point: Vec<T> = c.iter().copied().collect();
    spec.fill_column(&point, &mut out);
    Array1::from_vec(out)
}

/// Solver identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Stlsq,
    Sr3,
}

/// STLSQ hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StlsqOptions<T> {
    /// Hard threshold on (normalized) coefficients.
    pub threshold: T,
    /// Ridge weight added to every least-squares refit.
    pub ridge: T,
    /// Rescale candidate functions to unit 2-norm before regression.
    pub normalize: bool,
}

impl<T: Scalar> Default for StlsqOptions<T> {
    fn default() -> Self {
        Self { threshold: T::of(0.1), ridge: T::of(1e-12), normalize: true }
    }
}

/// SR3 hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Sr3Options<T> {
    /// L1 weight on the auxiliary variable.
    pub gamma: T,
    /// Relaxation strength kappa coupling the smooth and sparse variables;
    /// the soft threshold is `gamma / kappa`.
    pub relaxation: T,
    pub max_iter: usize,
    /// Stop when the max-norm change of the auxiliary variable drops below.
    pub tol: T,
    pub normalize: bool,
}

impl<T: Scalar> Default for Sr3Options<T> {
    fn default() -> Self {
        Self {
            gamma: T::of(0.05),
            relaxation: T::one(),
            max_iter: 50_000,
            tol: T::of(1e-10),
            normalize: true,
        }
    }
}

/// Solver provenance stored on the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverInfo<T> {
    Stlsq(StlsqOptions<T>),
    Sr3(Sr3Options<T>),
}

impl<T> SolverInfo<T> {
    pub fn kind(&self) -> SolverKind {
        match self {
            SolverInfo::Stlsq(_) => SolverKind::Stlsq,
            SolverInfo::Sr3(_) => SolverKind::Sr3,
        }
    }
}

/// Fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics<T> {
    /// `||Cdot - Xi Theta||_F` on the raw (unnormalized) library.
    pub residual: T,
    pub nonzeros: usize,
    pub converged: bool,
    pub iterations: usize,
    /// More candidate functions than samples.
    pub underdetermined: bool,
}

/// Identified sparse model: row `p` of `xi` drives `dc_p/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SindyModel<T: Scalar> {
    /// m x d coefficient matrix; pruned entries are exact zeros.
    pub xi: Array2<T>,
    pub spec: LibrarySpec,
    /// L1 regularization weight that produced the model (0 for STLSQ).
    pub gamma: T,
    pub solver: SolverInfo<T>,
    pub diagnostics: SolveDiagnostics<T>,
}

impl<T: Scalar> SindyModel<T> {
    pub fn m(&self) -> usize {
        self.xi.nrows()
    }

    pub fn d(&self) -> usize {
        self.xi.ncols()
    }
}

/// Evaluates the identified dynamics at one coefficient vector:
/// `dc/dt = Xi * Theta(c)`.
pub fn model_rhs<T: Scalar>(model: &SindyModel<T>, c: &Array1<T>) -> Array1<T> {
    model.xi.dot(&library_point(c, &model.spec))
}

fn validate_regression_inputs<T: Scalar>(
    spec: &LibrarySpec,
    theta: &Array2<T>,
    cdot: &Array2<T>,
) -> Result<()> {
    spec.validate()?;
    let m = cdot.nrows();
    let d = spec.dim(m);
    if theta.nrows() != d {
        return Err(Error::DimMismatch(format!(
            "library matrix has {} rows, spec implies {d}",
            theta.nrows()
        )));
    }
    if theta.ncols() != cdot.ncols() {
        return Err(Error::DimMismatch(format!(
            "library has {} samples, derivatives have {}",
            theta.ncols(),
            cdot.ncols()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) || cdot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sparse regression input"));
    }
    Ok(())
}

/// Unit 2-norm row scaling; zero rows keep scale 1.
fn normalize_rows<T: Scalar>(theta: &Array2<T>, enabled: bool) -> (Array2<T>, Array1<T>) {
    let d = theta.nrows();
    let mut norms = Array1::<T>::from_elem(d, T::one());
    let mut thn = theta.clone();
    if enabled {
        for j in 0..d {
            let norm = theta.row(j).iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::zero() {
                norms[j] = norm;
                for col in 0..theta.ncols() {
                    thn[[j, col]] /= norm;
                }
            }
        }
    }
    (thn, norms)
}

fn residual_frobenius<T: Scalar>(theta: &Array2<T>, cdot: &Array2<T>, xi: &Array2<T>) -> T {
    let diff = cdot - &xi.dot(theta);
    linalg::frobenius(&diff)
}

/// Sequentially thresholded least squares, one regression per row of `cdot`.
///
/// Each row alternates a ridge-regularized least-squares fit with hard
/// thresholding of the (normalized) coefficients, refitting on the surviving
/// active set until it reaches a fixed point (at most 20 sweeps).
pub fn solve_stlsq<T: Scalar>(
    spec: &LibrarySpec,
    theta: &Array2<T>,
    cdot: &Array2<T>,
    opts: &StlsqOptions<T>,
) -> Result<SindyModel<T>> {
    validate_regression_inputs(spec, theta, cdot)?;
    if !(opts.threshold >= T::zero()) || !(opts.ridge >= T::zero()) {
        return Err(Error::InvalidSpec("threshold and ridge must be nonnegative".into()));
    }
    let m = cdot.nrows();
    let d = theta.nrows();
    let (thn, norms) = normalize_rows(theta, opts.normalize);

    let fit = |active: &[usize], b: &Array1<T>, row: usize| -> Result<Vec<T>> {
        let na = active.len();
        let mut gram = Array2::<T>::zeros((na, na));
        let mut rhs = Array1::<T>::zeros(na);
        for (ai, &fi) in active.iter().enumerate() {
            for (aj, &fj) in active.iter().enumerate() {
                let mut acc = T::zero();
                for col in 0..thn.ncols() {
                    acc += thn[[fi, col]] * thn[[fj, col]];
                }
                gram[[ai, aj]] = acc;
            }
            gram[[ai, ai]] += opts.ridge;
            let mut acc = T::zero();
            for col in 0..thn.ncols() {
                acc += thn[[fi, col]] * b[col];
            }
            rhs[ai] = acc;
        }
        let beta = linalg::solve(&gram, &rhs).map_err(|e| match e {
            Error::Singular { .. } => Error::RankDeficient { row },
            other => other,
        })?;
        Ok(beta.to_vec())
    };

    let mut xi = Array2::<T>::zeros((m, d));
    let mut converged = true;
    let mut total_sweeps = 0usize;
    for p in 0..m {
        let b = cdot.row(p).to_owned();
        let mut active: Vec<usize> = (0..d).collect();
        let mut beta: Vec<T> = Vec::new();
        let mut row_converged = false;
        for _sweep in 0..20 {
            total_sweeps += 1;
            if active.is_empty() {
                beta.clear();
                row_converged = true;
                break;
            }
            beta = fit(&active, &b, p)?;
            let keep: Vec<usize> = active
                .iter()
                .zip(&beta)
                .filter(|(_, &v)| v.abs() >= opts.threshold)
                .map(|(&j, _)| j)
                .collect();
            if keep == active {
                row_converged = true;
                break;
            }
            active = keep;
        }
        if !row_converged {
            converged = false;
            if !active.is_empty() {
                beta = fit(&active, &b, p)?;
            }
        }
        for (aj, &j) in active.iter().enumerate() {
            xi[[p, j]] = beta[aj] / norms[j];
        }
    }

    let diagnostics = SolveDiagnostics {
        residual: residual_frobenius(theta, cdot, &xi),
        nonzeros: xi.iter().filter(|v| **v != T::zero()).count(),
        converged,
        iterations: total_sweeps,
        underdetermined: d >= theta.ncols(),
    };
    Ok(SindyModel {
        xi,
        spec: spec.clone(),
        gamma: T::zero(),
        solver: SolverInfo::Stlsq(opts.clone()),
        diagnostics,
    })
}

/// Elementwise soft threshold `sign(z) max(|z| - t, 0)`, the L1 proximal
/// operator; outputs exact zeros.
pub fn soft_threshold<T: Scalar>(z: T, t: T) -> T {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        T::zero()
    }
}

/// Sparse relaxed regularized regression.
///
/// Alternates a ridge-type least-squares pull of `Xi` toward the auxiliary
/// variable `W` with elementwise soft thresholding of `Xi` at `gamma/kappa`,
/// stopping when `W` moves less than `tol` in max-norm. The returned
/// coefficients are the final `W`, so pruned entries are exact zeros; a
/// model that ran out of iterations is returned with `converged = false`.
pub fn solve_sr3<T: Scalar>(
    spec: &LibrarySpec,
    theta: &Array2<T>,
    cdot: &Array2<T>,
    opts: &Sr3Options<T>,
) -> Result<SindyModel<T>> {
    validate_regression_inputs(spec, theta, cdot)?;
    if !(opts.gamma >= T::zero()) {
        return Err(Error::InvalidSpec("gamma must be nonnegative".into()));
    }
    if !(opts.relaxation > T::zero()) {
        return Err(Error::InvalidSpec("relaxation must be positive".into()));
    }
    if opts.max_iter == 0 || !(opts.tol > T::zero()) {
        return Err(Error::InvalidSpec("max_iter and tol must be positive".into()));
    }
    let m = cdot.nrows();
    let d = theta.nrows();
    let kappa = opts.relaxation;
    let thresh = opts.gamma / kappa;
    let (thn, norms) = normalize_rows(theta, opts.normalize);

    // The Xi-step system (Theta Theta^T + kappa I) is constant: factor once.
    let mut gram = thn.dot(&thn.t());
    for j in 0..d {
        gram[[j, j]] += kappa;
    }
    let factors = linalg::lu_factor(&gram)?;
    // d x m right-hand sides, one column per coefficient row.
    let b = thn.dot(&cdot.t());

    let solve_cols = |rhs: &Array2<T>| -> Array2<T> {
        let mut out = Array2::<T>::zeros((d, m));
        for p in 0..m {
            let col = factors.solve(&rhs.column(p).to_owned());
            out.column_mut(p).assign(&col);
        }
        out
    };

    let xi0 = solve_cols(&b);
    let mut w = xi0.mapv(|z| soft_threshold(z, thresh));
    let mut converged = false;
    let mut iterations = 0usize;
    for it in 1..=opts.max_iter {
        iterations = it;
        let rhs = &b + &(&w * kappa);
        let xi = solve_cols(&rhs);
        let wn = xi.mapv(|z| soft_threshold(z, thresh));
        let delta = linalg::max_abs(&(&wn - &w));
        w = wn;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let mut xi = Array2::<T>::zeros((m, d));
    for p in 0..m {
        for j in 0..d {
            xi[[p, j]] = w[[j, p]] / norms[j];
        }
    }
    let diagnostics = SolveDiagnostics {
        residual: residual_frobenius(theta, cdot, &xi),
        nonzeros: xi.iter().filter(|v| **v != T::zero()).count(),
        converged,
        iterations,
        underdetermined: d >= theta.ncols(),
    };
    Ok(SindyModel {
        xi,
        spec: spec.clone(),
        gamma: opts.gamma,
        solver: SolverInfo::Sr3(opts.clone()),
        diagnostics,
    })
}

/// Serializes a model: library spec, solver name and hyperparameters, dense
/// coefficient matrix with explicit zeros, and residual diagnostics.
pub fn model_to_json<T: Scalar>(model: &SindyModel<T>) -> serde_json::Value {
    let f = |v: T| v.to_f64();
    let hyper = match &model.solver {
        SolverInfo::Stlsq(o) => serde_json::json!({
            "threshold": f(o.threshold),
            "ridge": f(o.ridge),
            "normalize": o.normalize,
        }),
        SolverInfo::Sr3(o) => serde_json::json!({
            "gamma": f(o.gamma),
            "relaxation": f(o.relaxation),
            "max_iter": o.max_iter,
            "tol": f(o.tol),
            "normalize": o.normalize,
        }),
    };
    let xi: Vec<Vec<Option<f64>>> =
        (0..model.m()).map(|p| (0..model.d()).map(|j| f(model.xi[[p, j]])).collect()).collect();
    serde_json::json!({
        "solver": model.solver.kind(),
        "hyperparameters": hyper,
        "gamma": f(model.gamma),
        "library": model.spec,
        "m": model.m(),
        "d": model.d(),
        "function_names": model.spec.function_names(model.m()),
        "xi": xi,
        "diagnostics": {
            "residual": f(model.diagnostics.residual),
            "nonzeros": model.diagnostics.nonzeros,
            "converged": model.diagnostics.converged,
            "iterations": model.diagnostics.iterations,
            "underdetermined": model.diagnostics.underdetermined,
        },
    })
}
