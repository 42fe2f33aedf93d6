//! End-to-end forecasting: fit POD + sparse regression on an observation
//! window, integrate the identified coefficient dynamics forward, and
//! reconstruct nodal states; plus the surrogate-adjacency predictor and the
//! error metrics shared by both routes.
//!
//! The fit stage never sees snapshots past the observation window: the
//! window is sliced out first and everything downstream works on the slice.
//! Forecast states are reported raw; clamping to the unit interval (for
//! probability-valued dynamics) is applied only to reported outputs, with a
//! flag, never inside integration.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_path, sis_rhs, SisParams, Trajectory};
use crate::graph::Graph;
use crate::linalg;
use crate::pod::{
    project, reconstruct, select_modes, thin_svd, CoeffSeries, ModePolicy, PodBasis,
    SnapshotMatrix,
};
use crate::sindy::{
    build_library, central_difference, model_rhs, solve_sr3, solve_stlsq, LibrarySpec,
    SindyModel, Sr3Options, StlsqOptions,
};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Sparse-regression solver selection with `f64` hyperparameters, as read
/// from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverConfig {
    Stlsq {
        threshold: f64,
        ridge: f64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
    Sr3 {
        gamma: f64,
        relaxation: f64,
        max_iter: usize,
        tol: f64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::Sr3 {
            gamma: 0.05,
            relaxation: 1.0,
            max_iter: 50_000,
            tol: 1e-10,
            normalize: true,
        }
    }
}

/// Pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Fraction of snapshots forming the observation window.
    pub obs_fraction: f64,
    pub mode_policy: ModePolicy,
    pub library: LibrarySpec,
    pub solver: SolverConfig,
    /// Integrator step for the coefficient ODE; `None` reuses the trajectory
    /// step. A finer step must divide the trajectory step so reported
    /// columns stay aligned with ground truth.
    pub coeff_dt: Option<f64>,
    /// Clamp reported outputs to [0, 1] (probability-valued dynamics).
    pub clamp_outputs: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            obs_fraction: 0.5,
            mode_policy: ModePolicy::Fixed(2),
            library: LibrarySpec::poly2(),
            solver: SolverConfig::default(),
            coeff_dt: None,
            clamp_outputs: false,
        }
    }
}

/// Fit products: basis and coefficients from the observation window, plus
/// the identified model.
#[derive(Debug, Clone)]
pub struct FitResult<T: Scalar> {
    pub basis: PodBasis<T>,
    pub coeffs: CoeffSeries<T>,
    pub model: SindyModel<T>,
    /// Snapshots in the observation window.
    pub k_obs: usize,
}

/// Fits POD + sparse regression on the observation window of a trajectory.
///
/// The basis comes from the snapshot SVD of the window only; coefficients by
/// projection; the model from the configured solver. Nothing past column
/// `k_obs - 1` is read.
pub fn fit<T: Scalar>(traj: &Trajectory<T>, cfg: &PipelineConfig) -> Result<FitResult<T>> {
    if !(cfg.obs_fraction > 0.0 && cfg.obs_fraction < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "obs_fraction {} outside (0, 1)",
            cfg.obs_fraction
        )));
    }
    cfg.library.validate()?;
    let k_obs = (cfg.obs_fraction * traj.len() as f64).floor() as usize;
    if k_obs < 3 {
        return Err(Error::InsufficientData(format!(
            "observation window has {k_obs} snapshots; need at least 3"
        )));
    }
    let window = SnapshotMatrix::from_window(traj, k_obs)?;
    fit_window(&window, cfg)
}

/// Fits on an explicit snapshot window (already sliced).
pub fn fit_window<T: Scalar>(window: &SnapshotMatrix<T>, cfg: &PipelineConfig) -> Result<FitResult<T>> {
    let k_obs = window.len();
    let svd = thin_svd(window.matrix())?;
    let m = select_modes(&svd.sigma, &cfg.mode_policy)?;
    let basis = PodBasis::from_svd(&svd, m)?;
    let d = cfg.library.dim(m);
    let required = 3.max(d + 1);
    if k_obs < required {
        return Err(Error::InsufficientData(format!(
            "observation window has {k_obs} snapshots; need at least {required} for {d} candidate functions"
        )));
    }
    let coeffs = project(&basis, window)?;
    let deriv = central_difference(&coeffs)?;
    let aligned = deriv.align(coeffs.matrix())?;
    let theta = build_library(&aligned, &cfg.library)?;
    let model = match &cfg.solver {
        SolverConfig::Stlsq { threshold, ridge, normalize } => {
            let opts = StlsqOptions {
                threshold: T::of(*threshold),
                ridge: T::of(*ridge),
                normalize: *normalize,
            };
            solve_stlsq(&cfg.library, &theta, deriv.cdot(), &opts)?
        }
        SolverConfig::Sr3 { gamma, relaxation, max_iter, tol, normalize } => {
            let opts = Sr3Options {
                gamma: T::of(*gamma),
                relaxation: T::of(*relaxation),
                max_iter: *max_iter,
                tol: T::of(*tol),
                normalize: *normalize,
            };
            solve_sr3(&cfg.library, &theta, deriv.cdot(), &opts)?
        }
    };
    Ok(FitResult { basis, coeffs, model, k_obs })
}

/// Forecast states on a uniform grid starting at `t_start`; the first column
/// reproduces the state the integration started from.
#[derive(Debug, Clone)]
pub struct Forecast<T: Scalar> {
    /// N x (steps + 1) states; column 0 sits at `t_start`.
    pub states: Array2<T>,
    /// Coefficient path for the reduced-model route, column-aligned with
    /// `states`; absent for the surrogate route.
    pub coeffs: Option<Array2<T>>,
    pub dt: T,
    pub t_start: T,
    /// Step at which integration produced a non-finite state; the forecast
    /// is truncated just before it.
    pub divergence: Option<usize>,
}

impl<T: Scalar> Forecast<T> {
    /// Number of state columns.
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn time(&self, k: usize) -> T {
        self.t_start + self.dt * T::of(k as f64)
    }

    /// Time of the last produced column.
    pub fn last_valid_time(&self) -> T {
        self.time(self.len().saturating_sub(1))
    }
}

/// Integrates the identified coefficient dynamics from `c_start` at `t_obs`
/// to `t_pred` with step `dt`, reconstructing nodal states at every step.
/// On divergence the forecast is truncated and flagged instead of failing.
pub fn forecast<T: Scalar>(
    basis: &PodBasis<T>,
    model: &SindyModel<T>,
    c_start: &Array1<T>,
    t_obs: T,
    t_pred: T,
    dt: T,
) -> Result<Forecast<T>> {
    if c_start.len() != basis.m() || model.m() != basis.m() {
        return Err(Error::DimMismatch(format!(
            "coefficient length {} for a {}-mode basis and {}-row model",
            c_start.len(),
            basis.m(),
            model.m()
        )));
    }
    if !(t_pred > t_obs) {
        return Err(Error::InvalidSpec(format!("t_pred {t_pred} must exceed t_obs {t_obs}")));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    let steps = ((t_pred - t_obs) / dt).round().to_f64().unwrap_or(0.0).max(1.0) as usize;
    let (coeff_path, divergence) = rk4_path(|c| model_rhs(model, c), c_start, dt, steps);
    let states = basis.modes().dot(&coeff_path);
    Ok(Forecast { states, coeffs: Some(coeff_path), dt, t_start: t_obs, divergence })
}

/// Constant extrapolation of one state: the honest baseline every forecast
/// is compared against.
pub fn constant_baseline<T: Scalar>(x: &Array1<T>, steps: usize) -> Array2<T> {
    let mut out = Array2::<T>::zeros((x.len(), steps));
    for k in 0..steps {
        out.column_mut(k).assign(x);
    }
    out
}

/// Forecast quality record.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T> {
    /// Root-mean-square error of each snapshot column.
    pub per_snapshot_rmse: Vec<T>,
    /// `||P - X||_F / ||X||_F`; infinity when the truth norm is zero.
    pub relative_l2: T,
    /// False when the truth norm was zero and the ratio is the infinity
    /// sentinel.
    pub relative_l2_finite: bool,
    /// Largest absolute error seen by each node.
    pub per_node_max_abs: Vec<T>,
}

/// Compares a predicted block against the truth of the same shape.
pub fn error_metrics<T: Scalar>(predicted: &Array2<T>, truth: &Array2<T>) -> Result<Metrics<T>> {
    if predicted.dim() != truth.dim() {
        return Err(Error::DimMismatch(format!(
            "predicted {:?} vs truth {:?}",
            predicted.dim(),
            truth.dim()
        )));
    }
    let (n, k) = predicted.dim();
    let diff = predicted - truth;
    let mut per_snapshot_rmse = Vec::with_capacity(k);
    for col in 0..k {
        let ss: T = diff.column(col).iter().map(|&v| v * v).sum();
        per_snapshot_rmse.push((ss / T::of(n as f64)).sqrt());
    }
    let mut per_node_max_abs = Vec::with_capacity(n);
    for row in 0..n {
        per_node_max_abs.push(diff.row(row).iter().fold(T::zero(), |acc, &v| acc.max(v.abs())));
    }
    let truth_norm = linalg::frobenius(truth);
    let (relative_l2, relative_l2_finite) = if truth_norm > T::zero() {
        (linalg::frobenius(&diff) / truth_norm, true)
    } else {
        (T::infinity(), false)
    };
    Ok(Metrics { per_snapshot_rmse, relative_l2, relative_l2_finite, per_node_max_abs })
}

/// Clamps a reported state block to [0, 1]; the flag records whether any
/// entry actually moved.
pub fn clamp_unit_interval<T: Scalar>(states: &Array2<T>) -> (Array2<T>, bool) {
    let mut changed = false;
    let clamped = states.mapv(|v| {
        let c = v.max(T::zero()).min(T::one());
        if c != v {
            changed = true;
        }
        c
    });
    (clamped, changed)
}

/// Everything one observation-plus-forecast run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun<T: Scalar> {
    pub fit: FitResult<T>,
    /// Window reconstruction `Y C`, N x k_obs.
    pub fitted: Array2<T>,
    /// Strictly-after-`t_obs` forecast states as reported (clamped when
    /// configured); shorter than the held-out window if integration
    /// diverged.
    pub predicted: Array2<T>,
    /// Reduced-model forecast from `t_obs` to the end of the trajectory.
    pub forecast: Forecast<T>,
    /// Fitted window vs observed window.
    pub fit_metrics: Metrics<T>,
    /// Strictly-after-`t_obs` forecast vs ground truth.
    pub predicted_metrics: Metrics<T>,
    /// Constant extrapolation of the last observed state vs ground truth.
    pub baseline_metrics: Metrics<T>,
    /// Whether clamping changed any reported value.
    pub clamped: bool,
}

/// Runs fit + forecast + scoring over one trajectory: the first
/// `obs_fraction` of snapshots is the observation window, the rest is the
/// held-out truth the forecast and the constant baseline are scored on.
pub fn run_pipeline<T: Scalar>(traj: &Trajectory<T>, cfg: &PipelineConfig) -> Result<PipelineRun<T>> {
    let fit_result = fit(traj, cfg)?;
    let k_obs = fit_result.k_obs;
    let k_total = traj.len();
    if k_total - k_obs < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} snapshots remain after the observation window; need at least 2 to forecast and score",
            k_total - k_obs
        )));
    }
    let fitted_raw = reconstruct(&fit_result.basis, &fit_result.coeffs)?;

    let traj_dt = traj.dt();
    let (step_dt, substeps) = match cfg.coeff_dt {
        None => (traj_dt, 1usize),
        Some(dt) => {
            let dt = T::of(dt);
            if !(dt > T::zero()) {
                return Err(Error::InvalidSpec("coeff_dt must be positive".into()));
            }
            let ratio_f = (traj_dt / dt).to_f64().unwrap_or(0.0);
            let ratio = ratio_f.round();
            if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::InvalidSpec(
                    "coeff_dt must divide the trajectory dt so outputs stay aligned".into(),
                ));
            }
            (dt, ratio as usize)
        }
    };

    let t_obs = traj.time(k_obs - 1);
    let t_end = traj.time(k_total - 1);
    let c_start = fit_result.coeffs.column(k_obs - 1);
    let fine = forecast(&fit_result.basis, &fit_result.model, &c_start, t_obs, t_end, step_dt)?;
    // Keep only the columns aligned with trajectory snapshots.
    let coarse_cols: Vec<usize> = (0..fine.len()).step_by(substeps).collect();
    let mut states = Array2::<T>::zeros((traj.n(), coarse_cols.len()));
    let mut coeff_path = Array2::<T>::zeros((fit_result.basis.m(), coarse_cols.len()));
    for (dst, &src) in coarse_cols.iter().enumerate() {
        states.column_mut(dst).assign(&fine.states.column(src));
        if let Some(ref c) = fine.coeffs {
            coeff_path.column_mut(dst).assign(&c.column(src));
        }
    }
    let fc = Forecast {
        states,
        coeffs: Some(coeff_path),
        dt: traj_dt,
        t_start: t_obs,
        divergence: fine.divergence,
    };

    // Score the strictly-after-t_obs part against ground truth; a truncated
    // (diverged) forecast is scored on the columns it produced.
    let pred_cols = fc.len().saturating_sub(1);
    let truth_full = traj.states().slice(s![.., k_obs..]).to_owned();
    let avail = pred_cols.min(truth_full.ncols());
    let predicted_raw = fc.states.slice(s![.., 1..=avail]).to_owned();
    let truth = truth_full.slice(s![.., ..avail]).to_owned();
    let baseline = constant_baseline(&traj.column(k_obs - 1), avail);

    let (fitted, predicted, clamped) = if cfg.clamp_outputs {
        let (f, c1) = clamp_unit_interval(&fitted_raw);
        let (p, c2) = clamp_unit_interval(&predicted_raw);
        (f, p, c1 || c2)
    } else {
        (fitted_raw, predicted_raw, false)
    };

    let window_truth = traj.states().slice(s![.., ..k_obs]).to_owned();
    let fit_metrics = error_metrics(&fitted, &window_truth)?;
    let predicted_metrics = error_metrics(&predicted, &truth)?;
    let baseline_metrics = error_metrics(&baseline, &truth)?;

    Ok(PipelineRun {
        fit: fit_result,
        fitted,
        predicted,
        forecast: fc,
        fit_metrics,
        predicted_metrics,
        baseline_metrics,
        clamped,
    })
}

/// Surrogate-network fit parameters: the (known) curing rates and the
/// per-node L1 penalty weights.
#[derive(Debug, Clone)]
pub struct SurrogateParams<T: Scalar> {
    delta: Array1<T>,
    rho: Array1<T>,
}

impl<T: Scalar> SurrogateParams<T> {
    pub fn new(delta: Array1<T>, rho: Array1<T>) -> Result<Self> {
        if delta.len() != rho.len() {
            return Err(Error::DimMismatch(format!(
                "{} curing rates vs {} penalty weights",
                delta.len(),
                rho.len()
            )));
        }
        if delta.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::Domain("curing rates must be strictly positive".into()));
        }
        if rho.iter().any(|&r| !(r >= T::zero())) {
            return Err(Error::Domain("penalty weights must be nonnegative".into()));
        }
        Ok(Self { delta, rho })
    }

    /// One shared penalty weight for every node.
    pub fn with_uniform_rho(delta: Array1<T>, rho: T) -> Result<Self> {
        let n = delta.len();
        Self::new(delta, Array1::from_elem(n, rho))
    }

    pub fn delta(&self) -> &Array1<T> {
        &self.delta
    }

    pub fn rho(&self) -> &Array1<T> {
        &self.rho
    }
}

/// Nonnegative lasso by cyclic coordinate descent on the quadratic
/// `a^T G a - 2 c^T a + rho sum(a)`, run until the largest coordinate change
/// in a sweep drops below `tol`. Exact per-coordinate minimization, so the
/// objective never increases; `trace` (when given) records it per sweep.
fn nonneg_lasso_cd<T: Scalar>(
    gram: &Array2<T>,
    c: &Array1<T>,
    rho: T,
    tol: T,
    max_sweeps: usize,
    mut trace: Option<&mut Vec<T>>,
) -> Array1<T> {
    let n = c.len();
    let half_rho = rho * T::of(0.5);
    let mut a = Array1::<T>::zeros(n);
    let mut q = Array1::<T>::zeros(n); // q = G a, maintained incrementally
    for _sweep in 0..max_sweeps {
        let mut max_change = T::zero();
        for j in 0..n {
            let gjj = gram[[j, j]];
            if gjj <= T::zero() {
                continue;
            }
            let candidate = a[j] + (c[j] - half_rho - q[j]) / gjj;
            let new = candidate.max(T::zero());
            let delta = new - a[j];
            if delta != T::zero() {
                for i in 0..n {
                    q[i] += delta * gram[[i, j]];
                }
                a[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if let Some(t) = trace.as_deref_mut() {
            let quad = a.dot(&q);
            let lin = a.dot(c);
            let l1: T = a.iter().copied().sum();
            t.push(quad - T::of(2.0) * lin + rho * l1);
        }
        if max_change < tol {
            break;
        }
    }
    a
}

/// Fits a surrogate adjacency matrix from an observation window with known
/// curing rates.
///
/// For each node independently, the forward-difference residual of the SIS
/// equation is minimized in least squares with an L1 penalty `rho_i sum_j
/// a_ij` subject to `a_ij >= 0`, by nonnegative coordinate descent run to a
/// max-coordinate-change below 1e-8. Self-weights are excluded: the returned
/// graph has a zero diagonal.
pub fn surrogate_fit<T: Scalar>(window: &Trajectory<T>, params: &SurrogateParams<T>) -> Result<Graph<T>> {
    let n = window.n();
    if params.delta.len() != n {
        return Err(Error::DimMismatch(format!(
            "{} curing rates for {n} nodes",
            params.delta.len()
        )));
    }
    let k_obs = window.len();
    let x = window.states();
    let inv_dt = T::one() / window.dt();
    let samples = k_obs - 1;
    let tol = T::of(1e-8);

    let mut a_hat = Array2::<T>::zeros((n, n));
    for i in 0..n {
        // Regressors phi_j(k) = (1 - x_i(k)) x_j(k), j != i, and targets
        // y_k = (x_i(k+1) - x_i(k)) / dt + delta_i x_i(k).
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut phi = Array2::<T>::zeros((others.len(), samples));
        let mut y = Array1::<T>::zeros(samples);
        for k in 0..samples {
            let gate = T::one() - x[[i, k]];
            for (row, &j) in others.iter().enumerate() {
                phi[[row, k]] = gate * x[[j, k]];
            }
            y[k] = (x[[i, k + 1]] - x[[i, k]]) * inv_dt + params.delta[i] * x[[i, k]];
        }
        let gram = phi.dot(&phi.t());
        let c = phi.dot(&y);
        let coeffs = nonneg_lasso_cd(&gram, &c, params.rho[i], tol, 100_000, None);
        for (row, &j) in others.iter().enumerate() {
            a_hat[[i, j]] = coeffs[row];
        }
    }
    Graph::new(a_hat, true, None)
}

/// Integrates the SIS dynamics under a surrogate adjacency matrix from the
/// last observed state; same contract as [`forecast`].
pub fn surrogate_forecast<T: Scalar>(
    a_hat: &Graph<T>,
    delta: &Array1<T>,
    x_start: &Array1<T>,
    t_obs: T,
    t_pred: T,
    dt: T,
) -> Result<Forecast<T>> {
    if x_start.len() != a_hat.n() {
        return Err(Error::DimMismatch(format!(
            "state length {} for {} nodes",
            x_start.len(),
            a_hat.n()
        )));
    }
    if !(t_pred > t_obs) {
        return Err(Error::InvalidSpec(format!("t_pred {t_pred} must exceed t_obs {t_obs}")));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    let params = SisParams::new(delta.clone(), a_hat.clone())?;
    let steps = ((t_pred - t_obs) / dt).round().to_f64().unwrap_or(0.0).max(1.0) as usize;
    let (states, divergence) = rk4_path(
        |x| sis_rhs(&params, x).expect("dimensions validated"),
        x_start,
        dt,
        steps,
    );
    Ok(Forecast { states, coeffs: None, dt, t_start: t_obs, divergence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{consensus_rhs, integrate_rk4, ConsensusParams};
    use crate::graph::{generate_path, laplacian};
    use crate::sindy::{SolveDiagnostics, SolverInfo};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn stlsq_cfg(threshold: f64, normalize: bool) -> PipelineConfig {
        PipelineConfig {
            solver: SolverConfig::Stlsq { threshold, ridge: 0.0, normalize },
            ..PipelineConfig::default()
        }
    }

    /// Consensus fixture on the 10-node path: the three slowest Laplacian
    /// modes excited with strongly separated weights.
    fn consensus_fixture() -> (Trajectory<f64>, Array1<f64>) {
        let g = generate_path::<f64>(10).unwrap();
        let l = laplacian(&g).unwrap();
        let (vals, vecs) = linalg::jacobi_eigh(&l).unwrap();
        let mut x0 = Array1::<f64>::zeros(10);
        for i in 0..10 {
            x0[i] = 0.5 * 10.0f64.sqrt() * vecs[[i, 0]] + 0.3 * vecs[[i, 1]] + 0.01 * vecs[[i, 2]];
        }
        let params = ConsensusParams::new(g).unwrap();
        let traj =
            integrate_rk4(|x| consensus_rhs(&params, x).unwrap(), &x0, 1e-3, 1999).unwrap();
        (traj, vals)
    }

    #[test]
    fn fit_rank_one_trajectory_captures_energy_with_one_mode() {
        // x(t) = a(t) v, exactly rank 1.
        let v = array![1.0, 2.0, -1.0, 0.5];
        let mut states = Array2::<f64>::zeros((4, 40));
        for k in 0..40 {
            let a = (-(k as f64) * 0.05).exp();
            for i in 0..4 {
                states[[i, k]] = a * v[i];
            }
        }
        let traj = Trajectory::new(states, 0.05, 0.0).unwrap();
        let cfg = PipelineConfig {
            mode_policy: ModePolicy::Energy(1e-6),
            library: LibrarySpec::linear(),
            ..stlsq_cfg(0.1, true)
        };
        let run = fit(&traj, &cfg).unwrap();
        assert_eq!(run.basis.m(), 1);
        assert!(run.basis.captured_energy() >= 1.0 - 1e-10);
    }

    #[test]
    fn fit_never_reads_past_the_window() {
        let (traj, _) = consensus_fixture();
        let cfg = PipelineConfig { library: LibrarySpec::linear(), ..stlsq_cfg(0.05, false) };
        let clean = fit(&traj, &cfg).unwrap();

        // Corrupt the held-out half and refit: bit-identical products.
        let mut corrupted = traj.states().clone();
        let k_obs = clean.k_obs;
        for col in k_obs..corrupted.ncols() {
            for row in 0..corrupted.nrows() {
                corrupted[[row, col]] = 1e6 + (row * col) as f64;
            }
        }
        let corrupted = Trajectory::new(corrupted, traj.dt(), traj.t0()).unwrap();
        let dirty = fit(&corrupted, &cfg).unwrap();
        assert_eq!(clean.basis.modes(), dirty.basis.modes());
        assert_eq!(clean.model.xi, dirty.model.xi);
    }

    #[test]
    fn fit_insufficient_window_names_required_minimum() {
        let mut states = Array2::<f64>::zeros((2, 8));
        for k in 0..8 {
            states[[0, k]] = 1.0 + k as f64;
            states[[1, k]] = 2.0 - k as f64;
        }
        let traj = Trajectory::new(states, 0.1, 0.0).unwrap();
        // window of 4 snapshots, poly2 library on 2 modes needs d+1 = 8
        let cfg = PipelineConfig { obs_fraction: 0.5, ..PipelineConfig::default() };
        match fit(&traj, &cfg) {
            Err(Error::InsufficientData(msg)) => assert!(msg.contains("need at least"), "{msg}"),
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn consensus_fit_recovers_diagonal_linear_model() {
        let (traj, vals) = consensus_fixture();
        let cfg = PipelineConfig {
            obs_fraction: 0.5,
            mode_policy: ModePolicy::Fixed(3),
            library: LibrarySpec::linear(),
            ..stlsq_cfg(0.05, false)
        };
        let run = fit(&traj, &cfg).unwrap();
        for p in 0..3 {
            for j in 0..3 {
                if p != j {
                    assert_eq!(run.model.xi[[p, j]], 0.0, "off-diagonal ({p},{j})");
                }
            }
        }
        // Slowest mode is the conserved average: its row thresholds to zero.
        assert_eq!(run.model.xi[[0, 0]], 0.0);
        assert_abs_diff_eq!(run.model.xi[[1, 1]], -vals[1], epsilon = 1e-2);
        assert_abs_diff_eq!(run.model.xi[[2, 2]], -vals[2], epsilon = 1e-2);
    }

    fn zero_model(m: usize, d_spec: LibrarySpec) -> SindyModel<f64> {
        SindyModel {
            xi: Array2::<f64>::zeros((m, d_spec.dim(m))),
            spec: d_spec,
            gamma: 0.0,
            solver: SolverInfo::Stlsq(StlsqOptions::default()),
            diagnostics: SolveDiagnostics {
                residual: 0.0,
                nonzeros: 0,
                converged: true,
                iterations: 0,
                underdetermined: false,
            },
        }
    }

    #[test]
    fn forecast_zero_model_is_constant() {
        let x = array![[1.0, 0.8], [0.0, 0.3], [2.0, 1.9]];
        let svd = thin_svd(&x).unwrap();
        let basis = PodBasis::from_svd(&svd, 2).unwrap();
        let model = zero_model(2, LibrarySpec::linear());
        let c0 = array![0.7, -0.2];
        let fc = forecast(&basis, &model, &c0, 1.0, 2.0, 0.25).unwrap();
        assert_eq!(fc.len(), 5);
        let first = fc.states.column(0).to_owned();
        for k in 1..5 {
            assert_eq!(fc.states.column(k), first);
        }
    }

    #[test]
    fn forecast_linear_decay_closed_form() {
        // one mode, dc/dt = -c, c(t_obs) = 1, horizon 1 -> e^{-1}
        let x = array![[1.0, 0.5], [0.0, 0.0]];
        let svd = thin_svd(&x).unwrap();
        let basis = PodBasis::from_svd(&svd, 1).unwrap();
        let mut model = zero_model(1, LibrarySpec::linear());
        model.xi[[0, 0]] = -1.0;
        let fc = forecast(&basis, &model, &array![1.0], 0.0, 1.0, 0.001).unwrap();
        let c_end = fc.coeffs.as_ref().unwrap()[[0, fc.len() - 1]];
        assert_abs_diff_eq!(c_end, (-1.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn forecast_divergence_truncates_with_flag() {
        let x = array![[1.0, 0.5], [0.0, 0.0]];
        let svd = thin_svd(&x).unwrap();
        let basis = PodBasis::from_svd(&svd, 1).unwrap();
        // dc/dt = c^2 blows up at t = 1 from c(0) = 1.
        let spec = LibrarySpec {
            include_constant: false,
            poly_orders: std::collections::BTreeSet::from([2]),
            trig: vec![],
        };
        let mut model = zero_model(1, spec);
        model.xi[[0, 0]] = 1.0;
        let fc = forecast(&basis, &model, &array![1.0], 0.0, 5.0, 0.5).unwrap();
        assert!(fc.divergence.is_some());
        assert!(fc.len() < 11);
        assert!(fc.states.iter().all(|v| v.is_finite()));
        assert!(fc.last_valid_time() < 5.0);
    }

    #[test]
    fn pipeline_forecast_is_continuous_at_t_obs() {
        let (traj, _) = consensus_fixture();
        let cfg = PipelineConfig {
            mode_policy: ModePolicy::Fixed(3),
            library: LibrarySpec::linear(),
            ..stlsq_cfg(0.05, false)
        };
        let run = run_pipeline(&traj, &cfg).unwrap();
        let k_obs = run.fit.k_obs;
        let recon_at_obs = run.fitted.column(k_obs - 1).to_owned();
        let first_forecast = run.forecast.states.column(0).to_owned();
        for i in 0..traj.n() {
            assert_abs_diff_eq!(first_forecast[i], recon_at_obs[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn consensus_forecast_beats_one_permille_over_one_window() {
        let (traj, _) = consensus_fixture();
        // Tiny raw-scale threshold: keeps the weak mode couplings the
        // truncated model needs, still zeroing numerical noise.
        let cfg = PipelineConfig {
            mode_policy: ModePolicy::Fixed(3),
            library: LibrarySpec::linear(),
            ..stlsq_cfg(0.001, false)
        };
        let run = run_pipeline(&traj, &cfg).unwrap();
        assert!(run.predicted_metrics.relative_l2_finite);
        assert!(
            run.predicted_metrics.relative_l2 <= 1e-3,
            "relative L2 {}",
            run.predicted_metrics.relative_l2
        );
    }

    #[test]
    fn metrics_basics() {
        let truth = Array2::<f64>::from_elem((10, 10), 0.1);
        let m = error_metrics(&truth, &truth).unwrap();
        assert!(m.per_snapshot_rmse.iter().all(|&v| v == 0.0));
        assert_eq!(m.relative_l2, 0.0);
        assert!(m.per_node_max_abs.iter().all(|&v| v == 0.0));

        // truth = 0 -> infinity sentinel with flag
        let zero = Array2::<f64>::zeros((3, 3));
        let pred = Array2::<f64>::from_elem((3, 3), 0.5);
        let m = error_metrics(&pred, &zero).unwrap();
        assert!(m.relative_l2.is_infinite());
        assert!(!m.relative_l2_finite);

        // uniform offset of 0.1 on a unit-Frobenius truth: RMSE = 0.1
        let mut truth = Array2::<f64>::zeros((10, 10));
        for v in truth.iter_mut() {
            *v = 0.1; // Frobenius norm = 1
        }
        let pred = truth.mapv(|v| v + 0.1);
        let m = error_metrics(&pred, &truth).unwrap();
        for &v in &m.per_snapshot_rmse {
            assert_abs_diff_eq!(v, 0.1, epsilon = 1e-14);
        }
        assert!(matches!(
            error_metrics(&pred, &Array2::<f64>::zeros((2, 2))),
            Err(Error::DimMismatch(_))
        ));
    }

    fn two_node_sis_trajectory(dt: f64, k: usize) -> (Trajectory<f64>, Array1<f64>, Array2<f64>) {
        let a = array![[0.0, 0.3], [0.4, 0.0]];
        let g = Graph::new(a.clone(), true, None).unwrap();
        let delta = array![0.1, 0.2];
        let params = SisParams::new(delta.clone(), g).unwrap();
        let x0 = array![0.15, 0.05];
        let traj = integrate_rk4(
            |x| sis_rhs(&params, x).unwrap(),
            &x0,
            dt,
            k - 1,
        )
        .unwrap();
        (traj, delta, a)
    }

    #[test]
    fn surrogate_zero_network_recovers_zero() {
        // dynamics generated with A = 0: pure decay; residual is already
        // zero at the origin, so the penalty keeps everything there.
        let g = Graph::new(Array2::<f64>::zeros((3, 3)), true, None).unwrap();
        let delta = array![0.1, 0.15, 0.2];
        let params = SisParams::new(delta.clone(), g.clone()).unwrap();
        let traj = integrate_rk4(
            |x| sis_rhs(&params, x).unwrap(),
            &array![0.2, 0.1, 0.05],
            0.01,
            500,
        )
        .unwrap();
        // default penalty convention rho = 1e-3 * k_obs
        let rho = 1e-3 * traj.len() as f64;
        let sp = SurrogateParams::with_uniform_rho(delta, rho).unwrap();
        let a_hat = surrogate_fit(&traj, &sp).unwrap();
        for v in a_hat.adjacency().iter() {
            assert!(v.abs() <= 1e-6, "entry {v}");
        }
    }

    #[test]
    fn surrogate_two_node_recovery_scales_with_dt() {
        let run = |dt: f64| {
            let k = (2.0 / dt) as usize;
            let (traj, delta, a_true) = two_node_sis_trajectory(dt, k);
            let sp = SurrogateParams::with_uniform_rho(delta, 0.0).unwrap();
            let a_hat = surrogate_fit(&traj, &sp).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    worst = worst.max((a_hat.adjacency()[[i, j]] - a_true[[i, j]]).abs());
                }
            }
            worst
        };
        let coarse = run(1e-2);
        let fine = run(1e-3);
        assert!(fine <= 1e-2, "fine-dt recovery error {fine}");
        let ratio = coarse / fine;
        assert!((4.0..=25.0).contains(&ratio), "discretization scaling {ratio}");
    }

    #[test]
    fn surrogate_matches_dense_least_squares_oracle() {
        let (traj, delta, _) = two_node_sis_trajectory(1e-3, 1000);
        let sp = SurrogateParams::with_uniform_rho(delta.clone(), 0.0).unwrap();
        let a_hat = surrogate_fit(&traj, &sp).unwrap();
        // rho = 0 and an interior optimum: coordinate descent must agree
        // with the unconstrained normal equations per node.
        let x = traj.states();
        let samples = traj.len() - 1;
        for i in 0..2 {
            let j = 1 - i;
            let mut phi = Array1::<f64>::zeros(samples);
            let mut y = Array1::<f64>::zeros(samples);
            for k in 0..samples {
                phi[k] = (1.0 - x[[i, k]]) * x[[j, k]];
                y[k] = (x[[i, k + 1]] - x[[i, k]]) / traj.dt() + delta[i] * x[[i, k]];
            }
            let expect = phi.dot(&y) / phi.dot(&phi);
            assert_abs_diff_eq!(a_hat.adjacency()[[i, j]], expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn surrogate_objective_never_increases() {
        let (traj, _, _) = two_node_sis_trajectory(0.01, 200);
        let x = traj.states();
        let samples = traj.len() - 1;
        let mut phi = Array2::<f64>::zeros((1, samples));
        let mut y = Array1::<f64>::zeros(samples);
        for k in 0..samples {
            phi[[0, k]] = (1.0 - x[[0, k]]) * x[[1, k]];
            y[k] = (x[[0, k + 1]] - x[[0, k]]) / traj.dt() + 0.1 * x[[0, k]];
        }
        let gram = phi.dot(&phi.t());
        let c = phi.dot(&y);
        let mut trace = Vec::new();
        let _ = nonneg_lasso_cd(&gram, &c, 0.05, 1e-12, 1000, Some(&mut trace));
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn surrogate_forecast_zero_network_decays_exponentially() {
        let g = Graph::new(Array2::<f64>::zeros((2, 2)), true, None).unwrap();
        let delta = array![0.5, 1.0];
        let fc = surrogate_forecast(&g, &delta, &array![0.8, 0.6], 0.0, 1.0, 1e-3).unwrap();
        let last = fc.states.column(fc.len() - 1).to_owned();
        assert_abs_diff_eq!(last[0], 0.8 * (-0.5f64).exp(), epsilon = 1e-8);
        assert_abs_diff_eq!(last[1], 0.6 * (-1.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn surrogate_resimulation_matches_truth_on_recovery_case() {
        let (traj, delta, _) = two_node_sis_trajectory(1e-3, 2000);
        let k_obs = traj.len() / 2;
        let window = traj.window(k_obs).unwrap();
        let sp = SurrogateParams::with_uniform_rho(delta.clone(), 1e-6).unwrap();
        let a_hat = surrogate_fit(&window, &sp).unwrap();
        let fc = surrogate_forecast(
            &a_hat,
            &delta,
            &traj.column(k_obs - 1),
            traj.time(k_obs - 1),
            traj.time(traj.len() - 1),
            traj.dt(),
        )
        .unwrap();
        let truth = traj.states().slice(s![.., k_obs - 1..]).to_owned();
        let m = error_metrics(&fc.states, &truth).unwrap();
        assert!(m.relative_l2 <= 1e-3, "relative L2 {}", m.relative_l2);
    }

    #[test]
    fn clamping_flags_and_bounds() {
        let m = array![[1.2, 0.5], [-0.1, 0.0]];
        let (c, changed) = clamp_unit_interval(&m);
        assert!(changed);
        assert_eq!(c, array![[1.0, 0.5], [0.0, 0.0]]);
        let (_, changed) = clamp_unit_interval(&array![[0.3, 0.9]]);
        assert!(!changed);
    }
}
