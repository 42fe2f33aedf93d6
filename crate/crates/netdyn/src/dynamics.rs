//! Coupled-ODE dynamics on networks and their fixed-step integration.
//!
//! Two families are built in: the deterministic mean-field SIS epidemic
//!
//! ```text
//! dx_i/dt = -delta_i x_i + (1 - x_i) * sum_j a_ij x_j
//! ```
//!
//! where `x_i` is the probability that node `i` is infected, and linear
//! consensus `dx/dt = -L x` on an undirected graph.
//!
//! The integrator is classical fixed-step RK4 on purpose: snapshot matrices
//! need exactly equidistant columns, so the column spacing is part of the
//! contract. Vector-field evaluations are pure functions of `(params, x)`;
//! nothing here holds mutable state.

use ndarray::{Array1, Array2};

use crate::graph::{laplacian, Graph};
use crate::rng;
use crate::scalar::{format_sig17, Scalar};
use crate::{Error, Result};

/// SIS epidemic parameters: per-node curing rates and the infection-rate
/// network (`a[[i, j]]` is the infection rate from `j` to `i`).
#[derive(Debug, Clone)]
pub struct SisParams<T: Scalar> {
    delta: Array1<T>,
    graph: Graph<T>,
}

impl<T: Scalar> SisParams<T> {
    pub fn new(delta: Array1<T>, graph: Graph<T>) -> Result<Self> {
        if delta.len() != graph.n() {
            return Err(Error::DimMismatch(format!(
                "{} curing rates for {} nodes",
                delta.len(),
                graph.n()
            )));
        }
        if delta.iter().any(|&d| !(d > T::zero()) || !d.is_finite()) {
            return Err(Error::Domain("curing rates must be strictly positive".into()));
        }
        Ok(Self { delta, graph })
    }

    pub fn delta(&self) -> &Array1<T> {
        &self.delta
    }

    pub fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    /// Advisory step bound `0.1 / max_i(delta_i + in_strength_i)` under which
    /// RK4 trajectories started in `[0, 1]^N` stay in the unit box.
    pub fn stable_dt_bound(&self) -> T {
        let strength = self.graph.in_strength();
        let mut worst = T::zero();
        for i in 0..self.graph.n() {
            worst = worst.max(self.delta[i] + strength[i]);
        }
        T::of(0.1) / worst
    }
}

/// SIS vector field: `-delta .* x + (1 - x) .* (A x)`.
pub fn sis_rhs<T: Scalar>(params: &SisParams<T>, x: &Array1<T>) -> Result<Array1<T>> {
    if x.len() != params.graph.n() {
        return Err(Error::DimMismatch(format!(
            "state length {} for {} nodes",
            x.len(),
            params.graph.n()
        )));
    }
    Ok(sis_rhs_unchecked(params, x))
}

fn sis_rhs_unchecked<T: Scalar>(params: &SisParams<T>, x: &Array1<T>) -> Array1<T> {
    let pressure = params.graph.adjacency().dot(x);
    let mut out = Array1::<T>::zeros(x.len());
    for i in 0..x.len() {
        out[i] = -params.delta[i] * x[i] + (T::one() - x[i]) * pressure[i];
    }
    out
}

/// Consensus parameters: an undirected graph and its precomputed Laplacian.
#[derive(Debug, Clone)]
pub struct ConsensusParams<T: Scalar> {
    graph: Graph<T>,
    lap: Array2<T>,
}

impl<T: Scalar> ConsensusParams<T> {
    pub fn new(graph: Graph<T>) -> Result<Self> {
        let lap = laplacian(&graph)?;
        Ok(Self { graph, lap })
    }

    pub fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    pub fn laplacian(&self) -> &Array2<T> {
        &self.lap
    }
}

/// Consensus vector field: `-L x`.
pub fn consensus_rhs<T: Scalar>(params: &ConsensusParams<T>, x: &Array1<T>) -> Result<Array1<T>> {
    if x.len() != params.graph.n() {
        return Err(Error::DimMismatch(format!(
            "state length {} for {} nodes",
            x.len(),
            params.graph.n()
        )));
    }
    Ok(-params.lap.dot(x))
}

/// Equidistant nodal-state observations: column `k` holds `x(t0 + k dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    states: Array2<T>,
    dt: T,
    t0: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(states: Array2<T>, dt: T, t0: T) -> Result<Self> {
        if states.ncols() < 2 {
            return Err(Error::InsufficientData(format!(
                "a trajectory needs at least 2 snapshots, got {}",
                states.ncols()
            )));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Domain(format!("dt = {dt} must be positive")));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory states"));
        }
        Ok(Self { states, dt, t0 })
    }

    /// N x K state matrix.
    pub fn states(&self) -> &Array2<T> {
        &self.states
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    /// Snapshot count K.
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    /// Time of column `k`.
    pub fn time(&self, k: usize) -> T {
        self.t0 + self.dt * T::of(k as f64)
    }

    /// Same snapshots rebased to start at `t0`.
    pub fn with_t0(mut self, t0: T) -> Trajectory<T> {
        self.t0 = t0;
        self
    }

    /// State at column `k`.
    pub fn column(&self, k: usize) -> Array1<T> {
        self.states.column(k).to_owned()
    }

    /// First `k_obs` snapshots as a new trajectory.
    pub fn window(&self, k_obs: usize) -> Result<Trajectory<T>> {
        if k_obs < 2 || k_obs > self.len() {
            return Err(Error::InsufficientData(format!(
                "window of {k_obs} snapshots out of {}",
                self.len()
            )));
        }
        let states = self.states.slice(ndarray::s![.., ..k_obs]).to_owned();
        Trajectory::new(states, self.dt, self.t0)
    }
}

/// RK4 step loop shared by the public integrators. Returns the computed
/// columns and, when the state turns non-finite, the index of the offending
/// step; columns past it are not produced.
pub(crate) fn rk4_path<T, F>(rhs: F, x0: &Array1<T>, dt: T, steps: usize) -> (Array2<T>, Option<usize>)
where
    T: Scalar,
    F: Fn(&Array1<T>) -> Array1<T>,
{
    let n = x0.len();
    let half = T::of(0.5);
    let sixth = T::of(1.0 / 6.0);
    let two = T::of(2.0);
    let mut out = Array2::<T>::zeros((n, steps + 1));
    out.column_mut(0).assign(x0);
    let mut x = x0.clone();
    for step in 1..=steps {
        let k1 = rhs(&x);
        let k2 = rhs(&(&x + &(&k1 * (dt * half))));
        let k3 = rhs(&(&x + &(&k2 * (dt * half))));
        let k4 = rhs(&(&x + &(&k3 * dt)));
        let incr = (&k1 + &(&k2 * two) + &(&k3 * two) + &k4) * (dt * sixth);
        x = &x + &incr;
        if x.iter().any(|v| !v.is_finite()) {
            let produced = out.slice(ndarray::s![.., ..step]).to_owned();
            return (produced, Some(step));
        }
        out.column_mut(step).assign(&x);
    }
    (out, None)
}

/// Classical fixed-step 4th-order Runge-Kutta integration of an autonomous
/// vector field. Column 0 is `x0`; the result has `steps + 1` columns spaced
/// `dt` apart, starting at `t = 0`.
pub fn integrate_rk4<T, F>(rhs: F, x0: &Array1<T>, dt: T, steps: usize) -> Result<Trajectory<T>>
where
    T: Scalar,
    F: Fn(&Array1<T>) -> Array1<T>,
{
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    if steps < 1 {
        return Err(Error::InsufficientData("integration needs at least one step".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let (states, diverged) = rk4_path(rhs, x0, dt, steps);
    if let Some(step) = diverged {
        return Err(Error::Divergence { step });
    }
    Trajectory::new(states, dt, T::zero())
}

const RATE_RANGE: f64 = 0.2;

fn sample_uniform_open<T: Scalar>(n: usize, seed: u64) -> Array1<T> {
    let mut rng = rng::seeded(seed);
    Array1::from_iter((0..n).map(|_| T::of(rng::unit_open_f64(&mut rng) * RATE_RANGE)))
}

/// Initial infection probabilities, i.i.d. uniform on (0, 0.2].
pub fn sample_initial_sis<T: Scalar>(n: usize, seed: u64) -> Array1<T> {
    sample_uniform_open(n, seed)
}

/// Curing rates, i.i.d. uniform on (0, 0.2]; zero is excluded so every rate
/// is strictly positive.
pub fn sample_curing_rates<T: Scalar>(n: usize, seed: u64) -> Array1<T> {
    sample_uniform_open(n, seed)
}

/// Writes the CSV form: header `t,node_0,...,node_{N-1}`, one row per
/// snapshot, every value with 17 significant digits.
pub fn trajectory_to_csv<T: Scalar>(traj: &Trajectory<T>) -> String {
    let n = traj.n();
    let mut out = String::from("t");
    for i in 0..n {
        out.push_str(&format!(",node_{i}"));
    }
    out.push('\n');
    for k in 0..traj.len() {
        out.push_str(&format_sig17(traj.time(k)));
        for i in 0..n {
            out.push(',');
            out.push_str(&format_sig17(traj.states()[[i, k]]));
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV form written by [`trajectory_to_csv`], checking that the
/// time column is uniformly spaced.
pub fn trajectory_from_csv<T: Scalar>(text: &str) -> Result<Trajectory<T>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty trajectory file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.is_empty() || cols[0] != "t" || cols.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header 't,node_0,...'".into(),
        });
    }
    let n = cols.len() - 1;
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<T> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != n + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", n + 1, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number '{s}'"),
            })
        };
        times.push(parse(fields[0])?);
        for f in &fields[1..] {
            values.push(T::of(parse(f)?));
        }
    }
    let k = times.len();
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "trajectory file has {k} snapshots, need at least 2"
        )));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("non-increasing time column, dt = {dt}")));
    }
    for (i, &t) in times.iter().enumerate() {
        let expected = times[0] + i as f64 * dt;
        if (t - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
            return Err(Error::Domain(format!(
                "time column not uniformly spaced at row {}: {t} vs {expected}",
                i + 1
            )));
        }
    }
    let mut states = Array2::<T>::zeros((n, k));
    for (row, chunk) in values.chunks(n).enumerate() {
        for (i, &v) in chunk.iter().enumerate() {
            states[[i, row]] = v;
        }
    }
    Trajectory::new(states, T::of(dt), T::of(times[0]))
}
