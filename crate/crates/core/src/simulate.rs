//! Method-of-steps integration of the neutral initial value problem and
//! pointwise checks of exponential bounds against trajectories.
//!
//! The scheme is a trapezoidal predictor-corrector on a uniform grid. Delayed
//! states x(h_k(t)) are interpolated linearly; delayed derivatives ẋ(g(t)) are
//! looked up left-constant between grid points. Because ẋ jumps at t0 + kσ,
//! both one-sided limits are stored at every grid point: the trapezoid uses
//! ẋ(t_i⁺) and ẋ(t_{i+1}⁻), and a delayed lookup that lands exactly on a grid
//! point reads the limit from the same side. Breaking points are not tracked
//! beyond that, so off-grid jumps cost first-order accuracy locally.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::certify::{DataNorms, ExponentialBound};
use crate::exprlang::{EvalError, Expr};
use crate::matfun::{matrix_measure, matrix_norm, vector_norm, Mat, MatfunError, MatrixFunction, NormKind, Sampling};
use crate::model::{effective_delay_bounds, InitialData, NeutralSystem};

/// Relative distance (in steps) under which an argument counts as a grid point.
const SNAP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Eval(#[from] MatfunError),
    #[error("{what} at t = {t}: {source}")]
    Delay {
        what: String,
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("step must be finite and positive, got {0}")]
    Step(f64),
    #[error("horizon end {t_end} must exceed the initial time {t0}")]
    Horizon { t0: f64, t_end: f64 },
    #[error("initial data has {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("E - A(t) is singular at t = {0}")]
    Singular(f64),
    #[error("argument {s} at t = {t} lies ahead of the computed history")]
    Advanced { t: f64, s: f64 },
    #[error("t = {t} is beyond the trajectory end {end}")]
    BeyondEnd { t: f64, end: f64 },
}

/// Grid of (t, x, ẋ) with both one-sided derivative limits.
#[derive(Clone, Debug)]
pub struct Trajectory {
    t0: f64,
    step: f64,
    n: usize,
    len: usize,
    x: Vec<f64>,
    xdot_left: Vec<f64>,
    xdot: Vec<f64>,
    init: InitialData,
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.step
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.time(i))
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.n..(i + 1) * self.n]
    }

    /// Right limit ẋ(t_i⁺).
    pub fn xdot(&self, i: usize) -> &[f64] {
        &self.xdot[i * self.n..(i + 1) * self.n]
    }

    /// Left limit ẋ(t_i⁻); Ψ(t0) at the first point.
    pub fn xdot_left(&self, i: usize) -> &[f64] {
        &self.xdot_left[i * self.n..(i + 1) * self.n]
    }

    pub fn initial_data(&self) -> &InitialData {
        &self.init
    }

    pub fn final_state(&self) -> &[f64] {
        self.x(self.len - 1)
    }

    /// CSV with header `t,x1..xn,xd1..xdn`, 17 significant digits, right-limit ẋ.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        header.extend((1..=self.n).map(|i| format!("xd{i}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len {
            let mut row = format!("{:.16e}", self.time(i));
            for v in self.x(i).iter().chain(self.xdot(i)) {
                row.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Pos {
    Before,
    Exact(usize),
    Between(usize, f64),
}

/// Read access to the prehistory, the stored grid prefix and (during a step)
/// a candidate state at the next grid point.
struct History<'a> {
    t0: f64,
    step: f64,
    n: usize,
    init: &'a InitialData,
    x: &'a [f64],
    xdot_left: &'a [f64],
    xdot: &'a [f64],
    stored: usize,
    frontier: Option<&'a [f64]>,
}

impl History<'_> {
    fn pos(&self, s: f64) -> Pos {
        let k = (s - self.t0) / self.step;
        let r = k.round();
        if (k - r).abs() < SNAP && r >= 0.0 {
            Pos::Exact(r as usize)
        } else if k < 0.0 {
            Pos::Before
        } else {
            let j = k.floor();
            Pos::Between(j as usize, k - j)
        }
    }

    fn x_row(&self, j: usize, t: f64, s: f64) -> Result<&[f64], SimulateError> {
        if j < self.stored {
            Ok(&self.x[j * self.n..(j + 1) * self.n])
        } else if j == self.stored {
            self.frontier.ok_or(SimulateError::Advanced { t, s })
        } else {
            Err(SimulateError::Advanced { t, s })
        }
    }

    fn x_at(&self, t: f64, s: f64, out: &mut [f64]) -> Result<(), SimulateError> {
        match self.pos(s) {
            Pos::Before => out.copy_from_slice(&self.init.phi_at(s)?),
            Pos::Exact(j) => out.copy_from_slice(self.x_row(j, t, s)?),
            Pos::Between(j, theta) => {
                let a = self.x_row(j, t, s)?;
                let b = self.x_row(j + 1, t, s)?;
                for ((o, u), v) in out.iter_mut().zip(a).zip(b) {
                    *o = (1.0 - theta) * u + theta * v;
                }
            }
        }
        Ok(())
    }

    fn xdot_at(&self, t: f64, s: f64, side: Side, out: &mut [f64]) -> Result<(), SimulateError> {
        let row = |v: &[f64], j: usize| -> Result<Vec<f64>, SimulateError> {
            if j < self.stored {
                Ok(v[j * self.n..(j + 1) * self.n].to_vec())
            } else {
                Err(SimulateError::Advanced { t, s })
            }
        };
        let v = match self.pos(s) {
            Pos::Before => self.init.psi_at(s)?,
            Pos::Exact(0) if side == Side::Left => self.init.psi_at(self.t0)?,
            Pos::Exact(j) => match side {
                Side::Left => row(self.xdot_left, j)?,
                Side::Right => row(self.xdot, j)?,
            },
            Pos::Between(j, _) => row(self.xdot, j)?,
        };
        out.copy_from_slice(&v);
        Ok(())
    }
}

/// Coefficients at one time.
struct Coeffs {
    t: f64,
    a: Mat,
    b: Vec<Mat>,
    f: Vec<f64>,
    g: f64,
    h: Vec<f64>,
}

fn coeffs(sys: &NeutralSystem, t: f64) -> Result<Coeffs, SimulateError> {
    let arg = |what: String, e: &Expr| e.eval(t).map_err(|source| SimulateError::Delay { what, t, source });
    let mut b = Vec::with_capacity(sys.terms().len());
    let mut h = Vec::with_capacity(sys.terms().len());
    for (k, term) in sys.terms().iter().enumerate() {
        b.push(term.coeff.eval(t)?);
        h.push(arg(format!("h{}", k + 1), &term.delay.arg)?);
    }
    Ok(Coeffs {
        t,
        a: sys.a().eval(t)?,
        b,
        f: sys.forcing_at(t)?,
        g: arg("g".into(), &sys.g().arg)?,
        h,
    })
}

/// ẋ at grid index `idx` from the equation, one-sided.
fn derivative(c: &Coeffs, idx: usize, hist: &History, side: Side) -> Result<Vec<f64>, SimulateError> {
    let n = hist.n;
    let mut rhs = c.f.clone();
    let mut buf = vec![0.0; n];
    for (b, &h) in c.b.iter().zip(&c.h) {
        hist.x_at(c.t, h, &mut buf)?;
        b.mul_vec_acc(&buf, &mut rhs);
    }
    if c.a.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(rhs);
    }
    match hist.pos(c.g) {
        Pos::Exact(j) if j == idx => {
            let mut m = Mat::identity(n);
            m.add_scaled(-1.0, &c.a);
            m.solve(&rhs).map_err(|_| SimulateError::Singular(c.t))
        }
        Pos::Exact(j) | Pos::Between(j, _) if j >= idx => Err(SimulateError::Advanced { t: c.t, s: c.g }),
        _ => {
            hist.xdot_at(c.t, c.g, side, &mut buf)?;
            c.a.mul_vec_acc(&buf, &mut rhs);
            Ok(rhs)
        }
    }
}

/// Integrate on t_i = t0 + i·step up to the first grid point ≥ t_end.
pub fn integrate(sys: &NeutralSystem, init: &InitialData, t_end: f64, step: f64) -> Result<Trajectory, SimulateError> {
    let n = sys.dim();
    let t0 = sys.t0();
    if !(step.is_finite() && step > 0.0) {
        return Err(SimulateError::Step(step));
    }
    if !(t_end.is_finite() && t_end > t0) {
        return Err(SimulateError::Horizon { t0, t_end });
    }
    for len in [init.phi.len(), init.psi.len()] {
        if len != n {
            return Err(SimulateError::Dimension { expected: n, got: len });
        }
    }
    let steps = ((t_end - t0) / step - SNAP).ceil().max(1.0) as usize;
    let len = steps + 1;
    let mut x = Vec::with_capacity(len * n);
    let mut xdl = Vec::with_capacity(len * n);
    let mut xdr = Vec::with_capacity(len * n);

    x.extend(init.phi_at(t0)?);
    xdl.extend(init.psi_at(t0)?);
    {
        let c = coeffs(sys, t0)?;
        let x0 = x.clone();
        let hist = History { t0, step, n, init, x: &[], xdot_left: &[], xdot: &[], stored: 0, frontier: Some(&x0) };
        xdr.extend(derivative(&c, 0, &hist, Side::Right)?);
    }

    for i in 0..steps {
        let c = coeffs(sys, t0 + (i + 1) as f64 * step)?;
        let xi = x[i * n..].to_vec();
        let di = xdr[i * n..].to_vec();
        let pred: Vec<f64> = xi.iter().zip(&di).map(|(u, d)| u + step * d).collect();
        let d_pred = {
            let hist = History { t0, step, n, init, x: &x, xdot_left: &xdl, xdot: &xdr, stored: i + 1, frontier: Some(&pred) };
            derivative(&c, i + 1, &hist, Side::Left)?
        };
        let next: Vec<f64> = xi.iter().zip(&di).zip(&d_pred).map(|((u, a), b)| u + 0.5 * step * (a + b)).collect();
        let (left, right) = {
            let hist = History { t0, step, n, init, x: &x, xdot_left: &xdl, xdot: &xdr, stored: i + 1, frontier: Some(&next) };
            (derivative(&c, i + 1, &hist, Side::Left)?, derivative(&c, i + 1, &hist, Side::Right)?)
        };
        x.extend(next);
        xdl.extend(left);
        xdr.extend(right);
    }
    Ok(Trajectory {
        t0,
        step,
        n,
        len,
        x,
        xdot_left: xdl,
        xdot: xdr,
        init: init.clone(),
    })
}

/// (x(t), ẋ(t)): the prehistory before t0, linear x and left-constant ẋ after.
pub fn sample(traj: &Trajectory, t: f64) -> Result<(Vec<f64>, Vec<f64>), SimulateError> {
    let end = traj.t_end();
    if t > end + SNAP * traj.step {
        return Err(SimulateError::BeyondEnd { t, end });
    }
    let hist = history(traj);
    match hist.pos(t) {
        Pos::Before => Ok((traj.init.phi_at(t)?, traj.init.psi_at(t)?)),
        Pos::Exact(j) => Ok((traj.x(j).to_vec(), traj.xdot(j).to_vec())),
        Pos::Between(j, _) => {
            let mut x = vec![0.0; traj.n];
            hist.x_at(t, t, &mut x)?;
            Ok((x, traj.xdot(j).to_vec()))
        }
    }
}

fn history(traj: &Trajectory) -> History<'_> {
    History {
        t0: traj.t0,
        step: traj.step,
        n: traj.n,
        init: &traj.init,
        x: &traj.x,
        xdot_left: &traj.xdot_left,
        xdot: &traj.xdot,
        stored: traj.len,
        frontier: None,
    }
}

/// max over grid points of ‖ẋ − Aẋ(g) − ΣB_k x(h_k) − f‖/(1 + ‖ẋ‖), using left
/// limits after t0 and the right limit at t0.
pub fn max_residual(sys: &NeutralSystem, traj: &Trajectory, norm: NormKind) -> Result<f64, SimulateError> {
    let hist = history(traj);
    let mut worst: f64 = 0.0;
    for i in 0..traj.len {
        let c = coeffs(sys, traj.time(i))?;
        let (side, stored) = if i == 0 { (Side::Right, traj.xdot(0)) } else { (Side::Left, traj.xdot_left(i)) };
        let d = derivative(&c, i, &hist, side)?;
        let diff: Vec<f64> = d.iter().zip(stored).map(|(a, b)| a - b).collect();
        worst = worst.max(vector_norm(&diff, norm) / (1.0 + vector_norm(stored, norm)));
    }
    Ok(worst)
}

/// Sampled sups of the data entering an exponential bound: ‖x(t0)‖, ‖Ψ‖ on
/// [t0 − σ, t0], ‖Φ‖ on each [t0 − τ_k, t0], and ‖f‖ on [t0, t_end].
pub fn data_norms(sys: &NeutralSystem, init: &InitialData, norm: NormKind, t_end: f64, samples: usize) -> Result<DataNorms, SimulateError> {
    let t0 = sys.t0();
    let bounds = effective_delay_bounds(sys);
    let sup = |f: &dyn Fn(f64) -> Result<Vec<f64>, MatfunError>, lo: f64, hi: f64| -> Result<f64, SimulateError> {
        let grid = if hi > lo { Sampling { lo, hi, samples: samples.max(2) } } else { Sampling { lo: hi, hi, samples: 1 } };
        let mut best: f64 = 0.0;
        for t in grid.points() {
            best = best.max(vector_norm(&f(t)?, norm));
        }
        Ok(best)
    };
    let phi = |t| init.phi_at(t);
    let psi = |t| init.psi_at(t);
    let forcing = |t| sys.forcing_at(t);
    Ok(DataNorms {
        x0: vector_norm(&init.phi_at(t0)?, norm),
        psi: sup(&psi, t0 - bounds.sigma, t0)?,
        phi: bounds.tau.iter().map(|&tau| sup(&phi, t0 - tau, t0)).collect::<Result<_, _>>()?,
        f: if sys.forcing().is_some() { sup(&forcing, t0, t_end)? } else { 0.0 },
    })
}

/// Pointwise comparison of ‖x(t)‖ with an exponential bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub max_ratio: f64,
    pub first_violation: Option<f64>,
    #[serde(skip)]
    pub margin_curve: Vec<f64>,
}

pub fn verify_bound(traj: &Trajectory, bound: &ExponentialBound, data: &DataNorms, norm: NormKind) -> BoundCheck {
    let mut curve = Vec::with_capacity(traj.len);
    let mut first_violation = None;
    let mut max_ratio: f64 = 0.0;
    for i in 0..traj.len {
        let t = traj.time(i);
        let size = vector_norm(traj.x(i), norm);
        let ratio = if size == 0.0 { 0.0 } else { size / bound.evaluate(t, traj.t0, data) };
        if ratio > 1.0 && first_violation.is_none() {
            first_violation = Some(t);
        }
        max_ratio = max_ratio.max(ratio);
        curve.push(ratio);
    }
    BoundCheck {
        max_ratio,
        first_violation,
        margin_curve: curve,
    }
}

/// Worst values over the grid of ‖Y(t,t0)‖e^{−∫μ(C)} and ‖Y(t,t0)‖ − e^{∫μ(C)}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoppelCheck {
    pub max_ratio: f64,
    pub max_excess: f64,
}

/// Integrates the fundamental matrix of ẏ = C(t)y together with ∫μ(C) by
/// classical Runge-Kutta on the same grid.
pub fn coppel_check(c: &MatrixFunction, t0: f64, t_end: f64, step: f64, norm: NormKind) -> Result<CoppelCheck, SimulateError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(SimulateError::Step(step));
    }
    if t_end.is_nan() || t_end <= t0 {
        return Err(SimulateError::Horizon { t0, t_end });
    }
    let n = c.dim();
    let steps = ((t_end - t0) / step - SNAP).ceil().max(1.0) as usize;
    let mut y = Mat::identity(n);
    let mut s = 0.0;
    let mut out = CoppelCheck { max_ratio: 1.0, max_excess: 0.0 };
    let mut c_lo = c.eval(t0)?;
    for i in 0..steps {
        let t = t0 + i as f64 * step;
        let c_mid = c.eval(t + 0.5 * step)?;
        let c_hi = c.eval(t + step)?;
        let k1 = c_lo.mul(&y);
        let k2 = c_mid.mul(&y.add(&k1.scale(0.5 * step)));
        let k3 = c_mid.mul(&y.add(&k2.scale(0.5 * step)));
        let k4 = c_hi.mul(&y.add(&k3.scale(step)));
        let mut incr = k1.add(&k4);
        incr.add_scaled(2.0, &k2);
        incr.add_scaled(2.0, &k3);
        y.add_scaled(step / 6.0, &incr);
        s += step / 6.0 * (matrix_measure(&c_lo, norm) + 4.0 * matrix_measure(&c_mid, norm) + matrix_measure(&c_hi, norm));
        let size = matrix_norm(&y, norm);
        out.max_ratio = out.max_ratio.max(size * (-s).exp());
        out.max_excess = out.max_excess.max(size - s.exp());
        c_lo = c_hi;
    }
    Ok(out)
}
