//! Dormand–Prince 5(4) integrator with dense output and event location.
//!
//! Steps that would carry a switching function through zero are shortened to
//! end just past the root, so a piecewise-smooth right-hand side is only ever
//! integrated across smooth pieces.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64, last_good: Vec<f64> },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64, last_good: Vec<f64> },
    #[error("step limit of {0} reached")]
    TooManySteps(usize),
    #[error("right-hand side failed at t = {t}: {message}")]
    Rhs { t: f64, message: String },
}

impl OdeError {
    /// Last state accepted before the failure, if any.
    pub fn last_good(&self) -> Option<&[f64]> {
        match self {
            OdeError::NonFinite { last_good, .. } | OdeError::StepUnderflow { last_good, .. } => Some(last_good),
            _ => None,
        }
    }
}

/// A first-order system `y' = f(t, y)` with optional switching functions.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), String>;

    /// Number of switching functions.
    fn event_count(&self) -> usize {
        0
    }

    /// Writes the switching functions at `(t, y)` into `out`.
    fn events(&self, _t: f64, _y: &[f64], _out: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rtol: self.rtol * factor,
            atol: self.atol * factor,
            ..*self
        }
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub events: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

/// Continuous extension of one accepted step.
struct Dense {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        for i in 0..out.len() {
            out[i] = self.r[0][i] + s * (self.r[1][i] + s1 * (self.r[2][i] + s * (self.r[3][i] + s1 * self.r[4][i])));
        }
    }
}

fn call<S: OdeSystem>(sys: &S, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError> {
    sys.rhs(t, y, dy).map_err(|message| OdeError::Rhs { t, message })
}

/// One trial step of size `h` from `(t, y)` given `k[0] = f(t, y)`.
/// Leaves the 5th-order solution in `st.y_new`, `f` there in `k[6]`, and
/// returns the scaled error norm.
fn attempt<S: OdeSystem>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    st: &mut Stages,
    tol: &Tolerances,
) -> Result<f64, OdeError> {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$($a:expr => $j:expr),*]) => {{
            for i in 0..n {
                st.tmp[i] = y[i] + h * (0.0 $(+ $a * st.k[$j][i])*);
            }
            let (head, tail) = st.k.split_at_mut($dst);
            let _ = head;
            call(sys, t + $c * h, &st.tmp, &mut tail[0])?;
        }};
    }
    stage!(1, C2, [A21 => 0]);
    stage!(2, C3, [A31 => 0, A32 => 1]);
    stage!(3, C4, [A41 => 0, A42 => 1, A43 => 2]);
    stage!(4, C5, [A51 => 0, A52 => 1, A53 => 2, A54 => 3]);
    stage!(5, 1.0, [A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4]);
    for i in 0..n {
        st.y_new[i] =
            y[i] + h * (A71 * st.k[0][i] + A73 * st.k[2][i] + A74 * st.k[3][i] + A75 * st.k[4][i] + A76 * st.k[5][i]);
    }
    let (head, tail) = st.k.split_at_mut(6);
    let _ = head;
    call(sys, t + h, &st.y_new, &mut tail[0])?;
    let mut sum = 0.0;
    for i in 0..n {
        st.err[i] = h
            * (E1 * st.k[0][i]
                + E3 * st.k[2][i]
                + E4 * st.k[3][i]
                + E5 * st.k[4][i]
                + E6 * st.k[5][i]
                + E7 * st.k[6][i]);
        let sc = tol.atol + tol.rtol * y[i].abs().max(st.y_new[i].abs());
        sum += (st.err[i] / sc).powi(2);
    }
    Ok((sum / n as f64).sqrt())
}

fn dense_from(t: f64, h: f64, y: &[f64], st: &Stages) -> Dense {
    let n = y.len();
    let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let dy = st.y_new[i] - y[i];
        let bspl = h * st.k[0][i] - dy;
        r[0][i] = y[i];
        r[1][i] = dy;
        r[2][i] = bspl;
        r[3][i] = dy - h * st.k[6][i] - bspl;
        r[4][i] = h
            * (D1 * st.k[0][i]
                + D3 * st.k[2][i]
                + D4 * st.k[3][i]
                + D5 * st.k[4][i]
                + D6 * st.k[5][i]
                + D7 * st.k[6][i]);
    }
    Dense { t0: t, h, r }
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    tol: &Tolerances,
    span: f64,
) -> Result<f64, OdeError> {
    let n = y.len();
    let sc = |i: usize| tol.atol + tol.rtol * y[i].abs();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span.abs());
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    call(sys, t + h0, &y1, &mut f1)?;
    let d2 = ((0..n).map(|i| ((f1[i] - f0[i]) / sc(i)).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span.abs()).min(tol.h_max))
}

/// Integrates from `t0` to `t_end`, calling `observe(t, y)` at every
/// `t0 + k·sample_dt` in `[t0, t_end]` (pass `None` to observe only accepted
/// steps).
pub fn integrate<S, O>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    sample_dt: Option<f64>,
    tol: &Tolerances,
    mut observe: O,
) -> Result<Outcome, OdeError>
where
    S: OdeSystem,
    O: FnMut(f64, &[f64]),
{
    let n = sys.dim();
    assert_eq!(y0.len(), n, "state length mismatch");
    let span = t_end - t0;
    assert!(span >= 0.0, "integration must run forward in time");
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut st = Stages {
        k: std::array::from_fn(|_| vec![0.0; n]),
        tmp: vec![0.0; n],
        y_new: vec![0.0; n],
        err: vec![0.0; n],
    };
    call(sys, t, &y, &mut st.k[0])?;
    let mut sample_k: u64 = 0;
    let next_sample = |k: u64| sample_dt.map(|dt| t0 + k as f64 * dt);
    if let Some(ts) = next_sample(0) {
        if ts <= t_end {
            observe(ts, &y);
            sample_k = 1;
        }
    }
    let mut out = Outcome {
        t,
        y: y.clone(),
        accepted: 0,
        rejected: 0,
        events: 0,
    };
    if span == 0.0 {
        return Ok(out);
    }
    let ne = sys.event_count();
    let mut g_old = vec![0.0; ne];
    let mut g_new = vec![0.0; ne];
    sys.events(t, &y, &mut g_old);

    let mut h = match tol.h_init {
        Some(h) => h.min(span),
        None => initial_step(sys, t, &y, &st.k[0], tol, span)?,
    };
    let mut last_rejected = false;
    let mut buf = vec![0.0; n];
    let t_scale = t0.abs().max(t_end.abs()).max(1.0);
    loop {
        if out.accepted + out.rejected >= tol.max_steps {
            return Err(OdeError::TooManySteps(tol.max_steps));
        }
        if t + h >= t_end || t_end - (t + h) < 1e-12 * t_scale {
            h = t_end - t;
        }
        if h < 1e-14 * t_scale {
            return Err(OdeError::StepUnderflow { t, h, last_good: y });
        }
        let err = attempt(sys, t, &y, h, &mut st, tol)?;
        if !err.is_finite() || err > 1.0 {
            out.rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.1
            };
            h *= fac;
            last_rejected = true;
            continue;
        }

        let mut step_h = h;
        let mut event_hit = false;
        if ne > 0 {
            sys.events(t + h, &st.y_new, &mut g_new);
            let crossed = (0..ne).any(|e| crosses(g_old[e], g_new[e]));
            if crossed {
                let dense = dense_from(t, h, &y, &st);
                let mut first = t + h;
                for e in 0..ne {
                    if crosses(g_old[e], g_new[e]) {
                        let root = locate(sys, &dense, e, t, t + h, g_old[e], &mut buf, ne);
                        first = first.min(root);
                    }
                }
                if first < t + h {
                    step_h = first - t;
                    let _ = attempt(sys, t, &y, step_h, &mut st, tol)?;
                }
                event_hit = true;
            }
        }

        let t_new = t + step_h;
        if st.y_new.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t: t_new, last_good: y });
        }
        if let Some(dt) = sample_dt {
            let dense = dense_from(t, step_h, &y, &st);
            loop {
                let ts = t0 + sample_k as f64 * dt;
                if ts > t_new || ts > t_end {
                    break;
                }
                dense.eval(ts, &mut buf);
                observe(ts, &buf);
                sample_k += 1;
            }
        } else {
            observe(t_new, &st.y_new);
        }
        let _ = next_sample;

        t = t_new;
        std::mem::swap(&mut y, &mut st.y_new);
        let (a, b) = st.k.split_at_mut(6);
        std::mem::swap(&mut a[0], &mut b[0]);
        out.accepted += 1;
        if event_hit {
            out.events += 1;
            sys.events(t, &y, &mut g_old);
        } else if ne > 0 {
            std::mem::swap(&mut g_old, &mut g_new);
        }
        if t >= t_end || t_end - t < 1e-12 * t_scale {
            break;
        }
        let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        if last_rejected {
            fac = fac.min(1.0);
        }
        last_rejected = false;
        if !event_hit {
            h = (h * fac).min(tol.h_max);
        } else {
            h = h.min(tol.h_max);
        }
    }
    out.t = t;
    out.y = y;
    Ok(out)
}

fn crosses(a: f64, b: f64) -> bool {
    (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)
}

/// Bisection on the dense output for the root of switching function `e`;
/// returns a time at or just past the root.
#[allow(clippy::too_many_arguments)]
fn locate<S: OdeSystem>(
    sys: &S,
    dense: &Dense,
    e: usize,
    mut lo: f64,
    mut hi: f64,
    g_lo: f64,
    buf: &mut [f64],
    ne: usize,
) -> f64 {
    let mut g = vec![0.0; ne];
    let span = hi - lo;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * span.max(lo.abs() * 1e-3) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        dense.eval(mid, buf);
        sys.events(mid, buf, &mut g);
        if crosses(g_lo, g[e]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator {
        w: f64,
    }

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), String> {
            dy[0] = y[1];
            dy[1] = -self.w * self.w * y[0];
            Ok(())
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let sys = Oscillator { w: 3.0 };
        let out = integrate(&sys, 0.0, &[1.0, 0.0], 10.0, None, &Tolerances::default(), |_, _| {}).unwrap();
        assert!((out.t - 10.0).abs() < 1e-12);
        assert!((out.y[0] - 30f64.cos()).abs() < 1e-6, "{:?}", out.y);
    }

    #[test]
    fn samples_on_uniform_grid_match_exact_solution() {
        let sys = Oscillator { w: 2.0 };
        let mut worst = 0.0f64;
        let mut count = 0;
        integrate(
            &sys,
            0.0,
            &[1.0, 0.0],
            5.0,
            Some(0.01),
            &Tolerances::default(),
            |t, y| {
                worst = worst.max((y[0] - (2.0 * t).cos()).abs());
                count += 1;
            },
        )
        .unwrap();
        assert_eq!(count, 501);
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn tighter_tolerance_converges() {
        let sys = Oscillator { w: 1.0 };
        let a = integrate(&sys, 0.0, &[1.0, 0.0], 20.0, None, &Tolerances::default(), |_, _| {}).unwrap();
        let b = integrate(
            &sys,
            0.0,
            &[1.0, 0.0],
            20.0,
            None,
            &Tolerances::default().scaled(0.5),
            |_, _| {},
        )
        .unwrap();
        let d = ((a.y[0] - b.y[0]).powi(2) + (a.y[1] - b.y[1]).powi(2)).sqrt();
        assert!(d < 1e-6);
    }

    struct Bouncer;

    impl OdeSystem for Bouncer {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), String> {
            dy[0] = y[1];
            // stiff spring below zero, free fall above
            dy[1] = if y[0] < 0.0 { -1e4 * y[0] } else { -1.0 };
            Ok(())
        }
        fn event_count(&self) -> usize {
            1
        }
        fn events(&self, _t: f64, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
        }
    }

    #[test]
    fn events_land_on_contact_and_conserve_energy() {
        let tol = Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let out = integrate(&Bouncer, 0.0, &[1.0, 0.0], 10.0, None, &tol, |_, _| {}).unwrap();
        assert!(out.events >= 6, "{}", out.events);
        let energy = |y: &[f64]| 0.5 * y[1] * y[1] + if y[0] < 0.0 { 0.5e4 * y[0] * y[0] } else { y[0] };
        assert!((energy(&out.y) - 1.0).abs() < 1e-7, "{}", energy(&out.y));
    }

    struct Blowup;

    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), String> {
            dy[0] = y[0] * y[0];
            Ok(())
        }
    }

    #[test]
    fn finite_time_blowup_is_reported() {
        let e = integrate(&Blowup, 0.0, &[1.0], 2.0, None, &Tolerances::default(), |_, _| {}).unwrap_err();
        assert!(
            matches!(e, OdeError::StepUnderflow { .. } | OdeError::NonFinite { .. }),
            "{e}"
        );
        assert!(e.last_good().is_some());
    }
}
