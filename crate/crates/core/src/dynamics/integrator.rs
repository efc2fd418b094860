//! Dormand–Prince 5(4) with the standard order-4 continuous extension.

use crate::error::{Error, Result};

/// First-order autonomous or non-autonomous ODE `dx/dt = f(t, x)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn new(rtol: f64, atol: f64) -> Self {
        StepControl {
            rtol,
            atol,
            max_steps: 10_000_000,
        }
    }
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

/// Integrate from `t0` to `t1` and return the states interpolated at `sample_times`
/// (which must be sorted and lie within `[t0, t1]`).
pub fn dopri5<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    sample_times: &[f64],
    ctl: StepControl,
) -> Result<Vec<Vec<f64>>> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let mut out = Vec::with_capacity(sample_times.len());
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] <= t0 {
        out.push(x0.to_vec());
        next += 1;
    }
    if next == sample_times.len() || t1 <= t0 {
        while out.len() < sample_times.len() {
            out.push(x0.to_vec());
        }
        return Ok(out);
    }

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut k5, mut k6, mut k7) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

    sys.rhs(t, &y, &mut k1);
    let mut h = initial_step(sys, t, &y, &k1, ctl, t1 - t0);
    let mut steps = 0;
    let mut fac_old = 1e-4_f64;

    while t < t1 {
        if steps >= ctl.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t + h, &ynew, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            if ynew.iter().any(|v| !v.is_finite()) && h < 1e-8 {
                return Err(Error::NonFinite(format!("state diverged near t = {t}")));
            }
            h *= 0.1;
            continue;
        }

        // Lund-stabilised step-size controller (Hairer, DOPRI5 defaults).
        let expo = 0.2 - 0.04 * 0.75;
        let fac11 = err.powf(expo);
        let mut fac = fac11 / fac_old.powf(0.04);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let h_new = h / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h * k1[i] - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - h * k7[i] - bspl;
                cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = t + h;
            while next < sample_times.len() && sample_times[next] <= t_new {
                let theta = (sample_times[next] - t) / h;
                let th1 = 1.0 - theta;
                let row: Vec<f64> = (0..n)
                    .map(|i| {
                        cont[0][i] + theta * (cont[1][i] + th1 * (cont[2][i] + theta * (cont[3][i] + th1 * cont[4][i])))
                    })
                    .collect();
                out.push(row);
                next += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state diverged at t = {t}")));
            }
            h = h_new;
        } else {
            h /= (fac11 / 0.9).min(1.0 / 0.2);
        }
    }
    while out.len() < sample_times.len() {
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], f0: &[f64], ctl: StepControl, span: f64) -> f64 {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| ctl.atol + ctl.rtol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
    }

    struct Blowup;
    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = x[0] * x[0];
        }
    }

    #[test]
    fn exponential_decay_is_accurate_at_sample_points() {
        let ts: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let ys = dopri5(&Decay, &[1.0], 0.0, 5.0, &ts, StepControl::new(1e-10, 1e-12)).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn finite_time_blowup_is_reported() {
        // x' = x², x(0) = 1 blows up at t = 1.
        let ts = [0.0, 2.0];
        let res = dopri5(&Blowup, &[1.0], 0.0, 2.0, &ts, StepControl::new(1e-8, 1e-10));
        assert!(matches!(
            res,
            Err(Error::StepUnderflow { .. }) | Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let res = dopri5(&Decay, &[1.0, 2.0], 0.0, 1.0, &[0.0], StepControl::new(1e-6, 1e-9));
        assert!(matches!(res, Err(Error::DimensionMismatch { .. })));
    }
}
