//! Piecewise cubic interpolation on strictly increasing grids.

/// Index `i` with `xs[i] <= x < xs[i+1]`, clamped to the valid panel range.
pub fn locate(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    xs.partition_point(|&v| v <= x) - 1
}

/// Cubic Hermite value and first derivative on one panel.
pub fn hermite(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * f0 + h * h10 * d0 + h01 * f1 + h * h11 * d1;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let deriv = dh00 * f0 + dh10 * d0 + dh01 * f1 + dh11 * d1;
    (value, deriv)
}

/// Monotone piecewise cubic (Fritsch-Carlson) interpolant.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    fs: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant. `xs` must be strictly increasing with at least two points.
    pub fn new(xs: Vec<f64>, fs: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == fs.len(), "pchip needs matching grids of length >= 2");
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (fs[i + 1] - fs[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds[0] = delta[0];
            ds[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            ds[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            ds[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { xs, fs, ds }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = locate(&self.xs, x);
        let x = x.clamp(self.xs[0], self.xs[self.xs.len() - 1]);
        hermite(self.xs[i], self.xs[i + 1], self.fs[i], self.fs[i + 1], self.ds[i], self.ds[i + 1], x).0
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Per-panel coefficients `[c0, c1, c2, c3]` with value `c0 + c1·t + c2·t² + c3·t³`,
    /// `t = (x − xs[i])/(xs[i+1] − xs[i])`.
    pub fn panel_coefficients(&self) -> Vec<[f64; 4]> {
        (0..self.xs.len() - 1)
            .map(|i| {
                let h = self.xs[i + 1] - self.xs[i];
                let (f0, f1, d0, d1) = (self.fs[i], self.fs[i + 1], self.ds[i] * h, self.ds[i + 1] * h);
                [f0, d0, 3.0 * (f1 - f0) - 2.0 * d0 - d1, 2.0 * (f0 - f1) + d0 + d1]
            })
            .collect()
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let (v, d) = hermite(0.5, 1.5, f(0.5), f(1.5), df(0.5), df(1.5), 0.9);
        assert!((v - f(0.9)).abs() < 1e-14);
        assert!((d - df(0.9)).abs() < 1e-13);
    }

    #[test]
    fn pchip_is_monotone_and_interpolates() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let fs: Vec<f64> = xs.iter().map(|x| (x - 3.0f64).tanh()).collect();
        let p = Pchip::new(xs.clone(), fs.clone());
        for (x, f) in xs.iter().zip(&fs) {
            assert!((p.eval(*x) - f).abs() < 1e-15);
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let v = p.eval(5.7 * k as f64 / 1000.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn panel_coefficients_match_eval() {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.4).powf(1.3)).collect();
        let fs: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let p = Pchip::new(xs.clone(), fs);
        let coef = p.panel_coefficients();
        for k in 0..=500 {
            let x = xs[11] * k as f64 / 500.0;
            let i = locate(&xs, x);
            let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
            let c = coef[i];
            let v = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
            assert!((v - p.eval(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn locate_edges() {
        let xs = [0.0, 1.0, 2.0];
        assert_eq!(locate(&xs, -1.0), 0);
        assert_eq!(locate(&xs, 1.0), 1);
        assert_eq!(locate(&xs, 2.0), 1);
        assert_eq!(locate(&xs, 5.0), 1);
    }
}
