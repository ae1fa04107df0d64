//! Not-a-knot cubic splines sharing one factorized system per grid.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Grid and factorized not-a-knot system; reused for every tabulated entry.
#[derive(Debug, Clone)]
pub struct SplineGrid {
    x: Vec<f64>,
    lu: Option<LU<f64, Dyn, Dyn>>,
    /// Spacing when the grid is uniform, for direct interval lookup.
    step: Option<f64>,
}

impl SplineGrid {
    /// `x` must be strictly increasing. A single point gives a constant table.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("spline grid is empty"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spline grid must be strictly increasing"));
        }
        let n = x.len();
        let lu = if n >= 4 {
            let mut a = DMatrix::<f64>::zeros(n, n);
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            // not-a-knot: third derivative continuous across x[1] and x[n-2]
            a[(0, 0)] = h[1];
            a[(0, 1)] = -(h[0] + h[1]);
            a[(0, 2)] = h[0];
            for i in 1..n - 1 {
                a[(i, i - 1)] = h[i - 1];
                a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
                a[(i, i + 1)] = h[i];
            }
            a[(n - 1, n - 3)] = h[n - 2];
            a[(n - 1, n - 2)] = -(h[n - 3] + h[n - 2]);
            a[(n - 1, n - 1)] = h[n - 3];
            Some(a.lu())
        } else {
            None
        };
        let step = (n >= 2)
            .then(|| (x[n - 1] - x[0]) / (n - 1) as f64)
            .filter(|&d| {
                x.iter()
                    .enumerate()
                    .all(|(i, &v)| (v - (x[0] + d * i as f64)).abs() <= 1e-12 * d)
            });
        Ok(Self { x, lu, step })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn min(&self) -> f64 {
        self.x[0]
    }

    pub fn max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Second derivatives (`M_i`) of the spline through `y`.
    pub fn fit(&self, y: &[f64]) -> Result<CubicSpline> {
        if y.len() != self.x.len() {
            return Err(Error::invalid("spline data length does not match grid"));
        }
        let n = y.len();
        let m = match &self.lu {
            Some(lu) => {
                let mut rhs = DVector::<f64>::zeros(n);
                for i in 1..n - 1 {
                    let h0 = self.x[i] - self.x[i - 1];
                    let h1 = self.x[i + 1] - self.x[i];
                    rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                }
                lu.solve(&rhs)
                    .ok_or_else(|| Error::invalid("singular spline system"))?
                    .iter()
                    .copied()
                    .collect()
            }
            None => vec![0.0; n],
        };
        Ok(CubicSpline { y: y.to_vec(), m })
    }

    /// Interval index and local coordinate for `s`; `None` outside the grid
    /// unless the grid is a single knot.
    pub fn locate(&self, s: f64) -> Option<(usize, f64)> {
        let n = self.x.len();
        // a single knot is a constant table, valid everywhere
        if n == 1 {
            return s.is_finite().then_some((0, self.x[0]));
        }
        let span = (self.max() - self.min()).abs().max(1.0);
        let slack = 1e-12 * span;
        if s < self.min() - slack || s > self.max() + slack {
            return None;
        }
        let idx = match self.step {
            Some(d) => (((s - self.x[0]) / d).floor().max(0.0) as usize).min(n - 2),
            None => match self.x.binary_search_by(|v| v.total_cmp(&s)) {
                Ok(i) => i.min(n - 2),
                Err(i) => i.saturating_sub(1).min(n - 2),
            },
        };
        Some((idx, s))
    }
}

/// Values and second derivatives at the knots of a [`SplineGrid`].
#[derive(Debug, Clone)]
pub struct CubicSpline {
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    /// Per-interval power-series coefficients `[c0, c1, c2, c3]` in
    /// `t = s − x_i`, so that `y = c0 + t (c1 + t (c2 + t c3))`.
    pub fn interval_coefficients(&self, grid: &SplineGrid) -> Vec<[f64; 4]> {
        let x = grid.x();
        let n = self.y.len();
        if n == 1 {
            return vec![[self.y[0], 0.0, 0.0, 0.0]];
        }
        (0..n - 1)
            .map(|i| {
                let h = x[i + 1] - x[i];
                let slope = (self.y[i + 1] - self.y[i]) / h;
                if n < 4 {
                    return [self.y[i], slope, 0.0, 0.0];
                }
                let (m0, m1) = (self.m[i], self.m[i + 1]);
                [
                    self.y[i],
                    slope - h * (2.0 * m0 + m1) / 6.0,
                    m0 / 2.0,
                    (m1 - m0) / (6.0 * h),
                ]
            })
            .collect()
    }

    pub fn eval(&self, grid: &SplineGrid, loc: (usize, f64)) -> f64 {
        let (i, s) = loc;
        if self.y.len() == 1 {
            return self.y[0];
        }
        if self.y.len() < 4 {
            // linear for very short grids
            let x = grid.x();
            let t = (s - x[i]) / (x[i + 1] - x[i]);
            return self.y[i] * (1.0 - t) + self.y[i + 1] * t;
        }
        let x = grid.x();
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - s) / h;
        let b = (s - x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_exactly() {
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.5 - 1.0).collect();
        let f = |s: f64| 0.3 * s * s * s - s * s + 2.0 * s - 0.7;
        let grid = SplineGrid::new(x.clone()).unwrap();
        let sp = grid
            .fit(&x.iter().map(|&s| f(s)).collect::<Vec<_>>())
            .unwrap();
        for s in [-1.0, -0.77, 0.1, 1.33, 3.0] {
            let v = sp.eval(&grid, grid.locate(s).unwrap());
            assert!((v - f(s)).abs() < 1e-12, "{s}: {v} vs {}", f(s));
        }
        assert!(grid.locate(3.1).is_none());
    }

    #[test]
    fn matches_reference_not_a_knot_spline() {
        // residuals spline(s) - 2 sqrt(s) from an independent not-a-knot implementation
        let reference = [
            (28.1013, -2.2394454290974863e-08),
            (29.37, 2.7833024773826764e-10),
            (31.9, 7.096865317635093e-10),
            (35.77, -1.1901459373575562e-08),
        ];
        let x: Vec<f64> = (0..17).map(|i| 28.0 + i as f64 * 0.5).collect();
        let grid = SplineGrid::new(x.clone()).unwrap();
        let sp = grid
            .fit(&x.iter().map(|s| 2.0 * s.sqrt()).collect::<Vec<_>>())
            .unwrap();
        for (s, residual) in reference {
            let v = sp.eval(&grid, grid.locate(s).unwrap());
            assert!((v - 2.0 * s.sqrt() - residual).abs() < 1e-13, "{s}");
        }
    }

    #[test]
    fn power_series_form_matches() {
        let x: Vec<f64> = (0..9).map(|i| (i as f64).powf(1.3)).collect();
        let grid = SplineGrid::new(x.clone()).unwrap();
        let sp = grid
            .fit(&x.iter().map(|v| v.sin()).collect::<Vec<_>>())
            .unwrap();
        let coeffs = sp.interval_coefficients(&grid);
        for k in 0..100 {
            let s = x[8] * k as f64 / 99.0;
            let (i, _) = grid.locate(s).unwrap();
            let t = s - x[i];
            let c = coeffs[i];
            let v = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
            assert!((v - sp.eval(&grid, (i, s))).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_lookup_agrees_with_search() {
        let grid = SplineGrid::new((0..17).map(|i| -1.0 + i as f64 / 8.0).collect()).unwrap();
        assert!(grid.step.is_some());
        for k in 0..=200 {
            let s = -1.0 + k as f64 / 100.0;
            let (i, _) = grid.locate(s).unwrap();
            assert!(
                grid.x()[i] <= s + 1e-15 && s <= grid.x()[i + 1] + 1e-12,
                "{s} -> {i}"
            );
        }
    }

    #[test]
    fn single_point_is_constant() {
        let grid = SplineGrid::new(vec![2.0]).unwrap();
        let sp = grid.fit(&[5.0]).unwrap();
        assert_eq!(sp.eval(&grid, grid.locate(2.0).unwrap()), 5.0);
        assert!(SplineGrid::new(vec![1.0, 1.0]).is_err());
    }
}
