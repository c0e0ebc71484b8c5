//! One-sided kernel-weighted local polynomial regression.
//!
//! Regressors are the scaled offsets `u = (r - c) / h` raised to powers
//! `0..=p`, so the coefficient vector is `beta_scaled[j] = h^j * beta[j]` where
//! `beta` are the coefficients in the original `(r - c)` coordinates. The
//! intercept is the same in both parametrisations and estimates the
//! conditional mean at the cutoff.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{Observation, Side, UnitId};
use crate::error::{RdError, Result};
use crate::kernel::{check_bandwidth, Kernel};

/// Largest accepted condition number of the scaled Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// One input point of a local fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInput {
    pub unit: UnitId,
    pub running: f64,
    pub response: f64,
}

/// A point that received positive kernel weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FitPoint {
    pub unit: UnitId,
    /// `(r - c) / h`
    pub offset: f64,
    /// `K_h(r - c)`
    pub weight: f64,
    pub response: f64,
    pub residual: f64,
}

/// Order, kernel and bandwidth of a local polynomial fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPolynomial {
    pub order: usize,
    pub kernel: Kernel,
    pub bandwidth: f64,
}

/// Result of a one-sided weighted local polynomial fit.
#[derive(Debug, Clone)]
pub struct SideFit {
    pub side: Side,
    pub period: i64,
    pub order: usize,
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub cutoff: f64,
    /// Coefficients on the scaled regressors.
    pub beta_scaled: DVector<f64>,
    /// `(1/n) X' A X` with `n` the number of supplied points.
    pub gamma: DMatrix<f64>,
    pub gamma_inv: DMatrix<f64>,
    /// Normaliser `n` used in `gamma`.
    pub n: usize,
    points: Vec<FitPoint>,
    index: HashMap<UnitId, usize>,
}

impl LocalPolynomial {
    pub fn new(order: usize, kernel: Kernel, bandwidth: f64) -> Self {
        LocalPolynomial {
            order,
            kernel,
            bandwidth,
        }
    }

    /// Fits a weighted polynomial to `data`, which should hold the points of one side.
    pub fn fit(&self, side: Side, period: i64, cutoff: f64, data: &[FitInput]) -> Result<SideFit> {
        let h = self.bandwidth;
        check_bandwidth(h)?;
        let dim = self.order + 1;

        let mut points: Vec<FitPoint> = data
            .iter()
            .filter_map(|d| {
                let offset = (d.running - cutoff) / h;
                let weight = self.kernel.value(offset) / h;
                (weight > 0.0).then(|| FitPoint {
                    unit: d.unit.clone(),
                    offset,
                    weight,
                    response: d.response,
                    residual: 0.0,
                })
            })
            .collect();
        if points.len() < dim {
            return Err(RdError::InsufficientSupport {
                available: points.len(),
                required: dim,
            });
        }

        let n = data.len();
        let inv_n = 1.0 / n as f64;
        let mut gamma = DMatrix::<f64>::zeros(dim, dim);
        let mut xty = DVector::<f64>::zeros(dim);
        let mut row = vec![0.0; dim];
        for pt in &points {
            powers(pt.offset, &mut row);
            for a in 0..dim {
                xty[a] += pt.weight * row[a] * pt.response * inv_n;
                for b in a..dim {
                    gamma[(a, b)] += pt.weight * row[a] * row[b] * inv_n;
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                gamma[(a, b)] = gamma[(b, a)];
            }
        }

        let eig = SymmetricEigen::new(gamma.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(RdError::SingularDesign { condition });
        }
        let chol = gamma.clone().cholesky().ok_or(RdError::SingularDesign { condition })?;
        let first = points[0].response;
        let beta_scaled = if points.iter().all(|p| p.response == first) {
            // constant response: the solve would only add rounding noise
            let mut b = DVector::<f64>::zeros(dim);
            b[0] = first;
            b
        } else {
            chol.solve(&xty)
        };
        let gamma_inv = chol.inverse();

        for pt in &mut points {
            pt.residual = pt.response - eval_poly(&beta_scaled, pt.offset);
        }
        let index = points.iter().enumerate().map(|(i, p)| (p.unit.clone(), i)).collect();

        Ok(SideFit {
            side,
            period,
            order: self.order,
            kernel: self.kernel,
            bandwidth: h,
            cutoff,
            beta_scaled,
            gamma,
            gamma_inv,
            n,
            points,
            index,
        })
    }
}

/// Fits the outcome of a one-sided observation subset.
///
/// Side and period labels are taken from the first observation.
pub fn fit_side(obs: &[&Observation], cutoff: f64, order: usize, kernel: Kernel, h: f64) -> Result<SideFit> {
    let (side, period) = obs
        .first()
        .map(|o| (o.side(cutoff), o.period))
        .ok_or(RdError::InsufficientSupport {
            available: 0,
            required: order + 1,
        })?;
    let data: Vec<FitInput> = obs
        .iter()
        .map(|o| FitInput {
            unit: o.unit.clone(),
            running: o.running,
            response: o.outcome,
        })
        .collect();
    LocalPolynomial::new(order, kernel, h).fit(side, period, cutoff, &data)
}

fn powers(u: f64, out: &mut [f64]) {
    let mut v = 1.0;
    for x in out.iter_mut() {
        *x = v;
        v *= u;
    }
}

fn eval_poly(coef: &DVector<f64>, u: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

impl SideFit {
    /// Fitted conditional mean at the cutoff.
    pub fn intercept(&self) -> f64 {
        self.beta_scaled[0]
    }

    /// Estimated second derivative of the conditional mean at the cutoff,
    /// `2 * beta_scaled[2] / h^2`.
    pub fn second_derivative(&self) -> Result<f64> {
        if self.order < 2 {
            return Err(RdError::OrderTooLow {
                order: self.order,
                required: 2,
            });
        }
        Ok(2.0 * self.beta_scaled[2] / (self.bandwidth * self.bandwidth))
    }

    /// Coefficients in unscaled `(r - c)` coordinates: `H_p(h) beta_scaled`.
    pub fn beta_unscaled(&self) -> DVector<f64> {
        let mut b = self.beta_scaled.clone();
        let mut s = 1.0;
        for x in b.iter_mut() {
            *x *= s;
            s /= self.bandwidth;
        }
        b
    }

    /// Fitted value at running value `r` (extrapolates outside the window).
    pub fn predict(&self, r: f64) -> f64 {
        eval_poly(&self.beta_scaled, (r - self.cutoff) / self.bandwidth)
    }

    /// Number of points with positive kernel weight.
    pub fn effective_n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[FitPoint] {
        &self.points
    }

    pub fn point(&self, unit: &UnitId) -> Option<&FitPoint> {
        self.index.get(unit).map(|&i| &self.points[i])
    }

    pub fn residual(&self, unit: &UnitId) -> Option<f64> {
        self.point(unit).map(|p| p.residual)
    }

    pub fn weight(&self, unit: &UnitId) -> Option<f64> {
        self.point(unit).map(|p| p.weight)
    }

    pub fn residuals(&self) -> BTreeMap<UnitId, f64> {
        self.points.iter().map(|p| (p.unit.clone(), p.residual)).collect()
    }

    pub fn weights(&self) -> BTreeMap<UnitId, f64> {
        self.points.iter().map(|p| (p.unit.clone(), p.weight)).collect()
    }

    /// Weights `l_i` with `beta_scaled[j] = sum_i l_i * response_i`, aligned with [`SideFit::points`].
    pub fn coefficient_weights(&self, j: usize) -> Vec<f64> {
        let dim = self.order + 1;
        let inv_n = 1.0 / self.n as f64;
        let g = self.gamma_inv.row(j);
        let mut row = vec![0.0; dim];
        self.points
            .iter()
            .map(|pt| {
                powers(pt.offset, &mut row);
                let dot: f64 = (0..dim).map(|a| g[a] * row[a]).sum();
                dot * pt.weight * inv_n
            })
            .collect()
    }

    /// `vartheta = (1/n) X' A S_k`, with `S_k` the scaled offsets raised to `k`.
    pub fn vartheta(&self, k: i32) -> DVector<f64> {
        let dim = self.order + 1;
        let inv_n = 1.0 / self.n as f64;
        let mut out = DVector::zeros(dim);
        let mut row = vec![0.0; dim];
        for pt in &self.points {
            powers(pt.offset, &mut row);
            let s = pt.offset.powi(k);
            for a in 0..dim {
                out[a] += row[a] * pt.weight * s * inv_n;
            }
        }
        out
    }

    /// `e_0' H_p Gamma^{-1} vartheta_{p,k}`: the leading bias constant of the
    /// intercept for a curvature term of order `k`.
    pub fn bias_constant(&self, k: i32) -> f64 {
        (self.gamma_inv.row(0) * self.vartheta(k))[0]
    }
}
