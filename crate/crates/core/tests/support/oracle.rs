//! Dense-matrix assemblies built from scratch, used as oracles.
//!
//! Nothing here calls into the library's linear algebra: each oracle writes
//! out the design matrix, kernel weights and residual covariance explicitly
//! and solves with an SVD or plain inverse.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rddid::covariance::{cross_period_intercept_covariance, intercept_variance, ResidualCovariance};
use rddid::discontinuity::bias_estimate;
use rddid::fit::fit_side;
use rddid::{FitSpec, Kernel, Observation, PanelDataset, PeriodTaxonomy, Sampling, UnitId};

fn kernel_weight(k: Kernel, u: f64) -> f64 {
    let a = u.abs();
    match k {
        Kernel::Uniform if a <= 1.0 => 0.5,
        Kernel::Triangular if a <= 1.0 => 1.0 - a,
        Kernel::Epanechnikov if a <= 1.0 => 0.75 * (1.0 - a * a),
        _ => 0.0,
    }
}

pub type Check = Result<(), String>;

fn close(got: f64, want: f64, what: &str) -> Check {
    let tol = 1e-9_f64.max(1e-7 * want.abs());
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, oracle {want}"))
    }
}

/// Weighted least squares in unscaled `(r - c)` coordinates, by SVD of `sqrt(W) X`.
struct Wls {
    /// Rows with positive weight: (unit, r - c, weight, y).
    rows: Vec<(String, f64, f64, f64)>,
    beta: DVector<f64>,
    order: usize,
}

impl Wls {
    fn fit(data: &[(String, f64, f64)], cutoff: f64, order: usize, k: Kernel, h: f64) -> Wls {
        let rows: Vec<(String, f64, f64, f64)> = data
            .iter()
            .map(|(u, r, y)| (u.clone(), r - cutoff, kernel_weight(k, (r - cutoff) / h) / h, *y))
            .filter(|row| row.2 > 0.0)
            .collect();
        let n = rows.len();
        let x = DMatrix::from_fn(n, order + 1, |i, j| rows[i].2.sqrt() * rows[i].1.powi(j as i32));
        let y = DVector::from_fn(n, |i, _| rows[i].2.sqrt() * rows[i].3);
        let beta = x.svd(true, true).solve(&y, 1e-14).expect("full rank");
        Wls { rows, beta, order }
    }

    fn design(&self, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.order + 1, |i, j| {
            (self.rows[i].1 / scale).powi(j as i32)
        })
    }

    fn kernel_diag(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.2)))
    }

    fn residuals(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(_, d, _, y)| y - (0..=self.order).map(|j| self.beta[j] * d.powi(j as i32)).sum::<f64>())
            .collect()
    }

    /// Row vector `e_0' (X'AX)^-1 X'A` of the intercept.
    fn intercept_row(&self) -> DMatrix<f64> {
        let x = self.design(1.0);
        let a = self.kernel_diag();
        let g = (x.transpose() * &a * &x).try_inverse().expect("invertible");
        (g * x.transpose() * a).rows(0, 1).into_owned()
    }
}

fn random_kernel(rng: &mut ChaCha8Rng) -> Kernel {
    [Kernel::Uniform, Kernel::Triangular, Kernel::Epanechnikov][rng.random_range(0..3)]
}

/// Points on `[c, c + 1.3h)` with a random cubic response plus noise.
fn one_side(rng: &mut ChaCha8Rng, prefix: &str, n: usize, c: f64, h: f64) -> Vec<(String, f64, f64)> {
    let coef: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
    (0..n)
        .map(|i| {
            let r = c + rng.random_range(0.0..1.3 * h);
            let d = r - c;
            let y = coef[0] + coef[1] * d + coef[2] * d * d + coef[3] * d * d * d + rng.random_range(-0.5..0.5);
            (format!("{prefix}{i}"), r, y)
        })
        .collect()
}

fn observations(data: &[(String, f64, f64)], period: i64) -> Vec<Observation> {
    data.iter()
        .map(|(u, r, y)| Observation::new(u.as_str(), period, *r, false, *y))
        .collect()
}

fn residual_store(fits: &[&rddid::fit::SideFit], paired: bool) -> ResidualCovariance {
    let mut res: BTreeMap<i64, BTreeMap<UnitId, f64>> = BTreeMap::new();
    for f in fits {
        res.entry(f.period).or_default().extend(f.residuals());
    }
    ResidualCovariance::from_residuals(res, paired)
}

/// `fit_side` against unscaled weighted least squares.
pub fn fit_side_vs_wls(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let c = rng.random_range(-5.0..5.0);
        let h = rng.random_range(0.3..3.0);
        let order = rng.random_range(1..=3);
        let k = random_kernel(&mut rng);
        let data = {
            let n = rng.random_range(12..40);
            one_side(&mut rng, "u", n, c, h)
        };
        let obs = observations(&data, 1);
        let refs: Vec<&Observation> = obs.iter().collect();
        let fit = fit_side(&refs, c, order, k, h).unwrap();
        let oracle = Wls::fit(&data, c, order, k, h);

        let beta = fit.beta_unscaled();
        for j in 0..=order {
            close(beta[j], oracle.beta[j], &format!("case {case} beta[{j}]"))?;
        }
        if fit.effective_n() != oracle.rows.len() {
            return Err(format!(
                "case {case}: effective n {} vs {}",
                fit.effective_n(),
                oracle.rows.len()
            ));
        }
        for ((u, ..), e) in oracle.rows.iter().zip(oracle.residuals()) {
            close(
                fit.residual(&UnitId::from(u.as_str())).unwrap(),
                e,
                &format!("case {case} residual {u}"),
            )?;
        }
    }
    Ok(())
}

/// Intercept variance against the explicit sandwich.
pub fn intercept_variance_vs_sandwich(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let c = rng.random_range(-5.0..5.0);
        let h = rng.random_range(0.3..3.0);
        let order = rng.random_range(1..=2);
        let k = random_kernel(&mut rng);
        let data = {
            let n = rng.random_range(12..40);
            one_side(&mut rng, "u", n, c, h)
        };
        let obs = observations(&data, 1);
        let refs: Vec<&Observation> = obs.iter().collect();
        let fit = fit_side(&refs, c, order, k, h).unwrap();
        let store = residual_store(&[&fit], false);

        // e0' H G^-1 Psi G^-1 H e0 with scaled regressors, A = diag(K/h), Sigma = diag(eps^2)
        let oracle = Wls::fit(&data, c, order, k, h);
        let n = oracle.rows.len() as f64;
        let x = oracle.design(h);
        let a = oracle.kernel_diag();
        let sigma = DMatrix::from_diagonal(&DVector::from_iterator(
            oracle.rows.len(),
            oracle.residuals().into_iter().map(|e| e * e),
        ));
        let gamma = (x.transpose() * &a * &x) / n;
        let psi = (x.transpose() * &a * sigma * &a * &x) / n;
        let gi = gamma.try_inverse().unwrap();
        let v = (&gi * psi * &gi)[(0, 0)] / n;

        close(intercept_variance(&fit, &store).unwrap(), v, &format!("case {case}"))?;
    }
    Ok(())
}

/// Cross-period covariance against a dense matched-residual block.
pub fn cross_covariance_vs_blocks(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let c = rng.random_range(-5.0..5.0);
        let h = rng.random_range(0.3..3.0);
        let k = random_kernel(&mut rng);
        let n = rng.random_range(15..40);
        let s_data = one_side(&mut rng, "u", n, c, h);
        // period t: the same units with new running values and outcomes, plus a few fresh ones
        let mut t_data = one_side(&mut rng, "u", n, c, h);
        t_data.truncate(rng.random_range(n / 2..=n));
        t_data.extend(one_side(&mut rng, "fresh", 5, c, h));

        let s_obs = observations(&s_data, 1);
        let t_obs = observations(&t_data, 2);
        let fs = fit_side(&s_obs.iter().collect::<Vec<_>>(), c, 1, k, h).unwrap();
        let ft = fit_side(&t_obs.iter().collect::<Vec<_>>(), c, 1, k, h).unwrap();
        let store = residual_store(&[&fs, &ft], true);

        let os = Wls::fit(&s_data, c, 1, k, h);
        let ot = Wls::fit(&t_data, c, 1, k, h);
        let (es, et) = (os.residuals(), ot.residuals());
        let cross = DMatrix::from_fn(os.rows.len(), ot.rows.len(), |i, j| {
            if os.rows[i].0 == ot.rows[j].0 {
                es[i] * et[j]
            } else {
                0.0
            }
        });
        let cov = (os.intercept_row() * cross * ot.intercept_row().transpose())[(0, 0)];

        close(
            cross_period_intercept_covariance(&fs, &ft, &store).unwrap(),
            cov,
            &format!("case {case}"),
        )?;
    }
    Ok(())
}

/// Bias estimate against the pilot curvature and explicit moment matrices.
pub fn bias_estimate_vs_matrices(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let c = rng.random_range(-5.0..5.0);
        let h = rng.random_range(0.3..2.0);
        let b = h * rng.random_range(1.0..2.5);
        let k = random_kernel(&mut rng);
        let (na, nb) = (rng.random_range(20..50), rng.random_range(20..50));
        let above = one_side(&mut rng, "a", na, c, b);
        let below: Vec<(String, f64, f64)> = one_side(&mut rng, "b", nb, c, b)
            .into_iter()
            // mirror to the left; keep strictly below the cutoff
            .map(|(u, r, y)| (u, c - (r - c) - 1e-9, y))
            .collect();

        let mut obs = observations(&above, 1);
        obs.extend(observations(&below, 1));
        let ds = PanelDataset::new(
            obs,
            c,
            PeriodTaxonomy::new([], [], [1], 1).unwrap(),
            Sampling::CrossSection,
        )
        .unwrap();
        let mut spec = FitSpec::new(h);
        spec.b = b;
        spec.kernel = k;

        let mut want = 0.0;
        for (data, sign) in [(&above, 1.0), (&below, -1.0)] {
            let pilot = Wls::fit(data, c, 2, k, b);
            let curvature = 2.0 * pilot.beta[2];
            let main = Wls::fit(data, c, 1, k, h);
            let n = main.rows.len() as f64;
            let x = main.design(h);
            let a = main.kernel_diag();
            let s2 = DVector::from_iterator(main.rows.len(), main.rows.iter().map(|r| (r.1 / h).powi(2)));
            let gamma = (x.transpose() * &a * &x) / n;
            let vartheta = (x.transpose() * &a * s2) / n;
            let constant = (gamma.try_inverse().unwrap() * vartheta)[0];
            want += sign * 0.5 * h * h * curvature * constant;
        }

        close(bias_estimate(&ds, 1, &spec).unwrap(), want, &format!("case {case}"))?;
    }
    Ok(())
}
