use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GenerativeModel;
use crate::numkit::{std_normal, GaussianDist, RngStream, LN_2PI};
use crate::{Error, Result};

/// `z ~ N(0, σ² I_p)`, `x | z ~ N(A z, τ² I_d)` with `A` of shape `d × p`.
#[derive(Clone, Debug)]
pub struct GaussianLinearModel {
    design: DMatrix<f64>,
    prior_std: f64,
    noise_std: f64,
    // M = I/σ² + AᵀA/τ²
    precision: DMatrix<f64>,
    precision_chol: Cholesky<f64, nalgebra::Dyn>,
}

/// How the design matrix is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSpec {
    /// IID standard-normal entries.
    Random,
    /// `U diag(s) Vᵀ` with random orthonormal `U`, `V` and singular values
    /// log-spaced between `s_min` and `s_max`.
    IllConditioned { s_min: f64, s_max: f64 },
    /// Rows are observation dimensions.
    Csv { path: String },
}

impl GaussianLinearModel {
    pub fn new(design: DMatrix<f64>, prior_std: f64, noise_std: f64) -> Result<Self> {
        if !(prior_std > 0.0 && noise_std > 0.0) {
            return Err(Error::InvalidArgument("standard deviations must be positive".into()));
        }
        let p = design.ncols();
        let precision = DMatrix::identity(p, p) / prior_std.powi(2) + design.transpose() * &design / noise_std.powi(2);
        let precision_chol =
            Cholesky::new(precision.clone()).ok_or(Error::NotPositiveDefinite("posterior precision"))?;
        Ok(Self { design, prior_std, noise_std, precision, precision_chol })
    }

    pub fn random(
        obs_dim: usize,
        latent_dim: usize,
        prior_std: f64,
        noise_std: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let a = DMatrix::from_fn(obs_dim, latent_dim, |_, _| std_normal(rng));
        Self::new(a, prior_std, noise_std)
    }

    pub fn ill_conditioned(
        obs_dim: usize,
        latent_dim: usize,
        s_min: f64,
        s_max: f64,
        prior_std: f64,
        noise_std: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if obs_dim < latent_dim {
            return Err(Error::InvalidArgument("ill-conditioned design needs d >= p".into()));
        }
        let g1 = DMatrix::from_fn(obs_dim, latent_dim, |_, _| std_normal(rng));
        let g2 = DMatrix::from_fn(latent_dim, latent_dim, |_, _| std_normal(rng));
        let u = g1.qr().q();
        let v = g2.qr().q();
        let s = DVector::from_fn(latent_dim, |i, _| {
            let t = if latent_dim > 1 { i as f64 / (latent_dim - 1) as f64 } else { 0.0 };
            (s_min.ln() + t * (s_max.ln() - s_min.ln())).exp()
        });
        let a = u * DMatrix::from_diagonal(&s) * v.transpose();
        Self::new(a, prior_std, noise_std)
    }

    pub fn from_csv(path: impl AsRef<Path>, prior_std: f64, noise_std: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("design csv: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let d = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if d == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::Config("design csv must be a non-empty rectangular table".into()));
        }
        let a = DMatrix::from_fn(d, p, |i, j| rows[i][j]);
        Self::new(a, prior_std, noise_std)
    }

    pub fn from_spec(
        spec: &DesignSpec,
        obs_dim: usize,
        latent_dim: usize,
        prior_std: f64,
        noise_std: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        match spec {
            DesignSpec::Random => Self::random(obs_dim, latent_dim, prior_std, noise_std, rng),
            DesignSpec::IllConditioned { s_min, s_max } => {
                Self::ill_conditioned(obs_dim, latent_dim, *s_min, *s_max, prior_std, noise_std, rng)
            }
            DesignSpec::Csv { path } => Self::from_csv(path, prior_std, noise_std),
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn prior_std(&self) -> f64 {
        self.prior_std
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Posterior precision `M`.
    pub fn posterior_precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `N(M⁻¹ b, M⁻¹)` with `b = Aᵀ x / τ²`.
    pub fn linear_posterior_params(&self, x: &DVector<f64>) -> Result<GaussianDist> {
        if x.len() != self.design.nrows() {
            return Err(Error::DimensionMismatch { expected: self.design.nrows(), got: x.len() });
        }
        let b = self.design.transpose() * x / self.noise_std.powi(2);
        let mean = self.precision_chol.solve(&b);
        GaussianDist::from_covariance(mean, self.precision_chol.inverse())
    }
}

impl GenerativeModel for GaussianLinearModel {
    fn name(&self) -> &'static str {
        "gaussian-linear"
    }

    fn latent_dim(&self) -> usize {
        self.design.ncols()
    }

    fn obs_dim(&self) -> usize {
        self.design.nrows()
    }

    fn sample_prior(&self, rng: &mut RngStream) -> DVector<f64> {
        let p = self.latent_dim();
        DVector::from_iterator(p, (0..p).map(|_| self.prior_std * std_normal(rng)))
    }

    fn prior_logpdf(&self, z: &DVector<f64>) -> f64 {
        let p = z.len() as f64;
        -0.5 * p * (LN_2PI + 2.0 * self.prior_std.ln()) - 0.5 * z.norm_squared() / self.prior_std.powi(2)
    }

    fn log_lik(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let d = x.len() as f64;
        let r = x - &self.design * z;
        -0.5 * d * (LN_2PI + 2.0 * self.noise_std.ln()) - 0.5 * r.norm_squared() / self.noise_std.powi(2)
    }

    fn simulate(&self, z: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        let d = self.obs_dim();
        let noise = DVector::from_iterator(d, (0..d).map(|_| self.noise_std * std_normal(rng)));
        &self.design * z + noise
    }

    fn analytic_posterior(&self, x: &DVector<f64>) -> Result<GaussianDist> {
        self.linear_posterior_params(x)
    }

    fn analytic_log_evidence(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.obs_dim();
        let cov = &self.design * self.design.transpose() * self.prior_std.powi(2)
            + DMatrix::identity(d, d) * self.noise_std.powi(2);
        GaussianDist::from_covariance(DVector::zeros(d), cov)?.log_pdf(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConjugateGaussian1D, GenerativeModel};

    #[test]
    fn identity_design_values() {
        let m = GaussianLinearModel::new(DMatrix::identity(3, 3), 1.0, 1.0).unwrap();
        let x = DVector::from_vec(vec![0.4, -1.2, 2.0]);
        assert!((m.log_lik(&x, &x) + 1.5 * LN_2PI).abs() < 1e-14);
        let post = m.linear_posterior_params(&x).unwrap();
        assert!((post.mean() - &x / 2.0).amax() < 1e-14);
        assert!((post.covariance() - DMatrix::identity(3, 3) * 0.5).amax() < 1e-14);
        let e = m.analytic_log_evidence(&DVector::zeros(3)).unwrap();
        assert!((e + 1.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_case_matches_conjugate_model() {
        // x = 10 u + noise with u ~ N(0, 10²): posterior of z = 10u is the conjugate one
        let lin = GaussianLinearModel::new(DMatrix::from_element(1, 1, 10.0), 10.0, 1.0).unwrap();
        let conj = ConjugateGaussian1D { prior_std: 100.0, noise_std: 1.0 };
        let x = DVector::from_element(1, 3.7);
        let pl = lin.linear_posterior_params(&x).unwrap();
        let pc = conj.analytic_posterior(&x).unwrap();
        assert!((10.0 * pl.mean()[0] - pc.mean()[0]).abs() < 1e-12);
        assert!((100.0 * pl.covariance()[(0, 0)] - pc.covariance()[(0, 0)]).abs() < 1e-12);
        let el = lin.analytic_log_evidence(&x).unwrap();
        let ec = conj.analytic_log_evidence(&x).unwrap();
        assert!((el - ec).abs() < 1e-12);
    }

    #[test]
    fn normal_equations_hold() {
        let mut rng = RngStream::new(3, 0);
        let m = GaussianLinearModel::random(7, 4, 1.3, 0.6, &mut rng).unwrap();
        let a = m.design();
        let expect = DMatrix::identity(4, 4) / 1.3f64.powi(2) + a.transpose() * a / 0.36;
        assert!((m.posterior_precision() - &expect).amax() < 1e-12);
        let z = m.sample_prior(&mut rng);
        let x = m.simulate(&z, &mut rng);
        let post = m.linear_posterior_params(&x).unwrap();
        let b = a.transpose() * &x / 0.36;
        assert!((m.posterior_precision() * post.mean() - b).amax() < 1e-10);
    }

    #[test]
    fn posterior_matches_grid_quadrature() {
        let mut rng = RngStream::new(17, 0);
        let m = GaussianLinearModel::random(5, 3, 1.0, 1.0, &mut rng).unwrap();
        let z = m.sample_prior(&mut rng);
        let x = m.simulate(&z, &mut rng);
        let (lo, step, n) = (-5.0, 0.05, 200usize);
        let mut mass = 0.0;
        let mut first = DVector::<f64>::zeros(3);
        let mut second = DMatrix::<f64>::zeros(3, 3);
        let mut pts = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let zz = DVector::from_vec(vec![
                        lo + (i as f64 + 0.5) * step,
                        lo + (j as f64 + 0.5) * step,
                        lo + (k as f64 + 0.5) * step,
                    ]);
                    pts.push((m.log_joint(&x, &zz), zz));
                }
            }
        }
        let top = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        for (lj, zz) in &pts {
            let w = (lj - top).exp();
            mass += w;
            first += zz * w;
            second += zz * zz.transpose() * w;
        }
        let mean = first / mass;
        let cov = second / mass - &mean * mean.transpose();
        let post = m.linear_posterior_params(&x).unwrap();
        assert!((&mean - post.mean()).amax() < 1e-3, "{mean} vs {}", post.mean());
        assert!((cov - post.covariance()).amax() < 1e-3);
    }

    #[test]
    fn likelihood_integrates_to_one_in_2d() {
        let mut rng = RngStream::new(5, 0);
        let m = GaussianLinearModel::random(2, 2, 1.0, 0.5, &mut rng).unwrap();
        for _ in 0..5 {
            let z = m.sample_prior(&mut rng);
            let c = m.design() * &z;
            let (h, half) = (0.01, 400i32);
            let mut total = 0.0;
            for i in -half..half {
                for j in -half..half {
                    let x = DVector::from_vec(vec![c[0] + (i as f64 + 0.5) * h, c[1] + (j as f64 + 0.5) * h]);
                    total += m.log_lik(&x, &z).exp() * h * h;
                }
            }
            assert!((total - 1.0).abs() < 1e-3, "{total}");
        }
    }

    #[test]
    fn ill_conditioned_singular_values() {
        let mut rng = RngStream::new(8, 0);
        let m = GaussianLinearModel::ill_conditioned(6, 4, 0.1, 100.0, 1.0, 1.0, &mut rng).unwrap();
        let mut s: Vec<f64> = m.design().clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(f64::total_cmp);
        assert!((s[0] - 0.1).abs() < 1e-9 && (s[3] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn csv_design_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "1.0,2.0\n3.0,4.0\n5.0,6.0\n").unwrap();
        let m = GaussianLinearModel::from_csv(&path, 1.0, 1.0).unwrap();
        assert_eq!(m.obs_dim(), 3);
        assert_eq!(m.latent_dim(), 2);
        assert_eq!(m.design()[(2, 1)], 6.0);
        std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        assert!(GaussianLinearModel::from_csv(&path, 1.0, 1.0).is_err());
    }
}
