//! Nyström approximation of the GP posterior with variance-sampled inducing
//! points.
//!
//! Given inducing points `z` (a subset of the observed `X`):
//!
//! ```text
//! w           = (lambda K_zz + K_zX K_Xz)^{-1} K_zX y
//! mu~(x)      = k_z(x)^T w
//! sigma~^2(x) = (1/lambda) (k(x,x) - k_z^T K_zz^{-1} k_z
//!                           + k_z^T (K_zz + K_zX K_Xz / lambda)^{-1} k_z)
//! ```
//!
//! The pair `(z, w)` is all a peer needs to evaluate `mu~`; see
//! [`BroadcastModel`]. Inducing points are drawn by independent Bernoulli
//! trials with probability `min(1, q0 sigma_N^2(x_j))`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::gp::{clamp_variance, GpPosterior, JITTER};
use crate::kernels::KernelSpec;

/// Accuracy and oversampling parameters of the inducing-set construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityParams {
    pub epsilon: f64,
    pub q0: f64,
}

impl SparsityParams {
    pub fn new(epsilon: f64, q0: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(q0 >= 0.0 && q0.is_finite()) {
            return Err(invalid("q0", format!("must be non-negative and finite, got {q0}")));
        }
        Ok(Self { epsilon, q0 })
    }

    /// `(1 + eps) / (1 - eps)`.
    pub fn chi(&self) -> f64 {
        (1.0 + self.epsilon) / (1.0 - self.epsilon)
    }

    /// Smallest `q0` for which the inducing-set size bound holds with
    /// probability `1 - delta`: `6 chi ln(4 T K / delta) / eps^2`.
    pub fn q0_lower_bound(&self, horizon: u64, clients: usize, delta: f64) -> f64 {
        6.0 * self.chi() * (4.0 * horizon as f64 * clients as f64 / delta).ln() / (self.epsilon * self.epsilon)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

fn q0_from_ratio(epsilon: f64, ratio: f64) -> f64 {
    6.0 * (1.0 + epsilon) * ratio.ln() / (epsilon * epsilon * (1.0 - epsilon))
}

/// `q0 = 6 (1 + eps) ln(8 T K / delta0) / (eps^2 (1 - eps))`.
pub fn default_q0(epsilon: f64, horizon: u64, clients: usize, delta0: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(invalid("delta0", format!("must lie in (0, 1), got {delta0}")));
    }
    if horizon == 0 || clients == 0 {
        return Err(invalid("T/K", "horizon and client count must be at least 1"));
    }
    Ok(q0_from_ratio(epsilon, 8.0 * horizon as f64 * clients as f64 / delta0))
}

/// Sparse confidence width `B sqrt(2 lambda / (1 - eps)) + R sqrt(2 ln(T / delta))`.
pub fn sparse_beta(b: f64, r: f64, lambda: f64, epsilon: f64, horizon: u64, delta: f64) -> f64 {
    b * (2.0 * lambda / (1.0 - epsilon)).sqrt() + r * (2.0 * (horizon as f64 / delta).ln()).sqrt()
}

/// Length of the communication phase, `ceil(9 (1 + 1/lambda) q0 gamma)`.
pub fn comm_phase_length(q0: f64, lambda: f64, gamma_hat: f64) -> u64 {
    if gamma_hat <= 0.0 {
        log::warn!("information gain estimate is {gamma_hat}; communication phase has length 0");
        return 0;
    }
    (9.0 * (1.0 + 1.0 / lambda) * q0 * gamma_hat).ceil() as u64
}

/// Cholesky with one jitter retry.
fn spd_factor(m: DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let n = m.nrows();
            Cholesky::new(m + DMatrix::identity(n, n) * JITTER).ok_or(Error::NotPositiveDefinite { context })
        }
    }
}

/// Evaluates `sum_s k(z_s, x) w_s` in a fixed order.
fn weighted_kernel_sum(kernel: &KernelSpec, z: &[Vec<f64>], w: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, &ws) in z.iter().zip(w) {
        acc += kernel.eval_unchecked(p, x) * ws;
    }
    acc
}

#[derive(Debug, Clone)]
struct Fitted {
    w: Vec<f64>,
    zz: Option<Cholesky<f64, Dyn>>,
    /// Factor of `lambda K_zz + K_zX K_Xz`.
    system: Option<Cholesky<f64, Dyn>>,
}

/// Inducing points drawn from one client's exploration data, plus the local
/// data needed for weights and variances (which never leaves the client).
#[derive(Debug, Clone)]
pub struct InducingModel {
    kernel: KernelSpec,
    lambda: f64,
    full_x: Vec<Vec<f64>>,
    full_y: Vec<f64>,
    /// Positions in `full_x` of the inducing points, in inclusion order.
    indices: Vec<usize>,
    z: Vec<Vec<f64>>,
    fitted: Option<Fitted>,
}

impl InducingModel {
    /// Uses the observations at `indices` as inducing points.
    pub fn with_indices(gp: &GpPosterior, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= gp.len()) {
            return Err(invalid("indices", format!("{bad} out of range for {} observations", gp.len())));
        }
        let z = indices.iter().map(|&i| gp.points()[i].clone()).collect();
        Ok(Self {
            kernel: *gp.kernel(),
            lambda: gp.lambda(),
            full_x: gp.points().to_vec(),
            full_y: gp.rewards().to_vec(),
            indices,
            z,
            fitted: None,
        })
    }

    /// Every observation becomes an inducing point.
    pub fn full(gp: &GpPosterior) -> Result<Self> {
        Self::with_indices(gp, (0..gp.len()).collect())
    }

    pub fn inducing_points(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.fitted.as_ref().map(|f| f.w.as_slice())
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Solves for the weight vector. An empty inducing set gets empty weights.
    pub fn fit_weights(mut self) -> Result<Self> {
        if self.z.is_empty() {
            self.fitted = Some(Fitted {
                w: Vec::new(),
                zz: None,
                system: None,
            });
            return Ok(self);
        }
        let kzz = self.kernel.gram(&self.z)?;
        let kzx = self.kernel.cross_matrix(&self.z, &self.full_x)?;
        let system = &kzz * self.lambda + &kzx * kzx.transpose();
        let rhs = &kzx * DVector::from_column_slice(&self.full_y);
        let system = spd_factor(system, "Nyström weight system")?;
        let w = system.solve(&rhs);
        let zz = spd_factor(kzz, "inducing Gram matrix")?;
        self.fitted = Some(Fitted {
            w: w.as_slice().to_vec(),
            zz: Some(zz),
            system: Some(system),
        });
        Ok(self)
    }

    fn fitted(&self) -> Result<&Fitted> {
        self.fitted
            .as_ref()
            .ok_or_else(|| invalid("weights", "call fit_weights before evaluating the model"))
    }

    /// `k_z(x)^T w`; zero for an empty inducing set.
    pub fn approx_mean(&self, x: &[f64]) -> Result<f64> {
        let f = self.fitted()?;
        if let Some(p) = self.z.first() {
            crate::kernels::check_dim(p.len(), x.len())?;
        }
        Ok(weighted_kernel_sum(&self.kernel, &self.z, &f.w, x))
    }

    /// Nyström variance; equals `k(x,x) / lambda` for an empty inducing set.
    pub fn approx_variance(&self, x: &[f64]) -> Result<f64> {
        let f = self.fitted()?;
        let prior = self.kernel.eval(x, x)?;
        let (Some(zz), Some(system)) = (&f.zz, &f.system) else {
            return Ok(prior / self.lambda);
        };
        let kz = self.kernel.cross(&self.z, x)?;
        let a = zz.l().solve_lower_triangular(&kz).expect("factor is invertible");
        let b = system.l().solve_lower_triangular(&kz).expect("factor is invertible");
        // The Nyström residual is non-negative in exact arithmetic.
        let residual = (prior - a.norm_squared()).max(0.0);
        clamp_variance((residual + self.lambda * b.norm_squared()) / self.lambda)
    }

    /// The broadcastable `(z_s, w_s)` pairs, in inclusion order.
    pub fn broadcast_pairs(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        let f = self.fitted()?;
        Ok(self.z.iter().cloned().zip(f.w.iter().copied()).collect())
    }
}

/// Draws inducing points from `gp`'s observations, including `x_j` with
/// probability `min(1, q0 sigma^2(x_j))` where `sigma^2` is the posterior
/// variance given all observations.
pub fn sample_inducing<R: Rng + ?Sized>(gp: &GpPosterior, q0: f64, rng: &mut R) -> Result<InducingModel> {
    if !(q0 >= 0.0) {
        return Err(invalid("q0", format!("must be non-negative, got {q0}")));
    }
    let probs = inclusion_probabilities(gp, q0)?;
    let mut indices = Vec::new();
    for (j, p) in probs.into_iter().enumerate() {
        let u: f64 = rng.random();
        if u < p {
            indices.push(j);
        }
    }
    InducingModel::with_indices(gp, indices)
}

/// `min(1, q0 sigma^2(x_j))` for every observation `x_j`.
pub fn inclusion_probabilities(gp: &GpPosterior, q0: f64) -> Result<Vec<f64>> {
    gp.points()
        .iter()
        .map(|x| {
            let v = gp.variance(x)?;
            Ok(if q0.is_infinite() { 1.0 } else { (q0 * v).min(1.0) })
        })
        .collect()
}

/// A peer's view of a client's approximate mean, rebuilt from broadcast pairs.
#[derive(Debug, Clone)]
pub struct BroadcastModel {
    kernel: KernelSpec,
    z: Vec<Vec<f64>>,
    w: Vec<f64>,
}

impl BroadcastModel {
    pub fn new(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            z: Vec::new(),
            w: Vec::new(),
        }
    }

    pub fn push(&mut self, z: Vec<f64>, w: f64) {
        self.z.push(z);
        self.w.push(w);
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        weighted_kernel_sum(&self.kernel, &self.z, &self.w, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn se(l: f64) -> KernelSpec {
        KernelSpec::squared_exponential(l).unwrap()
    }

    fn random_gp(rng: &mut ChaCha8Rng, n: usize, lambda: f64) -> GpPosterior {
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        GpPosterior::from_observations(se(0.3), lambda, &x, &y).unwrap()
    }

    /// The full formulas with explicit inverses, no cached factors.
    fn formula_oracle(gp: &GpPosterior, idx: &[usize], x: &[f64]) -> (f64, f64) {
        let k = gp.kernel();
        let lambda = gp.lambda();
        let z: Vec<Vec<f64>> = idx.iter().map(|&i| gp.points()[i].clone()).collect();
        let kzz = k.gram(&z).unwrap();
        let kzx = k.cross_matrix(&z, gp.points()).unwrap();
        let kz = k.cross(&z, x).unwrap();
        let y = DVector::from_column_slice(gp.rewards());
        let sys = &kzz * lambda + &kzx * kzx.transpose();
        let sys_inv = sys.clone().try_inverse().unwrap();
        let mean = kz.dot(&(&sys_inv * (&kzx * &y)));
        let kzz_inv = kzz.clone().try_inverse().unwrap();
        let inner = (&kzz + &kzx * kzx.transpose() / lambda).try_inverse().unwrap();
        let var = (k.eval(x, x).unwrap() - kz.dot(&(&kzz_inv * &kz)) + kz.dot(&(&inner * &kz))) / lambda;
        (mean, var)
    }

    #[test]
    fn q0_examples() {
        assert!((q0_from_ratio(0.5, std::f64::consts::E.powi(2)) - 144.0).abs() < 1e-9);
        let q = default_q0(0.5, 2000, 50, 0.001).unwrap();
        assert!((q - 72.0 * 8e8f64.ln()).abs() < 1e-9);
        let q = default_q0(0.5, 1, 1, 1.0 - 1e-15).unwrap();
        assert!((q - 72.0 * 8f64.ln()).abs() < 1e-9);
        assert!(default_q0(1.0, 1, 1, 0.5).is_err());
        assert!(default_q0(0.5, 1, 1, 0.0).is_err());
        assert!(default_q0(0.5, 0, 1, 0.5).is_err());
    }

    #[test]
    fn default_q0_meets_size_bound_regime() {
        for eps in [0.1, 0.5, 0.9] {
            let q0 = default_q0(eps, 500, 10, 1e-3).unwrap();
            let p = SparsityParams::new(eps, q0).unwrap();
            assert!(p.chi() > 1.0);
            assert!(q0 >= p.q0_lower_bound(500, 10, 1e-3));
        }
    }

    #[test]
    fn sparse_beta_examples() {
        let eps = 0.3;
        assert!((sparse_beta(2.5, 0.0, (1.0 - eps) / 2.0, eps, 10, 0.1) - 2.5).abs() < 1e-12);
        let t = 100;
        let delta = t as f64 / std::f64::consts::E.powi(2);
        assert!((sparse_beta(0.0, 0.7, 0.01, 0.5, t, delta) - 1.4).abs() < 1e-12);
        // defaults: B = 15, R = 0.01, lambda = 0.01, eps = 0.5, T = 500, delta = 1e-3
        let oracle = 15.0 * (0.02f64 / 0.5).sqrt() + 0.01 * (2.0 * 5e5f64.ln()).sqrt();
        assert!((sparse_beta(15.0, 0.01, 0.01, 0.5, 500, 1e-3) - oracle).abs() < 1e-12);
    }

    #[test]
    fn comm_phase_examples() {
        assert_eq!(comm_phase_length(1.0, 1.0, 1.0), 18);
        assert_eq!(comm_phase_length(144.0, 0.01, 2.5), (9.0f64 * 101.0 * 144.0 * 2.5).ceil() as u64);
        assert_eq!(comm_phase_length(144.0, 0.01, 2.5), 327_240);
        assert_eq!(comm_phase_length(10.0, 0.01, 0.0), 0);
    }

    #[test]
    fn sampling_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gp = random_gp(&mut rng, 8, 0.01);
        assert!(sample_inducing(&gp, 0.0, &mut rng).unwrap().is_empty());
        let all = sample_inducing(&gp, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(all.indices(), &(0..8).collect::<Vec<_>>()[..]);
        assert_eq!(all.inducing_points(), gp.points());
        let big = sample_inducing(&gp, 1e12, &mut rng).unwrap();
        assert_eq!(big.len(), 8);
    }

    #[test]
    fn inclusion_frequency_matches_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gp = random_gp(&mut rng, 5, 0.05);
        let probs = inclusion_probabilities(&gp, 8.0).unwrap();
        assert!(probs.iter().any(|&p| p > 0.05 && p < 0.95));
        let n = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            for &i in sample_inducing(&gp, 8.0, &mut rng).unwrap().indices() {
                counts[i] += 1;
            }
        }
        for (c, p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se + 1e-12, "freq {freq} p {p}");
        }
    }

    #[test]
    fn full_set_reproduces_exact_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = Grid::uniform(2, 11).unwrap();
        for _ in 0..10 {
            let gp = random_gp(&mut rng, 6, 0.05);
            let m = InducingModel::full(&gp).unwrap().fit_weights().unwrap();
            for x in grid.points() {
                let exact_m = gp.mean(x).unwrap();
                let exact_v = gp.variance(x).unwrap() / gp.lambda();
                assert!((m.approx_mean(x).unwrap() - exact_m).abs() <= 1e-8 * exact_m.abs().max(1e-8));
                assert!((m.approx_variance(x).unwrap() - exact_v).abs() <= 1e-8 * exact_v.abs().max(1e-8));
            }
        }
    }

    #[test]
    fn scalar_and_zero_cases() {
        let lambda = 0.2;
        let gp = GpPosterior::from_observations(se(0.3), lambda, &[[0.4, 0.4]], &[3.0]).unwrap();
        let m = InducingModel::full(&gp).unwrap().fit_weights().unwrap();
        assert!((m.weights().unwrap()[0] - 3.0 / (lambda + 1.0)).abs() < 1e-12);

        let gp = GpPosterior::from_observations(se(0.3), 0.01, &[[0.1, 0.2], [0.8, 0.3]], &[0.0, 0.0]).unwrap();
        let m = InducingModel::full(&gp).unwrap().fit_weights().unwrap();
        assert!(m.weights().unwrap().iter().all(|&w| w == 0.0));

        let empty = InducingModel::with_indices(&gp, vec![]).unwrap().fit_weights().unwrap();
        assert_eq!(empty.approx_mean(&[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(empty.approx_variance(&[0.5, 0.5]).unwrap(), 1.0 / 0.01);
    }

    #[test]
    fn far_point_variance_is_prior_over_lambda() {
        let gp = GpPosterior::from_observations(se(0.05), 0.01, &[[0.0, 0.0], [0.05, 0.0]], &[1.0, 2.0]).unwrap();
        let m = InducingModel::with_indices(&gp, vec![0]).unwrap().fit_weights().unwrap();
        let v = m.approx_variance(&[1.0, 1.0]).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
    }

    #[test]
    fn strict_subset_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let gp = random_gp(&mut rng, 8, 0.05);
            let idx = vec![0, 3, 5];
            let m = InducingModel::with_indices(&gp, idx.clone()).unwrap().fit_weights().unwrap();
            for _ in 0..10 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let (om, ov) = formula_oracle(&gp, &idx, &x);
                assert!((m.approx_mean(&x).unwrap() - om).abs() <= 1e-10 * om.abs().max(1.0));
                assert!((m.approx_variance(&x).unwrap() - ov).abs() <= 1e-8 * ov.abs().max(1.0));
            }
        }
    }

    #[test]
    fn growing_inducing_set_shrinks_projection_residual() {
        // k(x, x) - k_z(x)^T K_zz^-1 k_z(x) is non-increasing in z. The full
        // approximate variance is not monotone in z, so only the residual is
        // checked here.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let grid = Grid::uniform(2, 9).unwrap();
        for _ in 0..5 {
            let gp = random_gp(&mut rng, 10, 0.05);
            let k = gp.kernel();
            let mut prev: Option<Vec<f64>> = None;
            for m in 1..=10 {
                let z: Vec<Vec<f64>> = gp.points()[..m].to_vec();
                let kzz_inv = k.gram(&z).unwrap().try_inverse().unwrap();
                let cur: Vec<f64> = grid
                    .points()
                    .map(|x| {
                        let kz = k.cross(&z, x).unwrap();
                        k.eval(x, x).unwrap() - kz.dot(&(&kzz_inv * &kz))
                    })
                    .collect();
                if let Some(p) = &prev {
                    for (c, q) in cur.iter().zip(p) {
                        assert!(*c <= q + 1e-7, "{c} > {q}");
                    }
                }
                prev = Some(cur);
            }
        }
    }

    #[test]
    fn approximate_variance_is_not_monotone_in_inducing_set() {
        // Adding inducing points can raise the approximate variance.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let grid = Grid::uniform(2, 9).unwrap();
        let mut raised = false;
        for _ in 0..5 {
            let gp = random_gp(&mut rng, 10, 0.05);
            for m in 1..10 {
                let a = InducingModel::with_indices(&gp, (0..m).collect()).unwrap().fit_weights().unwrap();
                let b = InducingModel::with_indices(&gp, (0..=m).collect()).unwrap().fit_weights().unwrap();
                raised |= grid
                    .points()
                    .any(|x| b.approx_variance(x).unwrap() > a.approx_variance(x).unwrap() * (1.0 + 1e-6) + 1e-9);
            }
        }
        assert!(raised);
    }

    #[test]
    fn broadcast_reconstruction_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let gp = random_gp(&mut rng, 12, 0.01);
        let m = sample_inducing(&gp, 300.0, &mut rng).unwrap().fit_weights().unwrap();
        let mut peer = BroadcastModel::new(*gp.kernel());
        for (z, w) in m.broadcast_pairs().unwrap() {
            peer.push(z, w);
        }
        for _ in 0..50 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            assert_eq!(peer.mean(&x).to_bits(), m.approx_mean(&x).unwrap().to_bits());
        }
    }

    #[test]
    fn duplicate_inducing_points_are_solved() {
        let gp = GpPosterior::from_observations(se(0.3), 0.01, &[[0.2, 0.2], [0.2, 0.2], [0.7, 0.1]], &[1.0, 1.2, -0.3]).unwrap();
        let m = InducingModel::full(&gp).unwrap().fit_weights().unwrap();
        let exact = gp.mean(&[0.2, 0.2]).unwrap();
        assert!((m.approx_mean(&[0.2, 0.2]).unwrap() - exact).abs() < 1e-4);
    }

    #[test]
    fn unfitted_model_errors() {
        let gp = GpPosterior::from_observations(se(0.3), 0.01, &[[0.2, 0.2]], &[1.0]).unwrap();
        let m = InducingModel::full(&gp).unwrap();
        assert!(m.approx_mean(&[0.0, 0.0]).is_err());
        assert!(InducingModel::with_indices(&gp, vec![3]).is_err());
    }

    #[test]
    fn chi_sandwich_with_default_q0() {
        let grid = std::sync::Arc::new(Grid::uniform(2, 12).unwrap());
        let eps = 0.5;
        let q0 = default_q0(eps, 500, 10, 1e-3).unwrap();
        let chi = SparsityParams::new(eps, q0).unwrap().chi();
        let mut held = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let lambda = 0.01;
            let mut post = crate::gp::GridPosterior::new(se(0.2), lambda, grid.clone()).unwrap();
            for _ in 0..40 {
                let i = post.max_variance_index();
                post.append(i, rng.random::<f64>()).unwrap();
            }
            let m = sample_inducing(post.gp(), q0, &mut rng).unwrap().fit_weights().unwrap();
            let ok = grid.points().all(|x| {
                let exact = post.gp().variance(x).unwrap() / lambda;
                let approx = m.approx_variance(x).unwrap();
                approx <= chi * exact + 1e-9 && exact <= chi * approx + 1e-9
            });
            held += ok as usize;
        }
        assert!(held >= 19, "sandwich held in {held} of 20 runs");
    }
}
