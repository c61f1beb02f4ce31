//! Problem instances: observation functions, personalization mixing, noisy
//! observations and grid regret oracles.
//!
//! Client `i` observes `h_i` and is scored on
//! `f_i = alpha_i h_i + (1 - alpha_i) g` with `g = (1/K) sum_j h_j`.
//! Optima are taken over the grid the policies act on.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use crate::rng::{self, Purpose};

/// Rescaled Branin on `[0, 1]^2`, negated so that larger is better.
pub fn branin(x: f64, y: f64) -> f64 {
    let u = 15.0 * x - 5.0;
    let v = 15.0 * y;
    let a = v - 5.1 * u * u / (4.0 * PI * PI) + 5.0 * u / PI - 6.0;
    -(a * a + (10.0 - 10.0 / (8.0 * PI)) * u.cos() - 44.81) / 51.95
}

/// Two-dimensional extension of the Forrester-type 1D test function.
pub fn sobester(x: f64, y: f64) -> f64 {
    let f = |t: f64| (6.0 * t - 2.0).powi(2) * (12.0 * t - 4.0).sin();
    f(x) + f(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Branin,
    Sobester,
}

impl Benchmark {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Branin => branin(x, y),
            Self::Sobester => sobester(x, y),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Branin => write!(f, "branin"),
            Self::Sobester => write!(f, "sobester"),
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "branin" => Ok(Self::Branin),
            "sobester" => Ok(Self::Sobester),
            other => Err(Error::Config(format!("unknown benchmark `{other}` (expected branin or sobester)"))),
        }
    }
}

// Plain repeated multiplication: `powi` may be constant-folded differently
// from its runtime evaluation, which breaks bit-reproducibility.
fn int_pow(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, _| acc * x)
}

/// `h(x1, x2) = base(x1^i, x2^j)` with `i, j` in `{1, 2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeFunction {
    pub base: Benchmark,
    pub i: u32,
    pub j: u32,
}

impl CompositeFunction {
    pub fn new(base: Benchmark, i: u32, j: u32) -> Result<Self> {
        if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
            return Err(invalid("exponents", format!("({i}, {j}) must both lie in 1..=3")));
        }
        Ok(Self { base, i, j })
    }

    /// Member `m` in `0..9` of the family, ordered `(1,1), (1,2), ..., (3,3)`.
    pub fn member(base: Benchmark, m: usize) -> Result<Self> {
        if m >= 9 {
            return Err(invalid("family member", format!("{m} out of range 0..9")));
        }
        Self::new(base, (m / 3 + 1) as u32, (m % 3 + 1) as u32)
    }

    pub fn index(&self) -> usize {
        ((self.i - 1) * 3 + (self.j - 1)) as usize
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.base.eval(int_pow(x[0], self.i), int_pow(x[1], self.j))
    }
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A client's observation function.
#[derive(Clone)]
pub enum ObservationFn {
    Composite(CompositeFunction),
    Custom(CustomFn),
}

impl ObservationFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Composite(c) => c.eval(x),
            Self::Custom(f) => f(x),
        }
    }

    pub fn composite(&self) -> Option<CompositeFunction> {
        match self {
            Self::Composite(c) => Some(*c),
            Self::Custom(_) => None,
        }
    }
}

impl fmt::Debug for ObservationFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Composite(c) => write!(f, "{c:?}"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Parameters for drawing a random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub clients: usize,
    pub grid_side: usize,
    pub benchmark: Benchmark,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub noise_var: f64,
}

impl InstanceSpec {
    /// 50 clients on a 30 x 30 grid.
    pub fn paper_scale(benchmark: Benchmark) -> Self {
        Self {
            clients: 50,
            grid_side: 30,
            benchmark,
            alpha_low: 0.1,
            alpha_high: 0.9,
            noise_var: 0.01,
        }
    }

    /// 10 clients on a 20 x 20 grid.
    pub fn desk_scale(benchmark: Benchmark) -> Self {
        Self {
            clients: 10,
            grid_side: 20,
            ..Self::paper_scale(benchmark)
        }
    }
}

/// Immutable problem instance with cached grid values and grid optima.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    grid: Arc<Grid>,
    h: Vec<ObservationFn>,
    alpha: Vec<f64>,
    noise_var: f64,
    h_values: Vec<Vec<f64>>,
    g_values: Vec<f64>,
    f_values: Vec<Vec<f64>>,
    optima: Vec<(usize, f64)>,
}

impl ProblemInstance {
    pub fn new(grid: Arc<Grid>, h: Vec<ObservationFn>, alpha: Vec<f64>, noise_var: f64) -> Result<Self> {
        let k = h.len();
        if k == 0 {
            return Err(invalid("clients", "need at least one client"));
        }
        if alpha.len() != k {
            return Err(Error::LengthMismatch(format!("{k} observation functions but {} weights", alpha.len())));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(invalid("alpha", format!("personalization weights must lie in (0, 1), got {a}")));
        }
        if !(noise_var >= 0.0) {
            return Err(invalid("noise_var", format!("must be non-negative, got {noise_var}")));
        }
        let h_values: Vec<Vec<f64>> = h.iter().map(|f| grid.points().map(|x| f.eval(x)).collect()).collect();
        let n = grid.len();
        let g_values: Vec<f64> = (0..n).map(|p| h_values.iter().map(|hv| hv[p]).sum::<f64>() / k as f64).collect();
        let f_values: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..n).map(|p| alpha[i] * h_values[i][p] + (1.0 - alpha[i]) * g_values[p]).collect())
            .collect();
        let optima = f_values
            .iter()
            .map(|fv| {
                let idx = crate::gp::argmax(fv.iter().copied());
                (idx, fv[idx])
            })
            .collect();
        Ok(Self {
            grid,
            h,
            alpha,
            noise_var,
            h_values,
            g_values,
            f_values,
            optima,
        })
    }

    /// Draws personalization weights uniformly from `[alpha_low, alpha_high]`
    /// and observation functions uniformly from the nine-member family.
    pub fn generate(spec: &InstanceSpec, seed: u64) -> Result<Self> {
        if !(spec.alpha_low > 0.0 && spec.alpha_low <= spec.alpha_high && spec.alpha_high < 1.0) {
            return Err(invalid(
                "alpha range",
                format!("need 0 < low <= high < 1, got [{}, {}]", spec.alpha_low, spec.alpha_high),
            ));
        }
        let grid = Arc::new(Grid::uniform(2, spec.grid_side)?);
        let mut rng = rng::stream(seed, Purpose::Instance, 0);
        let mut alpha = Vec::with_capacity(spec.clients);
        let mut h = Vec::with_capacity(spec.clients);
        for _ in 0..spec.clients {
            alpha.push(rng.random_range(spec.alpha_low..=spec.alpha_high));
            let m = rng.random_range(0..9);
            h.push(ObservationFn::Composite(CompositeFunction::member(spec.benchmark, m)?));
        }
        Self::new(grid, h, alpha, spec.noise_var)
    }

    pub fn clients(&self) -> usize {
        self.h.len()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn observation_fn(&self, client: usize) -> &ObservationFn {
        &self.h[client]
    }

    pub fn h_at(&self, client: usize, idx: usize) -> f64 {
        self.h_values[client][idx]
    }

    pub fn g_at(&self, idx: usize) -> f64 {
        self.g_values[idx]
    }

    pub fn f_at(&self, client: usize, idx: usize) -> f64 {
        self.f_values[client][idx]
    }

    /// Grid maximizer of `f_i` and its value.
    pub fn optimum(&self, client: usize) -> (usize, f64) {
        self.optima[client]
    }

    fn check_client(&self, client: usize) -> Result<()> {
        if client >= self.clients() {
            return Err(Error::UnknownClient(client));
        }
        Ok(())
    }

    /// `h_i(x)` plus Gaussian noise drawn from `rng`.
    pub fn observe<R: Rng + ?Sized>(&self, client: usize, x: &[f64], rng: &mut R) -> Result<f64> {
        self.check_client(client)?;
        crate::kernels::check_dim(self.dim(), x.len())?;
        Ok(self.h[client].eval(x) + self.noise(rng))
    }

    /// Same as [`observe`](Self::observe) at grid point `idx`.
    pub fn observe_index<R: Rng + ?Sized>(&self, client: usize, idx: usize, rng: &mut R) -> f64 {
        self.h_values[client][idx] + self.noise(rng)
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Always consume one draw so streams stay aligned across settings.
        let z: f64 = rng.sample(StandardNormal);
        if self.noise_var == 0.0 {
            0.0
        } else {
            self.noise_var.sqrt() * z
        }
    }

    /// `f_i(x_i*) - f_i(x)` at grid point `idx`.
    pub fn instant_regret(&self, client: usize, idx: usize) -> f64 {
        self.optima[client].1 - self.f_values[client][idx]
    }

    /// Total regret over clients and rounds of the grid-index trace
    /// `trace[client][round]`.
    pub fn cumulative_regret(&self, trace: &[Vec<usize>]) -> Result<f64> {
        if trace.len() != self.clients() {
            return Err(Error::LengthMismatch(format!("trace has {} clients, instance has {}", trace.len(), self.clients())));
        }
        let horizon = trace[0].len();
        let mut total = 0.0;
        for (i, seq) in trace.iter().enumerate() {
            if seq.len() != horizon {
                return Err(Error::LengthMismatch(format!("client {i} has {} rounds, expected {horizon}", seq.len())));
            }
            for &idx in seq {
                if idx >= self.grid.len() {
                    return Err(invalid("query index", format!("{idx} outside the grid")));
                }
                total += self.instant_regret(i, idx);
            }
        }
        Ok(total)
    }
}

/// Finite kernel expansion `h(x) = sum_j a_j k(c_j, x)` with RKHS norm
/// `sqrt(a' K_cc a)`.
#[derive(Debug, Clone)]
pub struct KernelExpansion {
    kernel: KernelSpec,
    centers: Vec<Vec<f64>>,
    coef: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(kernel: KernelSpec, centers: Vec<Vec<f64>>, coef: Vec<f64>) -> Result<Self> {
        if centers.len() != coef.len() {
            return Err(Error::LengthMismatch(format!("{} centers but {} coefficients", centers.len(), coef.len())));
        }
        kernel.gram(&centers)?;
        Ok(Self { kernel, centers, coef })
    }

    /// Uniform centers in `[0, 1]^dim`, Gaussian coefficients rescaled so the
    /// RKHS norm equals `norm`.
    pub fn random<R: Rng + ?Sized>(kernel: KernelSpec, dim: usize, terms: usize, norm: f64, rng: &mut R) -> Result<Self> {
        if terms == 0 || dim == 0 {
            return Err(invalid("terms", "need at least one center in at least one dimension"));
        }
        if !(norm >= 0.0) {
            return Err(invalid("norm", format!("must be non-negative, got {norm}")));
        }
        let centers: Vec<Vec<f64>> = (0..terms).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let coef: Vec<f64> = (0..terms).map(|_| rng.sample(StandardNormal)).collect();
        let mut f = Self::new(kernel, centers, coef)?;
        let current = f.rkhs_norm()?;
        let scale = if current > 0.0 { norm / current } else { 0.0 };
        f.coef.iter_mut().for_each(|a| *a *= scale);
        Ok(f)
    }

    pub fn rkhs_norm(&self) -> Result<f64> {
        let k = self.kernel.gram(&self.centers)?;
        let a = nalgebra::DVector::from_column_slice(&self.coef);
        Ok(a.dot(&(k * &a)).max(0.0).sqrt())
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.centers.iter().zip(&self.coef).map(|(c, a)| a * self.kernel.eval_unchecked(c, x)).sum()
    }
}

/// The 50-client, 30 x 30 Branin instance.
pub fn default_instance(seed: u64) -> Result<ProblemInstance> {
    ProblemInstance::generate(&InstanceSpec::paper_scale(Benchmark::Branin), seed)
}

/// Kernel and regularizer used with the default instances.
pub fn default_model() -> (KernelSpec, f64) {
    (KernelSpec::squared_exponential(0.2).expect("positive lengthscale"), 0.01)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn branin_at_classical_minimizer() {
        let x = (5.0 + PI) / 15.0;
        let y = 2.275 / 15.0;
        let oracle = -(1.0 / 51.95) * (-(10.0 - 10.0 / (8.0 * PI)) - 44.81);
        assert!((branin(x, y) - oracle).abs() < 1e-12);
        assert!((branin(x, y) - 1.047_393_891_092_787).abs() < 1e-12);
    }

    #[test]
    fn branin_origin() {
        // u = -5, v = 0
        let u: f64 = -5.0;
        let a = 0.0 - 5.1 * 25.0 / (4.0 * PI * PI) + 5.0 * u / PI - 6.0;
        let oracle = -(a * a + (10.0 - 10.0 / (8.0 * PI)) * u.cos() - 44.81) / 51.95;
        assert!((branin(0.0, 0.0) - oracle).abs() < 1e-12);
        assert!((branin(0.0, 0.0) - branin(1e-9, 0.0)).abs() < 1e-6);
    }

    #[test]
    fn sobester_examples() {
        assert!(sobester(1.0 / 3.0, 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(sobester(0.2, 0.7), sobester(0.7, 0.2));
        assert!((sobester(0.0, 0.0) - 8.0 * (-4f64).sin()).abs() < 1e-12);
    }

    #[test]
    fn composite_members() {
        let c = CompositeFunction::member(Benchmark::Sobester, 5).unwrap();
        assert_eq!((c.i, c.j), (2, 3));
        assert_eq!(c.index(), 5);
        assert!((c.eval(&[0.5, 0.5]) - sobester(0.25, 0.125)).abs() < 1e-15);
        assert_eq!(int_pow(0.3, 3), 0.3 * 0.3 * 0.3);
        assert!(CompositeFunction::member(Benchmark::Branin, 9).is_err());
        assert!(CompositeFunction::new(Benchmark::Branin, 0, 1).is_err());
    }

    #[test]
    fn mixing_identity_and_optima() {
        let inst = ProblemInstance::generate(&InstanceSpec::desk_scale(Benchmark::Branin), 4).unwrap();
        let k = inst.clients();
        for i in 0..k {
            let (opt, val) = inst.optimum(i);
            for p in 0..inst.grid().len() {
                let g: f64 = (0..k).map(|j| inst.h_at(j, p)).sum::<f64>() / k as f64;
                let resid = inst.f_at(i, p) - inst.alpha()[i] * inst.h_at(i, p) - (1.0 - inst.alpha()[i]) * g;
                assert!(resid.abs() < 1e-12);
                assert!((inst.g_at(p) - g).abs() < 1e-12);
                assert!(inst.f_at(i, p) <= val);
                assert!(inst.instant_regret(i, p) >= -1e-12);
            }
            assert_eq!(inst.f_at(i, opt), val);
        }
    }

    #[test]
    fn identical_clients_share_optimum() {
        let grid = Arc::new(Grid::uniform(2, 10).unwrap());
        let c = ObservationFn::Composite(CompositeFunction::member(Benchmark::Branin, 4).unwrap());
        let inst = ProblemInstance::new(grid, vec![c.clone(), c.clone(), c], vec![0.3; 3], 0.01).unwrap();
        assert_eq!(inst.optimum(0), inst.optimum(1));
        assert_eq!(inst.optimum(1), inst.optimum(2));
    }

    #[test]
    fn rejects_bad_weights() {
        let grid = Arc::new(Grid::uniform(2, 4).unwrap());
        let c = ObservationFn::Composite(CompositeFunction::member(Benchmark::Branin, 0).unwrap());
        assert!(ProblemInstance::new(grid.clone(), vec![c.clone()], vec![1.0], 0.01).is_err());
        assert!(ProblemInstance::new(grid.clone(), vec![c.clone()], vec![0.0], 0.01).is_err());
        assert!(ProblemInstance::new(grid, vec![c], vec![0.5, 0.5], 0.01).is_err());
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let grid = Arc::new(Grid::uniform(2, 5).unwrap());
        let c = CompositeFunction::member(Benchmark::Branin, 2).unwrap();
        let inst = ProblemInstance::new(grid, vec![ObservationFn::Composite(c)], vec![0.5], 0.0).unwrap();
        let mut rng = stream(1, Purpose::Noise, 0);
        assert_eq!(inst.observe(0, &[0.3, 0.6], &mut rng).unwrap(), c.eval(&[0.3, 0.6]));
        assert!(inst.observe(1, &[0.3, 0.6], &mut rng).is_err());
        assert!(inst.observe(0, &[0.3], &mut rng).is_err());
    }

    #[test]
    fn noise_mean_and_independence() {
        let inst = ProblemInstance::generate(&InstanceSpec::desk_scale(Benchmark::Branin), 8).unwrap();
        let x = [0.4, 0.7];
        let truth = inst.observation_fn(0).eval(&x);
        let mut rng = stream(8, Purpose::Noise, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| inst.observe(0, &x, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - truth).abs() < 4.0 * 0.1 / (n as f64).sqrt());

        let mut r0 = stream(8, Purpose::Noise, 0);
        let mut r1 = stream(8, Purpose::Noise, 1);
        let m = 10_000;
        let t1 = inst.observation_fn(1).eval(&x);
        let pairs: Vec<(f64, f64)> = (0..m)
            .map(|_| (inst.observe(0, &x, &mut r0).unwrap() - truth, inst.observe(1, &x, &mut r1).unwrap() - t1))
            .collect();
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m as f64, b + y / m as f64));
        let cov = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>();
        let va = pairs.iter().map(|(a, _)| (a - ma).powi(2)).sum::<f64>();
        let vb = pairs.iter().map(|(_, b)| (b - mb).powi(2)).sum::<f64>();
        assert!((cov / (va * vb).sqrt()).abs() < 0.05);
    }

    #[test]
    fn regret_examples() {
        let grid = Arc::new(Grid::from_points(&[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap());
        let vals = [1.0, 0.7, 0.9];
        let h = ObservationFn::Custom(Arc::new(move |x: &[f64]| vals[(x[0] * 2.0).round() as usize]));
        let inst = ProblemInstance::new(grid, vec![h], vec![0.5], 0.0).unwrap();
        // K = 1 so f = h; gaps 0.3 and 0.1
        let r = inst.cumulative_regret(&[vec![1, 2]]).unwrap();
        assert!((r - 0.4).abs() < 1e-12);
        assert_eq!(inst.cumulative_regret(&[vec![0, 0, 0]]).unwrap(), 0.0);
        assert!(inst.cumulative_regret(&[vec![0], vec![0]]).is_err());
    }

    #[test]
    fn default_instance_is_deterministic() {
        let a = default_instance(42).unwrap();
        let b = default_instance(42).unwrap();
        assert_eq!(a.clients(), 50);
        assert_eq!(a.grid().len(), 900);
        assert_eq!(a.alpha(), b.alpha());
        assert!(a.alpha().iter().all(|&v| (0.1..=0.9).contains(&v)));
        let ia: Vec<_> = (0..50).map(|i| a.observation_fn(i).composite()).collect();
        let ib: Vec<_> = (0..50).map(|i| b.observation_fn(i).composite()).collect();
        assert_eq!(ia, ib);
    }

    #[test]
    fn family_draws_are_uniform() {
        let spec = InstanceSpec {
            clients: 1,
            grid_side: 2,
            ..InstanceSpec::desk_scale(Benchmark::Branin)
        };
        let n = 10_000;
        let mut counts = [0f64; 9];
        for seed in 0..n {
            let inst = ProblemInstance::generate(&spec, seed).unwrap();
            counts[inst.observation_fn(0).composite().unwrap().index()] += 1.0;
        }
        let e = n as f64 / 9.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        // chi-square with 8 dof: P(X > 26.12) = 0.001
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }

    #[test]
    fn kernel_expansion_norm_and_values() {
        let k = KernelSpec::squared_exponential(0.3).unwrap();
        let mut rng = stream(4, Purpose::Synthetic, 0);
        let f = KernelExpansion::random(k, 2, 6, 2.5, &mut rng).unwrap();
        assert!((f.rkhs_norm().unwrap() - 2.5).abs() < 1e-12);
        let one = KernelExpansion::new(k, vec![vec![0.5, 0.5]], vec![2.0]).unwrap();
        assert!((one.rkhs_norm().unwrap() - 2.0).abs() < 1e-15);
        assert!((one.eval(&[0.5, 0.5]) - 2.0).abs() < 1e-15);
        assert!(KernelExpansion::new(k, vec![vec![0.0, 0.0]], vec![]).is_err());
    }
}
