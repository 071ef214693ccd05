//! Offline Bayesian optimisation of the position and yaw gains.
//!
//! The surrogate is an exact GP with a squared-exponential kernel over the
//! unit box and fixed hyperparameters; the acquisition is expected
//! improvement maximised over random candidate sets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as Gauss};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::bench::TrialConfig;
use crate::control::{pid_step, step_response_metrics, ControlCommand, ControllerState, PidGains};
use crate::error::{Error, Result};
use crate::estimation::EstimatedState;
use crate::world::{step_vehicle, OuParams, RigidState, WorldParams};
use crate::Vec3;

/// Tuned dimensions: `[kp_pos, ki_pos, kd_pos, kp_yaw]`, shared by all axes.
pub const GAIN_DIMS: usize = 4;
/// Objective assigned to a trajectory that leaves the geofence.
pub const DIVERGENCE_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainBounds {
    pub lower: [f64; GAIN_DIMS],
    pub upper: [f64; GAIN_DIMS],
}

impl Default for GainBounds {
    fn default() -> Self {
        Self {
            lower: [0.5, 0.0, 0.5, 0.5],
            upper: [8.0, 2.0, 6.0, 6.0],
        }
    }
}

impl GainBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..GAIN_DIMS {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "bounds dimension {i}: need 0 <= lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Gains at a point of the search box; `i_limit` comes from `template`.
    pub fn gains_at(x: &[f64], template: &PidGains) -> PidGains {
        PidGains {
            i_limit: template.i_limit,
            ..PidGains::uniform(x[0], x[1], x[2], x[3])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub budget: usize,
    pub n_init: usize,
    /// Per-dimension lengthscale in unit-box coordinates.
    pub kernel_lengthscale: Vec<f64>,
    pub kernel_variance: f64,
    pub noise_floor: f64,
    /// Random candidates scored per acquisition step.
    pub acquisition_restarts: usize,
    pub seed: u64,
    /// Points proposed and evaluated together per iteration.
    pub batch_size: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: 40,
            n_init: 8,
            kernel_lengthscale: vec![0.25; GAIN_DIMS],
            kernel_variance: 25.0,
            noise_floor: 1e-6,
            acquisition_restarts: 1000,
            seed: 0,
            batch_size: 1,
        }
    }
}

impl BoConfig {
    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.n_init < 2 || self.budget < self.n_init {
            return Err(Error::InvalidParam(format!(
                "bo: need budget >= n_init >= 2, got budget={}, n_init={}",
                self.budget, self.n_init
            )));
        }
        if self.kernel_lengthscale.len() != dims {
            return Err(Error::InvalidParam(format!(
                "bo.kernel_lengthscale has {} entries, expected {dims}",
                self.kernel_lengthscale.len()
            )));
        }
        let pos = self
            .kernel_lengthscale
            .iter()
            .chain([&self.kernel_variance, &self.noise_floor])
            .all(|v| v.is_finite() && *v > 0.0);
        if !pos || self.acquisition_restarts == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParam(
                "bo: hyperparameters, candidate count and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub settling: f64,
    pub overshoot: f64,
    pub itae: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            settling: 1.0,
            overshoot: 5.0,
            itae: 2.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn combine(&self, settling: f64, overshoot: f64, itae: f64) -> f64 {
        self.settling * settling + self.overshoot * overshoot + self.itae * itae
    }
}

/// Single-vehicle step manoeuvre used as the tuning scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepScenario {
    /// Lateral (y) step, m.
    pub lateral: f64,
    /// Altitude step, m.
    pub altitude: f64,
    /// Yaw step, rad.
    pub yaw: f64,
    /// Simulated horizon, s.
    pub horizon: f64,
    pub weights: ObjectiveWeights,
}

impl Default for StepScenario {
    fn default() -> Self {
        Self {
            lateral: 1.0,
            altitude: 0.5,
            yaw: 0.5,
            horizon: 10.0,
            weights: ObjectiveWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub objective: f64,
    /// Worst channel settling time, s.
    pub settling_time: f64,
    /// Worst channel overshoot, fraction of the step.
    pub overshoot: f64,
    /// Sum over channels of ITAE normalised by the step size.
    pub itae: f64,
    pub diverged: bool,
}

/// Runs the step manoeuvre with perfect state feedback on a noise-free plant.
pub fn evaluate_gains(gains: &PidGains, cfg: &TrialConfig, sc: &StepScenario) -> Result<ObjectiveEval> {
    let params = WorldParams {
        disturbance: OuParams {
            sigma: 0.0,
            ..cfg.world.disturbance
        },
        ..cfg.world
    };
    let dt = cfg.dt;
    let start = Vec3::new(0.0, 0.0, cfg.spec.g.z);
    let target = start + Vec3::new(0.0, sc.lateral, sc.altitude);
    let steps = (sc.horizon / dt).round() as usize;
    let mut truth = RigidState::at_rest(start, 0.0);
    let mut ctrl = ControllerState::default();
    let mut lat = Vec::with_capacity(steps);
    let mut alt = Vec::with_capacity(steps);
    let mut yaw = Vec::with_capacity(steps);
    for k in 0..steps {
        let est = EstimatedState::from_parts(truth.position, truth.velocity, truth.yaw, k as f64 * dt);
        let (cmd, s): (ControlCommand, _) = pid_step(&est, &target, sc.yaw, gains, &ctrl, dt)?;
        ctrl = s;
        truth = step_vehicle(&truth, &cmd, &params, &Vec3::zeros(), dt)?;
        if !cfg.safety.contains(&truth.position) {
            return Ok(ObjectiveEval {
                objective: DIVERGENCE_PENALTY,
                settling_time: f64::INFINITY,
                overshoot: f64::INFINITY,
                itae: f64::INFINITY,
                diverged: true,
            });
        }
        lat.push(truth.position.y - start.y);
        alt.push(truth.position.z - start.z);
        yaw.push(truth.yaw);
    }
    let mut settling: f64 = 0.0;
    let mut overshoot: f64 = 0.0;
    let mut itae = 0.0;
    for (traj, step) in [(&lat, sc.lateral), (&alt, sc.altitude), (&yaw, sc.yaw)] {
        if step == 0.0 {
            continue;
        }
        let m = step_response_metrics(traj, step, dt)?;
        settling = settling.max(m.settling_time);
        overshoot = overshoot.max(m.overshoot);
        itae += m.itae / step.abs();
    }
    Ok(ObjectiveEval {
        objective: sc.weights.combine(settling, overshoot, itae),
        settling_time: settling,
        overshoot,
        itae,
        diverged: false,
    })
}

/// Tuning cost of `gains` on the default step scenario.
pub fn tuning_objective(gains: &PidGains, scenario: &TrialConfig) -> Result<f64> {
    Ok(evaluate_gains(gains, scenario, &StepScenario::default())?.objective)
}

/// GP posterior over the unit box.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    points: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    mean: f64,
    lengthscale: Vec<f64>,
    variance: f64,
}

fn se_kernel(a: &[f64], b: &[f64], ls: &[f64], var: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    var * (-0.5 * r2).exp()
}

/// Exact GP regression with a constant mean equal to the sample mean.
pub fn gp_fit(observations: &[(Vec<f64>, f64)], cfg: &BoConfig) -> Result<GpPosterior> {
    if observations.len() < 2 {
        return Err(Error::InvalidParam("gp_fit needs at least 2 observations".into()));
    }
    let dims = observations[0].0.len();
    if cfg.kernel_lengthscale.len() != dims || observations.iter().any(|o| o.0.len() != dims) {
        return Err(Error::InvalidParam(
            "gp_fit: inconsistent point dimensions".into(),
        ));
    }
    let n = observations.len();
    let ls = &cfg.kernel_lengthscale;
    let var = cfg.kernel_variance;
    let mean = observations.iter().map(|o| o.1).sum::<f64>() / n as f64;
    let k = DMatrix::from_fn(n, n, |i, j| {
        se_kernel(&observations[i].0, &observations[j].0, ls, var)
    });
    let y = DVector::from_iterator(n, observations.iter().map(|o| o.1 - mean));

    let mut jitter = 0.0;
    let chol = loop {
        let mut kk = k.clone();
        for i in 0..n {
            kk[(i, i)] += cfg.noise_floor + jitter;
        }
        if let Some(c) = kk.cholesky() {
            break c;
        }
        jitter = if jitter == 0.0 { 1e-10 * var } else { jitter * 10.0 };
        if jitter > 1e-4 * var {
            return Err(Error::Numeric("GP kernel matrix is not positive-definite".into()));
        }
    };
    let alpha = chol.solve(&y);
    Ok(GpPosterior {
        points: observations.iter().map(|o| o.0.clone()).collect(),
        alpha,
        chol,
        mean,
        lengthscale: ls.clone(),
        variance: var,
    })
}

impl GpPosterior {
    /// Posterior mean and variance at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.points.len(),
            self.points
                .iter()
                .map(|p| se_kernel(p, x, &self.lengthscale, self.variance)),
        );
        let mean = self.mean + ks.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("triangular solve");
        let var = (self.variance - v.dot(&v)).max(0.0);
        (mean, var)
    }
}

/// Expected improvement for minimisation.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gain = best - mean;
    if !(std > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / std;
    let n = Normal::standard();
    (gain * n.cdf(z) + std * n.pdf(z)).max(0.0)
}

/// Latin-hypercube sample of `n` points in the unit box.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            strata.swap(i, rng.gen_range(0..=i));
        }
        for (p, s) in pts.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    /// Evaluated points in problem units, with their objective values.
    pub history: Vec<(Vec<f64>, f64)>,
    /// Best value after each evaluation.
    pub incumbent: Vec<f64>,
    pub warnings: Vec<String>,
}

impl BoTrace {
    pub fn best(&self) -> (usize, f64) {
        self.history.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, h)| if h.1 < acc.1 { (i, h.1) } else { acc },
        )
    }
}

fn to_box(u: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(lower.iter().zip(upper))
        .map(|(x, (lo, hi))| lo + x * (hi - lo))
        .collect()
}

/// Minimises `f` over the box `[lower, upper]`.
pub fn bo_minimize<F>(f: F, lower: &[f64], upper: &[f64], cfg: &BoConfig) -> Result<BoTrace>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dims = lower.len();
    if upper.len() != dims || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidParam(
            "bo: lower must be below upper in every dimension".into(),
        ));
    }
    cfg.validate(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut unit: Vec<Vec<f64>> = Vec::with_capacity(cfg.budget);
    let mut values: Vec<f64> = Vec::with_capacity(cfg.budget);
    let mut warnings = Vec::new();

    let evaluate = |batch: &[Vec<f64>]| -> Result<Vec<f64>> {
        batch.par_iter().map(|u| f(&to_box(u, lower, upper))).collect()
    };

    let init = latin_hypercube(cfg.n_init, dims, &mut rng);
    values.extend(evaluate(&init)?);
    unit.extend(init);

    let local = Gauss::new(0.0, 0.05).expect("valid normal");
    while unit.len() < cfg.budget {
        let q = cfg.batch_size.min(cfg.budget - unit.len());
        let obs: Vec<(Vec<f64>, f64)> = unit.iter().cloned().zip(values.iter().copied()).collect();
        let best_i = (0..values.len())
            .min_by(|a, b| values[*a].total_cmp(&values[*b]))
            .expect("non-empty");
        let best = values[best_i];

        let mut cands: Vec<Vec<f64>> = (0..cfg.acquisition_restarts)
            .map(|_| (0..dims).map(|_| rng.gen::<f64>()).collect())
            .collect();
        for _ in 0..cfg.acquisition_restarts / 5 {
            let c = unit[best_i]
                .iter()
                .map(|x| (x + local.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            cands.push(c);
        }

        let batch = match gp_fit(&obs, cfg) {
            Ok(gp) => {
                let mut scored: Vec<(f64, usize)> = cands
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let (m, v) = gp.predict(c);
                        (expected_improvement(m, v.sqrt(), best), i)
                    })
                    .collect();
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                scored
                    .iter()
                    .take(q)
                    .map(|(_, i)| cands[*i].clone())
                    .collect::<Vec<_>>()
            }
            Err(e) => {
                warnings.push(format!("iteration {}: {e}; using random candidates", unit.len()));
                cands.truncate(q);
                cands
            }
        };
        values.extend(evaluate(&batch)?);
        unit.extend(batch);
    }

    let mut incumbent = Vec::with_capacity(values.len());
    let mut best = f64::INFINITY;
    for v in &values {
        best = best.min(*v);
        incumbent.push(best);
    }
    Ok(BoTrace {
        history: unit.iter().map(|u| to_box(u, lower, upper)).zip(values).collect(),
        incumbent,
        warnings,
    })
}

/// Uniform random search with the same seed convention as [`bo_minimize`].
pub fn random_search<F>(f: F, lower: &[f64], upper: &[f64], budget: usize, seed: u64) -> Result<BoTrace>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(budget);
    let mut incumbent = Vec::with_capacity(budget);
    let mut best = f64::INFINITY;
    for _ in 0..budget {
        let u: Vec<f64> = (0..lower.len()).map(|_| rng.gen::<f64>()).collect();
        let x = to_box(&u, lower, upper);
        let v = f(&x)?;
        best = best.min(v);
        incumbent.push(best);
        history.push((x, v));
    }
    Ok(BoTrace {
        history,
        incumbent,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    pub gains: PidGains,
    pub objective: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_gains: PidGains,
    pub best_objective: f64,
    pub history: Vec<TuneStep>,
    pub warnings: Vec<String>,
}

/// Tunes the follower-template gains of `scenario` on the step manoeuvre.
pub fn bo_tune(scenario: &TrialConfig, bounds: &GainBounds, cfg: &BoConfig) -> Result<TuneResult> {
    bounds.validate()?;
    let template = scenario.gains.follower;
    let sc = StepScenario::default();
    let f = |x: &[f64]| -> Result<f64> {
        Ok(evaluate_gains(&GainBounds::gains_at(x, &template), scenario, &sc)?.objective)
    };
    let trace = bo_minimize(f, &bounds.lower, &bounds.upper, cfg)?;
    let (bi, best_objective) = trace.best();
    let history = trace
        .history
        .iter()
        .zip(&trace.incumbent)
        .map(|((x, v), inc)| TuneStep {
            gains: GainBounds::gains_at(x, &template),
            objective: *v,
            incumbent: *inc,
        })
        .collect();
    Ok(TuneResult {
        best_gains: GainBounds::gains_at(&trace.history[bi].0, &template),
        best_objective,
        history,
        warnings: trace.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg1d() -> BoConfig {
        BoConfig {
            kernel_lengthscale: vec![0.2],
            kernel_variance: 1.0,
            noise_floor: 1e-10,
            ..BoConfig::default()
        }
    }

    #[test]
    fn weighted_sum() {
        let w = ObjectiveWeights::default();
        assert_eq!(w.combine(0.0, 0.0, 0.0), 0.0);
        assert!((w.combine(2.0, 0.1, 0.3) - 3.1).abs() < 1e-12);
    }

    #[test]
    fn objective_is_deterministic() {
        let cfg = TrialConfig::default();
        let g = PidGains::default();
        let a = tuning_objective(&g, &cfg).unwrap();
        let b = tuning_objective(&g, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0 && a < DIVERGENCE_PENALTY);
    }

    #[test]
    fn ei_values() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.0, 0.0, 1.0), 1.0);
        assert!((expected_improvement(0.0, 1e-12, 1.0) - 1.0).abs() < 1e-9);
        assert!((expected_improvement(1.0, 1.0, 1.0) - 0.398_942_280_4).abs() < 1e-9);
    }

    #[test]
    fn gp_interpolates_and_reverts() {
        let obs = vec![(vec![0.2], 1.5), (vec![0.5], -0.3), (vec![0.9], 0.7)];
        let c = cfg1d();
        let gp = gp_fit(&obs, &c).unwrap();
        for (x, y) in &obs {
            let (m, v) = gp.predict(x);
            assert!((m - y).abs() < 1e-6, "{m} vs {y}");
            assert!(v <= c.noise_floor + 1e-6);
        }
        let (_, v) = gp.predict(&[0.9 + 10.0 * 0.2]);
        assert!((v - c.kernel_variance).abs() < 0.01 * c.kernel_variance);
    }

    #[test]
    fn gp_repeated_point() {
        let obs = vec![(vec![0.3], 2.0), (vec![0.3], 2.0)];
        let gp = gp_fit(&obs, &cfg1d()).unwrap();
        assert!((gp.predict(&[0.3]).0 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn gp_needs_two_points() {
        assert!(gp_fit(&[(vec![0.1], 1.0)], &cfg1d()).is_err());
    }

    #[test]
    fn lhs_stratifies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(10, 3, &mut rng);
        for d in 0..3 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[d] * 10.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..10).collect::<Vec<_>>());
        }
    }

    fn sphere(x: &[f64]) -> Result<f64> {
        Ok(x.iter().map(|v| (v - 0.5).powi(2)).sum())
    }

    fn sphere_cfg(seed: u64) -> BoConfig {
        BoConfig {
            budget: 30,
            n_init: 5,
            kernel_lengthscale: vec![0.3, 0.3],
            kernel_variance: 0.1,
            noise_floor: 1e-8,
            seed,
            ..BoConfig::default()
        }
    }

    #[test]
    fn degenerate_budget_is_space_filling() {
        let c = BoConfig {
            budget: 6,
            n_init: 6,
            ..sphere_cfg(1)
        };
        let t = bo_minimize(sphere, &[0.0, 0.0], &[1.0, 1.0], &c).unwrap();
        assert_eq!(t.history.len(), 6);
        let min = t.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        assert_eq!(t.best().1, min);
    }

    #[test]
    fn incumbent_monotone_and_in_bounds() {
        let lo = [0.0, -1.0];
        let hi = [1.0, 2.0];
        let t = bo_minimize(sphere, &lo, &hi, &sphere_cfg(4)).unwrap();
        assert_eq!(t.history.len(), 30);
        assert!(t.incumbent.windows(2).all(|w| w[1] <= w[0]));
        for (x, _) in &t.history {
            assert!(x
                .iter()
                .zip(lo.iter().zip(&hi))
                .all(|(v, (l, h))| v >= l && v <= h));
        }
    }

    #[test]
    fn bo_is_reproducible() {
        let a = bo_minimize(sphere, &[0.0, 0.0], &[1.0, 1.0], &sphere_cfg(9)).unwrap();
        let b = bo_minimize(sphere, &[0.0, 0.0], &[1.0, 1.0], &sphere_cfg(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_mode_fills_budget() {
        let c = BoConfig {
            batch_size: 4,
            ..sphere_cfg(2)
        };
        let t = bo_minimize(sphere, &[0.0, 0.0], &[1.0, 1.0], &c).unwrap();
        assert_eq!(t.history.len(), 30);
    }

    #[test]
    fn config_validation() {
        assert!(BoConfig {
            n_init: 1,
            ..sphere_cfg(0)
        }
        .validate(2)
        .is_err());
        assert!(BoConfig {
            budget: 3,
            n_init: 5,
            ..sphere_cfg(0)
        }
        .validate(2)
        .is_err());
        assert!(sphere_cfg(0).validate(3).is_err());
        let b = GainBounds {
            lower: [1.0, 0.0, 0.0, 0.0],
            upper: [0.5, 1.0, 1.0, 1.0],
        };
        assert!(b.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn posterior_order_invariant(
                pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, -2.0f64..2.0), 2..12),
                probe in (0.0f64..1.0, 0.0f64..1.0),
                rot in 0usize..12,
            ) {
                let c = BoConfig { kernel_lengthscale: vec![0.3, 0.3], kernel_variance: 1.0, noise_floor: 1e-6, ..BoConfig::default() };
                let obs: Vec<_> = pts.iter().map(|(a, b, y)| (vec![*a, *b], *y)).collect();
                let mut rev = obs.clone();
                rev.reverse();
                let k = rot % rev.len();
                rev.rotate_left(k);
                let p = [probe.0, probe.1];
                let (m1, v1) = gp_fit(&obs, &c).unwrap().predict(&p);
                let (m2, v2) = gp_fit(&rev, &c).unwrap().predict(&p);
                prop_assert!((m1 - m2).abs() < 1e-9 && (v1 - v2).abs() < 1e-9);
            }

            #[test]
            fn ei_non_negative(m in -10.0f64..10.0, s in 0.0f64..5.0, b in -10.0f64..10.0) {
                prop_assert!(expected_improvement(m, s, b) >= 0.0);
            }
        }
    }
}
