//! Sigmoid influence models: weighted linear regression of log-odds targets on feature values,
//! and the regression-confidence measure derived from its prediction error bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{clamp, logistic, Scalar};
use crate::special::StudentT;

/// Sigmoid influence of one feature: `P_f(x) = 1 / (1 + exp(-tau (x - alpha)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidModel<T> {
    pub alpha: T,
    pub tau: T,
    pub alpha_bounds: (T, T),
}

impl<T: Scalar> SigmoidModel<T> {
    pub fn log_odds(&self, x: T) -> T {
        self.tau * (x - self.alpha)
    }

    pub fn probability(&self, x: T) -> T {
        logistic(self.log_odds(x))
    }
}

/// Observation counts of the two evidence classes; matching evidence is reweighted by
/// `n_minus / n_plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassWeights {
    pub n_minus: usize,
    pub n_plus: usize,
}

impl ClassWeights {
    pub fn new(n_minus: usize, n_plus: usize) -> Result<Self> {
        if n_minus == 0 || n_plus == 0 {
            return Err(Error::ClassStarvation {
                matching: n_plus,
                unmatching: n_minus,
            });
        }
        Ok(Self { n_minus, n_plus })
    }

    pub fn matching_weight<T: Scalar>(&self) -> T {
        T::from_usize_lossy(self.n_minus) / T::from_usize_lossy(self.n_plus)
    }

    pub fn weight<T: Scalar>(&self, matching: bool) -> T {
        if matching {
            self.matching_weight()
        } else {
            T::one()
        }
    }
}

/// Log-odds target for a hard label, `±ln((1 - eps) / eps)`.
pub fn encode_logit_target<T: Scalar>(matching: bool, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero() && epsilon < T::lit(0.5)) {
        return Err(Error::Config(format!(
            "logit epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    let l = ((T::one() - epsilon) / epsilon).ln();
    Ok(if matching { l } else { -l })
}

/// Unweighted sufficient statistics of `(x, l)` observations from one evidence class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassSums<T> {
    pub n: usize,
    pub sx: T,
    pub sxx: T,
    pub sl: T,
    pub sxl: T,
    pub sll: T,
}

impl<T: Scalar> ClassSums<T> {
    pub fn add(&mut self, x: T, l: T) {
        self.n += 1;
        self.sx += x;
        self.sxx += x * x;
        self.sl += l;
        self.sxl += x * l;
        self.sll += l * l;
    }

    fn scaled(&self, w: T) -> [T; 6] {
        [
            w * T::from_usize_lossy(self.n),
            w * self.sx,
            w * self.sxx,
            w * self.sl,
            w * self.sxl,
            w * self.sll,
        ]
    }
}

/// Per-feature regression statistics, split by evidence class so that the class weights can
/// change without revisiting the observations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeatureSums<T> {
    pub unmatching: ClassSums<T>,
    pub matching: ClassSums<T>,
}

impl<T: Scalar> FeatureSums<T> {
    pub fn add(&mut self, x: T, l: T, matching: bool) {
        if matching {
            self.matching.add(x, l);
        } else {
            self.unmatching.add(x, l);
        }
    }

    pub fn n_obs(&self) -> usize {
        self.unmatching.n + self.matching.n
    }
}

/// Result of the weighted sigmoid regression for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit<T> {
    /// Midpoint, projected into `alpha_bounds`.
    pub alpha_hat: T,
    /// Steepness, clipped to `[0, tau_max]`.
    pub tau_hat: T,
    /// Residual variance of the least-squares line, `n - 2` divisor.
    pub sigma2_hat: T,
    pub x_bar: T,
    pub n_obs: usize,
    pub sum_sq_dev: T,
    pub alpha_bounds: (T, T),
    pub fittable: bool,
}

impl<T: Scalar> RegressionFit<T> {
    pub fn unfittable(n_obs: usize) -> Self {
        Self {
            alpha_hat: T::lit(0.5),
            tau_hat: T::zero(),
            sigma2_hat: T::zero(),
            x_bar: T::zero(),
            n_obs,
            sum_sq_dev: T::zero(),
            alpha_bounds: (T::zero(), T::one()),
            fittable: false,
        }
    }

    pub fn model(&self) -> SigmoidModel<T> {
        SigmoidModel {
            alpha: self.alpha_hat,
            tau: self.tau_hat,
            alpha_bounds: self.alpha_bounds,
        }
    }

    /// Standard error of a new prediction at `x`.
    pub fn prediction_se(&self, x: T) -> T {
        let n = T::from_usize_lossy(self.n_obs);
        let dx = x - self.x_bar;
        self.sigma2_hat.sqrt() * (T::one() + T::one() / n + dx * dx / self.sum_sq_dev).sqrt()
    }
}

/// Fits a feature's sigmoid from its class-split sufficient statistics.
///
/// Weighted least squares of `l` on `x` with weight 1 for unmatching and `n_-/n_+` for
/// matching observations; slope is `tau`, intercept `-tau * alpha`. The residual variance,
/// mean and spread are unweighted.
pub fn fit_from_sums<T: Scalar>(sums: &FeatureSums<T>, weights: &ClassWeights, tau_max: T) -> RegressionFit<T> {
    let n_obs = sums.n_obs();
    if n_obs < 3 || sums.matching.n == 0 || sums.unmatching.n == 0 {
        return RegressionFit::unfittable(n_obs);
    }
    let w = weights.matching_weight::<T>();
    let u = sums.unmatching.scaled(T::one());
    let m = sums.matching.scaled(w);
    let [sw, swx, swxx, swl, swxl, _] = std::array::from_fn::<T, 6, _>(|i| u[i] + m[i]);
    let m1 = sums.matching.scaled(T::one());
    let [n, sx, sxx, sl, sxl, sll] = std::array::from_fn::<T, 6, _>(|i| u[i] + m1[i]);

    let x_bar = sx / n;
    let sum_sq_dev = (sxx - sx * x_bar).max(T::zero());
    let wx_bar = swx / sw;
    let wl_bar = swl / sw;
    let w_sxx = swxx - swx * wx_bar;
    let spread_floor = T::epsilon() * T::lit(64.0) * sxx.max(T::min_positive_value());
    if sum_sq_dev <= spread_floor || w_sxx <= T::epsilon() * T::lit(64.0) * swxx {
        return RegressionFit::unfittable(n_obs);
    }
    let slope = (swxl - swx * wl_bar) / w_sxx;
    let intercept = wl_bar - slope * wx_bar;

    // Σ (l - intercept - slope x)², expanded over the unweighted sums.
    let sse = sll - T::lit(2.0) * slope * sxl - T::lit(2.0) * intercept * sl
        + slope * slope * sxx
        + T::lit(2.0) * intercept * slope * sx
        + n * intercept * intercept;
    let sigma2_hat = sse.max(T::zero()) / (n - T::lit(2.0));

    finish_fit(
        slope,
        intercept,
        (wx_bar, wl_bar),
        sigma2_hat,
        x_bar,
        sum_sq_dev,
        n_obs,
        alpha_bounds(&sums.unmatching, &sums.matching),
        tau_max,
    )
}

fn alpha_bounds<T: Scalar>(unmatching: &ClassSums<T>, matching: &ClassSums<T>) -> (T, T) {
    let lo = unmatching.sx / T::from_usize_lossy(unmatching.n);
    let hi = matching.sx / T::from_usize_lossy(matching.n);
    if lo <= hi {
        (lo, hi)
    } else {
        (hi, lo)
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_fit<T: Scalar>(
    slope: T,
    intercept: T,
    weighted_means: (T, T),
    sigma2_hat: T,
    x_bar: T,
    sum_sq_dev: T,
    n_obs: usize,
    bounds: (T, T),
    tau_max: T,
) -> RegressionFit<T> {
    let tau_hat = clamp(slope, T::zero(), tau_max);
    let midpoint = if tau_hat > T::zero() && tau_hat < slope {
        // Steepness hit the cap: the best intercept for the capped slope passes through the
        // weighted means.
        weighted_means.0 - weighted_means.1 / tau_hat
    } else if slope != T::zero() {
        -intercept / slope
    } else {
        (bounds.0 + bounds.1) / T::lit(2.0)
    };
    RegressionFit {
        alpha_hat: clamp(midpoint, bounds.0, bounds.1),
        tau_hat,
        sigma2_hat,
        x_bar,
        n_obs,
        sum_sq_dev,
        alpha_bounds: bounds,
        fittable: true,
    }
}

/// One labeled observation of a feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub x: T,
    pub target: T,
    pub matching: bool,
}

/// Two-pass weighted regression over explicit observations.
///
/// Same estimator as [`fit_from_sums`], computed from centered deviations; used as the
/// reference the incremental path is checked against.
pub fn fit_sigmoid_regression<T: Scalar>(
    observations: &[Observation<T>],
    weights: &ClassWeights,
    tau_max: T,
) -> RegressionFit<T> {
    let n_obs = observations.len();
    let n_match = observations.iter().filter(|o| o.matching).count();
    if n_obs < 3 || n_match == 0 || n_match == n_obs {
        return RegressionFit::unfittable(n_obs);
    }
    let wt = |o: &Observation<T>| weights.weight::<T>(o.matching);
    let sw: T = observations.iter().map(wt).sum();
    let wx_bar = observations.iter().map(|o| wt(o) * o.x).sum::<T>() / sw;
    let wl_bar = observations.iter().map(|o| wt(o) * o.target).sum::<T>() / sw;
    let w_sxx: T = observations.iter().map(|o| wt(o) * (o.x - wx_bar).powi(2)).sum();
    let w_sxl: T = observations
        .iter()
        .map(|o| wt(o) * (o.x - wx_bar) * (o.target - wl_bar))
        .sum();

    let n = T::from_usize_lossy(n_obs);
    let x_bar = observations.iter().map(|o| o.x).sum::<T>() / n;
    let sum_sq_dev: T = observations.iter().map(|o| (o.x - x_bar).powi(2)).sum();
    if sum_sq_dev <= T::zero() || w_sxx <= T::zero() {
        return RegressionFit::unfittable(n_obs);
    }
    let slope = w_sxl / w_sxx;
    let intercept = wl_bar - slope * wx_bar;
    let sse: T = observations
        .iter()
        .map(|o| (o.target - intercept - slope * o.x).powi(2))
        .sum();

    let mut unmatching = ClassSums::default();
    let mut matching = ClassSums::default();
    for o in observations {
        if o.matching {
            matching.add(o.x, o.target);
        } else {
            unmatching.add(o.x, o.target);
        }
    }
    finish_fit(
        slope,
        intercept,
        (wx_bar, wl_bar),
        sse / (n - T::lit(2.0)),
        x_bar,
        sum_sq_dev,
        n_obs,
        alpha_bounds(&unmatching, &matching),
        tau_max,
    )
}

/// Confidence that the regression's prediction at `x` lies within `error_bound` of the true
/// log-odds: `2 F_t(error_bound / se(x); n - 2) - 1`.
///
/// The spread term uses the squared deviation `(x - x̄)² / Σ(x_i - x̄)²`. Unfittable fits give 0
/// and a zero residual variance gives 1.
pub fn regression_confidence<T: Scalar>(fit: &RegressionFit<T>, x: T, error_bound: T) -> T {
    match ConfidenceKernel::new(fit, error_bound) {
        Some(kernel) => kernel.theta(x),
        None => T::zero(),
    }
}

/// Maps a feature value to the standardized error bound `δ / se(x)`, where
/// `se(x) = σ √(1 + 1/n + (x - x̄)² / ssd)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer<T> {
    /// `δ / σ`.
    scale: T,
    /// `1 + 1/n`.
    spread0: T,
    x_bar: T,
    inv_ssd: T,
}

impl<T: Scalar> Standardizer<T> {
    #[inline]
    fn spread(&self, x: T) -> (T, T) {
        let dx = x - self.x_bar;
        (dx, self.spread0 + dx * dx * self.inv_ssd)
    }

    #[inline]
    pub fn statistic(&self, x: T) -> T {
        self.scale / self.spread(x).1.sqrt()
    }
}

/// [`regression_confidence`] with the per-fit work (t distribution constants) hoisted out.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceKernel<T> {
    stat: Standardizer<T>,
    dist: Option<StudentT<T>>,
    df: usize,
}

impl<T: Scalar> ConfidenceKernel<T> {
    /// `None` when the fit carries no confidence at all (unfittable or too few observations).
    pub fn new(fit: &RegressionFit<T>, error_bound: T) -> Option<Self> {
        Self::build(fit, error_bound, None)
    }

    /// [`Self::new`] reusing an already constructed error distribution, which must have
    /// `fit.n_obs - 2` degrees of freedom.
    pub fn with_distribution(fit: &RegressionFit<T>, error_bound: T, dist: &StudentT<T>) -> Option<Self> {
        Self::build(fit, error_bound, Some(dist))
    }

    fn build(fit: &RegressionFit<T>, error_bound: T, dist: Option<&StudentT<T>>) -> Option<Self> {
        if !fit.fittable || fit.n_obs < 3 || !(error_bound > T::zero()) {
            return None;
        }
        let saturated = fit.sigma2_hat <= T::zero();
        Some(Self {
            stat: Standardizer {
                scale: error_bound / fit.sigma2_hat.sqrt(),
                spread0: T::one() + T::one() / T::from_usize_lossy(fit.n_obs),
                x_bar: fit.x_bar,
                inv_ssd: T::one() / fit.sum_sq_dev,
            },
            dist: match (saturated, dist) {
                (true, _) => None,
                (false, Some(d)) => Some(*d),
                (false, None) => Some(StudentT::new(fit.n_obs - 2).ok()?),
            },
            df: fit.n_obs - 2,
        })
    }

    /// Degrees of freedom of the error distribution; `None` when saturated.
    pub fn df(&self) -> Option<usize> {
        self.dist.as_ref().map(|_| self.df)
    }

    /// `None` when saturated.
    pub fn standardizer(&self) -> Option<Standardizer<T>> {
        self.dist.as_ref().map(|_| self.stat)
    }

    /// Standardized error bound `δ / se(x)`; `None` when saturated.
    #[inline]
    pub fn statistic(&self, x: T) -> Option<T> {
        self.dist.as_ref()?;
        Some(self.stat.statistic(x))
    }

    /// Two-sided tail `1 - theta`, accurate when theta is close to 1.
    pub fn tail(&self, x: T) -> T {
        match &self.dist {
            None => T::zero(),
            Some(dist) => dist.two_sided_tail(self.stat.statistic(x)),
        }
    }

    pub fn theta(&self, x: T) -> T {
        T::one() - self.tail(x)
    }

    /// `ln((1 + θ) / (1 - θ))`: the normalized support `(1 + θ) / 2` on the log-odds scale,
    /// where combining supports becomes addition. Infinite when θ = 1.
    pub fn log_support(&self, x: T) -> T {
        let q = self.tail(x);
        (T::lit(2.0) - q).ln() - q.ln()
    }

    /// The error distribution itself.
    pub fn distribution(&self) -> Option<&StudentT<T>> {
        self.dist.as_ref()
    }

    /// [`Self::log_support`] and its derivative in `x`.
    pub fn log_support_with_slope(&self, x: T) -> (T, T) {
        let Some(dist) = &self.dist else {
            return (T::infinity(), T::zero());
        };
        let (dx, spread) = self.stat.spread(x);
        let t = self.stat.scale / spread.sqrt();
        let q = dist.two_sided_tail(t);
        let two = T::lit(2.0);
        let g = (two - q).ln() - q.ln();
        // dg/dq = -2 / (q (2 - q)), dq/dt = -2 f(t), dt/dx = -t dx / (ssd · spread)
        let dt_dx = -t * dx * self.stat.inv_ssd / spread;
        let slope = T::lit(4.0) * (dist.ln_density(t) - q.ln()).exp() / (two - q) * dt_dx;
        (g, slope)
    }
}

/// Confidence-scaled factor weight `theta * tau * (x - alpha)`.
pub fn factor_weight<T: Scalar>(model: &SigmoidModel<T>, x: T, theta: T) -> T {
    theta * model.log_odds(x)
}
