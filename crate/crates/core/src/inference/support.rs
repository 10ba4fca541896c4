//! Evidential support: per-feature regression confidence, Dempster combination, top-m.
//!
//! Normalized supports `θ' = (1 + θ) / 2` combine by Dempster's rule,
//! `Π θ' / (Π θ' + Π (1 - θ'))`. On the log-odds scale that rule is a plain sum of
//! `ln(θ' / (1 - θ')) = ln((1 + θ) / (1 - θ))`, which is what the loop accumulates: it cannot
//! underflow and orders pairs exactly as the combined support does.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::influence::{ConfidenceKernel, RegressionFit, SigmoidModel, Standardizer};
use crate::scalar::logistic;
use crate::special::StudentT;
use crate::Scalar;

use super::graph::FactorGraph;

/// `(1 + θ) / 2`.
pub fn normalized_support<T: Scalar>(theta: T) -> T {
    (T::one() + theta) / T::lit(2.0)
}

/// Dempster's rule over normalized supports; 0.5 for no operands.
pub fn ds_combine<T: Scalar>(supports: &[T]) -> T {
    let mut agree = T::one();
    let mut disagree = T::one();
    for &s in supports {
        agree *= s;
        disagree *= T::one() - s;
    }
    if agree + disagree == T::zero() {
        // every operand is 0 or 1 with both present; the rule is undefined, stay neutral
        return T::lit(0.5);
    }
    agree / (agree + disagree)
}

/// Combined support from a sum of per-feature log supports.
pub fn combined_from_log_support<T: Scalar>(sum: T) -> T {
    if sum == T::infinity() {
        T::one()
    } else {
        logistic(sum)
    }
}

/// Pieces tried by the tabulated kernel before it gives up and evaluates exactly.
const TABLE_PIECES: [usize; 5] = [16, 32, 64, 128, 256];

/// Confidence and influence of one feature under its current fit.
#[derive(Debug, Clone)]
pub struct FeatureKernel<T> {
    pub fit: RegressionFit<T>,
    pub model: SigmoidModel<T>,
    mode: Mode<T>,
}

#[derive(Debug, Clone)]
enum Mode<T> {
    /// Unfittable: θ = 0 everywhere.
    Inert,
    /// Zero residual variance: θ = 1 everywhere.
    Saturated,
    Exact(ConfidenceKernel<T>),
    /// Piecewise cubic Hermite interpolant of the log support on `[0, 1]`, checked against
    /// the exact kernel at every piece midpoint when built.
    Table { coeffs: Vec<[T; 4]>, kernel: ConfidenceKernel<T> },
    /// Log support looked up by the standardized error bound in a table shared by every fit
    /// with the same degrees of freedom.
    Tail { table: Arc<TailTable<T>>, kernel: ConfidenceKernel<T> },
}

impl<T: Scalar> FeatureKernel<T> {
    pub fn exact(fit: &RegressionFit<T>, error_bound: T) -> Self {
        let mode = match ConfidenceKernel::new(fit, error_bound) {
            None => Mode::Inert,
            Some(_) if fit.sigma2_hat <= T::zero() => Mode::Saturated,
            Some(k) => Mode::Exact(k),
        };
        Self {
            fit: *fit,
            model: fit.model(),
            mode,
        }
    }

    /// Like [`Self::exact`] but answers from an interpolation table when one reproduces the
    /// exact log support within a relative `1e-10` (or a few hundred ulps for `f32`).
    pub fn tabulated(fit: &RegressionFit<T>, error_bound: T) -> Self {
        let mut k = Self::exact(fit, error_bound);
        if let Mode::Exact(kernel) = k.mode {
            if let Some(coeffs) = build_table(&kernel) {
                k.mode = Mode::Table { coeffs, kernel };
            }
        }
        k
    }

    /// Like [`Self::exact`] but answers from the shared per-df table in `tails` if one has
    /// been built for this fit's degrees of freedom.
    pub fn with_tail_table(fit: &RegressionFit<T>, error_bound: T, tails: &TailTables<T>) -> Self {
        let table = (fit.sigma2_hat > T::zero() && fit.n_obs >= 3)
            .then(|| tails.get(fit.n_obs - 2))
            .flatten();
        let Some(table) = table else {
            return Self::exact(fit, error_bound);
        };
        let mode = match ConfidenceKernel::with_distribution(fit, error_bound, &table.dist) {
            None => Mode::Inert,
            Some(kernel) => Mode::Tail { table: table.clone(), kernel },
        };
        Self {
            fit: *fit,
            model: fit.model(),
            mode,
        }
    }

    fn hot(&self) -> HotKernel<T> {
        match &self.mode {
            Mode::Inert => HotKernel::Zero,
            Mode::Tail { table, kernel } => match kernel.standardizer() {
                Some(stat) => HotKernel::Shared { table: table.clone(), stat },
                None => HotKernel::Other,
            },
            _ => HotKernel::Other,
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self.mode, Mode::Inert)
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.mode, Mode::Table { .. } | Mode::Tail { .. })
    }

    /// `ln((1 + θ) / (1 - θ))` at `x`: 0 when inert, infinite when saturated.
    #[inline]
    pub fn log_support(&self, x: T) -> T {
        match &self.mode {
            Mode::Inert => T::zero(),
            Mode::Saturated => T::infinity(),
            Mode::Exact(k) => k.log_support(x),
            Mode::Table { coeffs, .. } => eval_table(coeffs, x),
            Mode::Tail { table, kernel } => tail_lookup(table, kernel, x),
        }
    }

    /// Regression confidence θ at `x`.
    #[inline]
    pub fn theta(&self, x: T) -> T {
        match &self.mode {
            Mode::Inert => T::zero(),
            Mode::Saturated => T::one(),
            Mode::Exact(k) => k.theta(x),
            Mode::Table { coeffs, .. } => (eval_table(coeffs, x) / T::lit(2.0)).tanh(),
            Mode::Tail { table, kernel } => (tail_lookup(table, kernel, x) / T::lit(2.0)).tanh(),
        }
    }

    /// Exact θ regardless of tabulation.
    pub fn theta_exact(&self, x: T) -> T {
        match &self.mode {
            Mode::Inert => T::zero(),
            Mode::Saturated => T::one(),
            Mode::Exact(k) | Mode::Table { kernel: k, .. } | Mode::Tail { kernel: k, .. } => k.theta(x),
        }
    }

    /// Confidence-scaled factor weight `θ τ (x - α)`.
    #[inline]
    pub fn weight(&self, x: T) -> T {
        match self.mode {
            Mode::Inert => T::zero(),
            _ => self.theta(x) * self.model.log_odds(x),
        }
    }
}

fn table_tolerance<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(512.0))
}

fn build_table<T: Scalar>(kernel: &ConfidenceKernel<T>) -> Option<Vec<[T; 4]>> {
    hermite_table(&TABLE_PIECES, T::one(), |x| kernel.log_support_with_slope(x))
}

/// Cubic Hermite pieces for `f` on `[0, span]`, with `f` returning value and derivative.
/// The first piece count whose midpoints all agree with `f` wins.
fn hermite_table<T: Scalar>(piece_counts: &[usize], span: T, f: impl Fn(T) -> (T, T)) -> Option<Vec<[T; 4]>> {
    let tol = table_tolerance::<T>();
    'pieces: for &pieces in piece_counts {
        let h = span / T::from_usize_lossy(pieces);
        let nodes: Vec<(T, T)> = (0..=pieces).map(|i| f(T::from_usize_lossy(i) * h)).collect();
        if nodes.iter().any(|(g, d)| !g.is_finite() || !d.is_finite()) {
            return None;
        }
        let coeffs: Vec<[T; 4]> = nodes
            .windows(2)
            .map(|w| {
                let ((g0, d0), (g1, d1)) = (w[0], w[1]);
                let (m0, m1) = (d0 * h, d1 * h);
                let three = T::lit(3.0);
                let two = T::lit(2.0);
                [g0, m0, three * (g1 - g0) - two * m0 - m1, two * (g0 - g1) + m0 + m1]
            })
            .collect();
        for i in 0..pieces {
            let x = (T::from_usize_lossy(i) + T::lit(0.5)) * h;
            let exact = f(x).0;
            if (eval_table(&coeffs, x / span) - exact).abs() > tol * (T::one() + exact.abs()) {
                continue 'pieces;
            }
        }
        return Some(coeffs);
    }
    None
}

/// Piece counts tried for a per-df table.
const TAIL_PIECES: [usize; 6] = [16, 32, 64, 128, 256, 512];

/// Per-df tables cover `0 ≤ t ≤ TAIL_RANGE`; larger statistics are evaluated exactly.
const TAIL_RANGE: f64 = 12.0;

/// `ln((1 + θ) / (1 - θ))` for a Student t error distribution, as a function of the
/// standardized error bound `t`. Quintic Hermite pieces matching value, slope and curvature
/// at the nodes keep the table small enough to stay cached.
#[derive(Debug)]
pub struct TailTable<T> {
    dist: StudentT<T>,
    coeffs: Vec<[T; 6]>,
}

impl<T: Scalar> TailTable<T> {
    pub fn build(dist: &StudentT<T>) -> Option<Self> {
        let (one, two) = (T::one(), T::lit(2.0));
        let nu = dist.df();
        // g' = 4 density / (q (2 - q)), g'' = g' · dlog density/dt + g'^2 (1 - q)
        let f = |t: T| {
            let q = dist.two_sided_tail(t);
            let g = (two - q).ln() - q.ln();
            let d1 = T::lit(4.0) * (dist.ln_density(t) - q.ln()).exp() / (two - q);
            let d2 = d1 * (-(nu + one) * t / (nu + t * t)) + d1 * d1 * (one - q);
            [g, d1, d2]
        };
        let range = T::lit(TAIL_RANGE);
        let tol = table_tolerance::<T>();
        'pieces: for &pieces in &TAIL_PIECES {
            let h = range / T::from_usize_lossy(pieces);
            let nodes: Vec<[T; 3]> = (0..=pieces).map(|i| f(T::from_usize_lossy(i) * h)).collect();
            if nodes.iter().flatten().any(|v| !v.is_finite()) {
                return None;
            }
            let coeffs: Vec<[T; 6]> = nodes.windows(2).map(|w| quintic_piece(w[0], w[1], h)).collect();
            let table = Self { dist: *dist, coeffs };
            for i in 0..pieces {
                let t = (T::from_usize_lossy(i) + T::lit(0.5)) * h;
                let exact = f(t)[0];
                if (table.eval_unchecked(t) - exact).abs() > tol * (one + exact.abs()) {
                    continue 'pieces;
                }
            }
            return Some(table);
        }
        None
    }

    pub fn pieces(&self) -> usize {
        self.coeffs.len()
    }

    /// `None` outside the tabulated range.
    #[inline]
    pub fn eval(&self, t: T) -> Option<T> {
        (t <= T::lit(TAIL_RANGE)).then(|| self.eval_unchecked(t))
    }

    #[inline]
    fn eval_unchecked(&self, t: T) -> T {
        let pieces = self.coeffs.len();
        let u = clamp_unit(t / T::lit(TAIL_RANGE)) * T::from_usize_lossy(pieces);
        let i = u.to_usize().unwrap_or(0).min(pieces - 1);
        let s = u - T::from_usize_lossy(i);
        let c = &self.coeffs[i];
        c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))))
    }
}

/// Power-basis coefficients on `[0, 1]` of the quintic matching `[value, d1, d2]` at both
/// ends of a piece of width `h`.
fn quintic_piece<T: Scalar>(a: [T; 3], b: [T; 3], h: T) -> [T; 6] {
    let lit = T::lit;
    let dp = b[0] - a[0];
    let (m0, m1) = (a[1] * h, b[1] * h);
    let (c0, c1) = (a[2] * h * h, b[2] * h * h);
    [
        a[0],
        m0,
        c0 / lit(2.0),
        lit(10.0) * dp - lit(6.0) * m0 - lit(4.0) * m1 - (lit(3.0) * c0 - c1) / lit(2.0),
        lit(-15.0) * dp + lit(8.0) * m0 + lit(7.0) * m1 + (lit(3.0) * c0 - lit(2.0) * c1) / lit(2.0),
        lit(6.0) * dp - lit(3.0) * m0 - lit(3.0) * m1 - (c0 - c1) / lit(2.0),
    ]
}

#[inline]
fn tail_lookup<T: Scalar>(table: &TailTable<T>, kernel: &ConfidenceKernel<T>, x: T) -> T {
    match kernel.statistic(x).and_then(|t| table.eval(t)) {
        Some(g) => g,
        None => kernel.log_support(x),
    }
}

#[derive(Debug, Clone)]
enum TailSlot<T> {
    Unbuilt,
    Failed,
    Built(Arc<TailTable<T>>),
}

/// Per-df tables, built on first request and kept for the rest of a run.
#[derive(Debug, Clone, Default)]
pub struct TailTables<T> {
    slots: Vec<TailSlot<T>>,
}

impl<T: Scalar> TailTables<T> {
    pub fn new() -> Self {
        Self { slots: Vec::new() }
    }

    pub fn get(&self, df: usize) -> Option<&Arc<TailTable<T>>> {
        match self.slots.get(df) {
            Some(TailSlot::Built(t)) => Some(t),
            _ => None,
        }
    }

    /// Builds the table for `df` unless already attempted.
    pub fn ensure(&mut self, df: usize) {
        if self.slots.len() <= df {
            self.slots.resize(df + 1, TailSlot::Unbuilt);
        }
        if matches!(self.slots[df], TailSlot::Unbuilt) {
            let table = StudentT::new(df).ok().and_then(|d| TailTable::build(&d));
            self.slots[df] = table.map_or(TailSlot::Failed, |t| TailSlot::Built(Arc::new(t)));
        }
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, TailSlot::Built(_))).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[inline]
fn eval_table<T: Scalar>(coeffs: &[[T; 4]], x: T) -> T {
    let pieces = coeffs.len();
    let u = clamp_unit(x) * T::from_usize_lossy(pieces);
    let i = u.to_usize().unwrap_or(0).min(pieces - 1);
    let s = u - T::from_usize_lossy(i);
    let c = &coeffs[i];
    c[0] + s * (c[1] + s * (c[2] + s * c[3]))
}

#[inline]
fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

/// Largest degrees of freedom served by shared per-df tables. Fits beyond it get a table of
/// their own, rebuilt whenever the fit changes.
pub const SHARED_TABLE_MAX_DF: usize = 4096;

fn shared_table_df<T: Scalar>(fit: &RegressionFit<T>) -> Option<usize> {
    let df = fit.n_obs.checked_sub(2)?;
    (fit.fittable && (1..=SHARED_TABLE_MAX_DF).contains(&df) && fit.sigma2_hat > T::zero()).then_some(df)
}

fn kernel_for<T: Scalar>(fit: &RegressionFit<T>, error_bound: T, tails: &TailTables<T>) -> FeatureKernel<T> {
    if shared_table_df(fit).is_some() {
        FeatureKernel::with_tail_table(fit, error_bound, tails)
    } else {
        FeatureKernel::tabulated(fit, error_bound)
    }
}

/// Builds kernels for every feature from scratch, growing `tails` as new degrees of freedom
/// show up.
pub fn build_kernels<T: Scalar>(fits: &[RegressionFit<T>], error_bound: T, tails: &mut TailTables<T>) -> Vec<FeatureKernel<T>> {
    use rayon::prelude::*;
    for fit in fits {
        if let Some(df) = shared_table_df(fit) {
            tails.ensure(df);
        }
    }
    let tails: &TailTables<T> = tails;
    fits.par_iter().map(|fit| kernel_for(fit, error_bound, tails)).collect()
}

/// Per-feature confidences and the combined support of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialSupport<T> {
    pub pair: usize,
    /// `(feature, θ)` for every feature of the pair; unfittable features report 0.
    pub per_feature: Vec<(usize, T)>,
    pub combined: T,
}

pub fn pair_support<T: Scalar>(graph: &FactorGraph<T>, kernels: &[FeatureKernel<T>], pair: usize) -> EvidentialSupport<T> {
    let per_feature: Vec<(usize, T)> = graph.edges(pair).map(|(f, x)| (f, kernels[f].theta(x))).collect();
    let supports: Vec<T> = per_feature.iter().map(|&(_, t)| normalized_support(t)).collect();
    EvidentialSupport {
        pair,
        combined: ds_combine(&supports),
        per_feature,
    }
}

/// Summed log support of each pair in `pairs`.
pub fn measure_log_support<T: Scalar>(graph: &FactorGraph<T>, kernels: &[FeatureKernel<T>], pairs: &[usize]) -> Vec<T> {
    use rayon::prelude::*;
    pairs
        .par_iter()
        .with_min_len(1024)
        .map(|&d| graph.edges(d).map(|(f, x)| kernels[f].log_support(x)).fold(T::zero(), |a, b| a + b))
        .collect()
}

/// The part of a kernel read for every edge, kept apart so the scan stays in cache.
#[derive(Debug, Clone)]
enum HotKernel<T> {
    Zero,
    Shared { table: Arc<TailTable<T>>, stat: Standardizer<T> },
    Other,
}

/// Fits, kernels and per-edge log supports carried from one iteration to the next.
///
/// A kernel is rebuilt only when its feature's fit changed, and an edge is re-evaluated only
/// when its kernel was rebuilt, so [`Self::update`] returns exactly what
/// [`measure_log_support`] over freshly built kernels would.
#[derive(Debug, Clone)]
pub struct SupportCache<T> {
    error_bound: T,
    fits: Vec<RegressionFit<T>>,
    kernels: Vec<FeatureKernel<T>>,
    hot: Vec<HotKernel<T>>,
    changed: Vec<bool>,
    edge_support: Vec<T>,
    tails: TailTables<T>,
}

impl<T: Scalar> SupportCache<T> {
    pub fn new(error_bound: T) -> Self {
        Self {
            error_bound,
            fits: Vec::new(),
            kernels: Vec::new(),
            hot: Vec::new(),
            changed: Vec::new(),
            edge_support: Vec::new(),
            tails: TailTables::new(),
        }
    }

    /// Rebuilds the kernels whose fit differs from the previous call, then returns the
    /// summed log support of each pair in `unlabeled`, which must list every unlabeled pair.
    pub fn update(&mut self, graph: &FactorGraph<T>, fits: Vec<RegressionFit<T>>, unlabeled: &[usize]) -> Vec<T> {
        use rayon::prelude::*;
        let fresh = self.fits.len() != fits.len();
        if fresh {
            self.edge_support = vec![T::zero(); graph.edge_count()];
            self.changed = vec![true; fits.len()];
        } else {
            for (c, (new, old)) in self.changed.iter_mut().zip(fits.iter().zip(&self.fits)) {
                *c = new != old;
            }
        }
        let changed: Vec<usize> = (0..fits.len()).filter(|&f| self.changed[f]).collect();
        for &f in &changed {
            if let Some(df) = shared_table_df(&fits[f]) {
                self.tails.ensure(df);
            }
        }
        let (eb, tails) = (self.error_bound, &self.tails);
        let rebuilt: Vec<FeatureKernel<T>> = changed.par_iter().map(|&f| kernel_for(&fits[f], eb, tails)).collect();
        if fresh {
            self.hot = rebuilt.iter().map(FeatureKernel::hot).collect();
            self.kernels = rebuilt;
        } else {
            for (&f, k) in changed.iter().zip(rebuilt) {
                self.hot[f] = k.hot();
                self.kernels[f] = k;
            }
        }
        self.fits = fits;

        let (kernels, hot, flags, cache) = (&self.kernels, &self.hot, &self.changed, &mut self.edge_support);
        unlabeled
            .iter()
            .map(|&d| {
                let r = graph.edge_range(d);
                let start = r.start;
                let mut sum = T::zero();
                for (i, (f, x)) in graph.edges(d).enumerate() {
                    let slot = &mut cache[start + i];
                    if flags[f] {
                        *slot = match &hot[f] {
                            HotKernel::Zero => T::zero(),
                            HotKernel::Shared { table, stat } => match table.eval(stat.statistic(x)) {
                                Some(g) => g,
                                None => kernels[f].log_support(x),
                            },
                            HotKernel::Other => kernels[f].log_support(x),
                        };
                    }
                    sum += *slot;
                }
                sum
            })
            .collect()
    }

    pub fn kernels(&self) -> &[FeatureKernel<T>] {
        &self.kernels
    }

    /// Per-df tables built so far.
    pub fn shared_tables(&self) -> usize {
        self.tails.len()
    }
}

/// Orders by descending score, ties by ascending rank.
pub(crate) fn by_score_desc<T: Scalar>(a: (T, u32), b: (T, u32)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Indices of the `m` best-supported candidates, best first; ties go to the lower rank.
///
/// `scores[i]` and `ranks[i]` describe candidate `i`.
pub fn select_top_m<T: Scalar>(scores: &[T], ranks: &[u32], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = |&a: &usize, &b: &usize| by_score_desc((scores[a], ranks[a]), (scores[b], ranks[b]));
    if m < idx.len() && m > 0 {
        idx.select_nth_unstable_by(m - 1, cmp);
        idx.truncate(m);
    }
    idx.truncate(m);
    idx.sort_by(cmp);
    idx
}
