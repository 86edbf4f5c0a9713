//! Mean waiting time at a charging station.
//!
//! Arrivals are Poisson. The exact multi-server exponential wait (Erlang C)
//! and a corrected deterministic-service wait are combined by a two-moment
//! interpolation in the squared service-time variability, giving the general
//! service estimate used for station utilization.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to the utilization scale `C1`, in hours.
pub const C1_FLOOR_HOURS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("unstable queue: rho = {rho:.4} >= 1")]
    Unstable { rho: f64 },
    #[error("invalid queue parameters: {0}")]
    InvalidParams(&'static str),
    #[error("deterministic single-server limit is singular (2*W_MD - W_MM = 0)")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    /// Arrivals per hour.
    pub lambda: f64,
    /// Services per hour per charger.
    pub mu: f64,
    /// Standard deviation of the charging time, hours.
    pub sigma_t: f64,
    pub servers: usize,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, sigma_t: f64, servers: usize) -> Self {
        Self { lambda, mu, sigma_t, servers }
    }

    pub fn rho(&self) -> f64 {
        self.lambda / (self.servers as f64 * self.mu)
    }

    /// Coefficient of variation of the service time.
    pub fn cv(&self) -> f64 {
        self.sigma_t * self.mu
    }
}

fn check(lambda: f64, mu: f64, s: usize) -> Result<(), QueueError> {
    if s == 0 {
        return Err(QueueError::InvalidParams("at least one server required"));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(QueueError::InvalidParams("service rate must be positive"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(QueueError::InvalidParams("arrival rate must be non-negative"));
    }
    let rho = lambda / (s as f64 * mu);
    if rho >= 1.0 {
        return Err(QueueError::Unstable { rho });
    }
    Ok(())
}

/// Erlang C probability that an arrival has to wait, via the Erlang B
/// recursion (stable for large `s`).
pub fn erlang_c(lambda: f64, mu: f64, s: usize) -> Result<f64, QueueError> {
    check(lambda, mu, s)?;
    let a = lambda / mu;
    let mut b = 1.0;
    for n in 1..=s {
        b = a * b / (n as f64 + a * b);
    }
    let sf = s as f64;
    Ok(sf * b / (sf - a * (1.0 - b)))
}

/// Exact mean queueing delay of M/M/s, hours.
pub fn w_mms(lambda: f64, mu: f64, s: usize) -> Result<f64, QueueError> {
    if lambda == 0.0 {
        check(lambda, mu, s)?;
        return Ok(0.0);
    }
    let c = erlang_c(lambda, mu, s)?;
    Ok(c / (s as f64 * mu - lambda))
}

/// Correction factor `H(s)` of the deterministic-service approximation.
pub fn cosmetatos_h(s: usize) -> f64 {
    let s = s as f64;
    (s - 1.0) / (16.0 * s) * (((10.0 * s + 8.0) / 2.0).sqrt() - 2.0)
}

/// Approximate mean queueing delay of M/D/s, hours. Exact for `s = 1`.
pub fn w_mds(lambda: f64, mu: f64, s: usize) -> Result<f64, QueueError> {
    let wmm = w_mms(lambda, mu, s)?;
    Ok(mds_bracket(lambda, mu, s) * wmm)
}

fn mds_bracket(lambda: f64, mu: f64, s: usize) -> f64 {
    if s == 1 || lambda == 0.0 {
        return 0.5;
    }
    let h = cosmetatos_h(s);
    let slack = s as f64 * mu - lambda;
    let sf = s as f64;
    let exponent = -lambda * (sf - 1.0) / (h * slack * (sf + 1.0));
    0.5 * (1.0 + h * slack / lambda * (1.0 - exponent.exp()))
}

/// How the variability parameter is obtained from the charging-time spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiConvention {
    /// Coefficient of variation: `sigma_t * mu`.
    #[default]
    Cv,
    /// `mu / sigma_t`, with the infinite-variability limit when `sigma_t = 0`.
    MuOverSigma,
}

impl std::str::FromStr for XiConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cv" => Ok(Self::Cv),
            "mu_over_sigma" => Ok(Self::MuOverSigma),
            other => Err(format!("unknown xi convention `{other}` (expected cv or mu_over_sigma)")),
        }
    }
}

/// Two-moment interpolation between the exponential and deterministic waits.
pub fn interpolate(w_mm: f64, w_md: f64, xi: f64) -> f64 {
    let x2 = xi * xi;
    let den = 2.0 * x2 * w_md + (1.0 - x2) * w_mm;
    if den == 0.0 {
        return 0.0;
    }
    (1.0 + x2) * w_mm * w_md / den
}

/// Limit of [`interpolate`] as `xi → ∞`.
pub fn interpolate_limit(w_mm: f64, w_md: f64) -> Result<f64, QueueError> {
    let den = 2.0 * w_md - w_mm;
    if den <= 0.0 {
        return Err(QueueError::Singular);
    }
    Ok(w_mm * w_md / den)
}

/// Approximate mean queueing delay of M/G/s, hours.
pub fn w_mgs(params: &QueueParams, convention: XiConvention) -> Result<f64, QueueError> {
    let QueueParams { lambda, mu, sigma_t, servers } = *params;
    if !(sigma_t.is_finite() && sigma_t >= 0.0) {
        return Err(QueueError::InvalidParams("service-time deviation must be non-negative"));
    }
    check(lambda, mu, servers)?;
    if convention == XiConvention::MuOverSigma && sigma_t == 0.0 && servers == 1 {
        return Err(QueueError::Singular);
    }
    let wmm = w_mms(lambda, mu, servers)?;
    if wmm == 0.0 {
        return Ok(0.0);
    }
    let wmd = w_mds(lambda, mu, servers)?;
    match convention {
        XiConvention::Cv => Ok(interpolate(wmm, wmd, params.cv())),
        XiConvention::MuOverSigma if sigma_t == 0.0 => interpolate_limit(wmm, wmd),
        XiConvention::MuOverSigma => Ok(interpolate(wmm, wmd, mu / sigma_t)),
    }
}

/// Maps a waiting time onto `[0, 1)`.
pub fn utilization(wait_hours: f64, c1_hours: f64) -> f64 {
    let c1 = c1_hours.max(C1_FLOOR_HOURS);
    if wait_hours.is_infinite() {
        return 1.0;
    }
    let w = wait_hours.max(0.0);
    w / (c1 + w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingCoefficients {
    pub c2: f64,
    pub c3: f64,
}

impl Default for MatchingCoefficients {
    fn default() -> Self {
        Self { c2: -1.0, c3: 1.0 }
    }
}

/// Closeness of a station utilization level to a taxi's post-trip SOC.
pub fn matching_degree(utilization: f64, soc_after: f64, coeffs: MatchingCoefficients) -> f64 {
    let d = utilization - soc_after;
    coeffs.c2 * d * d + coeffs.c3
}

/// Rolling charging statistics for one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationStats {
    arrivals: VecDeque<f64>,
    samples: VecDeque<f64>,
    window_len: usize,
}

/// Trailing window over which arrivals are counted, seconds.
pub const ARRIVAL_WINDOW_SECONDS: f64 = 3600.0;

impl StationStats {
    /// `window_len` bounds the number of retained charging-time samples.
    pub fn new(window_len: usize) -> Self {
        Self { arrivals: VecDeque::new(), samples: VecDeque::new(), window_len: window_len.max(1) }
    }

    /// Records an arrival at `now` (seconds) and prunes the trailing hour.
    pub fn record_arrival(&mut self, now: f64) {
        self.arrivals.push_back(now);
        self.prune(now);
    }

    pub fn prune(&mut self, now: f64) {
        while self.arrivals.front().is_some_and(|&t| t <= now - ARRIVAL_WINDOW_SECONDS) {
            self.arrivals.pop_front();
        }
    }

    /// Appends a charging duration in hours. Non-positive durations carry no
    /// service information and are ignored.
    pub fn record_charge(&mut self, hours: f64) {
        if hours > 0.0 && hours.is_finite() {
            if self.samples.len() == self.window_len {
                self.samples.pop_front();
            }
            self.samples.push_back(hours);
        }
    }

    pub fn arrivals_last_hour(&self) -> usize {
        self.arrivals.len()
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }
}

/// Service statistics used before a station has any charging samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceDefaults {
    pub mean_hours: f64,
    pub sigma_hours: f64,
}

/// λ from the trailing-hour arrival count; μ and the deviation from the
/// sample window (population standard deviation).
pub fn estimate_params(stats: &StationStats, servers: usize, defaults: ServiceDefaults) -> QueueParams {
    let lambda = stats.arrivals_last_hour() as f64;
    let n = stats.samples.len();
    if n == 0 {
        return QueueParams::new(lambda, 1.0 / defaults.mean_hours, defaults.sigma_hours, servers);
    }
    let mean = stats.samples().sum::<f64>() / n as f64;
    let var = stats.samples().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    QueueParams::new(lambda, 1.0 / mean, var.sqrt(), servers)
}

/// Service-time law for [`des_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceLaw {
    Exponential,
    Deterministic,
    /// Sum of `k` exponential phases; CV = 1/√k.
    Erlang(u32),
}

impl ServiceLaw {
    pub fn cv(&self) -> f64 {
        match self {
            ServiceLaw::Exponential => 1.0,
            ServiceLaw::Deterministic => 0.0,
            ServiceLaw::Erlang(k) => 1.0 / (*k as f64).sqrt(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ServiceLaw::Exponential => "exponential".into(),
            ServiceLaw::Deterministic => "deterministic".into(),
            ServiceLaw::Erlang(k) => format!("erlang{k}"),
        }
    }
}

/// Mean wait in queue of a simulated FIFO multi-server queue with Poisson
/// arrivals, starting empty. Deterministic for a fixed seed.
pub fn des_oracle(
    lambda: f64,
    mu: f64,
    law: ServiceLaw,
    servers: usize,
    n_arrivals: usize,
    seed: u64,
) -> Result<f64, QueueError> {
    check(lambda, mu, servers)?;
    if n_arrivals == 0 || lambda == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inter = Exp::new(lambda).map_err(|_| QueueError::InvalidParams("arrival rate"))?;
    let exp_service = Exp::new(mu).map_err(|_| QueueError::InvalidParams("service rate"))?;
    let erlang = match law {
        ServiceLaw::Erlang(k) if k > 0 => Some(
            Gamma::new(k as f64, 1.0 / (k as f64 * mu)).map_err(|_| QueueError::InvalidParams("erlang shape"))?,
        ),
        ServiceLaw::Erlang(_) => return Err(QueueError::InvalidParams("erlang shape must be positive")),
        _ => None,
    };

    // Min-heap of the instants at which each server frees up.
    let mut free: BinaryHeap<Reverse<ordered::Time>> = (0..servers).map(|_| Reverse(ordered::Time(0.0))).collect();
    let mut clock = 0.0;
    let mut total_wait = 0.0;
    for _ in 0..n_arrivals {
        clock += inter.sample(&mut rng);
        let Reverse(ordered::Time(available)) = free.pop().expect("servers >= 1");
        let start = clock.max(available);
        total_wait += start - clock;
        let service = match law {
            ServiceLaw::Exponential => exp_service.sample(&mut rng),
            ServiceLaw::Deterministic => 1.0 / mu,
            ServiceLaw::Erlang(_) => erlang.as_ref().expect("built above").sample(&mut rng),
        };
        free.push(Reverse(ordered::Time(start + service)));
    }
    Ok(total_wait / n_arrivals as f64)
}

mod ordered {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Time(pub f64);

    impl Eq for Time {}

    impl PartialOrd for Time {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Time {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn mm1_closed_form() {
        assert!(rel(w_mms(1.0, 2.0, 1).unwrap(), 0.5) < 1e-12);
    }

    #[test]
    fn empty_system_has_no_wait() {
        assert_eq!(w_mms(0.0, 1.0, 3).unwrap(), 0.0);
        assert_eq!(w_mds(0.0, 1.0, 3).unwrap(), 0.0);
        assert_eq!(w_mgs(&QueueParams::new(0.0, 1.0, 0.3, 2), XiConvention::Cv).unwrap(), 0.0);
    }

    #[test]
    fn unstable_inputs_are_rejected() {
        assert_eq!(w_mms(2.0, 1.0, 2), Err(QueueError::Unstable { rho: 1.0 }));
        assert!(matches!(w_mds(5.0, 1.0, 2), Err(QueueError::Unstable { .. })));
        assert!(matches!(w_mgs(&QueueParams::new(3.0, 1.0, 0.2, 2), XiConvention::Cv), Err(QueueError::Unstable { .. })));
        assert!(matches!(w_mms(1.0, 0.0, 2), Err(QueueError::InvalidParams(_))));
        assert!(matches!(w_mms(1.0, 1.0, 0), Err(QueueError::InvalidParams(_))));
    }

    #[test]
    fn h_vanishes_for_one_server() {
        assert_eq!(cosmetatos_h(1), 0.0);
    }

    #[test]
    fn md1_is_half_mm1() {
        let mm = w_mms(0.5, 1.0, 1).unwrap();
        assert!(rel(w_mds(0.5, 1.0, 1).unwrap(), mm / 2.0) < 1e-12);
        assert!(rel(mm / 2.0, 0.5) < 1e-12);
    }

    #[test]
    fn mu_over_sigma_singularity() {
        let p = QueueParams::new(0.5, 1.0, 0.0, 1);
        assert_eq!(w_mgs(&p, XiConvention::MuOverSigma), Err(QueueError::Singular));
        // s > 1 falls back to the limit form
        let p2 = QueueParams::new(1.5, 1.0, 0.0, 2);
        let w = w_mgs(&p2, XiConvention::MuOverSigma).unwrap();
        let (mm, md) = (w_mms(1.5, 1.0, 2).unwrap(), w_mds(1.5, 1.0, 2).unwrap());
        assert!(rel(w, mm * md / (2.0 * md - mm)) < 1e-12);
    }

    #[test]
    fn mu_over_sigma_uses_reciprocal_deviation() {
        let p = QueueParams::new(1.5, 1.0, 0.5, 2);
        let (mm, md) = (w_mms(1.5, 1.0, 2).unwrap(), w_mds(1.5, 1.0, 2).unwrap());
        let expect = interpolate(mm, md, 2.0);
        assert!(rel(w_mgs(&p, XiConvention::MuOverSigma).unwrap(), expect) < 1e-12);
    }

    #[test]
    fn utilization_points() {
        assert_eq!(utilization(0.0, 0.3), 0.0);
        assert!((utilization(0.3, 0.3) - 0.5).abs() < 1e-15);
        assert_eq!(utilization(f64::INFINITY, 0.3), 1.0);
        // floor keeps the map defined when every station is idle
        assert!(utilization(1.0, 0.0) < 1.0);
    }

    #[test]
    fn matching_degree_points() {
        let c = MatchingCoefficients::default();
        assert_eq!(matching_degree(0.4, 0.4, c), 1.0);
        assert_eq!(matching_degree(1.0, 0.0, c), 0.0);
        assert_eq!(matching_degree(0.2, 0.7, c), matching_degree(0.7, 0.2, c));
    }

    #[test]
    fn estimate_from_window() {
        let mut st = StationStats::new(10);
        for i in 0..6 {
            st.record_arrival(100.0 + i as f64 * 60.0);
        }
        for _ in 0..4 {
            st.record_charge(0.5);
        }
        let d = ServiceDefaults { mean_hours: 0.63, sigma_hours: 0.0 };
        let p = estimate_params(&st, 4, d);
        assert_eq!(p.lambda, 6.0);
        assert_eq!(p.mu, 2.0);
        assert_eq!(p.sigma_t, 0.0);
        assert_eq!(p.servers, 4);
    }

    #[test]
    fn arrivals_age_out_after_an_hour() {
        let mut st = StationStats::new(4);
        st.record_arrival(0.0);
        st.record_arrival(1800.0);
        st.record_arrival(3600.0);
        assert_eq!(st.arrivals_last_hour(), 2);
    }

    #[test]
    fn cold_start_uses_defaults() {
        let st = StationStats::new(4);
        let p = estimate_params(&st, 2, ServiceDefaults { mean_hours: 0.5, sigma_hours: 0.1 });
        assert_eq!((p.lambda, p.mu, p.sigma_t), (0.0, 2.0, 0.1));
    }

    #[test]
    fn sample_window_is_bounded() {
        let mut st = StationStats::new(2);
        st.record_charge(1.0);
        st.record_charge(2.0);
        st.record_charge(3.0);
        assert_eq!(st.samples().collect::<Vec<_>>(), vec![2.0, 3.0]);
    }

    #[test]
    fn oracle_with_no_arrivals() {
        assert_eq!(des_oracle(1.0, 2.0, ServiceLaw::Exponential, 1, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn oracle_is_deterministic() {
        let a = des_oracle(0.8, 1.0, ServiceLaw::Erlang(3), 2, 10_000, 9).unwrap();
        let b = des_oracle(0.8, 1.0, ServiceLaw::Erlang(3), 2, 10_000, 9).unwrap();
        assert_eq!(a, b);
    }
}
