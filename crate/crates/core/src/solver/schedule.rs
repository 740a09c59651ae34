use crate::error::{Error, Result};

/// Relative slack for the schedule invariants, which hold with equality
/// for both shipped schedules and so only need to absorb rounding.
const SCHEDULE_RTOL: f64 = 1e-12;

/// Per-outer-iteration parameters of the sliding method. All accessors are
/// 1-indexed in `k` (and `t`), matching the iteration counters.
#[derive(Clone, Debug, PartialEq)]
pub struct SlidingSchedule {
    smoothness: f64,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    inner: Vec<usize>,
    eta_first: Vec<f64>,
    big_gamma: Vec<f64>,
}

fn inner_count(x: f64, k: usize) -> Result<usize> {
    if !x.is_finite() || x > 1e12 {
        return Err(Error::Parameter(format!(
            "inner step count for k = {k} is not representable ({x})"
        )));
    }
    Ok((x.ceil() as usize).max(1))
}

impl SlidingSchedule {
    /// `γ_k = 2/(k+1)`, `β_k = 2L/k`, `T_k = max(1, ⌈kM/L⌉)`,
    /// `η_k^t = β_k (t-1) + L T_k / k`.
    pub fn deterministic(l: f64, m: f64, n: usize) -> Result<Self> {
        check_common(l, m, n)?;
        Self::build(l, n, |k| inner_count(k as f64 * m / l, k)).and_then(|s| s.validated(l, m))
    }

    /// Same as [`deterministic`](Self::deterministic) except
    /// `T_k = max(1, ⌈√3 kM/L + N k² σ² / (Ω² L²)⌉)`.
    pub fn stochastic(l: f64, m: f64, sigma: f64, omega_sq: f64, n: usize) -> Result<Self> {
        check_common(l, m, n)?;
        if !(omega_sq > 0.0 && omega_sq.is_finite()) {
            return Err(Error::Parameter(format!("omega_sq must be > 0, got {omega_sq}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
        }
        let nf = n as f64;
        Self::build(l, n, |k| {
            let kf = k as f64;
            let x = 3f64.sqrt() * kf * m / l + nf * kf * kf * sigma * sigma / (omega_sq * l * l);
            inner_count(x, k)
        })
        .and_then(|s| s.validated(l, m))
    }

    fn build(l: f64, n: usize, steps: impl Fn(usize) -> Result<usize>) -> Result<Self> {
        let mut s = SlidingSchedule {
            smoothness: l,
            gamma: Vec::with_capacity(n),
            beta: Vec::with_capacity(n),
            inner: Vec::with_capacity(n),
            eta_first: Vec::with_capacity(n),
            big_gamma: Vec::with_capacity(n),
        };
        for k in 1..=n {
            let kf = k as f64;
            let gamma = 2.0 / (kf + 1.0);
            let t_k = steps(k)?;
            s.gamma.push(gamma);
            s.beta.push(2.0 * l / kf);
            s.inner.push(t_k);
            s.eta_first.push(l * t_k as f64 / kf);
            let prev = s.big_gamma.last().copied();
            s.big_gamma.push(match prev {
                None => 1.0,
                Some(g) => (1.0 - gamma) * g,
            });
        }
        Ok(s)
    }

    fn validated(self, l: f64, m: f64) -> Result<Self> {
        self.check(l, m)?;
        Ok(self)
    }

    /// Checks every parameter condition the convergence analysis relies on,
    /// for a problem with smoothness `l` and operator constant `m`:
    ///
    /// * `γ_1 = 1`, `γ_k ∈ [0, 1]`, `β_k >= L γ_k`;
    /// * `M <= β_k + η_k^t` and `η_k^t <= β_k + η_k^{t-1}`;
    /// * `Γ_1 = 1`, `Γ_k = (1 - γ_k) Γ_{k-1}`;
    /// * `γ_k/Γ_k (β_k + η_k^1/T_k) <= γ_{k-1} (β_{k-1} + η_{k-1}^{T_{k-1}}) / (Γ_{k-1} T_{k-1})`.
    pub fn check(&self, l: f64, m: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("schedule invariant violated: {msg}")));
        let le = |a: f64, b: f64| a <= b + SCHEDULE_RTOL * a.abs().max(b.abs());
        if self.gamma.first() != Some(&1.0) {
            return fail("gamma_1 must equal 1".into());
        }
        for k in 1..=self.n() {
            let (g, b) = (self.gamma(k), self.beta(k));
            if !(0.0..=1.0).contains(&g) {
                return fail(format!("gamma_{k} = {g} outside [0, 1]"));
            }
            if !le(l * g, b) {
                return fail(format!("beta_{k} = {b} < L gamma_{k} = {}", l * g));
            }
            // η_k^t is nondecreasing in t, so t = 1 is the binding case
            if !le(m, b + self.eta(k, 1)) {
                return fail(format!("M = {m} exceeds beta_{k} + eta_{k}^1 = {}", b + self.eta(k, 1)));
            }
            let t_k = self.inner_steps(k);
            if t_k >= 2 && !le(self.eta(k, t_k), b + self.eta(k, t_k - 1)) {
                return fail(format!("eta_{k}^t grows faster than beta_{k}"));
            }
            let expected = if k == 1 { 1.0 } else { (1.0 - g) * self.big_gamma(k - 1) };
            if (self.big_gamma(k) - expected).abs() > SCHEDULE_RTOL * expected {
                return fail(format!("Gamma_{k} does not follow the recursion"));
            }
            if k >= 2 {
                let lhs = g / self.big_gamma(k) * (b + self.eta(k, 1) / t_k as f64);
                let tp = self.inner_steps(k - 1);
                let rhs = self.gamma(k - 1) * (self.beta(k - 1) + self.eta(k - 1, tp))
                    / (self.big_gamma(k - 1) * tp as f64);
                if !le(lhs, rhs) {
                    return fail(format!("aggregation condition fails at k = {k}: {lhs} > {rhs}"));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    /// The smoothness constant the schedule was built for.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.gamma[k - 1]
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    pub fn inner_steps(&self, k: usize) -> usize {
        self.inner[k - 1]
    }

    pub fn eta(&self, k: usize, t: usize) -> f64 {
        debug_assert!(t >= 1);
        self.beta[k - 1] * (t - 1) as f64 + self.eta_first[k - 1]
    }

    pub fn big_gamma(&self, k: usize) -> f64 {
        self.big_gamma[k - 1]
    }

    pub fn total_inner_steps(&self) -> usize {
        self.inner.iter().sum()
    }

    /// The coefficient `Γ_N Σ_k γ_k / Γ_k` multiplying `delta` in the final
    /// bound; equals one for these schedules.
    pub fn delta_weight(&self) -> f64 {
        let sum: f64 = (1..=self.n()).map(|k| self.gamma(k) / self.big_gamma(k)).sum();
        self.big_gamma(self.n()) * sum
    }
}

fn check_common(l: f64, m: f64, n: usize) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Parameter(format!("L must be > 0, got {l}")));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::Parameter(format!("M must be >= 0, got {m}")));
    }
    if n == 0 {
        return Err(Error::Parameter("N must be >= 1".into()));
    }
    Ok(())
}

/// `6 L Ω² / N²`: the deterministic gap bound without the `delta` term.
pub fn deterministic_gap_bound(l: f64, omega_sq: f64, n: usize) -> f64 {
    6.0 * l * omega_sq / (n as f64).powi(2)
}

/// Constant of the stochastic expectation bound `C L Ω² / N²`: twice the
/// deterministic `3 L Ω² Γ_N`-style term (the auxiliary sequence doubles it)
/// plus `5 L Ω²` from the variance terms under the stochastic `T_k`.
pub const STOCHASTIC_BOUND_CONSTANT: f64 = 17.0;

pub fn stochastic_gap_bound(l: f64, omega_sq: f64, n: usize) -> f64 {
    STOCHASTIC_BOUND_CONSTANT * l * omega_sq / (n as f64).powi(2)
}

/// Smallest `N` with `6 L Ω² / N² <= target`.
pub fn deterministic_outer_iterations(l: f64, omega_sq: f64, target: f64) -> Result<usize> {
    outer_for(6.0, l, omega_sq, target)
}

/// Smallest `N` with `17 L Ω² / N² <= target`.
pub fn stochastic_outer_iterations(l: f64, omega_sq: f64, target: f64) -> Result<usize> {
    outer_for(STOCHASTIC_BOUND_CONSTANT, l, omega_sq, target)
}

fn outer_for(c: f64, l: f64, omega_sq: f64, target: f64) -> Result<usize> {
    if !(target > 0.0) {
        return Err(Error::Parameter(format!("target accuracy must be > 0, got {target}")));
    }
    let x = (c * l * omega_sq / target).sqrt();
    if !x.is_finite() || x > 1e9 {
        return Err(Error::Parameter(format!("required N = {x} is not representable")));
    }
    let mut n = (x.ceil() as usize).max(1);
    // guard against ceil landing one short through rounding
    while c * l * omega_sq / (n as f64).powi(2) > target {
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_example_values() {
        let s = SlidingSchedule::deterministic(2.0, 10.0, 3).unwrap();
        assert_eq!(s.inner_steps(3), 15);
        assert_relative_eq!(s.beta(3), 4.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(s.gamma(3), 0.5, max_relative = 1e-15);
        assert_relative_eq!(s.big_gamma(3), 1.0 / 6.0, max_relative = 1e-15);
    }

    #[test]
    fn smooth_case_has_one_inner_step() {
        let s = SlidingSchedule::deterministic(3.7, 0.0, 50).unwrap();
        assert!((1..=50).all(|k| s.inner_steps(k) == 1));
    }

    #[test]
    fn stochastic_example_values() {
        let s = SlidingSchedule::stochastic(2.0, 10.0, 0.0, 1.0, 3).unwrap();
        assert_eq!(s.inner_steps(3), 26);
        let s = SlidingSchedule::stochastic(1.0, 0.0, 1.0, 1.0, 2).unwrap();
        assert_eq!(s.inner_steps(2), 8);
        let d = SlidingSchedule::deterministic(1.0, 0.0, 2).unwrap();
        for k in 1..=2 {
            assert_eq!(s.gamma(k), d.gamma(k));
            assert_eq!(s.beta(k), d.beta(k));
        }
        // same (L, k, T_k) gives the same η
        assert_eq!(s.eta(2, 3), s.beta(2) * 2.0 + 1.0 * 8.0 / 2.0);
    }

    #[test]
    fn zero_smoothness_is_rejected() {
        assert!(matches!(SlidingSchedule::deterministic(0.0, 1.0, 3), Err(Error::Parameter(_))));
        assert!(SlidingSchedule::deterministic(1.0, 1.0, 0).is_err());
        assert!(SlidingSchedule::stochastic(1.0, 1.0, 0.1, 0.0, 3).is_err());
    }

    #[test]
    fn gamma_closed_form_and_delta_weight() {
        let s = SlidingSchedule::deterministic(1.5, 4.0, 200).unwrap();
        for k in 1..=200 {
            let kf = k as f64;
            assert_relative_eq!(s.big_gamma(k), 2.0 / (kf * (kf + 1.0)), max_relative = 1e-12);
        }
        assert_relative_eq!(s.delta_weight(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn check_catches_a_too_large_operator_constant() {
        let s = SlidingSchedule::deterministic(1.0, 1.0, 5).unwrap();
        assert!(s.check(1.0, 1.0).is_ok());
        assert!(matches!(s.check(1.0, 100.0), Err(Error::Config(_))));
        assert!(s.check(10.0, 1.0).is_err());
    }

    #[test]
    fn outer_iteration_selection() {
        let n = deterministic_outer_iterations(2.0, 0.5, 0.01).unwrap();
        assert!(deterministic_gap_bound(2.0, 0.5, n) <= 0.01);
        assert!(deterministic_gap_bound(2.0, 0.5, n - 1) > 0.01);
        let n = stochastic_outer_iterations(2.0, 0.5, 0.01).unwrap();
        assert!(stochastic_gap_bound(2.0, 0.5, n) <= 0.01);
        assert!(stochastic_gap_bound(2.0, 0.5, n - 1) > 0.01);
    }
}
