//! Momentum and step-size choices that come with the convergence guarantees,
//! and the matching round / communication / oracle complexity estimates.
//!
//! `Theta(.)` and `O(.)` expressions are evaluated with constant 1, so the
//! complexity numbers are order-of-magnitude guidance only.

use serde::{Deserialize, Serialize};

use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::participation::ParticipationScheme;
use crate::problems::SmoothnessEstimates;

/// Constants describing the problem, compressors and participation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub omega: f64,
    pub n: usize,
    pub p_a: f64,
    pub p_aa: f64,
    pub l: f64,
    pub l_hat: f64,
    pub l_max: f64,
    pub l_sigma: f64,
    pub sigma_sq: f64,
    /// Local samples per node.
    pub m: usize,
    /// Minibatch size `B`.
    pub batch: usize,
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    pub d: usize,
    /// Expected density of the compressors.
    pub zeta: usize,
    /// Initial suboptimality `f(x^0) - f*`, needed for round counts.
    pub delta0: Option<f64>,
}

impl TheoryInputs {
    pub fn from_components(
        smoothness: &SmoothnessEstimates,
        compressor: &CompressorSpec,
        scheme: &ParticipationScheme,
        m: usize,
        batch: usize,
        sigma_sq: f64,
    ) -> Self {
        let (p_a, p_aa) = scheme.moments();
        Self {
            omega: compressor.omega(),
            n: scheme.nodes(),
            p_a,
            p_aa,
            l: smoothness.l,
            l_hat: smoothness.l_hat,
            l_max: smoothness.l_max,
            l_sigma: smoothness.l_sigma,
            sigma_sq,
            m,
            batch,
            epsilon: None,
            mu: smoothness.mu,
            d: compressor.dim(),
            zeta: compressor.expected_density(),
            delta0: None,
        }
    }

    /// `sqrt(1 - p_aa / p_a)`.
    pub fn indicator(&self) -> f64 {
        self.one_minus_ratio().sqrt()
    }

    fn one_minus_ratio(&self) -> f64 {
        (1.0 - self.p_aa / self.p_a).max(0.0)
    }

    fn n_f(&self) -> f64 {
        self.n as f64
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTheoryInput(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.p_a > 0.0 && self.p_a <= 1.0) {
            return bad(format!("p_a must lie in (0, 1], got {}", self.p_a));
        }
        if !(self.p_aa >= 0.0 && self.p_aa <= self.p_a * self.p_a * (1.0 + 1e-12)) {
            return bad(format!("p_aa must lie in [0, p_a^2], got {}", self.p_aa));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad(format!("omega must be finite and nonnegative, got {}", self.omega));
        }
        for (name, v) in [("L", self.l), ("L_hat", self.l_hat)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    fn need_batch(&self) -> Result<f64> {
        if self.batch == 0 {
            return Err(Error::InvalidTheoryInput("batch size must be at least 1".into()));
        }
        Ok(self.batch as f64)
    }

    fn need_positive(name: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidTheoryInput(format!("{name} must be positive, got {v}")))
        }
    }

    fn need_epsilon(&self) -> Result<f64> {
        match self.epsilon {
            Some(e) => Self::need_positive("epsilon", e),
            None => Err(Error::InvalidTheoryInput("epsilon is required".into())),
        }
    }

    fn compression_factor(&self) -> f64 {
        self.omega * (2.0 * self.omega + 1.0) / (self.n_f() * self.p_a * self.p_a)
    }

    fn momentum_a(&self) -> f64 {
        self.p_a / (2.0 * self.omega + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TheoryParams {
    pub a: f64,
    pub b: f64,
    pub gamma_max: f64,
    pub p_page: Option<f64>,
    pub p_mega: Option<f64>,
    pub init_batch: Option<usize>,
    pub mega_batch: Option<usize>,
    /// Rounds needed for an `epsilon`-stationary point (needs `epsilon`
    /// and `delta0`).
    pub t_bound: Option<f64>,
    /// Linear-rate factor `1 - gamma * mu` under the PL condition.
    pub rate_factor: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoryVariant {
    Gradient,
    Page,
    FiniteMvr,
    Mvr,
    SyncMvr,
}

fn finish(a: f64, b: f64, gamma_max: f64) -> Result<TheoryParams> {
    if !(a > 0.0 && a <= 1.0) || !(b > 0.0 && b <= 1.0) || !(gamma_max > 0.0 && gamma_max.is_finite()) {
        return Err(Error::InvalidTheoryInput(format!(
            "inputs produce out-of-range parameters a = {a}, b = {b}, gamma = {gamma_max}"
        )));
    }
    Ok(TheoryParams { a, b, gamma_max, ..Default::default() })
}

fn leading_rounds(inp: &TheoryInputs, gamma: f64) -> Option<f64> {
    match (inp.delta0, inp.epsilon) {
        (Some(d0), Some(eps)) if eps > 0.0 => Some(2.0 * d0 / (gamma * eps)),
        _ => None,
    }
}

/// Gradient setting.
pub fn params_gradient(inp: &TheoryInputs) -> Result<TheoryParams> {
    inp.validate()?;
    let n = inp.n_f();
    let p2 = inp.p_a * inp.p_a;
    let radical = (48.0 * inp.compression_factor() + 16.0 / (n * p2) * inp.one_minus_ratio()).sqrt();
    let gamma = 1.0 / (inp.l + radical * inp.l_hat);
    let mut out = finish(inp.momentum_a(), inp.p_a / (2.0 - inp.p_a), gamma)?;
    out.t_bound = leading_rounds(inp, gamma);
    Ok(out)
}

/// PAGE estimator with `p_page = B / (m + B)`.
pub fn params_page(inp: &TheoryInputs) -> Result<TheoryParams> {
    let batch = inp.need_batch()?;
    if inp.m == 0 {
        return Err(Error::InvalidTheoryInput("m must be positive".into()));
    }
    params_page_with(inp, batch / (inp.m as f64 + batch))
}

/// PAGE estimator with an explicit switching probability.
pub fn params_page_with(inp: &TheoryInputs, p_page: f64) -> Result<TheoryParams> {
    inp.validate()?;
    let batch = inp.need_batch()?;
    if !(p_page > 0.0 && p_page <= 1.0) {
        return Err(Error::InvalidTheoryInput(format!("p_page must lie in (0, 1], got {p_page}")));
    }
    let n = inp.n_f();
    let p2 = inp.p_a * inp.p_a;
    let lh2 = inp.l_hat * inp.l_hat;
    let sample_term = (1.0 - p_page) * inp.l_max * inp.l_max / batch;
    let radical = 48.0 * inp.compression_factor() * (lh2 + sample_term)
        + 16.0 / (n * p2 * p_page) * (inp.one_minus_ratio() * lh2 + sample_term);
    let gamma = 1.0 / (inp.l + radical.sqrt());
    let mut out = finish(inp.momentum_a(), p_page * inp.p_a / (2.0 - inp.p_a), gamma)?;
    out.p_page = Some(p_page);
    if let (Some(d0), Some(eps)) = (inp.delta0, inp.epsilon) {
        let sqrt_n = n.sqrt();
        let ratio = (inp.m as f64 / n).sqrt();
        out.t_bound = Some(
            d0 / eps
                * (inp.l
                    + inp.omega / (inp.p_a * sqrt_n) * (inp.l_hat + inp.l_max / batch.sqrt())
                    + ratio / inp.p_a * (inp.indicator() * inp.l_hat / batch.sqrt() + inp.l_max / batch)),
        );
    }
    Ok(out)
}

/// Finite-sum MVR estimator.
pub fn params_finite_mvr(inp: &TheoryInputs) -> Result<TheoryParams> {
    inp.validate()?;
    let batch = inp.need_batch()?;
    if inp.m == 0 || inp.batch > inp.m {
        return Err(Error::InvalidTheoryInput(format!("batch {} must lie in 1..=m = {}", inp.batch, inp.m)));
    }
    let n = inp.n_f();
    let m = inp.m as f64;
    let p2 = inp.p_a * inp.p_a;
    let lh2 = inp.l_hat * inp.l_hat;
    let sample_term = inp.l_max * inp.l_max / batch;
    let q = inp.p_a * batch / m;
    let radical = 148.0 * inp.compression_factor() * (lh2 + sample_term)
        + 72.0 * m / (n * p2 * batch) * (inp.one_minus_ratio() * lh2 + sample_term);
    let gamma = 1.0 / (inp.l + radical.sqrt());
    let mut out = finish(inp.momentum_a(), q / (2.0 - q), gamma)?;
    out.t_bound = leading_rounds(inp, gamma);
    Ok(out)
}

/// Stochastic MVR estimator.
pub fn params_mvr(inp: &TheoryInputs) -> Result<TheoryParams> {
    inp.validate()?;
    let batch = inp.need_batch()?;
    let eps = inp.need_epsilon()?;
    TheoryInputs::need_positive("L_sigma", inp.l_sigma)?;
    if !(inp.sigma_sq >= 0.0) {
        return Err(Error::InvalidTheoryInput(format!("sigma^2 must be nonnegative, got {}", inp.sigma_sq)));
    }
    let n = inp.n_f();
    let mut b = inp.p_a / (2.0 - inp.p_a);
    let mut warnings = Vec::new();
    if inp.sigma_sq > 0.0 {
        let ratio = n * eps * batch / inp.sigma_sq;
        if ratio > 1.0 {
            warnings.push(format!("sigma^2/(n eps B) = {} is below 1; the batch choice is outside the intended regime", 1.0 / ratio));
        }
        b = b.min(inp.p_a * ratio);
        if inp.omega > 0.0 {
            b = b.min(inp.p_a / inp.omega * ratio.sqrt());
        }
    }
    let init_batch = (inp.p_a.sqrt() * batch / b).ceil() as usize;
    let lh2 = inp.l_hat * inp.l_hat;
    let sample_term = (1.0 - b) * (1.0 - b) * inp.l_sigma * inp.l_sigma / batch;
    let radical = 48.0 * inp.compression_factor() * (lh2 + sample_term)
        + 12.0 / (n * inp.p_a * b) * (inp.one_minus_ratio() * lh2 + sample_term);
    let gamma = 1.0 / (inp.l + radical.sqrt());
    let mut out = finish(inp.momentum_a(), b, gamma)?;
    out.init_batch = Some(init_batch.max(1));
    out.warnings = warnings;
    if let Some(d0) = inp.delta0 {
        let sigma = inp.sigma_sq.sqrt();
        let sqrt_n = n.sqrt();
        out.t_bound = Some(
            d0 / eps
                * (inp.l
                    + inp.omega / (inp.p_a * sqrt_n) * (inp.l_hat + inp.l_sigma / batch.sqrt())
                    + sigma / (inp.p_a * eps.sqrt() * n)
                        * (inp.indicator() * inp.l_hat / batch.sqrt() + inp.l_sigma / batch))
                + inp.sigma_sq / (inp.p_a.sqrt() * n * eps * batch),
        );
    }
    Ok(out)
}

/// SYNC-MVR with `p_mega = min(zeta / d, n eps B / sigma^2)`.
pub fn params_sync_mvr(inp: &TheoryInputs) -> Result<TheoryParams> {
    let batch = inp.need_batch()?;
    let eps = inp.need_epsilon()?;
    params_sync_mvr_with(inp, sync_p_mega(inp, batch, eps)?)
}

fn sync_p_mega(inp: &TheoryInputs, batch: f64, eps_like: f64) -> Result<f64> {
    if inp.d == 0 || inp.zeta == 0 || inp.zeta > inp.d {
        return Err(Error::InvalidTheoryInput(format!("need 1 <= zeta <= d, got zeta = {}, d = {}", inp.zeta, inp.d)));
    }
    let mut p = inp.zeta as f64 / inp.d as f64;
    if inp.sigma_sq > 0.0 {
        p = p.min(inp.n_f() * eps_like * batch / inp.sigma_sq);
    }
    Ok(p)
}

/// SYNC-MVR with an explicit mega-batch probability.
pub fn params_sync_mvr_with(inp: &TheoryInputs, p_mega: f64) -> Result<TheoryParams> {
    inp.validate()?;
    let batch = inp.need_batch()?;
    TheoryInputs::need_positive("L_sigma", inp.l_sigma)?;
    if !(p_mega > 0.0 && p_mega <= 1.0) {
        return Err(Error::InvalidTheoryInput(format!("p_mega must lie in (0, 1], got {p_mega}")));
    }
    let n = inp.n_f();
    let p2 = inp.p_a * inp.p_a;
    let lh2 = inp.l_hat * inp.l_hat;
    let ls2 = inp.l_sigma * inp.l_sigma / batch;
    let radical = 8.0 * inp.compression_factor() * (lh2 + ls2) + 16.0 / (n * p_mega * p2) * (inp.one_minus_ratio() * lh2 + ls2);
    let gamma = 1.0 / (inp.l + radical.sqrt());
    let mut out = finish(inp.momentum_a(), p_mega * inp.p_a / (2.0 - inp.p_a), gamma)?;
    out.p_mega = Some(p_mega);
    out.init_batch = Some((batch / (p_mega * inp.p_a.sqrt())).ceil().max(1.0) as usize);
    if let Some(eps) = inp.epsilon.filter(|e| *e > 0.0) {
        let mega = (inp.sigma_sq / (n * eps)).ceil().max(batch) as usize;
        out.mega_batch = Some(mega);
        if let Some(d0) = inp.delta0 {
            let sigma = inp.sigma_sq.sqrt();
            let spread = inp.omega / (inp.p_a * n.sqrt()) + (inp.d as f64 / (p2 * inp.zeta as f64 * n)).sqrt();
            out.t_bound = Some(
                d0 / eps
                    * (inp.l
                        + spread * (inp.l_hat + inp.l_sigma / batch.sqrt())
                        + sigma / (inp.p_a * eps.sqrt() * n) * (inp.l_hat / batch.sqrt() + inp.l_sigma / batch))
                    + inp.sigma_sq / (inp.p_a.sqrt() * n * eps * batch),
            );
        }
    }
    Ok(out)
}

/// Step sizes with linear convergence under the PL condition.
pub fn params_pl(inp: &TheoryInputs, variant: TheoryVariant) -> Result<TheoryParams> {
    inp.validate()?;
    let mu = match inp.mu {
        Some(mu) => TheoryInputs::need_positive("mu", mu)?,
        None => return Err(Error::InvalidTheoryInput("mu is required".into())),
    };
    let n = inp.n_f();
    let p2 = inp.p_a * inp.p_a;
    let lh2 = inp.l_hat * inp.l_hat;
    let cf = inp.compression_factor();
    let (mut out, radical, caps): (TheoryParams, f64, Vec<f64>) = match variant {
        TheoryVariant::Gradient => {
            let base = params_gradient(inp)?;
            let r = (200.0 * cf + 48.0 / (n * p2) * inp.one_minus_ratio()) * lh2;
            let caps = vec![base.a / (4.0 * mu)];
            (base, r, caps)
        }
        TheoryVariant::Page => {
            let base = params_page(inp)?;
            let p_page = base.p_page.unwrap_or(1.0);
            let batch = inp.need_batch()?;
            let sample_term = (1.0 - p_page) * inp.l_max * inp.l_max / batch;
            let r = 200.0 * cf * (lh2 + sample_term) + 48.0 / (n * p2 * p_page) * (inp.one_minus_ratio() * lh2 + sample_term);
            let caps = vec![base.a / (2.0 * mu), base.b / (2.0 * mu)];
            (base, r, caps)
        }
        TheoryVariant::FiniteMvr => {
            return Err(Error::InvalidTheoryInput("no PL step size is available for finite-sum MVR".into()));
        }
        TheoryVariant::Mvr => {
            let base = params_mvr(inp)?;
            let batch = inp.need_batch()?;
            let b = base.b;
            let sample_term = (1.0 - b) * (1.0 - b) * inp.l_sigma * inp.l_sigma / batch;
            let r = 200.0 * cf * (sample_term + lh2) + 40.0 / (n * inp.p_a * b) * (sample_term + inp.one_minus_ratio() * lh2);
            let caps = vec![base.a / (2.0 * mu), b / (2.0 * mu)];
            (base, r, caps)
        }
        TheoryVariant::SyncMvr => {
            let batch = inp.need_batch()?;
            let eps = inp.need_epsilon()?;
            let p_mega = sync_p_mega(inp, batch, mu * eps)?;
            let base = params_sync_mvr_with(inp, p_mega)?;
            let ls2 = inp.l_sigma * inp.l_sigma / batch;
            let r = 16.0 * cf * (ls2 + lh2)
                + 48.0 * ls2 / (n * p_mega * p2)
                + 24.0 * inp.one_minus_ratio() * lh2 / (n * p_mega * p2);
            let caps = vec![base.a / (2.0 * mu), base.b / (2.0 * mu)];
            (base, r, caps)
        }
    };
    let gamma = caps.into_iter().fold(1.0 / (inp.l + radical.sqrt()), f64::min);
    out.gamma_max = gamma;
    out.rate_factor = Some(1.0 - gamma * mu);
    out.t_bound = None;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    FiniteSum,
    Stochastic,
}

/// Leading terms of the RandK complexity estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// Suggested number of kept coordinates.
    pub k: f64,
    /// Largest batch for which partial participation costs only `1/p_a`.
    pub batch_cap: f64,
    pub communication: f64,
    pub oracle: f64,
}

pub fn complexity_randk(inp: &TheoryInputs, setting: Setting) -> Result<ComplexityReport> {
    inp.validate()?;
    let batch = inp.need_batch()?;
    let d0 = match inp.delta0 {
        Some(v) => v,
        None => return Err(Error::InvalidTheoryInput("delta0 is required".into())),
    };
    let eps = inp.need_epsilon()?;
    let n = inp.n_f();
    let d = inp.d as f64;
    let ind2 = inp.one_minus_ratio();
    let ratio_cap = |l_top: f64| {
        if ind2 == 0.0 {
            f64::INFINITY
        } else {
            l_top * l_top / (ind2 * inp.l_hat * inp.l_hat)
        }
    };
    Ok(match setting {
        Setting::FiniteSum => {
            if inp.m == 0 {
                return Err(Error::InvalidTheoryInput("m must be positive".into()));
            }
            let m = inp.m as f64;
            let scale = inp.l_max * d0 / (inp.p_a * eps * n.sqrt());
            ComplexityReport {
                k: batch * d / m.sqrt(),
                batch_cap: ((m / n).sqrt() / inp.p_a).min(ratio_cap(inp.l_max)),
                communication: d + scale * d,
                oracle: m + scale * m.sqrt(),
            }
        }
        Setting::Stochastic => {
            let sigma = TheoryInputs::need_positive("sigma^2", inp.sigma_sq)?.sqrt();
            ComplexityReport {
                k: batch * d * (eps * n).sqrt() / sigma,
                batch_cap: (sigma / (inp.p_a * eps.sqrt() * n)).min(ratio_cap(inp.l_sigma)),
                communication: d * sigma / (inp.p_a.sqrt() * (n * eps).sqrt()) + inp.l_sigma * d0 * d / (inp.p_a * n.sqrt() * eps),
                oracle: inp.sigma_sq / (inp.p_a.sqrt() * n * eps) + inp.l_sigma * d0 * sigma / (inp.p_a * eps.powf(1.5) * n),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TheoryInputs {
        TheoryInputs {
            omega: 0.0,
            n: 4,
            p_a: 1.0,
            p_aa: 1.0,
            l: 1.3,
            l_hat: 1.7,
            l_max: 2.9,
            l_sigma: 2.9,
            sigma_sq: 4.0,
            m: 16,
            batch: 4,
            epsilon: Some(1e-3),
            mu: Some(0.1),
            d: 10,
            zeta: 10,
            delta0: Some(1.0),
        }
    }

    #[test]
    fn degenerate_gradient_is_one_over_l() {
        let p = params_gradient(&base()).unwrap();
        assert_eq!(p.gamma_max, 1.0 / 1.3);
        assert_eq!((p.a, p.b), (1.0, 1.0));
    }

    #[test]
    fn gradient_momenta() {
        let inp = TheoryInputs { omega: 1.0, p_a: 0.1, p_aa: 0.01, ..base() };
        let p = params_gradient(&inp).unwrap();
        assert!((p.a - 0.1 / 3.0).abs() < 1e-15);
        assert!((p.b - 0.1 / 1.9).abs() < 1e-15);
    }

    #[test]
    fn page_with_unit_probability_matches_gradient() {
        let inp = TheoryInputs { omega: 3.0, p_a: 0.4, p_aa: 0.12, ..base() };
        let g = params_gradient(&inp).unwrap();
        let p = params_page_with(&inp, 1.0).unwrap();
        assert!((g.gamma_max - p.gamma_max).abs() <= 1e-14 * g.gamma_max);
        assert!((g.a - p.a).abs() <= 1e-14 && (g.b - p.b).abs() <= 1e-14);
        assert_eq!(params_page(&TheoryInputs { batch: 16, ..inp }).unwrap().p_page, Some(0.5));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(params_gradient(&TheoryInputs { p_a: 0.0, ..base() }).is_err());
        assert!(params_gradient(&TheoryInputs { p_a: 0.5, p_aa: 0.3, ..base() }).is_err());
        assert!(params_gradient(&TheoryInputs { l: -1.0, ..base() }).is_err());
        assert!(params_finite_mvr(&TheoryInputs { batch: 17, ..base() }).is_err());
        assert!(params_mvr(&TheoryInputs { epsilon: None, ..base() }).is_err());
        assert!(params_pl(&base(), TheoryVariant::FiniteMvr).is_err());
        assert!(params_pl(&TheoryInputs { mu: None, ..base() }, TheoryVariant::Gradient).is_err());
    }

    #[test]
    fn pl_rate_factor_in_unit_interval() {
        let inp = TheoryInputs { omega: 2.0, p_a: 0.5, p_aa: 0.2, ..base() };
        for v in [TheoryVariant::Gradient, TheoryVariant::Page, TheoryVariant::Mvr, TheoryVariant::SyncMvr] {
            let p = params_pl(&inp, v).unwrap();
            let r = p.rate_factor.unwrap();
            assert!(r > 0.0 && r < 1.0, "{v:?}: {r}");
        }
    }

    #[test]
    fn indicator_zero_gives_infinite_cap() {
        let inp = TheoryInputs { omega: 1.0, ..base() };
        let c = complexity_randk(&inp, Setting::FiniteSum).unwrap();
        assert_eq!(c.batch_cap, (16.0f64 / 4.0).sqrt());
        let inp = TheoryInputs { omega: 1.0, p_a: 0.5, p_aa: 0.25, ..base() };
        let c = complexity_randk(&inp, Setting::FiniteSum).unwrap();
        assert!(c.batch_cap.is_finite());
    }
}
