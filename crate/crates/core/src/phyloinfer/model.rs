//! Two-state reversible substitution process and discrete-Γ rate variation.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Number of discrete rate categories used throughout the sampler.
pub const N_RATE_CATEGORIES: usize = 4;

/// Reversible two-state model parameterized by the stationary frequency of
/// state 0, normalized so one unit of time yields one expected substitution:
/// with `mu = 1 / (2 pi0 pi1)`, the off-diagonal rates are `mu*pi1` (0→1)
/// and `mu*pi0` (1→0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstModel2 {
    pi0: f64,
    pi1: f64,
    mu: f64,
}

impl SubstModel2 {
    pub fn new(pi0: f64) -> Result<Self> {
        if !(pi0 > 0.0 && pi0 < 1.0) {
            return Err(Error::Argument(format!(
                "stationary frequency must lie strictly inside (0, 1), got {pi0}"
            )));
        }
        let pi1 = 1.0 - pi0;
        Ok(SubstModel2 { pi0, pi1, mu: 1.0 / (2.0 * pi0 * pi1) })
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn pi1(&self) -> f64 {
        self.pi1
    }

    pub fn stationary(&self) -> [f64; 2] {
        [self.pi0, self.pi1]
    }

    /// Transition probabilities over duration `t` (in expected-substitution
    /// units), in closed form: `P[i][j]` is the chance of ending in `j`
    /// having started in `i`.
    pub fn transition(&self, t: f64) -> [[f64; 2]; 2] {
        debug_assert!(t >= 0.0, "negative branch duration {t}");
        let e = (-self.mu * t).exp();
        [
            [self.pi0 + self.pi1 * e, self.pi1 * (1.0 - e)],
            [self.pi0 * (1.0 - e), self.pi1 + self.pi0 * e],
        ]
    }
}

/// Splits a mean-one gamma distribution with shape `alpha` into `ncat`
/// equal-probability categories and returns each category's mean rate,
/// ascending, renormalized so the category average is one.
pub fn discretize_gamma(alpha: f64, ncat: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Argument(format!("gamma shape must be positive, got {alpha}")));
    }
    if ncat == 0 {
        return Err(Error::Argument("need at least one rate category".into()));
    }
    if ncat == 1 {
        return Ok(vec![1.0]);
    }
    // E[X; X <= q] for X ~ Gamma(shape a, rate a) equals the regularized
    // incomplete gamma P(a+1, a q); category means follow by differencing.
    let partial = |q: f64| {
        if q.is_finite() {
            lower_gamma_reg(alpha + 1.0, alpha * q)
        } else {
            1.0
        }
    };
    let mut rates = Vec::with_capacity(ncat);
    let mut lower_partial = 0.0f64;
    for i in 1..=ncat {
        let upper = if i == ncat {
            f64::INFINITY
        } else {
            mean_one_gamma_quantile(alpha, i as f64 / ncat as f64)
        };
        let upper_partial = partial(upper);
        rates.push(ncat as f64 * (upper_partial - lower_partial));
        lower_partial = upper_partial;
    }
    let mean = rates.iter().sum::<f64>() / ncat as f64;
    for r in &mut rates {
        *r /= mean;
    }
    Ok(rates)
}

/// Regularized lower incomplete gamma function P(a, x), reliable at the
/// extreme arguments this module visits. Off-the-shelf implementations
/// commonly clamp tiny x straight to CDF zero, but with a tiny shape the
/// distribution keeps appreciable mass at x values far below any absolute
/// cutoff — P(0.001, 8e-16) is about 0.97 — and the quantile-preserving
/// kernels probe exactly that regime.
pub(crate) fn lower_gamma_reg(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && a.is_finite(), "shape must be positive, got {a}");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        // P(a, x) = exp(a ln x - x - ln Γ(a+1)) Σ_{n≥0} x^n / ∏_{k=1..n}(a+k).
        // Keeping the prefactor in logs preserves the value even where the
        // plain product would underflow; the sum starts at one and its terms
        // decay at least like a Gaussian in n, so it stays representable.
        let ln_prefactor = a * x.ln() - x - ln_gamma(a + 1.0);
        let mut sum = 1.0f64;
        let mut term = 1.0f64;
        let mut n = 0.0f64;
        while n < 1e9 {
            n += 1.0;
            term *= x / (a + n);
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        (ln_prefactor + sum.ln()).exp()
    } else {
        // Modified Lentz continued fraction for the upper tail Q(a, x);
        // P = 1 - Q has no cancellation here because Q < 1/2 when x > a + 1.
        let ln_prefactor = a * x.ln() - x - ln_gamma(a);
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut i = 1.0f64;
        while i < 1e9 {
            let an = -i * (i - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() <= 1e-16 {
                break;
            }
            i += 1.0;
        }
        1.0 - ln_prefactor.exp() * h
    }
}

/// Quantile of the mean-one gamma distribution (shape `alpha`, rate
/// `alpha`): bracketed bisection with safeguarded Newton acceleration on
/// the regularized lower incomplete gamma. Closed-form quantile starters
/// lose monotonicity at extreme shapes, so only [`lower_gamma_reg`] and
/// `ln_gamma` are trusted here.
pub(crate) fn mean_one_gamma_quantile(alpha: f64, p: f64) -> f64 {
    debug_assert!(alpha > 0.0 && p > 0.0 && p < 1.0);
    let cdf = |x: f64| lower_gamma_reg(alpha, alpha * x);
    let mut hi = 1.0f64;
    let mut doublings = 0;
    while cdf(hi) < p {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2_000 {
            return hi; // unreachable: the CDF hits 1 long before overflow
        }
    }
    // Solve for ln x: log-space bisection converges to fixed *relative*
    // precision at every scale, which matters because spiky shapes put
    // their low quantiles hundreds of orders of magnitude below one. A
    // quantile beneath the subnormal floats comes back as zero for the
    // caller to reject.
    let mut lo_y = -744.0f64;
    if cdf(lo_y.exp()) >= p {
        return 0.0;
    }
    let mut hi_y = hi.ln();
    let ln_norm = alpha * alpha.ln() - ln_gamma(alpha);
    let mut y = 0.5 * (lo_y + hi_y);
    for _ in 0..200 {
        let f = cdf(y.exp()) - p;
        if f > 0.0 {
            hi_y = y;
        } else {
            lo_y = y;
        }
        if hi_y - lo_y <= 1e-14 {
            break;
        }
        // d/d y of CDF(e^y) is exp(ln_norm + alpha y - alpha e^y), which
        // stays finite in log form even where the density would overflow.
        let deriv = (ln_norm + alpha * y - alpha * y.exp()).exp();
        let newton = y - f / deriv;
        // Fall back to bisection whenever Newton leaves the bracket or
        // stalls; y is an endpoint now, so the midpoint always progresses.
        y = if newton.is_finite() && newton > lo_y && newton < hi_y && newton != y {
            newton
        } else {
            0.5 * (lo_y + hi_y)
        };
    }
    (0.5 * (lo_y + hi_y)).exp()
}
