//! Arbitrary-precision scaffolding and q-arithmetic primitives.
//!
//! Everything downstream (series evaluators, binomial-expansion evaluators,
//! identity verification) is built on the types here: a precision context
//! carrying the certified tolerance, the base `q > 1` with its cached
//! logarithm, a complex value over MPFR floats, and [`ValueWithError`], the
//! value-plus-rigorous-bound pair every evaluator returns.

use crate::error::{EvalError, Result};
use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use std::fmt;

/// Working-precision configuration.
///
/// `abs_tol = 2^-(mantissa_bits - guard_bits)` is the certified absolute
/// tolerance; accumulation happens at `mantissa_bits + guard_bits` and final
/// results are rounded back to `mantissa_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionCtx {
    mantissa_bits: u32,
    guard_bits: u32,
}

impl PrecisionCtx {
    pub fn new(mantissa_bits: u32, guard_bits: u32) -> Result<Self> {
        if mantissa_bits < 64 {
            return Err(EvalError::Domain(format!(
                "mantissa_bits must be >= 64, got {mantissa_bits}"
            )));
        }
        if guard_bits < 16 {
            return Err(EvalError::Domain(format!(
                "guard_bits must be >= 16, got {guard_bits}"
            )));
        }
        if guard_bits >= mantissa_bits {
            return Err(EvalError::Domain(format!(
                "guard_bits {guard_bits} must be < mantissa_bits {mantissa_bits}"
            )));
        }
        Ok(Self {
            mantissa_bits,
            guard_bits,
        })
    }

    /// Context with the given mantissa width and the default 32 guard bits.
    pub fn with_mantissa(mantissa_bits: u32) -> Result<Self> {
        Self::new(mantissa_bits, 32)
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn guard_bits(&self) -> u32 {
        self.guard_bits
    }

    /// Precision at which all intermediate accumulation runs.
    pub fn working_bits(&self) -> u32 {
        self.mantissa_bits + self.guard_bits
    }

    /// Certified absolute tolerance `2^-(mantissa_bits - guard_bits)`.
    pub fn abs_tol(&self) -> Float {
        Float::with_val(self.working_bits(), 1u32) >> (self.mantissa_bits - self.guard_bits)
    }

    /// Threshold below which `|q^x - 1|` is flagged pole-proximate:
    /// `2^-(mantissa_bits/2)`, the point past which the reciprocal's relative
    /// error is no longer certifiable within the precision budget.
    pub fn pole_threshold(&self) -> Float {
        Float::with_val(self.working_bits(), 1u32) >> (self.mantissa_bits / 2)
    }

    /// Same mantissa, escalated to at least `bits` of mantissa.
    pub fn escalated(&self, bits: u32) -> Self {
        Self {
            mantissa_bits: self.mantissa_bits.max(bits),
            guard_bits: self.guard_bits,
        }
    }
}

impl Default for PrecisionCtx {
    fn default() -> Self {
        Self {
            mantissa_bits: 192,
            guard_bits: 32,
        }
    }
}

/// The real deformation base `q > 1` with its natural logarithm cached at
/// construction precision.
#[derive(Debug, Clone)]
pub struct QBase {
    q: Float,
    log_q: Float,
}

impl QBase {
    /// Rejects `q <= 1`; the whole artifact works strictly in the `q > 1`
    /// regime.
    pub fn new(q: Float, ctx: &PrecisionCtx) -> Result<Self> {
        if !q.is_finite() || q <= 1u32 {
            return Err(EvalError::Domain(format!("q must be > 1, got {q}")));
        }
        let q = Float::with_val(ctx.working_bits(), &q);
        let log_q = Float::with_val(ctx.working_bits(), q.ln_ref());
        Ok(Self { q, log_q })
    }

    /// Parses decimal text with correct rounding at working precision.
    pub fn parse_decimal(text: &str, ctx: &PrecisionCtx) -> Result<Self> {
        let parsed = Float::parse(text)
            .map_err(|e| EvalError::Domain(format!("cannot parse q '{text}': {e}")))?;
        Self::new(Float::with_val(ctx.working_bits(), parsed), ctx)
    }

    pub fn from_f64(q: f64, ctx: &PrecisionCtx) -> Result<Self> {
        Self::new(Float::with_val(ctx.working_bits(), q), ctx)
    }

    pub fn q(&self) -> &Float {
        &self.q
    }

    pub fn log_q(&self) -> &Float {
        &self.log_q
    }

    pub fn prec(&self) -> u32 {
        self.q.prec()
    }

    /// `q - 1` at construction precision.
    pub fn q_minus_one(&self) -> Float {
        Float::with_val(self.prec(), &self.q - 1u32)
    }

    /// `ln q` recomputed at `prec` bits when the cached value is narrower.
    /// The stored `q` is exact (a binary float), so this loses nothing.
    pub fn log_q_at(&self, prec: u32) -> Float {
        if prec <= self.log_q.prec() {
            Float::with_val(prec, &self.log_q)
        } else {
            Float::with_val(prec, Float::with_val(prec, &self.q).ln_ref())
        }
    }

    /// `q` widened (exactly) to `prec` bits.
    pub fn q_at(&self, prec: u32) -> Float {
        Float::with_val(prec, &self.q)
    }
}

/// A complex value with both components at working precision.
///
/// Hand-rolled over two `rug::Float`s: the base `q` is real, so every
/// transcendental we need reduces to real `exp`/`ln`/`sin`/`cos`.
#[derive(Debug, Clone, PartialEq)]
pub struct CVal {
    pub re: Float,
    pub im: Float,
}

fn prec2(a: &CVal, b: &CVal) -> u32 {
    a.prec().max(b.prec())
}

impl CVal {
    pub fn new(re: Float, im: Float) -> Self {
        Self { re, im }
    }

    pub fn real(re: Float) -> Self {
        let prec = re.prec();
        Self {
            re,
            im: Float::new(prec),
        }
    }

    pub fn zero(prec: u32) -> Self {
        Self {
            re: Float::new(prec),
            im: Float::new(prec),
        }
    }

    pub fn one(prec: u32) -> Self {
        Self {
            re: Float::with_val(prec, 1u32),
            im: Float::new(prec),
        }
    }

    pub fn from_f64(re: f64, im: f64, prec: u32) -> Self {
        Self {
            re: Float::with_val(prec, re),
            im: Float::with_val(prec, im),
        }
    }

    pub fn from_i64(re: i64, prec: u32) -> Self {
        Self {
            re: Float::with_val(prec, re),
            im: Float::new(prec),
        }
    }

    /// Parses `"re"` or `"re,im"` decimal text, correctly rounded at `prec`.
    pub fn parse(text: &str, prec: u32) -> Result<Self> {
        let mut parts = text.splitn(2, ',');
        let re_text = parts.next().unwrap_or("").trim();
        let re = Float::parse(re_text)
            .map_err(|e| EvalError::Domain(format!("cannot parse '{text}': {e}")))?;
        let re = Float::with_val(prec, re);
        let im = match parts.next() {
            Some(im_text) => {
                let im = Float::parse(im_text.trim())
                    .map_err(|e| EvalError::Domain(format!("cannot parse '{text}': {e}")))?;
                Float::with_val(prec, im)
            }
            None => Float::new(prec),
        };
        Ok(Self { re, im })
    }

    pub fn prec(&self) -> u32 {
        self.re.prec().max(self.im.prec())
    }

    /// Both components rounded (or widened exactly) to `prec` bits.
    pub fn with_prec(&self, prec: u32) -> Self {
        Self {
            re: Float::with_val(prec, &self.re),
            im: Float::with_val(prec, &self.im),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    /// Modulus `sqrt(re^2 + im^2)`.
    pub fn abs(&self) -> Float {
        if self.im.is_zero() {
            self.re.clone().abs()
        } else {
            self.re.clone().hypot(&self.im)
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            re: Float::with_val(self.re.prec(), -&self.re),
            im: Float::with_val(self.im.prec(), -&self.im),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let p = prec2(self, other);
        Self {
            re: Float::with_val(p, &self.re + &other.re),
            im: Float::with_val(p, &self.im + &other.im),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let p = prec2(self, other);
        Self {
            re: Float::with_val(p, &self.re - &other.re),
            im: Float::with_val(p, &self.im - &other.im),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let p = prec2(self, other);
        if self.is_real() && other.is_real() {
            return Self {
                re: Float::with_val(p, &self.re * &other.re),
                im: Float::new(p),
            };
        }
        let re = Float::with_val(p, &self.re * &other.re) - Float::with_val(p, &self.im * &other.im);
        let im = Float::with_val(p, &self.re * &other.im) + Float::with_val(p, &self.im * &other.re);
        Self {
            re: Float::with_val(p, re),
            im: Float::with_val(p, im),
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        let p = prec2(self, other);
        if other.is_real() {
            return Self {
                re: Float::with_val(p, &self.re / &other.re),
                im: Float::with_val(p, &self.im / &other.re),
            };
        }
        let denom = Float::with_val(p, other.re.clone().square() + other.im.clone().square());
        let re = Float::with_val(p, &self.re * &other.re) + Float::with_val(p, &self.im * &other.im);
        let im = Float::with_val(p, &self.im * &other.re) - Float::with_val(p, &self.re * &other.im);
        Self {
            re: Float::with_val(p, re / &denom),
            im: Float::with_val(p, im / &denom),
        }
    }

    /// Scale by a real factor.
    pub fn scale(&self, c: &Float) -> Self {
        let p = self.prec().max(c.prec());
        Self {
            re: Float::with_val(p, &self.re * c),
            im: Float::with_val(p, &self.im * c),
        }
    }

    /// Adds 1 to the real part.
    pub fn add_u32(&self, k: u32) -> Self {
        Self {
            re: Float::with_val(self.re.prec(), &self.re + k),
            im: self.im.clone(),
        }
    }

    /// Complex exponential; the only transcendental entry point we need.
    pub fn exp(&self) -> Self {
        let p = self.prec();
        let mag = Float::with_val(p, self.re.exp_ref());
        if self.im.is_zero() {
            return Self {
                re: mag,
                im: Float::new(p),
            };
        }
        let (sin, cos) = Float::with_val(p, &self.im).sin_cos(Float::new(p));
        Self {
            re: Float::with_val(p, &mag * &cos),
            im: Float::with_val(p, &mag * &sin),
        }
    }
}

impl fmt::Display for CVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else {
            write!(f, "{} + {}i", self.re, self.im)
        }
    }
}

/// Convergence state of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The true value lies within `abs_error_bound` of `value`.
    Converged,
    /// A retained denominator fell below the pole threshold; the value is
    /// returned but the bound is only a half-precision relative estimate.
    PoleProximate,
}

impl Status {
    pub fn worst(self, other: Status) -> Status {
        if self == Status::PoleProximate || other == Status::PoleProximate {
            Status::PoleProximate
        } else {
            Status::Converged
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::PoleProximate => "pole_proximate",
        }
    }
}

/// A complex value together with a rigorous absolute error bound, the number
/// of series terms summed, and a convergence status.
#[derive(Debug, Clone)]
pub struct ValueWithError {
    pub value: CVal,
    pub abs_error_bound: Float,
    pub terms_used: u64,
    pub status: Status,
}

impl ValueWithError {
    /// Wraps a value computed by closed arithmetic (no truncation), charging
    /// only a few ulps of rounding.
    pub fn closed(value: CVal, ops: u32) -> Self {
        let p = value.prec();
        let bound = value.abs() * Float::with_val(p, ops.max(1) * 4) >> p;
        Self {
            value,
            abs_error_bound: bound,
            terms_used: 0,
            status: Status::Converged,
        }
    }

    /// An exactly known value (bound zero).
    pub fn exact(value: CVal) -> Self {
        let p = value.prec();
        Self {
            value,
            abs_error_bound: Float::new(p),
            terms_used: 0,
            status: Status::Converged,
        }
    }

    fn rounding_ulp(v: &CVal) -> Float {
        let p = v.prec();
        let mut m = v.abs();
        m += Float::with_val(p, 1u32) >> 60u32.min(p - 1);
        m >> (p - 4)
    }

    pub fn add(&self, other: &Self) -> Self {
        let value = self.value.add(&other.value);
        let bound = self.abs_error_bound.clone()
            + &other.abs_error_bound
            + Self::rounding_ulp(&value);
        Self {
            value,
            abs_error_bound: bound,
            terms_used: self.terms_used + other.terms_used,
            status: self.status.worst(other.status),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let value = self.value.sub(&other.value);
        let bound = self.abs_error_bound.clone()
            + &other.abs_error_bound
            + Self::rounding_ulp(&value);
        Self {
            value,
            abs_error_bound: bound,
            terms_used: self.terms_used + other.terms_used,
            status: self.status.worst(other.status),
        }
    }

    /// Product with first-order bound propagation
    /// `|a| db + |b| da + da db` plus rounding.
    pub fn mul(&self, other: &Self) -> Self {
        let value = self.value.mul(&other.value);
        let bound = self.value.abs() * &other.abs_error_bound
            + other.value.abs() * &self.abs_error_bound
            + Float::with_val(value.prec(), &self.abs_error_bound * &other.abs_error_bound)
            + Self::rounding_ulp(&value);
        Self {
            value,
            abs_error_bound: bound,
            terms_used: self.terms_used + other.terms_used,
            status: self.status.worst(other.status),
        }
    }

    /// Scale by an exactly-known real constant.
    pub fn scale(&self, c: &Float) -> Self {
        let value = self.value.scale(c);
        let bound = self.abs_error_bound.clone() * c.clone().abs() + Self::rounding_ulp(&value);
        Self {
            value,
            abs_error_bound: bound,
            terms_used: self.terms_used,
            status: self.status,
        }
    }

    pub fn scale_i64(&self, c: i64) -> Self {
        self.scale(&Float::with_val(self.value.prec(), c))
    }

    pub fn neg(&self) -> Self {
        Self {
            value: self.value.neg(),
            abs_error_bound: self.abs_error_bound.clone(),
            terms_used: self.terms_used,
            status: self.status,
        }
    }

    /// Final rounding of the value to `mantissa_bits`, charging one ulp.
    pub fn rounded_to(mut self, mantissa_bits: u32) -> Self {
        let p = self.value.prec();
        let mut m = self.value.abs();
        m += Float::with_val(p, 1u32) >> 62u32.min(p - 1);
        self.abs_error_bound += m >> (mantissa_bits - 1);
        self.value = self.value.with_prec(mantissa_bits);
        self
    }
}

/// Pi at `prec` bits.
pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

/// `q^s = exp(s ln q)` on the principal branch (`ln q` is real since `q > 1`).
///
/// `q_pow(base, 0) = 1` exactly.
pub fn q_pow(base: &QBase, s: &CVal) -> Result<CVal> {
    let p = s.prec().max(base.prec());
    let log_q = base.log_q_at(p);
    let w = CVal {
        re: Float::with_val(p, &s.re * &log_q),
        im: Float::with_val(p, &s.im * &log_q),
    };
    let out = w.exp();
    if !out.is_finite() {
        return Err(EvalError::Domain(format!(
            "q^s overflows: Re(s)*ln q = {}",
            w.re
        )));
    }
    Ok(out)
}

/// The q-analogue of a complex number: `[a]_q = (q^a - 1)/(q - 1)`.
pub fn q_number(a: &CVal, base: &QBase) -> Result<CVal> {
    let p = a.prec().max(base.prec());
    let qa = q_pow(base, a)?;
    let qm1 = Float::with_val(p, base.q() - 1u32);
    Ok(CVal {
        re: Float::with_val(p, &qa.re - 1u32) / &qm1,
        im: qa.im / &qm1,
    })
}

/// Rising-factorial coefficient `C(s,k) = s(s+1)...(s+k-1)/k!`, the binomial
/// expansion coefficient of `(1-x)^{-s}`.
///
/// Computed by the stable recurrence `C(s,k) = C(s,k-1) (s+k-1)/k`;
/// `C(s,0) = 1` (empty product).
pub fn rising_coeff(s: &CVal, k: u64) -> CVal {
    let p = s.prec();
    let mut c = CVal::one(p);
    for j in 1..=k {
        let factor = CVal {
            re: Float::with_val(p, &s.re + (j - 1)),
            im: s.im.clone(),
        };
        c = c.mul(&factor);
        let divisor = Float::with_val(p, j);
        c = CVal {
            re: c.re / &divisor,
            im: c.im / &divisor,
        };
    }
    c
}

/// `[n]_q! = [1]_q [2]_q ... [n]_q`; `[0]_q! = 1` by the empty-product
/// convention.
pub fn q_factorial(n: u64, base: &QBase) -> Float {
    let p = base.prec();
    let qm1 = base.q_minus_one();
    let mut fac = Float::with_val(p, 1u32);
    let mut q_pow_j = Float::with_val(p, 1u32);
    for _ in 1..=n {
        q_pow_j *= base.q();
        fac *= Float::with_val(p, &q_pow_j - 1u32) / &qm1;
    }
    fac
}

/// Order parameter of a q-shifted factorial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PochhammerOrder {
    Finite(u64),
    Infinite,
}

/// q-shifted factorial `(a; ratio)_n = prod_{m=0}^{n-1} (1 - a ratio^m)`.
///
/// The infinite form converges only for `|ratio| < 1`; since this crate fixes
/// `q > 1`, callers wanting `(a;q)_inf` semantics pass `ratio = 1/q`
/// explicitly rather than getting a silently divergent product.
pub fn q_pochhammer(
    a: &CVal,
    ratio: &Float,
    order: PochhammerOrder,
    ctx: &PrecisionCtx,
) -> Result<CVal> {
    let p = ctx.working_bits().max(a.prec()).max(ratio.prec());
    let a = a.with_prec(p);
    match order {
        PochhammerOrder::Finite(n) => {
            let mut prod = CVal::one(p);
            let mut rm = Float::with_val(p, 1u32);
            for m in 0..n {
                if m > 0 {
                    rm *= ratio;
                }
                let factor = CVal::one(p).sub(&a.scale(&rm));
                prod = prod.mul(&factor);
            }
            Ok(prod)
        }
        PochhammerOrder::Infinite => {
            if a.is_zero() {
                return Ok(CVal::one(p));
            }
            let ratio_abs = ratio.clone().abs();
            if ratio_abs >= 1u32 {
                return Err(EvalError::Domain(format!(
                    "infinite q-Pochhammer diverges for |ratio| = {ratio_abs} >= 1"
                )));
            }
            let cutoff = Float::with_val(p, 1u32) >> (p + 8);
            let mut prod = CVal::one(p);
            let mut rm = Float::with_val(p, 1u32);
            let a_abs = a.abs();
            for m in 0..20_000_000u64 {
                if m > 0 {
                    rm *= ratio;
                }
                if Float::with_val(p, &a_abs * &rm).clone().abs() < cutoff {
                    // Remaining factors differ from 1 by at most
                    // sum |a| |ratio|^m / (1 - |ratio|), below working ulp.
                    return Ok(prod);
                }
                let factor = CVal::one(p).sub(&a.scale(&rm));
                prod = prod.mul(&factor);
            }
            Err(EvalError::Precision(
                "infinite q-Pochhammer did not converge within iteration cap".into(),
            ))
        }
    }
}

/// True when `q^x = 1` exactly, i.e. `x ln q` lies on `2 pi i Z`, recognized
/// within `2^-(mantissa_bits/2)`.
pub fn on_pole_lattice(x: &CVal, base: &QBase, ctx: &PrecisionCtx) -> bool {
    let p = ctx.working_bits();
    let thr = ctx.pole_threshold();
    let log_q = base.log_q_at(p);
    let two_pi = pi(p) * 2u32;
    let re_part = Float::with_val(p, &x.re * &log_q) / &two_pi;
    if re_part.clone().abs() > thr {
        return false;
    }
    let im_part = Float::with_val(p, &x.im * &log_q) / &two_pi;
    let nearest = im_part.clone().round();
    Float::with_val(p, &im_part - &nearest).abs() <= thr
}

/// The recurring building block `1/(q^x - 1)`.
///
/// Exact lattice hits (`q^x = 1`) are an error; a denominator below the pole
/// threshold is returned with `PoleProximate` status and a half-precision
/// relative bound.
pub fn inv_qpow_minus_one(base: &QBase, x: &CVal, ctx: &PrecisionCtx) -> Result<ValueWithError> {
    let p = ctx.working_bits();
    if on_pole_lattice(x, base, ctx) {
        return Err(EvalError::Pole(format!("q^x = 1 at x = {x}")));
    }
    let x = x.with_prec(p);
    let qx = q_pow(base, &x)?;
    let denom = qx.sub(&CVal::one(p));
    let denom_abs = denom.abs();
    let value = CVal::one(p).div(&denom);
    if !value.is_finite() {
        return Err(EvalError::Pole(format!("q^x - 1 underflows at x = {x}")));
    }
    let (status, bound) = if denom_abs < ctx.pole_threshold() {
        let b = value.abs() >> (ctx.mantissa_bits() / 2).saturating_sub(2);
        (Status::PoleProximate, b)
    } else {
        (Status::Converged, value.abs() >> (p - 6))
    };
    Ok(ValueWithError {
        value,
        abs_error_bound: bound,
        terms_used: 0,
        status,
    })
}

/// `b^s` for real `b > 0` and complex `s`, via `exp(s ln b)`.
pub(crate) fn pow_positive_real(b: &Float, s: &CVal, prec: u32) -> CVal {
    if s.is_real() {
        return CVal::real(Float::with_val(prec, Pow::pow(b, &s.re)));
    }
    let ln_b = Float::with_val(prec, b.ln_ref());
    let w = CVal {
        re: Float::with_val(prec, &s.re * &ln_b),
        im: Float::with_val(prec, &s.im * &ln_b),
    };
    w.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionCtx {
        PrecisionCtx::new(128, 32).unwrap()
    }

    fn base(q: f64) -> QBase {
        QBase::from_f64(q, &ctx()).unwrap()
    }

    fn assert_close(got: &Float, want: f64, tol: f64) {
        let diff = Float::with_val(got.prec(), got - &Float::with_val(53, want)).abs();
        assert!(diff < tol, "got {got}, want {want}");
    }

    #[test]
    fn precision_ctx_invariants() {
        assert!(PrecisionCtx::new(63, 32).is_err());
        assert!(PrecisionCtx::new(128, 15).is_err());
        let c = ctx();
        assert_eq!(c.working_bits(), 160);
        assert!(c.abs_tol() > 0u32);
    }

    #[test]
    fn qbase_rejects_q_le_1() {
        assert!(QBase::from_f64(1.0, &ctx()).is_err());
        assert!(QBase::from_f64(0.5, &ctx()).is_err());
        assert!(QBase::from_f64(1.0000001, &ctx()).is_ok());
    }

    #[test]
    fn qbase_log_consistency() {
        let b = base(2.0);
        let back = Float::with_val(b.prec(), b.log_q().exp_ref());
        let diff = Float::with_val(b.prec(), &back - b.q()).abs();
        assert!(diff <= ctx().abs_tol());
    }

    #[test]
    fn q_number_trivial_values() {
        let p = ctx().working_bits();
        let b2 = base(2.0);
        let v = q_number(&CVal::zero(p), &b2).unwrap();
        assert!(v.re.is_zero() && v.im.is_zero());

        let b75 = base(7.5);
        let v = q_number(&CVal::one(p), &b75).unwrap();
        assert_close(&v.re, 1.0, 1e-30);

        let b3 = base(3.0);
        let v = q_number(&CVal::from_i64(2, p), &b3).unwrap();
        assert_close(&v.re, 4.0, 1e-30);
    }

    #[test]
    fn q_pow_trivial_values() {
        let b = base(2.0);
        let p = ctx().working_bits();
        let one = q_pow(&b, &CVal::zero(p)).unwrap();
        assert_eq!(one.re, 1u32);
        assert!(one.im.is_zero());

        let eight = q_pow(&b, &CVal::from_i64(3, p)).unwrap();
        assert_close(&eight.re, 8.0, 1e-30);

        // full imaginary period: s = i 2 pi / ln 2
        let period = Float::with_val(p, 2u32 * pi(p)) / b.log_q();
        let s = CVal::new(Float::new(p), period);
        let v = q_pow(&b, &s).unwrap();
        assert_close(&v.re, 1.0, 1e-30);
        assert!(v.im.clone().abs() < 1e-30);
    }

    #[test]
    fn rising_coeff_values() {
        let p = ctx().working_bits();
        let s = CVal::from_f64(1.7, -0.3, p);
        assert_eq!(rising_coeff(&s, 0), CVal::one(p));

        let zero = rising_coeff(&CVal::zero(p), 3);
        assert!(zero.re.is_zero() && zero.im.is_zero());

        let four = rising_coeff(&CVal::from_i64(2, p), 3);
        assert_close(&four.re, 4.0, 1e-30);
    }

    #[test]
    fn rising_coeff_pascal_recurrence() {
        let p = ctx().working_bits();
        let s = CVal::from_f64(2.5, 1.25, p);
        for k in 1..20u64 {
            let lhs = rising_coeff(&s, k).scale(&Float::with_val(p, k));
            let factor = CVal {
                re: Float::with_val(p, &s.re + (k - 1)),
                im: s.im.clone(),
            };
            let rhs = rising_coeff(&s, k - 1).mul(&factor);
            let diff = lhs.sub(&rhs).abs();
            assert!(diff < Float::with_val(p, 1u32) >> (p - 16), "k={k}: {diff}");
        }
    }

    #[test]
    fn q_factorial_values() {
        let b2 = base(2.0);
        let b3 = base(3.0);
        assert_eq!(q_factorial(0, &b2), 1u32);
        assert_close(&q_factorial(2, &b3), 4.0, 1e-30);
        assert_close(&q_factorial(3, &b2), 21.0, 1e-30);
    }

    #[test]
    fn q_factorial_is_product_of_q_numbers() {
        let b = base(1.5);
        let p = b.prec();
        let mut prod = Float::with_val(p, 1u32);
        for n in 1..=30u64 {
            let bracket = q_number(&CVal::from_i64(n as i64, p), &b).unwrap();
            prod *= &bracket.re;
            let fac = q_factorial(n, &b);
            let diff = Float::with_val(p, &fac - &prod).abs();
            assert!(diff < Float::with_val(p, &fac).abs() >> (p - 16));
        }
    }

    #[test]
    fn q_pochhammer_values() {
        let c = ctx();
        let p = c.working_bits();
        let a = CVal::from_f64(0.3, 0.1, p);
        let half = Float::with_val(p, 0.5);

        let one = q_pochhammer(&a, &half, PochhammerOrder::Finite(0), &c).unwrap();
        assert_eq!(one, CVal::one(p));

        let v = q_pochhammer(&a, &half, PochhammerOrder::Finite(1), &c).unwrap();
        let want = CVal::one(p).sub(&a);
        assert!(v.sub(&want).abs() < 1e-30);

        let z = q_pochhammer(&CVal::one(p), &half, PochhammerOrder::Finite(4), &c).unwrap();
        assert!(z.abs() < 1e-30);

        // divergent infinite product rejected
        let bad = q_pochhammer(&a, &Float::with_val(p, 2u32), PochhammerOrder::Infinite, &c);
        assert!(bad.is_err());

        // (a; 1/q)_inf converges for q > 1
        let inf = q_pochhammer(&a, &half, PochhammerOrder::Infinite, &c).unwrap();
        assert!(inf.is_finite());
        // consistency with a long finite product
        let fin = q_pochhammer(&a, &half, PochhammerOrder::Finite(400), &c).unwrap();
        assert!(inf.sub(&fin).abs() < 1e-30);
    }

    #[test]
    fn inv_qpow_minus_one_values() {
        let c = ctx();
        let p = c.working_bits();
        let b = base(2.0);

        let v = inv_qpow_minus_one(&b, &CVal::one(p), &c).unwrap();
        assert_close(&v.value.re, 1.0, 1e-30);
        assert_eq!(v.status, Status::Converged);

        let v = inv_qpow_minus_one(&b, &CVal::from_i64(2, p), &c).unwrap();
        let third = Float::with_val(p, 1u32) / 3u32;
        assert!(Float::with_val(p, &v.value.re - &third).abs() < 1e-30);

        let pole = inv_qpow_minus_one(&b, &CVal::zero(p), &c);
        assert!(matches!(pole, Err(EvalError::Pole(_))));

        // a lattice point with b != 0 is also an exact pole
        let period = Float::with_val(p, 2u32 * pi(p)) / b.log_q();
        let s = CVal::new(Float::new(p), period);
        assert!(inv_qpow_minus_one(&b, &s, &c).is_err());

        // an exponent inside the recognition tolerance is treated as exact
        let x = CVal::new(Float::with_val(p, 1u32) >> 70, Float::new(p));
        assert!(matches!(
            inv_qpow_minus_one(&b, &x, &c),
            Err(EvalError::Pole(_))
        ));

        // just outside the recognition zone: finite value, converged
        let x = CVal::new(Float::with_val(p, 1u32) >> 50, Float::new(p));
        let v = inv_qpow_minus_one(&b, &x, &c).unwrap();
        assert_eq!(v.status, Status::Converged);
        assert!(v.value.re > 1e14);
    }

    #[test]
    fn modulus_law_and_bracket_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c = ctx();
        let p = c.working_bits();
        let b = base(1.8);
        let tol = c.abs_tol();
        for _ in 0..100 {
            let a = CVal::from_f64(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                p,
            );
            let x: f64 = rng.gen_range(0.1..2.0);
            let xf = Float::with_val(p, x);

            // |q^(a x)| = q^(Re(a) x)
            let ax = a.scale(&xf);
            let lhs = q_pow(&b, &ax).unwrap().abs();
            let rhs = q_pow(&b, &CVal::real(Float::with_val(p, &a.re * &xf)))
                .unwrap()
                .re;
            let scale = rhs.clone().abs().max(&Float::with_val(p, 1u32));
            assert!(Float::with_val(p, &lhs - &rhs).abs() < Float::with_val(p, &tol * &scale));

            // [a]_q (q-1) + 1 = q^a
            let bracket = q_number(&a, &b).unwrap();
            let lhs2 = bracket.scale(&b.q_minus_one()).add(&CVal::one(p));
            let rhs2 = q_pow(&b, &a).unwrap();
            let scale2 = rhs2.abs().max(&Float::with_val(p, 1u32));
            assert!(lhs2.sub(&rhs2).abs() < Float::with_val(p, &tol * &scale2));
        }
    }
}
