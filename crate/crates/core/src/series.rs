//! Direct-summation evaluators with rigorous geometric tail bounds.
//!
//! For `q > 1` the bracket satisfies `[n]_q = q^n (1 - q^-n)/(q-1)`, so every
//! summand here is dominated by an explicit constant times a geometric factor
//! in its indices.  The workhorse bound, valid for any real `sigma` and
//! `n >= 1`, is
//!
//! ```text
//! [n]_q^-sigma <= B(sigma) q^(-n sigma),
//! B(sigma) = (q-1)^sigma * max(1, (1-1/q)^-sigma)
//! ```
//!
//! Each evaluator plans its truncation from these bounds before summing, sums
//! at `mantissa + guard` bits, and reports the planned tail bound plus an
//! accumulated-rounding allowance as its rigorous `abs_error_bound`.
//!
//! Double sums are accumulated by a single descending sweep: walking the
//! outer index downwards extends the inner tail by one fresh positive
//! addition per step, so no partial sum is ever subtracted from a larger one
//! (the cancellation a `zeta_q(s1) - head` shortcut would suffer).

use crate::error::{EvalError, Result};
use crate::qnum::{pow_positive_real, CVal, PrecisionCtx, QBase, Status, ValueWithError};
use rug::ops::Pow;
use rug::Float;

/// Hard cap on series length; hitting it means the requested precision is
/// unreachable at this `q` (e.g. `q` extremely close to 1).
const MAX_TERMS: u64 = 50_000_000;

/// Cap on lattice points for the r-fold Mordell-Tornheim sum.
const MAX_MT_POINTS: u64 = 200_000_000;

/// The six series families defined for `q > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// `zeta_q(s) = sum_{n>=1} q^n / [n]^s`
    Single,
    /// `zeta_q(s1,s2) = sum_{k1>k2>=1} q^{k1} q^{k2} / ([k1]^{s1} [k2]^{s2})`
    Double,
    /// Non-strict variant `k1 >= k2 >= 1`.
    DoubleStar,
    /// `zeta_q^o(s1,s2) = sum_{n1>n2>=1} q^{n1} / ([n1]^{s1} [n2]^{s2})`
    Circ,
    /// Non-strict variant `n1 >= n2 >= 1`.
    CircStar,
    /// The r-ple sum with weight `q^{2(m1+...+mr)}` and a bracket factor on
    /// the total index.
    MordellTornheim,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::Single => "single",
            SeriesKind::Double => "double",
            SeriesKind::DoubleStar => "double_star",
            SeriesKind::Circ => "circ",
            SeriesKind::CircStar => "circ_star",
            SeriesKind::MordellTornheim => "mordell_tornheim",
        }
    }
}

/// Truncation decision for one evaluation: the index cutoff, a textual
/// description of how inner indices are limited, the dominant geometric
/// ratio, and the tail bound the cutoff certifies.
#[derive(Debug, Clone)]
pub struct TruncationPlan {
    pub outer_limit: u64,
    pub inner_rule: String,
    pub tail_ratio: Float,
    pub tail_bound: Float,
    /// Per-dimension cutoffs for the Mordell-Tornheim sum; empty otherwise.
    pub dim_limits: Vec<u64>,
}

/// `B(sigma) = (q-1)^sigma max(1, (1-1/q)^-sigma)`.
fn bracket_bound_const(sigma: &Float, base: &QBase, prec: u32) -> Float {
    let qm1 = Float::with_val(prec, base.q() - 1u32);
    let lead = Float::with_val(prec, Pow::pow(&qm1, sigma));
    if sigma.is_sign_negative() {
        lead
    } else {
        let inv_q = Float::with_val(prec, 1u32) / base.q();
        let one_minus = Float::with_val(prec, 1u32) - inv_q;
        let neg_sigma = Float::with_val(prec, -sigma.clone());
        lead * Float::with_val(prec, Pow::pow(&one_minus, &neg_sigma))
    }
}

/// `q^e` for a real exponent.
fn q_real_pow(base: &QBase, e: &Float, prec: u32) -> Float {
    Float::with_val(prec, Pow::pow(&base.q_at(prec), e))
}

/// Smallest `K` with `C rho^(K+1) / (1-rho) <= budget`, padded by 2.
fn solve_geometric_cutoff(c: &Float, rho: &Float, budget: &Float) -> Result<u64> {
    let prec = c.prec();
    if !(rho.clone() < 1u32) || rho.is_sign_negative() {
        return Err(EvalError::Domain(format!(
            "non-contracting tail ratio {rho}"
        )));
    }
    let one_minus_rho = Float::with_val(prec, 1u32 - rho.clone());
    let target = Float::with_val(prec, budget * &one_minus_rho) / c;
    if target >= 1u32 {
        return Ok(2);
    }
    let k = Float::with_val(prec, target.ln_ref()) / Float::with_val(prec, rho.ln_ref());
    let k = k.to_f64();
    if !k.is_finite() || k as u64 >= MAX_TERMS {
        return Err(EvalError::Precision(format!(
            "series needs ~{k:.0} terms; q too close to 1 for the requested precision"
        )));
    }
    Ok(k.ceil() as u64 + 2)
}

/// Tail of `sum_{k>K} k rho^k = rho^(K+1) ((K+1)/(1-rho) + rho/(1-rho)^2)`.
fn poly1_tail(rho: &Float, k_cut: u64, prec: u32) -> Float {
    let one_minus = Float::with_val(prec, 1u32 - rho.clone());
    let lead = Float::with_val(prec, Pow::pow(rho, k_cut + 1));
    let a = Float::with_val(prec, k_cut + 1) / &one_minus;
    let b = Float::with_val(prec, rho / &one_minus) / &one_minus;
    lead * Float::with_val(prec, a + b)
}

/// Smallest `K` with `C * poly1_tail(K) <= budget` (doubling search on the
/// monotone closed form).
fn solve_poly1_cutoff(c: &Float, rho: &Float, budget: &Float) -> Result<u64> {
    let prec = c.prec();
    let mut k = solve_geometric_cutoff(c, rho, budget)?.max(2);
    loop {
        let tail = Float::with_val(prec, c * &poly1_tail(rho, k, prec));
        if tail <= *budget {
            return Ok(k);
        }
        k = k.saturating_mul(2);
        if k >= MAX_TERMS {
            return Err(EvalError::Precision(
                "series needs too many terms; q too close to 1 for the requested precision".into(),
            ));
        }
    }
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(EvalError::Domain(msg.into()))
    }
}

/// Computes the index cutoffs and certified tail bound for `kind` with the
/// given real parts (`sigmas` in series order; Mordell-Tornheim passes the
/// front exponents followed by the last one).
///
/// The tail budget is `abs_tol / 2`, reserving the other half for rounding.
pub fn plan_truncation(
    kind: SeriesKind,
    sigmas: &[Float],
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<TruncationPlan> {
    let prec = ctx.working_bits();
    let budget = Float::with_val(prec, ctx.abs_tol() >> 1);
    let inflate = |t: Float| -> Float {
        // absorbs rounding in the bound evaluation itself
        let bump = Float::with_val(prec, &t >> 32);
        t + bump
    };
    match kind {
        SeriesKind::Single => {
            let [sigma] = sigmas else {
                return Err(EvalError::Domain("single series takes one exponent".into()));
            };
            require(
                sigma.clone() > 1u32,
                format!("zeta_q requires Re(s) > 1, got {sigma}"),
            )?;
            let c = bracket_bound_const(sigma, base, prec);
            let rho = q_real_pow(base, &Float::with_val(prec, 1u32 - sigma.clone()), prec);
            let k = solve_geometric_cutoff(&c, &rho, &budget)?;
            let one_minus = Float::with_val(prec, 1u32 - rho.clone());
            let tail = Float::with_val(prec, Pow::pow(&rho, k + 1)) * &c / one_minus;
            Ok(TruncationPlan {
                outer_limit: k,
                inner_rule: "n <= outer_limit".into(),
                tail_ratio: rho,
                tail_bound: inflate(tail),
                dim_limits: vec![],
            })
        }
        SeriesKind::Double | SeriesKind::DoubleStar => {
            let [s1, s2] = sigmas else {
                return Err(EvalError::Domain(
                    "double series takes two exponents".into(),
                ));
            };
            require(
                s1.clone() > 1u32,
                format!("double zeta requires Re(s1) > 1, got {s1}"),
            )?;
            require(
                s2.clone() >= 1u32,
                format!("double zeta requires Re(s2) >= 1, got {s2}"),
            )?;
            let s12 = Float::with_val(prec, s1 + s2);
            require(
                s12.clone() > 2u32,
                format!("double zeta requires Re(s1)+Re(s2) > 2, got {s12}"),
            )?;
            let c = bracket_bound_const(s1, base, prec) * bracket_bound_const(s2, base, prec);
            let rho1 = q_real_pow(base, &Float::with_val(prec, 1u32 - s1.clone()), prec);
            // each inner factor q^{k2(1-s2)} <= 1; at most k1 of them
            let k = solve_poly1_cutoff(&c, &rho1, &budget)?;
            let tail = Float::with_val(prec, &c * &poly1_tail(&rho1, k, prec));
            let strict = matches!(kind, SeriesKind::Double);
            Ok(TruncationPlan {
                outer_limit: k,
                inner_rule: if strict {
                    "k2 < k1 <= outer_limit".into()
                } else {
                    "k2 <= k1 <= outer_limit".into()
                },
                tail_ratio: rho1,
                tail_bound: inflate(tail),
                dim_limits: vec![],
            })
        }
        SeriesKind::Circ | SeriesKind::CircStar => {
            let [s1, s2] = sigmas else {
                return Err(EvalError::Domain("circ series takes two exponents".into()));
            };
            require(
                s1.clone() > 1u32,
                format!("circ requires Re(s1) > 1, got {s1}"),
            )?;
            let s12 = Float::with_val(prec, s1 + s2);
            require(
                s12.clone() > 1u32,
                format!("circ requires Re(s1)+Re(s2) > 1, got {s12}"),
            )?;
            let c1 = bracket_bound_const(s1, base, prec);
            let b2 = bracket_bound_const(s2, base, prec);
            let rho1 = q_real_pow(base, &Float::with_val(prec, 1u32 - s1.clone()), prec);
            if s2.clone() > 0u32 {
                // inner sum over n2 is bounded by a constant
                let qs2 = q_real_pow(base, &Float::with_val(prec, -s2.clone()), prec);
                let inner_const =
                    Float::with_val(prec, &qs2 / &Float::with_val(prec, 1u32 - qs2.clone()));
                let c = Float::with_val(prec, &c1 * &b2) * inner_const;
                let k = solve_geometric_cutoff(&c, &rho1, &budget)?;
                let one_minus = Float::with_val(prec, 1u32 - rho1.clone());
                let tail = Float::with_val(prec, Pow::pow(&rho1, k + 1)) * &c / one_minus;
                Ok(TruncationPlan {
                    outer_limit: k,
                    inner_rule: circ_rule(kind),
                    tail_ratio: rho1,
                    tail_bound: inflate(tail),
                    dim_limits: vec![],
                })
            } else {
                // Re(s2) <= 0: inner factors grow; fold them into the ratio
                let rho = q_real_pow(base, &Float::with_val(prec, 1u32 - s12.clone()), prec);
                let c = Float::with_val(prec, &c1 * &b2);
                let k = solve_poly1_cutoff(&c, &rho, &budget)?;
                let tail = Float::with_val(prec, &c * &poly1_tail(&rho, k, prec));
                Ok(TruncationPlan {
                    outer_limit: k,
                    inner_rule: circ_rule(kind),
                    tail_ratio: rho,
                    tail_bound: inflate(tail),
                    dim_limits: vec![],
                })
            }
        }
        SeriesKind::MordellTornheim => {
            if sigmas.len() < 2 {
                return Err(EvalError::Domain(
                    "Mordell-Tornheim takes r front exponents plus the last".into(),
                ));
            }
            let (fronts, last) = sigmas.split_at(sigmas.len() - 1);
            let last = &last[0];
            let r = fronts.len();
            if r > 4 {
                return Err(EvalError::Domain(format!(
                    "Mordell-Tornheim depth r = {r} exceeds the supported maximum of 4"
                )));
            }
            let mut c = bracket_bound_const(last, base, prec);
            let mut rhos = Vec::with_capacity(r);
            for (i, si) in fronts.iter().enumerate() {
                let si_last = Float::with_val(prec, si + last);
                require(
                    si_last.clone() > 2u32,
                    format!(
                        "Mordell-Tornheim requires Re(s_{}) + Re(s_last) > 2, got {si_last}",
                        i + 1
                    ),
                )?;
                c *= bracket_bound_const(si, base, prec);
                rhos.push(q_real_pow(
                    base,
                    &Float::with_val(prec, 2u32 - si_last),
                    prec,
                ));
            }
            // full-sum factors rho_j/(1-rho_j) for the union bound
            let mut fulls = Vec::with_capacity(r);
            for rho in &rhos {
                fulls.push(Float::with_val(
                    prec,
                    rho / &Float::with_val(prec, 1u32 - rho.clone()),
                ));
            }
            let per_dim_budget =
                Float::with_val(prec, &budget / &Float::with_val(prec, r as u32));
            let mut dim_limits = Vec::with_capacity(r);
            let mut tail = Float::new(prec);
            let mut points: u64 = 1;
            for i in 0..r {
                let mut others = c.clone();
                for (j, full) in fulls.iter().enumerate() {
                    if j != i {
                        others *= full;
                    }
                }
                let n_i = solve_geometric_cutoff(&others, &rhos[i], &per_dim_budget)?;
                let one_minus = Float::with_val(prec, 1u32 - rhos[i].clone());
                tail += Float::with_val(prec, Pow::pow(&rhos[i], n_i + 1)) * &others / one_minus;
                points = points.saturating_mul(n_i);
                dim_limits.push(n_i);
            }
            if points > MAX_MT_POINTS {
                return Err(EvalError::Precision(format!(
                    "Mordell-Tornheim grid of {points} points exceeds the evaluation cap"
                )));
            }
            let max_rho = rhos
                .iter()
                .cloned()
                .reduce(|a, b| if a > b { a } else { b })
                .unwrap();
            Ok(TruncationPlan {
                outer_limit: *dim_limits.iter().max().unwrap(),
                inner_rule: format!("m_i <= {dim_limits:?} per dimension"),
                tail_ratio: max_rho,
                tail_bound: inflate(tail),
                dim_limits,
            })
        }
    }
}

fn circ_rule(kind: SeriesKind) -> String {
    if matches!(kind, SeriesKind::Circ) {
        "n2 < n1 <= outer_limit".into()
    } else {
        "n2 <= n1 <= outer_limit".into()
    }
}

/// Rounding allowance: `(magnitude + 1) * steps * ops * 2^(1-prec)`.
pub(crate) fn rounding_allowance(abs_acc: &Float, steps: u64, ops: u64, prec: u32) -> Float {
    let scale = Float::with_val(prec, steps.saturating_mul(ops).max(64));
    let mag = Float::with_val(prec, abs_acc + &Float::with_val(prec, 1u32));
    (mag * scale) >> (prec - 1)
}

fn finish(
    value: CVal,
    tail: Float,
    abs_acc: &Float,
    steps: u64,
    ops: u64,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    if !value.is_finite() {
        return Err(EvalError::Domain("evaluation overflowed".into()));
    }
    let prec = ctx.working_bits();
    let bound = tail + rounding_allowance(abs_acc, steps, ops, prec);
    Ok(ValueWithError {
        value,
        abs_error_bound: bound,
        terms_used: steps,
        status: Status::Converged,
    }
    .rounded_to(ctx.mantissa_bits()))
}

/// Single q-zeta `zeta_q(s) = sum_{n>=1} q^n / [n]_q^s` for `Re(s) > 1`.
pub fn zeta_q(s: &CVal, base: &QBase, ctx: &PrecisionCtx) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let sig = [Float::with_val(prec, &s.re)];
    let plan = plan_truncation(SeriesKind::Single, &sig, base, ctx)?;
    let s = s.with_prec(prec);
    let q = base.q_at(prec);
    let qm1 = Float::with_val(prec, &q - 1u32);

    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut qn = Float::with_val(prec, 1u32);
    for _ in 1..=plan.outer_limit {
        qn *= &q;
        let bracket = Float::with_val(prec, &qn - 1u32) / &qm1;
        let term = CVal::real(qn.clone()).div(&pow_positive_real(&bracket, &s, prec));
        abs_acc += term.abs();
        sum = sum.add(&term);
    }
    finish(sum, plan.tail_bound, &abs_acc, plan.outer_limit, 48, ctx)
}

/// Shared descending sweep for the four double sums.
///
/// The inner index accumulates `w_in(k) = q^k/[k]^{s_in}`; each outer step
/// multiplies the accumulated inner tail by `w_out(k)` (with the `q^k` weight
/// for the double-zeta variants, without it for the circ variants).  Star
/// variants add the inner term before forming the outer one, strict variants
/// after.
fn double_sweep(
    s_outer: &CVal,
    s_inner: &CVal,
    kind: SeriesKind,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let sig_inner = Float::with_val(prec, &s_inner.re);
    let sig_outer = Float::with_val(prec, &s_outer.re);
    let plan = plan_truncation(kind, &[sig_inner, sig_outer], base, ctx)?;
    let k_max = plan.outer_limit;
    let s_inner = s_inner.with_prec(prec);
    let s_outer = s_outer.with_prec(prec);
    let q = base.q_at(prec);
    let qm1 = Float::with_val(prec, &q - 1u32);
    let inv_q = Float::with_val(prec, 1u32) / &q;
    let weighted = matches!(kind, SeriesKind::Double | SeriesKind::DoubleStar);
    let star = matches!(kind, SeriesKind::DoubleStar | SeriesKind::CircStar);

    let mut acc = CVal::zero(prec);
    let mut acc_abs = Float::new(prec);
    let mut inner = CVal::zero(prec);
    let mut inner_abs = Float::new(prec);
    let mut qk = Float::with_val(prec, Pow::pow(&q, k_max as u32));
    for k in (1..=k_max).rev() {
        let bracket = Float::with_val(prec, &qk - 1u32) / &qm1;
        let inner_term =
            CVal::real(qk.clone()).div(&pow_positive_real(&bracket, &s_inner, prec));
        if star {
            inner = inner.add(&inner_term);
            inner_abs += inner_term.abs();
        }
        let outer_factor = if weighted {
            CVal::real(qk.clone()).div(&pow_positive_real(&bracket, &s_outer, prec))
        } else {
            CVal::one(prec).div(&pow_positive_real(&bracket, &s_outer, prec))
        };
        acc = acc.add(&outer_factor.mul(&inner));
        acc_abs += outer_factor.abs() * &inner_abs;
        if !star {
            inner = inner.add(&inner_term);
            inner_abs += inner_term.abs();
        }
        if k > 1 {
            qk *= &inv_q;
        }
    }
    finish(acc, plan.tail_bound, &acc_abs, 2 * k_max, 64, ctx)
}

/// q-double zeta `zeta_q(s1,s2) = sum_{k1>k2>=1} q^{k1} q^{k2} /
/// ([k1]^{s1} [k2]^{s2})` for `Re(s1) > 1`, `Re(s2) >= 1` and
/// `Re(s1)+Re(s2) > 2`.
pub fn zeta2_q(s1: &CVal, s2: &CVal, base: &QBase, ctx: &PrecisionCtx) -> Result<ValueWithError> {
    double_sweep(s2, s1, SeriesKind::Double, base, ctx)
}

/// Star variant with `k1 >= k2 >= 1`.
pub fn zeta2_star_q(
    s1: &CVal,
    s2: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    double_sweep(s2, s1, SeriesKind::DoubleStar, base, ctx)
}

/// Circ variant `sum_{n1>n2>=1} q^{n1} / ([n1]^{s1} [n2]^{s2})`: only the
/// outer index carries the q-power weight.  Requires `Re(s1) > 1` and
/// `Re(s1)+Re(s2) > 1`.
pub fn circ_q(s1: &CVal, s2: &CVal, base: &QBase, ctx: &PrecisionCtx) -> Result<ValueWithError> {
    double_sweep(s2, s1, SeriesKind::Circ, base, ctx)
}

/// Circ-star variant with `n1 >= n2 >= 1`; equals
/// `circ_q(s1,s2) + zeta_q(s1+s2)`.
pub fn circ_star_q(
    s1: &CVal,
    s2: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    double_sweep(s2, s1, SeriesKind::CircStar, base, ctx)
}

/// Diagonal series `sum_{n>=1} q^{2n} / [n]_q^s` for `Re(s) > 2`; the
/// left-hand side of the reduction onto `zeta_q(s) + (q-1) zeta_q(s-1)`.
pub fn diag_power_sum(s: &CVal, base: &QBase, ctx: &PrecisionCtx) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let sigma = Float::with_val(prec, &s.re);
    require(
        sigma.clone() > 2u32,
        format!("diagonal series requires Re(s) > 2, got {sigma}"),
    )?;
    let budget = Float::with_val(prec, ctx.abs_tol() >> 1);
    let c = bracket_bound_const(&sigma, base, prec);
    let rho = q_real_pow(base, &Float::with_val(prec, 2u32 - sigma.clone()), prec);
    let k_max = solve_geometric_cutoff(&c, &rho, &budget)?;
    let one_minus = Float::with_val(prec, 1u32 - rho.clone());
    let tail = Float::with_val(prec, Pow::pow(&rho, k_max + 1)) * &c / one_minus;

    let s = s.with_prec(prec);
    let q = base.q_at(prec);
    let qm1 = Float::with_val(prec, &q - 1u32);
    let q2 = Float::with_val(prec, &q * &q);
    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut qn = Float::with_val(prec, 1u32);
    let mut q2n = Float::with_val(prec, 1u32);
    for _ in 1..=k_max {
        qn *= &q;
        q2n *= &q2;
        let bracket = Float::with_val(prec, &qn - 1u32) / &qm1;
        let term = CVal::real(q2n.clone()).div(&pow_positive_real(&bracket, &s, prec));
        abs_acc += term.abs();
        sum = sum.add(&term);
    }
    finish(sum, tail, &abs_acc, k_max, 48, ctx)
}

/// The reindexed form of the double zeta,
/// `sum_{k1,k2>0} q^{k1+k2} q^{k2} / ([k1+k2]^{s1} [k2]^{s2})`, summed over
/// the product lattice directly.  Structurally independent of [`zeta2_q`],
/// which makes it a usable second route for the change-of-variables check.
pub fn zeta2_q_reindexed(
    s1: &CVal,
    s2: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let sig1 = Float::with_val(prec, &s1.re);
    let sig2 = Float::with_val(prec, &s2.re);
    require(
        sig1.clone() > 1u32,
        format!("requires Re(s1) > 1, got {sig1}"),
    )?;
    require(
        sig2.clone() >= 1u32,
        format!("requires Re(s2) >= 1, got {sig2}"),
    )?;
    let s12 = Float::with_val(prec, &sig1 + &sig2);
    require(
        s12.clone() > 2u32,
        format!("requires Re(s1)+Re(s2) > 2, got {s12}"),
    )?;

    // termwise bound: C q^{k1(1-sig1)} q^{k2(2-sig1-sig2)}
    let budget = Float::with_val(prec, ctx.abs_tol() >> 1);
    let half_budget = Float::with_val(prec, &budget >> 1);
    let c = bracket_bound_const(&sig1, base, prec) * bracket_bound_const(&sig2, base, prec);
    let rho_a = q_real_pow(base, &Float::with_val(prec, 1u32 - sig1.clone()), prec);
    let rho_b = q_real_pow(base, &Float::with_val(prec, 2u32 - s12.clone()), prec);
    let full_a = Float::with_val(prec, &rho_a / &Float::with_val(prec, 1u32 - rho_a.clone()));
    let full_b = Float::with_val(prec, &rho_b / &Float::with_val(prec, 1u32 - rho_b.clone()));
    let n1 = solve_geometric_cutoff(&Float::with_val(prec, &c * &full_b), &rho_a, &half_budget)?;
    let n2 = solve_geometric_cutoff(&Float::with_val(prec, &c * &full_a), &rho_b, &half_budget)?;
    let tail_a = Float::with_val(prec, Pow::pow(&rho_a, n1 + 1)) * &c * &full_b
        / Float::with_val(prec, 1u32 - rho_a.clone());
    let tail_b = Float::with_val(prec, Pow::pow(&rho_b, n2 + 1)) * &c * &full_a
        / Float::with_val(prec, 1u32 - rho_b.clone());
    let tail = Float::with_val(prec, &tail_a + &tail_b);

    let s1 = s1.with_prec(prec);
    let s2 = s2.with_prec(prec);
    let q = base.q_at(prec);
    let qm1 = Float::with_val(prec, &q - 1u32);
    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut qk2 = Float::with_val(prec, 1u32);
    for _k2 in 1..=n2 {
        qk2 *= &q;
        let bracket2 = Float::with_val(prec, &qk2 - 1u32) / &qm1;
        let w2 = CVal::real(Float::with_val(prec, &qk2 * &qk2))
            .div(&pow_positive_real(&bracket2, &s2, prec));
        let mut qk1 = Float::with_val(prec, 1u32);
        let mut inner = CVal::zero(prec);
        let mut inner_abs = Float::new(prec);
        for _k1 in 1..=n1 {
            qk1 *= &q;
            let qtot = Float::with_val(prec, &qk1 * &qk2);
            let bracket_tot = Float::with_val(prec, &qtot - 1u32) / &qm1;
            let t = CVal::real(qk1.clone()).div(&pow_positive_real(&bracket_tot, &s1, prec));
            inner = inner.add(&t);
            inner_abs += t.abs();
        }
        sum = sum.add(&w2.mul(&inner));
        abs_acc += w2.abs() * &inner_abs;
    }
    finish(sum, tail, &abs_acc, n1 * n2, 64, ctx)
}

/// q-Mordell-Tornheim r-ple sum
/// `sum q^{2(m1+...+mr)} / ([m1]^{s1} ... [mr]^{sr} [m1+...+mr]^{s_last})`.
///
/// Enforced sufficient condition: `Re(s_i + s_last) > 2` for every front
/// exponent; depth is capped at `r <= 4`.
pub fn mt_q(
    s_front: &[CVal],
    s_last: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let r = s_front.len();
    require(r >= 1, "Mordell-Tornheim requires r >= 1")?;
    if r > 4 {
        return Err(EvalError::Domain(format!(
            "Mordell-Tornheim depth r = {r} exceeds the supported maximum of 4"
        )));
    }
    let prec = ctx.working_bits();
    let mut sigmas: Vec<Float> = s_front
        .iter()
        .map(|s| Float::with_val(prec, &s.re))
        .collect();
    sigmas.push(Float::with_val(prec, &s_last.re));
    let plan = plan_truncation(SeriesKind::MordellTornheim, &sigmas, base, ctx)?;
    let limits = plan.dim_limits.clone();

    let q = base.q_at(prec);
    let qm1 = Float::with_val(prec, &q - 1u32);
    let q2 = Float::with_val(prec, &q * &q);
    let s_last = s_last.with_prec(prec);

    // front tables: A_i[m] = q^{2m} / [m]^{s_i}, 1-indexed
    let mut tables: Vec<Vec<CVal>> = Vec::with_capacity(r);
    for (i, si) in s_front.iter().enumerate() {
        let si = si.with_prec(prec);
        let mut table = Vec::with_capacity(limits[i] as usize + 1);
        table.push(CVal::zero(prec)); // unused slot 0
        let mut qm = Float::with_val(prec, 1u32);
        let mut q2m = Float::with_val(prec, 1u32);
        for _ in 1..=limits[i] {
            qm *= &q;
            q2m *= &q2;
            let bracket = Float::with_val(prec, &qm - 1u32) / &qm1;
            table.push(CVal::real(q2m.clone()).div(&pow_positive_real(&bracket, &si, prec)));
        }
        tables.push(table);
    }
    // total-index table: B[M] = [M]^{-s_last}
    let total_max: u64 = limits.iter().sum();
    let mut btable = Vec::with_capacity(total_max as usize + 1);
    btable.push(CVal::zero(prec));
    {
        let mut qm = Float::with_val(prec, 1u32);
        for _ in 1..=total_max {
            qm *= &q;
            let bracket = Float::with_val(prec, &qm - 1u32) / &qm1;
            btable.push(CVal::one(prec).div(&pow_positive_real(&bracket, &s_last, prec)));
        }
    }

    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut steps: u64 = 0;
    let mut idx = vec![1u64; r];
    'outer: loop {
        let mut prod = CVal::one(prec);
        let mut total: u64 = 0;
        for (i, &m) in idx.iter().enumerate() {
            prod = prod.mul(&tables[i][m as usize]);
            total += m;
        }
        let term = prod.mul(&btable[total as usize]);
        sum = sum.add(&term);
        abs_acc += term.abs();
        steps += 1;
        // odometer over the box
        let mut d = r;
        loop {
            if d == 0 {
                break 'outer;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] <= limits[d] {
                break;
            }
            idx[d] = 1;
        }
    }
    finish(
        sum,
        plan.tail_bound,
        &abs_acc,
        steps,
        (r as u64 + 2) * 16,
        ctx,
    )
}

/// Brute-force oracle: the plain truncated sum of `kind` with every index at
/// most `cutoff`, no tail accounting.  `args` carries the exponents in
/// series order (for Mordell-Tornheim: fronts followed by the last).
pub fn naive_oracle(
    kind: SeriesKind,
    args: &[&CVal],
    base: &QBase,
    cutoff: u64,
    ctx: &PrecisionCtx,
) -> Result<CVal> {
    require(cutoff >= 1, "cutoff must be >= 1")?;
    let prec = ctx.working_bits();
    let q = base.q_at(prec);
    let qm1 = Float::with_val(prec, &q - 1u32);
    let max_index = match kind {
        SeriesKind::MordellTornheim => cutoff * (args.len() as u64 - 1),
        _ => cutoff,
    };
    let mut qpow = Vec::with_capacity(max_index as usize + 1);
    let mut bracket = Vec::with_capacity(max_index as usize + 1);
    qpow.push(Float::with_val(prec, 1u32));
    bracket.push(Float::new(prec));
    for k in 1..=max_index {
        let qk = Float::with_val(prec, &qpow[k as usize - 1] * &q);
        bracket.push(Float::with_val(prec, &qk - 1u32) / &qm1);
        qpow.push(qk);
    }
    let ipow = |k: u64, s: &CVal| pow_positive_real(&bracket[k as usize], s, prec);

    match kind {
        SeriesKind::Single => {
            let [s] = args else {
                return Err(EvalError::Domain("single takes one exponent".into()));
            };
            let mut sum = CVal::zero(prec);
            for n in 1..=cutoff {
                sum = sum.add(&CVal::real(qpow[n as usize].clone()).div(&ipow(n, s)));
            }
            Ok(sum)
        }
        SeriesKind::Double | SeriesKind::DoubleStar => {
            let [s1, s2] = args else {
                return Err(EvalError::Domain("double takes two exponents".into()));
            };
            let strict = matches!(kind, SeriesKind::Double);
            let mut sum = CVal::zero(prec);
            for k1 in 1..=cutoff {
                let w1 = CVal::real(qpow[k1 as usize].clone()).div(&ipow(k1, s1));
                let k2_max = if strict { k1 - 1 } else { k1 };
                for k2 in 1..=k2_max {
                    let w2 = CVal::real(qpow[k2 as usize].clone()).div(&ipow(k2, s2));
                    sum = sum.add(&w1.mul(&w2));
                }
            }
            Ok(sum)
        }
        SeriesKind::Circ | SeriesKind::CircStar => {
            let [s1, s2] = args else {
                return Err(EvalError::Domain("circ takes two exponents".into()));
            };
            let strict = matches!(kind, SeriesKind::Circ);
            let mut sum = CVal::zero(prec);
            for n1 in 1..=cutoff {
                let w1 = CVal::real(qpow[n1 as usize].clone()).div(&ipow(n1, s1));
                let n2_max = if strict { n1 - 1 } else { n1 };
                for n2 in 1..=n2_max {
                    let w2 = CVal::one(prec).div(&ipow(n2, s2));
                    sum = sum.add(&w1.mul(&w2));
                }
            }
            Ok(sum)
        }
        SeriesKind::MordellTornheim => {
            if args.len() < 2 {
                return Err(EvalError::Domain(
                    "Mordell-Tornheim takes fronts plus last".into(),
                ));
            }
            let (fronts, last) = args.split_at(args.len() - 1);
            let last = last[0];
            let r = fronts.len();
            let mut idx = vec![1u64; r];
            let mut sum = CVal::zero(prec);
            'outer: loop {
                let mut prod = CVal::one(prec);
                let mut total = 0u64;
                for (i, &m) in idx.iter().enumerate() {
                    let w = CVal::real(Float::with_val(
                        prec,
                        &qpow[m as usize] * &qpow[m as usize],
                    ))
                    .div(&ipow(m, fronts[i]));
                    prod = prod.mul(&w);
                    total += m;
                }
                sum = sum.add(&prod.mul(&CVal::one(prec).div(&ipow(total, last))));
                let mut d = r;
                loop {
                    if d == 0 {
                        break 'outer;
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] <= cutoff {
                        break;
                    }
                    idx[d] = 1;
                }
            }
            Ok(sum)
        }
    }
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

    fn c_int(v: i64) -> CVal {
        CVal::from_i64(v, ctx().working_bits())
    }

    fn diff_abs(a: &CVal, b: &CVal) -> Float {
        a.sub(b).abs()
    }

    #[test]
    fn zeta_q_rejects_bad_domain() {
        let b = base(2.0);
        let s = CVal::from_f64(0.5, 0.0, 160);
        assert!(matches!(zeta_q(&s, &b, &ctx()), Err(EvalError::Domain(_))));
        let s = CVal::from_f64(1.0, 0.0, 160);
        assert!(zeta_q(&s, &b, &ctx()).is_err());
    }

    #[test]
    fn zeta_q_matches_oracle() {
        let c = ctx();
        for (q, s) in [(2.0, 2i64), (3.0, 2), (2.0, 5), (1.5, 3)] {
            let b = base(q);
            let sv = c_int(s);
            let v = zeta_q(&sv, &b, &c).unwrap();
            let plan = plan_truncation(
                SeriesKind::Single,
                &[Float::with_val(c.working_bits(), s)],
                &b,
                &c,
            )
            .unwrap();
            let oracle = naive_oracle(SeriesKind::Single, &[&sv], &b, 4 * plan.outer_limit, &c)
                .unwrap();
            let d = diff_abs(&v.value, &oracle);
            assert!(
                d <= v.abs_error_bound,
                "q={q} s={s}: diff {d} > bound {}",
                v.abs_error_bound
            );
            assert!(v.value.re > 0u32);
        }
    }

    #[test]
    fn naive_oracle_trivial_points() {
        let c = ctx();
        let b = base(2.0);
        let p = c.working_bits();
        // single, cutoff 1: first term 2^1/[1]^2 = 2
        let v = naive_oracle(SeriesKind::Single, &[&c_int(2)], &b, 1, &c).unwrap();
        assert!(diff_abs(&v, &CVal::from_i64(2, p)) < 1e-30);
        // double, cutoff 2: the single pair (2,1): 4*2/(9*1) = 8/9
        let v = naive_oracle(SeriesKind::Double, &[&c_int(2), &c_int(2)], &b, 2, &c).unwrap();
        let want = CVal::real(Float::with_val(p, 8u32) / 9u32);
        assert!(diff_abs(&v, &want) < 1e-30);
        // circ, cutoff 2: 2^2/([2]^3 [1]) = 4/27
        let v = naive_oracle(SeriesKind::Circ, &[&c_int(3), &c_int(1)], &b, 2, &c).unwrap();
        let want = CVal::real(Float::with_val(p, 4u32) / 27u32);
        assert!(diff_abs(&v, &want) < 1e-30);
    }

    #[test]
    fn double_variants_match_oracles() {
        let c = ctx();
        let b = base(2.0);
        let cases: [(SeriesKind, i64, i64); 6] = [
            (SeriesKind::Double, 2, 2),
            (SeriesKind::Double, 3, 2),
            (SeriesKind::DoubleStar, 2, 2),
            (SeriesKind::DoubleStar, 3, 2),
            (SeriesKind::Circ, 3, 1),
            (SeriesKind::CircStar, 3, 1),
        ];
        for (kind, s1, s2) in cases {
            let s1v = c_int(s1);
            let s2v = c_int(s2);
            let v = match kind {
                SeriesKind::Double => zeta2_q(&s1v, &s2v, &b, &c).unwrap(),
                SeriesKind::DoubleStar => zeta2_star_q(&s1v, &s2v, &b, &c).unwrap(),
                SeriesKind::Circ => circ_q(&s1v, &s2v, &b, &c).unwrap(),
                SeriesKind::CircStar => circ_star_q(&s1v, &s2v, &b, &c).unwrap(),
                _ => unreachable!(),
            };
            let sig = [
                Float::with_val(c.working_bits(), s1),
                Float::with_val(c.working_bits(), s2),
            ];
            let plan = plan_truncation(kind, &sig, &b, &c).unwrap();
            let oracle =
                naive_oracle(kind, &[&s1v, &s2v], &b, 2 * plan.outer_limit, &c).unwrap();
            let d = diff_abs(&v.value, &oracle);
            assert!(
                d <= v.abs_error_bound,
                "{kind:?} ({s1},{s2}): diff {d} > bound {}",
                v.abs_error_bound
            );
            assert!(v.value.re > 0u32, "{kind:?} positivity");
        }
    }

    #[test]
    fn mt_matches_oracle() {
        let c = ctx();
        let b = base(2.0);
        let v = mt_q(&[c_int(3), c_int(1)], &c_int(2), &b, &c).unwrap();
        let oracle = naive_oracle(
            SeriesKind::MordellTornheim,
            &[&c_int(3), &c_int(1), &c_int(2)],
            &b,
            200,
            &c,
        )
        .unwrap();
        let d = diff_abs(&v.value, &oracle);
        assert!(d <= v.abs_error_bound, "diff {d} > {}", v.abs_error_bound);

        // depth cap
        let fronts = [c_int(3), c_int(3), c_int(3), c_int(3), c_int(3)];
        assert!(matches!(
            mt_q(&fronts, &c_int(3), &b, &c),
            Err(EvalError::Domain(_))
        ));
        // convergence precondition
        assert!(mt_q(&[c_int(1)], &c_int(1), &b, &c).is_err());
    }

    #[test]
    fn monotone_term_decay() {
        // q^{n+1}/[n+1]^s < q^n/[n]^s for all n >= 1 once Re(s) > 1
        let c = ctx();
        let p = c.working_bits();
        let b = base(2.0);
        let s = c_int(3);
        let q = b.q_at(p);
        let qm1 = Float::with_val(p, &q - 1u32);
        let mut prev: Option<Float> = None;
        let mut qn = Float::with_val(p, 1u32);
        for _ in 1..=40 {
            qn *= &q;
            let bracket = Float::with_val(p, &qn - 1u32) / &qm1;
            let term = CVal::real(qn.clone())
                .div(&pow_positive_real(&bracket, &s, p))
                .abs();
            if let Some(pv) = prev {
                assert!(term < pv);
            }
            prev = Some(term);
        }
    }

    #[test]
    fn classical_limit_sanity() {
        // zeta_q(2) at q = 1.001 approximates pi^2/6 within 1e-2
        let c = PrecisionCtx::new(64, 16).unwrap();
        let b = QBase::from_f64(1.001, &c).unwrap();
        let v = zeta_q(&CVal::from_i64(2, c.working_bits()), &b, &c).unwrap();
        let p = c.working_bits();
        let target = Float::with_val(p, crate::qnum::pi(p).square_ref()) / 6u32;
        let d = Float::with_val(p, &v.value.re - &target).abs();
        assert!(d < 1e-2, "diff {d}");
    }
}
