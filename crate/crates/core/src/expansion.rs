//! Binomial-expansion (continuation) evaluators, pole classification, the
//! closed forms of the iterated limits at `(0,0)`, and `q -> 1` limit
//! extrapolation.
//!
//! Expanding `(1 - q^{-n})^{-s}` binomially turns each series of the family
//! into sums of terms `C(s,k) / (q^{x_0+k} - 1)` with rising-factorial
//! coefficients `C(s,k) = s(s+1)...(s+k-1)/k!` and affine exponent ladders.
//! Replacing every geometric sub-sum by its closed form continues the
//! function beyond the convergence region of the defining series; the
//! evaluators here sum those expansions with certified tails (polynomially
//! growing coefficients against geometrically shrinking denominators).
//!
//! Poles arise where a retained denominator vanishes against a non-vanishing
//! coefficient; inputs recognized on such a lattice are rejected rather than
//! evaluated.

use crate::error::{EvalError, Result};
use crate::qnum::{pi, pow_positive_real, q_pow, CVal, PrecisionCtx, QBase, Status, ValueWithError};
use crate::series::rounding_allowance;
use rug::ops::Pow;
use rug::Float;

/// Iteration cap for expansion sums.
const MAX_EXPANSION_TERMS: u64 = 5_000_000;

/// Which variable's limit is taken first in the iterated limits of the
/// double zeta at integer points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitOrder {
    /// `lim_{s1->n1} lim_{s2->n2}`: the inner (first) limit is in `s2`.
    S2First,
    /// `lim_{s2->n2} lim_{s1->n1}`: the inner (first) limit is in `s1`.
    S1First,
}

impl LimitOrder {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitOrder::S2First => "s2_first",
            LimitOrder::S1First => "s1_first",
        }
    }
}

/// Classification of `(s1, s2)` against the stated pole families of the circ
/// double zeta.
#[derive(Debug, Clone)]
pub struct PoleClassification {
    pub is_pole: bool,
    pub offending_exponent: Option<CVal>,
    pub family: String,
}

/// Distance from `v` to the nearest integer, together with that integer.
fn nearest_integer(v: &Float) -> (Float, Float) {
    let n = v.clone().round();
    let d = Float::with_val(v.prec(), v - &n).abs();
    (n, d)
}

/// If some integer `k >= 0` puts `x0 + k` on the pole lattice
/// (`q^{x0+k} = 1` within recognition tolerance), returns it.
fn lattice_offender(x0: &CVal, base: &QBase, ctx: &PrecisionCtx) -> Option<i64> {
    let prec = ctx.working_bits();
    let thr = ctx.pole_threshold();
    let log_q = base.log_q_at(prec);
    let two_pi = pi(prec) * 2u32;
    let im_part = Float::with_val(prec, &x0.im * &log_q) / &two_pi;
    let (_, im_dist) = nearest_integer(&im_part);
    if im_dist > thr {
        return None;
    }
    // Re(x0 + k) must vanish; only one candidate k
    let k = Float::with_val(prec, -&x0.re).round();
    let k_f = k.to_f64();
    if !(0.0..=1e15).contains(&k_f) {
        return None;
    }
    let re_shifted = Float::with_val(prec, &x0.re + &k) * &log_q / &two_pi;
    if re_shifted.abs() <= thr {
        Some(k_f as i64)
    } else {
        None
    }
}

fn ceil_pos(v: Float) -> u64 {
    let f = v.to_f64();
    if f.is_finite() && f > 0.0 {
        f.ceil() as u64
    } else {
        0
    }
}

/// One summand family `sum_{k>=0} C(s,k) prod_i 1/(q^{x0_i + k} - 1)`.
///
/// Certified truncation: once every shifted exponent has real part >= 1 and
/// the coefficient growth ratio is below `g = (1 + q^d)/2` (`d` = number of
/// denominators), the tail from index `K` is dominated by
///
/// ```text
/// C(|s|, K) prod_i q^-(x0_i.re + K) (1 - 1/q)^-d / (1 - g/q^d).
/// ```
fn sum_coeff_inv(
    s: &CVal,
    x0s: &[CVal],
    budget: &Float,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let d = x0s.len() as u32;
    let q = base.q_at(prec);
    let s = s.with_prec(prec);
    let s_abs = s.abs();

    for x0 in x0s {
        if let Some(k) = lattice_offender(x0, base, ctx) {
            return Err(EvalError::Pole(format!(
                "expansion denominator q^({x0} + {k}) - 1 vanishes"
            )));
        }
    }

    let qd = Float::with_val(prec, Pow::pow(&q, d));
    let gamma_star = Float::with_val(prec, 1u32 + &qd) >> 1;
    let inv_one_minus_invq = Float::with_val(prec, &q / &Float::with_val(prec, &q - 1u32));
    let tail_const = Float::with_val(prec, Pow::pow(&inv_one_minus_invq, d))
        / Float::with_val(prec, 1u32 - Float::with_val(prec, &gamma_star / &qd));
    // index past which (|s|+k)/(k+1) <= (1+q^d)/2
    let k0_coeff = ceil_pos(Float::with_val(
        prec,
        (Float::with_val(prec, 2u32 * &s_abs) - Float::with_val(prec, 2u32 * &qd))
            / Float::with_val(prec, &qd - 1u32),
    )) + 1;
    // index past which every Re(x0_i + k) >= 1
    let k_min_exp = x0s
        .iter()
        .map(|x0| ceil_pos(Float::with_val(prec, 1u32 - x0.re.clone())))
        .max()
        .unwrap_or(0);

    let mut qx: Vec<CVal> = Vec::with_capacity(x0s.len());
    for x0 in x0s {
        qx.push(q_pow(base, &x0.with_prec(prec))?);
    }
    let mut coeff = CVal::one(prec);
    let mut coeff_abs = Float::with_val(prec, 1u32);
    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut status = Status::Converged;
    let mut prox_err = Float::new(prec);
    let thr = ctx.pole_threshold();

    let mut k: u64 = 0;
    loop {
        let mut term = coeff.clone();
        let mut term_rel = Float::new(prec);
        for qxi in &qx {
            let denom = qxi.sub(&CVal::one(prec));
            let denom_abs = denom.abs();
            if denom_abs.is_zero() {
                return Err(EvalError::Pole(format!(
                    "expansion denominator vanished at k = {k}"
                )));
            }
            if denom_abs < thr {
                status = Status::PoleProximate;
                term_rel += Float::with_val(prec, 1u32) >> (ctx.mantissa_bits() / 2);
            }
            term = term.div(&denom);
        }
        let term_abs = term.abs();
        sum = sum.add(&term);
        prox_err += Float::with_val(prec, &term_abs * &term_rel);
        abs_acc += term_abs;

        // advance coefficient and exponentials
        let factor = CVal {
            re: Float::with_val(prec, &s.re + k),
            im: s.im.clone(),
        };
        let kp1 = Float::with_val(prec, k + 1);
        coeff = coeff.mul(&factor);
        coeff = CVal {
            re: coeff.re / &kp1,
            im: coeff.im / &kp1,
        };
        coeff_abs *= Float::with_val(prec, Float::with_val(prec, &s_abs + k) / &kp1);
        for qxi in qx.iter_mut() {
            qxi.re *= &q;
            qxi.im *= &q;
        }
        k += 1;

        if k >= k_min_exp && k >= k0_coeff {
            let mut decay = coeff_abs.clone();
            for x0 in x0s {
                let e = Float::with_val(prec, &x0.re + k);
                decay *= Float::with_val(prec, Pow::pow(&q, &Float::with_val(prec, -e)));
            }
            let tail = Float::with_val(prec, &decay * &tail_const);
            if tail <= *budget {
                let bound =
                    tail + prox_err + rounding_allowance(&abs_acc, k, 32 * d as u64 + 32, prec);
                return Ok(ValueWithError {
                    value: sum,
                    abs_error_bound: bound,
                    terms_used: k,
                    status,
                });
            }
        }
        if k >= MAX_EXPANSION_TERMS {
            return Err(EvalError::Precision(
                "binomial expansion did not certify within the iteration cap".into(),
            ));
        }
    }
}

/// Scales an expansion sum by `(q-1)^s` with bound propagation and final
/// rounding.
fn scale_by_qm1_pow(
    inner: ValueWithError,
    s: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let qm1 = Float::with_val(prec, base.q() - 1u32);
    let w = pow_positive_real(&qm1, &s.with_prec(prec), prec);
    if !w.is_finite() {
        return Err(EvalError::Domain("(q-1)^s overflowed".into()));
    }
    let out = ValueWithError::closed(w, 8).mul(&inner);
    if !out.value.is_finite() {
        return Err(EvalError::Domain("expansion value overflowed".into()));
    }
    Ok(out.rounded_to(ctx.mantissa_bits()))
}

/// Magnitude of `(q-1)^s`, used to pre-scale tail budgets.
fn qm1_pow_mag(s: &CVal, base: &QBase, prec: u32) -> Float {
    let qm1 = Float::with_val(prec, base.q() - 1u32);
    Float::with_val(prec, Pow::pow(&qm1, &s.re))
}

/// Single-variable continuation
/// `zeta_q(s) = (q-1)^s sum_k C(s,k) / (q^{s+k-1} - 1)`,
/// defined for all `s` off the lattice `{1 - k + 2 pi i b / ln q}`.
/// Agrees with the defining series wherever `Re(s) > 1`.
pub fn zeta_q_expansion_single(
    s: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let s = s.with_prec(prec);
    let x0 = CVal {
        re: Float::with_val(prec, &s.re - 1u32),
        im: s.im.clone(),
    };
    let mag = qm1_pow_mag(&s, base, prec).max(&Float::with_val(prec, 1u32));
    let budget = Float::with_val(prec, ctx.abs_tol() >> 1) / mag;
    let inner = sum_coeff_inv(&s, &[x0], &budget, base, ctx)?;
    scale_by_qm1_pow(inner, &s, base, ctx)
}

/// Continuation of the q-double zeta via its binomial expansion
/// `(q-1)^{s1+s2} sum_{k1,k2} C(s1,k1) C(s2,k2) /
/// ((q^{s1+k1-1}-1)(q^{s1+s2+k1+k2-2}-1))`.
pub fn zeta2_q_expansion(
    s1: &CVal,
    s2: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let s1 = s1.with_prec(prec);
    let s2 = s2.with_prec(prec);
    let s12 = s1.add(&s2);
    let q = base.q_at(prec);

    // pole lattices: x1 = s1 - 1 + k1, x2 = s1 + s2 - 2 + (k1 + k2)
    let x1_0 = CVal {
        re: Float::with_val(prec, &s1.re - 1u32),
        im: s1.im.clone(),
    };
    let x2_0 = CVal {
        re: Float::with_val(prec, &s12.re - 2u32),
        im: s12.im.clone(),
    };
    for (x0, fam) in [(&x1_0, "s1"), (&x2_0, "s1+s2")] {
        if let Some(k) = lattice_offender(x0, base, ctx) {
            return Err(EvalError::Pole(format!(
                "{fam} exponent family hits q^x = 1 at offset {k}"
            )));
        }
    }

    let mag = qm1_pow_mag(&s12, base, prec).max(&Float::with_val(prec, 1u32));
    let total_budget = Float::with_val(prec, ctx.abs_tol() >> 1) / mag;
    let outer_tail_budget = Float::with_val(prec, &total_budget >> 2);
    let inner_total_budget = Float::with_val(prec, &total_budget >> 2);

    let s1_abs = s1.abs();
    let s2_abs = s2.abs();
    // inner sums for k1 > K are bounded by q^-(x2re0 + k1) (1-1/q)^-(|s2|+1)
    let inv_one_minus_invq = Float::with_val(prec, &q / &Float::with_val(prec, &q - 1u32));
    let u_const = Float::with_val(
        prec,
        Pow::pow(&inv_one_minus_invq, &Float::with_val(prec, &s2_abs + 1u32)),
    );
    let q2 = Float::with_val(prec, &q * &q);
    let gamma_star2 = Float::with_val(prec, 1u32 + &q2) >> 1;
    let outer_tail_const = Float::with_val(prec, &inv_one_minus_invq * &u_const)
        / Float::with_val(prec, 1u32 - Float::with_val(prec, &gamma_star2 / &q2));
    let k0_coeff = ceil_pos(Float::with_val(
        prec,
        (Float::with_val(prec, 2u32 * &s1_abs) - Float::with_val(prec, 2u32 * &q2))
            / Float::with_val(prec, &q2 - 1u32),
    )) + 1;
    let k_min = ceil_pos(Float::with_val(prec, 1u32 - x1_0.re.clone()))
        .max(ceil_pos(Float::with_val(prec, 1u32 - x2_0.re.clone())));

    let mut qx1 = q_pow(base, &x1_0)?;
    let mut coeff1 = CVal::one(prec);
    let mut coeff1_abs = Float::with_val(prec, 1u32);
    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut err_acc = Float::new(prec);
    let mut status = Status::Converged;
    let mut terms: u64 = 0;
    let thr = ctx.pole_threshold();
    let one = CVal::one(prec);

    let mut k1: u64 = 0;
    loop {
        // outer factor F = C(s1,k1)/(q^{x1}-1)
        let denom = qx1.sub(&one);
        let denom_abs = denom.abs();
        if denom_abs.is_zero() {
            return Err(EvalError::Pole(format!(
                "outer denominator vanished at k1 = {k1}"
            )));
        }
        let mut f_rel = Float::with_val(prec, 1u32) >> (prec - 8);
        if denom_abs < thr {
            status = Status::PoleProximate;
            f_rel += Float::with_val(prec, 1u32) >> (ctx.mantissa_bits() / 2);
        }
        let f = coeff1.div(&denom);
        let f_abs = f.abs();

        // inner sum over k2 with exponent base x2_0 + k1
        let inner_x0 = CVal {
            re: Float::with_val(prec, &x2_0.re + k1),
            im: x2_0.im.clone(),
        };
        let shift = 60u32.min(k1 as u32 + 3);
        let inner_budget = Float::with_val(prec, &inner_total_budget >> shift)
            / f_abs.clone().max(&Float::with_val(prec, 1u32));
        let inner = sum_coeff_inv(&s2, &[inner_x0], &inner_budget, base, ctx)?;
        status = status.worst(inner.status);

        sum = sum.add(&f.mul(&inner.value));
        let inner_mag = inner.value.abs();
        abs_acc += Float::with_val(prec, &f_abs * &inner_mag);
        err_acc += Float::with_val(prec, &f_abs * &inner.abs_error_bound)
            + Float::with_val(prec, &f_abs * &f_rel)
                * Float::with_val(prec, &inner_mag + &inner.abs_error_bound);
        terms += inner.terms_used + 1;

        // advance outer state
        let factor = CVal {
            re: Float::with_val(prec, &s1.re + k1),
            im: s1.im.clone(),
        };
        let kp1 = Float::with_val(prec, k1 + 1);
        coeff1 = coeff1.mul(&factor);
        coeff1 = CVal {
            re: coeff1.re / &kp1,
            im: coeff1.im / &kp1,
        };
        coeff1_abs *= Float::with_val(prec, Float::with_val(prec, &s1_abs + k1) / &kp1);
        qx1.re *= &q;
        qx1.im *= &q;
        k1 += 1;

        if k1 >= k_min && k1 >= k0_coeff {
            let e1 = Float::with_val(prec, &x1_0.re + k1);
            let e2 = Float::with_val(prec, &x2_0.re + k1);
            let decay = Float::with_val(prec, Pow::pow(&q, &Float::with_val(prec, -(e1 + e2))));
            let tail = Float::with_val(prec, &coeff1_abs * &decay) * &outer_tail_const;
            if tail <= outer_tail_budget {
                let bound = tail + err_acc + rounding_allowance(&abs_acc, terms, 96, prec);
                let out = ValueWithError {
                    value: sum,
                    abs_error_bound: bound,
                    terms_used: terms,
                    status,
                };
                return scale_by_qm1_pow(out, &s12, base, ctx);
            }
        }
        if k1 >= MAX_EXPANSION_TERMS {
            return Err(EvalError::Precision(
                "double-zeta expansion did not certify within the iteration cap".into(),
            ));
        }
    }
}

/// Continuation of the circ double zeta via its binomial expansion
/// `(q-1)^{s1+s2} sum_{k2} C(s2,k2) sum_{k1} C(s1,k1) /
/// ((q^{s1+s2+k1+k2-1}-1)(q^{s1+k1-1}-1))`.
pub fn circ_expansion(
    s1: &CVal,
    s2: &CVal,
    base: &QBase,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let s1 = s1.with_prec(prec);
    let s2 = s2.with_prec(prec);
    let s12 = s1.add(&s2);
    let q = base.q_at(prec);

    // pole lattices: x_b = s1 - 1 + k1 and x_a = s1 + s2 - 1 + (k1 + k2)
    let xb_0 = CVal {
        re: Float::with_val(prec, &s1.re - 1u32),
        im: s1.im.clone(),
    };
    let xa_0 = CVal {
        re: Float::with_val(prec, &s12.re - 1u32),
        im: s12.im.clone(),
    };
    for (x0, fam) in [(&xb_0, "s1"), (&xa_0, "s1+s2")] {
        if let Some(k) = lattice_offender(x0, base, ctx) {
            return Err(EvalError::Pole(format!(
                "{fam} exponent family hits q^x = 1 at offset {k}"
            )));
        }
    }

    let mag = qm1_pow_mag(&s12, base, prec).max(&Float::with_val(prec, 1u32));
    let total_budget = Float::with_val(prec, ctx.abs_tol() >> 1) / mag;
    let outer_tail_budget = Float::with_val(prec, &total_budget >> 2);
    let inner_total_budget = Float::with_val(prec, &total_budget >> 2);

    let s1_abs = s1.abs();
    let s2_abs = s2.abs();
    let inv_one_minus_invq = Float::with_val(prec, &q / &Float::with_val(prec, &q - 1u32));

    // uniform bound G_b on |1/(q^{xb_0+k1}-1)| over all k1 >= 0: past
    // k_b = ceil(1 - Re(xb_0)) the geometric bound applies; the finitely
    // many earlier factors are maximized directly.
    let g_b = {
        let kb = ceil_pos(Float::with_val(prec, 1u32 - xb_0.re.clone()));
        let e = Float::with_val(prec, &xb_0.re + kb);
        let mut g = Float::with_val(prec, Pow::pow(&q, &Float::with_val(prec, -e)))
            * &inv_one_minus_invq;
        let mut qxb = q_pow(base, &xb_0)?;
        for _ in 0..kb {
            let d = qxb.sub(&CVal::one(prec)).abs();
            if !d.is_zero() {
                let inv = Float::with_val(prec, 1u32) / d;
                if inv > g {
                    g = inv;
                }
            }
            qxb.re *= &q;
            qxb.im *= &q;
        }
        g
    };
    // inner sums for k2 > K are bounded by V q^-k2 with
    // V = G_b q^-Re(xa_0) (1-1/q)^-(|s1|+1)
    let v_const = Float::with_val(
        prec,
        &g_b * &Float::with_val(prec, Pow::pow(&q, &Float::with_val(prec, -xa_0.re.clone()))),
    ) * Float::with_val(
        prec,
        Pow::pow(&inv_one_minus_invq, &Float::with_val(prec, &s1_abs + 1u32)),
    );
    let gamma_star = Float::with_val(prec, 1u32 + &q) >> 1;
    let outer_tail_const = Float::with_val(prec, &v_const)
        / Float::with_val(prec, 1u32 - Float::with_val(prec, &gamma_star / &q));
    let k0_coeff = ceil_pos(Float::with_val(
        prec,
        (Float::with_val(prec, 2u32 * &s2_abs) - Float::with_val(prec, 2u32 * &q))
            / Float::with_val(prec, &q - 1u32),
    )) + 1;
    let k_min = ceil_pos(Float::with_val(prec, 1u32 - xa_0.re.clone()));

    let mut coeff2 = CVal::one(prec);
    let mut coeff2_abs = Float::with_val(prec, 1u32);
    let mut sum = CVal::zero(prec);
    let mut abs_acc = Float::new(prec);
    let mut err_acc = Float::new(prec);
    let mut status = Status::Converged;
    let mut terms: u64 = 0;

    let mut k2: u64 = 0;
    loop {
        let f_abs = coeff2.abs();
        let inner_xa = CVal {
            re: Float::with_val(prec, &xa_0.re + k2),
            im: xa_0.im.clone(),
        };
        let shift = 60u32.min(k2 as u32 + 3);
        let inner_budget = Float::with_val(prec, &inner_total_budget >> shift)
            / f_abs.clone().max(&Float::with_val(prec, 1u32));
        let inner = sum_coeff_inv(&s1, &[inner_xa, xb_0.clone()], &inner_budget, base, ctx)?;
        status = status.worst(inner.status);

        sum = sum.add(&coeff2.mul(&inner.value));
        abs_acc += Float::with_val(prec, &f_abs * &inner.value.abs());
        err_acc += Float::with_val(prec, &f_abs * &inner.abs_error_bound);
        terms += inner.terms_used + 1;

        let factor = CVal {
            re: Float::with_val(prec, &s2.re + k2),
            im: s2.im.clone(),
        };
        let kp1 = Float::with_val(prec, k2 + 1);
        coeff2 = coeff2.mul(&factor);
        coeff2 = CVal {
            re: coeff2.re / &kp1,
            im: coeff2.im / &kp1,
        };
        coeff2_abs *= Float::with_val(prec, Float::with_val(prec, &s2_abs + k2) / &kp1);
        k2 += 1;

        if k2 >= k_min && k2 >= k0_coeff {
            let decay = Float::with_val(prec, Pow::pow(&q, &Float::with_val(prec, -(k2 as i64))));
            let tail = Float::with_val(prec, &coeff2_abs * &decay) * &outer_tail_const;
            if tail <= outer_tail_budget {
                let bound = tail + err_acc + rounding_allowance(&abs_acc, terms, 96, prec);
                let out = ValueWithError {
                    value: sum,
                    abs_error_bound: bound,
                    terms_used: terms,
                    status,
                };
                return scale_by_qm1_pow(out, &s12, base, ctx);
            }
        }
        if k2 >= MAX_EXPANSION_TERMS {
            return Err(EvalError::Precision(
                "circ expansion did not certify within the iteration cap".into(),
            ));
        }
    }
}

/// Classifies `(s1, s2)` against the pole families of the circ double zeta:
/// `s1 in {1 + 2 pi i b/log q}` or
/// `s1 in {a + 2 pi i b/log q : a <= 0 integer, b != 0}`, and the same two
/// families in `s1 + s2`.
pub fn pole_classify(s1: &CVal, s2: &CVal, base: &QBase, ctx: &PrecisionCtx) -> PoleClassification {
    let prec = ctx.working_bits();
    let thr = ctx.pole_threshold();
    let s12 = s1.add(&s2);

    let classify_one = |s: &CVal, label: &str| -> Option<PoleClassification> {
        let (a_int, a_dist) = nearest_integer(&s.re);
        let log_q = base.log_q_at(prec);
        let two_pi = pi(prec) * 2u32;
        let b_val = Float::with_val(prec, &s.im * &log_q) / &two_pi;
        let (b_int, b_dist) = nearest_integer(&b_val);
        if a_dist > thr || b_dist > thr {
            return None;
        }
        let a = a_int.to_f64();
        let b = b_int.to_f64() as i64;
        if (a - 1.0).abs() < 0.5 {
            Some(PoleClassification {
                is_pole: true,
                offending_exponent: Some(s.clone()),
                family: format!("{label} = 1 + 2 pi i b/log q, b = {b}"),
            })
        } else if a <= 0.0 && b != 0 {
            Some(PoleClassification {
                is_pole: true,
                offending_exponent: Some(s.clone()),
                family: format!("{label} = a + 2 pi i b/log q, a = {} <= 0, b = {b} != 0", a as i64),
            })
        } else {
            None
        }
    };

    if let Some(c) = classify_one(s1, "s1") {
        return c;
    }
    if let Some(c) = classify_one(&s12, "s1+s2") {
        return c;
    }
    PoleClassification {
        is_pole: false,
        offending_exponent: None,
        family: "regular point".into(),
    }
}

/// Closed forms of the iterated limits of the double zeta at `(0,0)`:
///
/// - `S2First`: `1/((q^-1-1)(q^-2-1)) + 1/((q^-1-1) ln q) + 1/(2(q-1) ln q)`
/// - `S1First`: `1/((q^-1-1)(q^-2-1)) + 3/(2(q^-1-1) ln q) + 1/ln^2 q`
///
/// Near `q = 1` the three terms individually blow up like `1/ln^2 q` while
/// the sum stays bounded, so the working precision is escalated by four bits
/// per halving of `q - 1`.
pub fn zeta00_closed(base: &QBase, order: LimitOrder, ctx: &PrecisionCtx) -> Float {
    let base_prec = ctx.working_bits();
    let x = Float::with_val(base_prec, base.q() - 1u32);
    let extra = if x < 1u32 {
        let k = -x.clone().log2().to_f64();
        (4.0 * k.max(0.0)).ceil() as u32 + 8
    } else {
        0
    };
    let prec = base_prec + extra;

    let q = base.q_at(prec);
    let log_q = base.log_q_at(prec);
    let inv_q = Float::with_val(prec, 1u32) / &q;
    let inv_q2 = Float::with_val(prec, &inv_q * &inv_q);
    let a = Float::with_val(prec, &inv_q - 1u32);
    let b = Float::with_val(prec, &inv_q2 - 1u32);

    let t1 = Float::with_val(prec, 1u32) / Float::with_val(prec, &a * &b);
    let value = match order {
        LimitOrder::S2First => {
            let t2 = Float::with_val(prec, 1u32) / Float::with_val(prec, &a * &log_q);
            let t3 = Float::with_val(prec, 1u32)
                / (Float::with_val(prec, 2u32 * Float::with_val(prec, &q - 1u32)) * &log_q);
            t1 + t2 + t3
        }
        LimitOrder::S1First => {
            let t2 = Float::with_val(prec, 3u32) / (Float::with_val(prec, 2u32 * &a) * &log_q);
            let t3 = Float::with_val(prec, 1u32) / Float::with_val(prec, &log_q * &log_q);
            t1 + t2 + t3
        }
    };
    Float::with_val(ctx.mantissa_bits(), value)
}

/// Extrapolation table returned by [`limit_q_to_1_table`].
#[derive(Debug, Clone)]
pub struct LimitTable {
    /// `(q_k, zeta00_closed(q_k))` for `q_k = 1 + 2^-k`, `k = 4..=4+steps`.
    pub rows: Vec<(Float, Float)>,
    pub extrapolated: Float,
    pub err_estimate: Float,
}

/// Richardson-extrapolates [`zeta00_closed`] over `q_k = 1 + 2^-k`,
/// `k = 4..=4+steps`, toward the `q -> 1` limit (5/12 for `S2First`, 1/3 for
/// `S1First`).
pub fn limit_q_to_1_table(order: LimitOrder, steps: u32, ctx: &PrecisionCtx) -> Result<LimitTable> {
    if steps < 1 {
        return Err(EvalError::Domain("steps must be >= 1".into()));
    }
    if steps > 200 {
        return Err(EvalError::Precision(format!(
            "steps = {steps} would require impractical precision"
        )));
    }
    let prec = ctx.working_bits();
    let mut rows = Vec::with_capacity(steps as usize + 1);
    let mut column: Vec<Float> = Vec::with_capacity(steps as usize + 1);
    for k in 4..=(4 + steps) {
        let qk = Float::with_val(prec, 1u32) + (Float::with_val(prec, 1u32) >> k);
        let basek = QBase::new(qk.clone(), ctx)?;
        let f = zeta00_closed(&basek, order, ctx);
        if !f.is_finite() {
            return Err(EvalError::Precision(format!(
                "closed form not finite at q = {qk}"
            )));
        }
        rows.push((qk, f.clone()));
        column.push(Float::with_val(prec, &f));
    }
    // Neville/Richardson with node ratio 2: level j cancels the O(x^j) term
    let n = column.len();
    let mut prev_diag = column[0].clone();
    let mut last_offdiag = column[n - 1].clone();
    for j in 1..n {
        let factor = Float::with_val(prec, (1u128 << j) - 1);
        if j == n - 1 {
            last_offdiag = column[n - 1].clone();
        }
        for i in (j..n).rev() {
            let delta = Float::with_val(prec, &column[i] - &column[i - 1]) / &factor;
            column[i] += delta;
        }
        if j < n - 1 {
            prev_diag = column[j].clone();
        }
    }
    let extrapolated = column[n - 1].clone();
    let err_estimate = if n >= 2 {
        let d1 = Float::with_val(prec, &extrapolated - &last_offdiag).abs();
        let d2 = Float::with_val(prec, &extrapolated - &prev_diag).abs();
        Float::with_val(prec, d1.max(&d2))
            + (extrapolated.clone().abs() >> (ctx.mantissa_bits() - 8).min(prec - 1))
    } else {
        extrapolated.clone().abs() >> 10
    };
    Ok(LimitTable {
        rows,
        extrapolated: Float::with_val(ctx.mantissa_bits(), extrapolated),
        err_estimate: Float::with_val(ctx.mantissa_bits(), err_estimate),
    })
}

/// The extrapolated `q -> 1` limit alone.
pub fn limit_q_to_1(order: LimitOrder, steps: u32, ctx: &PrecisionCtx) -> Result<Float> {
    Ok(limit_q_to_1_table(order, steps, ctx)?.extrapolated)
}

/// Reference expansions used as oracles for the `q -> 1` behavior of the
/// closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoticKind {
    /// `1/(x+2) = 1/2 - x/4 + x^2/8 + O(x^3)`
    InvXPlus2,
    /// `1/log(1+x) = 1/x + 1/2 - x/12 + x^2/24 + O(x^3)`
    InvLog1p,
    /// `1/log^2(1+x) = 1/x^2 + 1/x + 1/12 + 0 x + O(x^2)`
    InvLog1pSq,
}

/// Truncated expansion value at `x` (`|x| < 1/2`): the principal part is
/// always included and `terms` counts the Taylor coefficients kept (clamped
/// to those available).
pub fn asymptotic_ref(x: &Float, which: AsymptoticKind, terms: u8) -> Float {
    let prec = x.prec().max(64);
    let mut acc = Float::new(prec);
    let coeffs: &[(i32, u32)] = match which {
        AsymptoticKind::InvXPlus2 => &[(1, 2), (-1, 4), (1, 8)],
        AsymptoticKind::InvLog1p => {
            acc += Float::with_val(prec, 1u32) / x;
            &[(1, 2), (-1, 12), (1, 24)]
        }
        AsymptoticKind::InvLog1pSq => {
            acc += Float::with_val(prec, 1u32) / Float::with_val(prec, x * x);
            acc += Float::with_val(prec, 1u32) / x;
            &[(1, 12), (0, 1)]
        }
    };
    let n = (terms as usize).min(coeffs.len());
    let mut xp = Float::with_val(prec, 1u32);
    for &(num, den) in &coeffs[..n] {
        acc += Float::with_val(prec, num) / Float::with_val(prec, den) * &xp;
        xp *= x;
    }
    acc
}

/// Numerically emulates the iterated limits of the double zeta at integer
/// points by scale separation: the variable whose limit is taken first sits
/// `delta_inner` from its target, the other `delta_outer`, with
/// `delta_inner <= delta_outer^2` encoding "inner limit first".
pub fn iterated_limit_probe(
    n1: i64,
    n2: i64,
    base: &QBase,
    delta_outer: &Float,
    delta_inner: &Float,
    order: LimitOrder,
    ctx: &PrecisionCtx,
) -> Result<ValueWithError> {
    let prec = ctx.working_bits();
    let d_out = Float::with_val(prec, delta_outer);
    let d_in = Float::with_val(prec, delta_inner);
    let max_delta = Float::with_val(prec, 1u32) / 1000u32;
    if !(d_out.clone() > 0u32) || d_out >= max_delta || !(d_in.clone() > 0u32) || d_in >= max_delta
    {
        return Err(EvalError::Domain("probe deltas must lie in (0, 1e-3)".into()));
    }
    // slack of a few ulps so decimal inputs like (1e-6, 1e-12) qualify
    let mut d_out_sq = Float::with_val(prec, &d_out * &d_out);
    d_out_sq += Float::with_val(prec, &d_out_sq >> 40);
    if d_in > d_out_sq {
        return Err(EvalError::Domain(
            "delta_inner must not exceed delta_outer^2".into(),
        ));
    }
    let (s1, s2) = match order {
        LimitOrder::S2First => (
            CVal::real(Float::with_val(prec, n1 + &d_out)),
            CVal::real(Float::with_val(prec, n2 + &d_in)),
        ),
        LimitOrder::S1First => (
            CVal::real(Float::with_val(prec, n1 + &d_in)),
            CVal::real(Float::with_val(prec, n2 + &d_out)),
        ),
    };
    zeta2_q_expansion(&s1, &s2, base, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series;

    fn ctx() -> PrecisionCtx {
        PrecisionCtx::new(128, 32).unwrap()
    }

    fn base(q: f64) -> QBase {
        QBase::from_f64(q, &ctx()).unwrap()
    }

    fn c_int(v: i64) -> CVal {
        CVal::from_i64(v, ctx().working_bits())
    }

    fn assert_within_bounds(a: &ValueWithError, b: &ValueWithError, label: &str) {
        let d = a.value.sub(&b.value).abs();
        let tol = Float::with_val(d.prec(), &a.abs_error_bound + &b.abs_error_bound);
        assert!(d <= tol, "{label}: |diff| = {d} > combined {tol}");
    }

    #[test]
    fn single_expansion_agrees_with_series() {
        let c = ctx();
        for (q, s) in [(2.0, 2i64), (3.0, 4), (1.5, 3)] {
            let b = base(q);
            let sv = c_int(s);
            let e = zeta_q_expansion_single(&sv, &b, &c).unwrap();
            let d = series::zeta_q(&sv, &b, &c).unwrap();
            assert_within_bounds(&e, &d, &format!("single q={q} s={s}"));
        }
    }

    #[test]
    fn single_expansion_pole_and_continuation() {
        let c = ctx();
        let b = base(2.0);
        assert!(matches!(
            zeta_q_expansion_single(&c_int(1), &b, &c),
            Err(EvalError::Pole(_))
        ));
        assert!(zeta_q_expansion_single(&c_int(0), &b, &c).is_err());
        // defined at non-integer s below the series range
        let v = zeta_q_expansion_single(&CVal::from_f64(0.5, 0.0, 160), &b, &c).unwrap();
        assert!(v.value.is_finite());
    }

    #[test]
    fn double_expansion_agrees_with_series() {
        let c = ctx();
        let b = base(2.0);
        let e = zeta2_q_expansion(&c_int(3), &c_int(2), &b, &c).unwrap();
        let d = series::zeta2_q(&c_int(3), &c_int(2), &b, &c).unwrap();
        assert_within_bounds(&e, &d, "zeta2 (3,2)");

        assert!(matches!(
            zeta2_q_expansion(&c_int(1), &c_int(4), &b, &c),
            Err(EvalError::Pole(_))
        ));
    }

    #[test]
    fn circ_expansion_agrees_with_series() {
        let c = ctx();
        let b = base(2.0);
        for (s1, s2) in [(3i64, 1i64), (5, 1)] {
            let e = circ_expansion(&c_int(s1), &c_int(s2), &b, &c).unwrap();
            let d = series::circ_q(&c_int(s1), &c_int(s2), &b, &c).unwrap();
            assert_within_bounds(&e, &d, &format!("circ ({s1},{s2})"));
        }
        assert!(matches!(
            circ_expansion(&c_int(1), &c_int(2), &b, &c),
            Err(EvalError::Pole(_))
        ));
    }

    #[test]
    fn pole_classification_families() {
        let c = ctx();
        let b = base(2.0);
        let p = c.working_bits();

        let r = pole_classify(&c_int(1), &c_int(5), &b, &c);
        assert!(r.is_pole);
        assert!(r.family.contains("s1 = 1"));

        let r = pole_classify(&c_int(3), &c_int(1), &b, &c);
        assert!(!r.is_pole);

        // s1 = -2 + i 2 pi / ln 2
        let im = Float::with_val(p, 2u32 * pi(p)) / b.log_q();
        let s1 = CVal::new(Float::with_val(p, -2), im);
        let r = pole_classify(&s1, &c_int(5), &b, &c);
        assert!(r.is_pole);
        assert!(r.family.contains("a = -2"));

        // s1 regular but s1+s2 = 1
        let r = pole_classify(&c_int(4), &c_int(-3), &b, &c);
        assert!(r.is_pole);
        assert!(r.family.contains("s1+s2"));
    }

    #[test]
    fn zeta00_closed_values_at_q2() {
        let c = ctx();
        let b = base(2.0);
        let p = c.working_bits();
        let ln2 = b.log_q_at(p);

        // 8/3 - 3/(2 ln 2)
        let want = Float::with_val(p, 8u32) / 3u32
            - Float::with_val(p, 3u32) / Float::with_val(p, 2u32 * &ln2);
        let got = zeta00_closed(&b, LimitOrder::S2First, &c);
        assert!(Float::with_val(p, &got - &want).abs() < 1e-35);

        // 8/3 - 3/ln 2 + 1/ln^2 2
        let want = Float::with_val(p, 8u32) / 3u32 - Float::with_val(p, 3u32) / &ln2
            + Float::with_val(p, 1u32) / Float::with_val(p, &ln2 * &ln2);
        let got = zeta00_closed(&b, LimitOrder::S1First, &c);
        assert!(Float::with_val(p, &got - &want).abs() < 1e-35);
    }

    #[test]
    fn limit_q_to_1_both_orders() {
        let c = PrecisionCtx::new(256, 32).unwrap();
        let p = c.working_bits();
        let five_twelfths = Float::with_val(p, 5u32) / 12u32;
        let third = Float::with_val(p, 1u32) / 3u32;

        let l = limit_q_to_1(LimitOrder::S2First, 8, &c).unwrap();
        assert!(Float::with_val(p, &l - &five_twelfths).abs() < 1e-10);

        let l = limit_q_to_1(LimitOrder::S1First, 8, &c).unwrap();
        assert!(Float::with_val(p, &l - &third).abs() < 1e-10);

        // a coarse two-step run still lands within 1e-2
        let l = limit_q_to_1(LimitOrder::S2First, 2, &c).unwrap();
        assert!(Float::with_val(p, &l - &five_twelfths).abs() < 1e-2);

        assert!(limit_q_to_1(LimitOrder::S2First, 0, &c).is_err());
    }

    #[test]
    fn asymptotic_ref_values() {
        let p = 256u32;
        let zero = Float::new(p);
        let v = asymptotic_ref(&zero, AsymptoticKind::InvXPlus2, 1);
        assert_eq!(v, Float::with_val(p, 0.5));

        // constant term of the squared-log expansion includes 1/12
        let tiny = Float::with_val(p, 1u32) >> 40;
        let v = asymptotic_ref(&tiny, AsymptoticKind::InvLog1pSq, 1);
        let principal = Float::with_val(p, 1u32) / Float::with_val(p, &tiny * &tiny)
            + Float::with_val(p, 1u32) / &tiny;
        let c0 = Float::with_val(p, &v - &principal);
        let twelfth = Float::with_val(p, 1u32) / 12u32;
        assert!(Float::with_val(p, &c0 - &twelfth).abs() < 1e-20);

        // x = 0.1 with three Taylor terms
        let x = Float::with_val(p, 0.1);
        let v = asymptotic_ref(&x, AsymptoticKind::InvLog1p, 3);
        let want = Float::with_val(p, 10u32) + Float::with_val(p, 0.5)
            - Float::with_val(p, &x / &Float::with_val(p, 12u32))
            + Float::with_val(p, &x * &x) / 24u32;
        assert!(Float::with_val(p, &v - &want).abs() < 1e-25);

        // the truncated expansions track the exact functions to O(x^3)
        let x = Float::with_val(p, 0.01);
        let exact = Float::with_val(p, 1u32) / Float::with_val(p, 2u32 + &x);
        let approx = asymptotic_ref(&x, AsymptoticKind::InvXPlus2, 3);
        assert!(Float::with_val(p, &exact - &approx).abs() < 1e-6);
        let exact = Float::with_val(p, 1u32) / Float::with_val(p, x.clone().ln_1p());
        let approx = asymptotic_ref(&x, AsymptoticKind::InvLog1p, 3);
        assert!(Float::with_val(p, &exact - &approx).abs() < 1e-6);
    }

    #[test]
    fn probe_matches_closed_forms() {
        let c = PrecisionCtx::new(192, 32).unwrap();
        let b = QBase::from_f64(2.0, &c).unwrap();
        let p = c.working_bits();
        let d_out = Float::with_val(p, 1e-6);
        let d_in = Float::with_val(p, 1e-12);

        let probe2 =
            iterated_limit_probe(0, 0, &b, &d_out, &d_in, LimitOrder::S2First, &c).unwrap();
        let closed2 = zeta00_closed(&b, LimitOrder::S2First, &c);
        let d = Float::with_val(p, &probe2.value.re - &closed2).abs();
        assert!(d < 1e-4, "s2_first probe off by {d}");

        let probe1 =
            iterated_limit_probe(0, 0, &b, &d_out, &d_in, LimitOrder::S1First, &c).unwrap();
        let closed1 = zeta00_closed(&b, LimitOrder::S1First, &c);
        let d = Float::with_val(p, &probe1.value.re - &closed1).abs();
        assert!(d < 1e-4, "s1_first probe off by {d}");

        // the two orders genuinely differ at q = 2
        let gap = Float::with_val(p, &probe2.value.re - &probe1.value.re).abs();
        assert!(gap > 0.1, "order gap {gap}");

        // delta constraint enforced
        assert!(iterated_limit_probe(0, 0, &b, &d_out, &d_out, LimitOrder::S2First, &c).is_err());
    }
}
