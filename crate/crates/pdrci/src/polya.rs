//! Exponent enumeration and (modified) multinomial coefficients for
//! simplex relaxations of homogeneous matrix polynomials.
//!
//! A degree-`d` monomial in `r` simplex variables is identified by its
//! exponent tuple `beta` with `sum(beta) = d`. Relaxation of a degree-2
//! matrix polynomial multiplies it by `(xi_1 + ... + xi_r)^d`, and the
//! coefficient of each degree-`d+2` monomial is a weighted sum of the
//! original blocks. The weights are the modified multinomial
//! coefficients computed here, in exact integer arithmetic.

/// Largest total degree supported by the exact integer coefficient
/// arithmetic. Enforced by callers before enumeration.
pub const MAX_DEGREE: u32 = 12;

/// Exponent tuple of a monomial `xi_1^b1 ... xi_r^br`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExponentTuple {
    beta: Vec<u32>,
}

impl ExponentTuple {
    pub fn new(beta: Vec<u32>) -> Self {
        assert!(!beta.is_empty(), "exponent tuple must be non-empty");
        Self { beta }
    }

    pub fn degree(&self) -> u32 {
        self.beta.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.beta
    }
}

/// Number of `r`-tuples of nonnegative integers summing to `d`,
/// i.e. `(r+d-1)! / (d! (r-1)!)`. Returns `None` on u64 overflow.
pub fn tuple_count(d: u32, r: usize) -> Option<u64> {
    binomial(d as u64 + r as u64 - 1, d as u64)
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul((n - k + i) as u128)?;
        acc /= i as u128; // exact: product of i consecutive integers is divisible by i!
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// All `r`-tuples of nonnegative integers summing to `d`, in ascending
/// lexicographic order. The `q`-th element (0-based) is the `q`-th
/// monomial of the degree-`d` basis.
pub fn enumerate_exponents(d: u32, r: usize) -> Vec<ExponentTuple> {
    assert!(r >= 1, "tuple length must be at least 1");
    let mut out = Vec::with_capacity(tuple_count(d, r).unwrap_or(0) as usize);
    let mut current = vec![0u32; r];
    fill(&mut out, &mut current, 0, d);
    out
}

fn fill(out: &mut Vec<ExponentTuple>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(ExponentTuple::new(current.clone()));
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        fill(out, current, pos + 1, remaining - v);
    }
    current[pos] = 0;
}

fn factorial(m: u32) -> u128 {
    (1..=m as u128).product()
}

/// Standard multinomial coefficient `d! / (b1! ... br!)`.
pub fn multinomial(beta: &ExponentTuple) -> u64 {
    let d = beta.degree();
    assert!(d <= MAX_DEGREE, "degree {d} exceeds supported maximum {MAX_DEGREE}");
    let denom: u128 = beta.entries().iter().map(|&b| factorial(b)).product();
    let val = factorial(d) / denom;
    u64::try_from(val).expect("multinomial overflow")
}

fn shifted_denominator(entries: &[u32], shifts: &[(usize, u32)]) -> Option<u128> {
    let mut denom: u128 = 1;
    for (idx, &b) in entries.iter().enumerate() {
        let mut v = b;
        for &(si, sa) in shifts {
            if si == idx {
                if v < sa {
                    return None;
                }
                v -= sa;
            }
        }
        denom *= factorial(v);
    }
    Some(denom)
}

fn modified_with_numerator(beta: &ExponentTuple, shifts: &[(usize, u32)], numerator: u32) -> u64 {
    assert!(numerator <= MAX_DEGREE, "degree {numerator} exceeds supported maximum {MAX_DEGREE}");
    match shifted_denominator(beta.entries(), shifts) {
        None => 0,
        Some(denom) => {
            u64::try_from(factorial(numerator) / denom).expect("coefficient overflow")
        }
    }
}

/// Modified multinomial coefficient `d! / (b1! .. (b_i - a)! .. br!)`
/// with `d = degree(beta)`, or 0 when the shifted entry would be
/// negative. Index `i` is 0-based.
pub fn modified_coeff_single(beta: &ExponentTuple, i: usize, a: u32) -> u64 {
    assert!(i < beta.len(), "index out of range");
    modified_with_numerator(beta, &[(i, a)], beta.degree())
}

/// Modified multinomial coefficient
/// `d! / (b1! .. (b_i - a)! .. (b_j - b)! .. br!)` with
/// `d = degree(beta)`, or 0 when either shifted entry would be
/// negative. Indices `i != j`, 0-based.
pub fn modified_coeff_pair(beta: &ExponentTuple, i: usize, j: usize, a: u32, b: u32) -> u64 {
    assert!(i != j, "indices must differ");
    assert!(i < beta.len() && j < beta.len(), "index out of range");
    modified_with_numerator(beta, &[(i, a), (j, b)], beta.degree())
}

/// Relaxation weight of the diagonal block `xi_i^a * S` in the
/// degree-`degree(beta)` expansion: the multinomial coefficient of
/// `beta - a*e_i` in `(sum xi)^(degree - a)`, or 0 out of range.
///
/// This is the coefficient with which block `S` enters the monomial
/// `xi^beta` of `(sum_k xi_k)^(d) * xi_i^a S`, where `d = degree - a`.
pub fn relax_weight_single(beta: &ExponentTuple, i: usize, a: u32) -> u64 {
    assert!(i < beta.len(), "index out of range");
    let deg = beta.degree();
    if deg < a {
        return 0;
    }
    modified_with_numerator(beta, &[(i, a)], deg - a)
}

/// Relaxation weight of the cross block `xi_i^a xi_j^b * S`: the
/// multinomial coefficient of `beta - a*e_i - b*e_j` in
/// `(sum xi)^(degree - a - b)`, or 0 out of range.
pub fn relax_weight_pair(beta: &ExponentTuple, i: usize, j: usize, a: u32, b: u32) -> u64 {
    assert!(i != j, "indices must differ");
    assert!(i < beta.len() && j < beta.len(), "index out of range");
    let deg = beta.degree();
    if deg < a + b {
        return 0;
    }
    modified_with_numerator(beta, &[(i, a), (j, b)], deg - a - b)
}
