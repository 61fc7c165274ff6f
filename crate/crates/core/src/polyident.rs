//! Exact checks of the determinant identities behind the invertibility of
//! the boundary system for second derivatives of the displacement:
//! `det M = (nu_2)^2 det Q` in two dimensions and
//! `det M = +/- (nu_3)^12 det Q` in three, with
//! `q_ih = sum_{j,k} C_ijhk nu_j nu_k`.
//!
//! Variables are numbered `nu_1 .. nu_N` first, then `C_ijhk` in
//! lexicographic order of `(i, j, h, k)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Commutative ring with the operations needed by elimination.
pub trait Ring: Clone + PartialEq + fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self {
        Self::zero().sub(self)
    }
    /// `self / other`, assuming the division is exact.
    fn exact_div(&self, other: &Self) -> Self;
}

/// Residues modulo the Mersenne prime `2^61 - 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Fp(u64);

pub const P61: u64 = (1 << 61) - 1;

impl Fp {
    pub fn new(v: u64) -> Self {
        Fp(v % P61)
    }

    pub fn from_i64(v: i64) -> Self {
        if v >= 0 {
            Fp::new(v as u64)
        } else {
            Fp::new(v.unsigned_abs()).neg()
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Fp(rng.random_range(0..P61))
    }

    pub fn pow(self, mut e: u64) -> Self {
        let (mut base, mut acc) = (self, Fp(1));
        while e > 0 {
            if e & 1 == 1 {
                acc = Ring::mul(&acc, &base);
            }
            base = Ring::mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        (self.0 != 0).then(|| self.pow(P61 - 2))
    }
}

impl Ring for Fp {
    fn zero() -> Self {
        Fp(0)
    }
    fn one() -> Self {
        Fp(1)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
    fn add(&self, o: &Self) -> Self {
        let s = self.0 + o.0;
        Fp(if s >= P61 { s - P61 } else { s })
    }
    fn sub(&self, o: &Self) -> Self {
        Fp(if self.0 >= o.0 {
            self.0 - o.0
        } else {
            self.0 + P61 - o.0
        })
    }
    fn mul(&self, o: &Self) -> Self {
        Fp(((self.0 as u128 * o.0 as u128) % P61 as u128) as u64)
    }
    fn exact_div(&self, o: &Self) -> Self {
        Ring::mul(self, &o.inverse().expect("division by zero in F_p"))
    }
}

impl Ring for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn exact_div(&self, o: &Self) -> Self {
        debug_assert!(Zero::is_zero(&(self % o)));
        self / o
    }
}

/// Sparse multivariate polynomial with integer coefficients. Terms are
/// keyed by exponent vectors and never store a zero coefficient.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u8>, BigInt>,
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .rev()
            .map(|(e, c)| {
                let mono: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(i, &p)| {
                        if p == 1 {
                            format!("x{i}")
                        } else {
                            format!("x{i}^{p}")
                        }
                    })
                    .collect();
                if mono.is_empty() {
                    c.to_string()
                } else {
                    format!("{c}*{}", mono.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: impl Into<BigInt>) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c.into());
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0u8; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, <BigInt as One>::one());
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&p| p as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], &BigInt)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    fn add_term(&mut self, e: Vec<u8>, c: BigInt) {
        if Zero::is_zero(&c) {
            return;
        }
        let entry = self.terms.entry(e);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if Zero::is_zero(o.get()) {
                    o.remove();
                }
            }
        }
    }

    fn nv(&self, o: &Self) -> usize {
        self.nvars.max(o.nvars)
    }

    fn pad(e: &[u8], n: usize) -> Vec<u8> {
        let mut v = e.to_vec();
        v.resize(n, 0);
        v
    }

    /// Evaluates at a point of any ring that integers map into.
    pub fn eval<R: Ring>(&self, point: &[R], lift: impl Fn(&BigInt) -> R) -> R {
        let mut acc = R::zero();
        for (e, c) in &self.terms {
            let mut t = lift(c);
            for (i, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    t = t.mul(&point[i]);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    fn leading(&self) -> Option<(&Vec<u8>, &BigInt)> {
        self.terms.iter().next_back()
    }

    /// Exact quotient `self / d`, or `None` if `d` does not divide `self`.
    pub fn checked_div(&self, d: &Self) -> Option<Self> {
        let n = self.nv(d);
        let (de, dc) = d.leading()?;
        let de = Self::pad(de, n);
        let mut rem = self.clone();
        rem.nvars = n;
        let mut q = Self::zero(n);
        while let Some((re, rc)) = rem.leading() {
            let re = Self::pad(re, n);
            if re.iter().zip(&de).any(|(a, b)| a < b) || !Zero::is_zero(&(rc % dc)) {
                return None;
            }
            let e: Vec<u8> = re.iter().zip(&de).map(|(a, b)| a - b).collect();
            let c = rc / dc;
            let mut t = Self::zero(n);
            t.add_term(e, c);
            rem = &rem - &(&t * d);
            q = &q + &t;
        }
        Some(q)
    }
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, o: &MultiPoly) -> MultiPoly {
        let n = self.nv(o);
        let mut r = MultiPoly::zero(n);
        for (e, c) in self.terms.iter().chain(o.terms.iter()) {
            r.add_term(MultiPoly::pad(e, n), c.clone());
        }
        r
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, o: &MultiPoly) -> MultiPoly {
        self + &(-o)
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        MultiPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }
}

// Exponents add when monomials multiply.
#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for &MultiPoly {
    type Output = MultiPoly;
    fn mul(self, o: &MultiPoly) -> MultiPoly {
        let n = self.nv(o);
        let mut r = MultiPoly::zero(n);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u8> = (0..n)
                    .map(|i| e1.get(i).copied().unwrap_or(0) + e2.get(i).copied().unwrap_or(0))
                    .collect();
                r.add_term(e, c1 * c2);
            }
        }
        r
    }
}

impl Ring for MultiPoly {
    fn zero() -> Self {
        MultiPoly::zero(0)
    }
    fn one() -> Self {
        MultiPoly::constant(0, 1)
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn exact_div(&self, o: &Self) -> Self {
        self.checked_div(o).expect("inexact polynomial division")
    }
}

/// Square matrix over a ring.
pub type RingMatrix<R> = Vec<Vec<R>>;

/// Fraction-free (Bareiss) determinant with row pivoting. Over a field this
/// is ordinary Gaussian elimination up to scaling.
pub fn det<R: Ring>(m: &RingMatrix<R>) -> R {
    let n = m.len();
    if n == 0 {
        return R::one();
    }
    let mut a = m.clone();
    let mut negate = false;
    let mut prev = R::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(k, i);
                    negate = !negate;
                }
                None => return R::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = a[i][j].mul(&a[k][k]).sub(&a[i][k].mul(&a[k][j]));
                a[i][j] = t.exact_div(&prev);
            }
            a[i][k] = R::zero();
        }
        prev = a[k][k].clone();
    }
    let d = a[n - 1][n - 1].clone();
    if negate {
        d.neg()
    } else {
        d
    }
}

/// Index of the variable `nu_j` (0-based `j`).
pub fn nu_var(j: usize) -> usize {
    j
}

/// Index of the variable `C_ijhk` (0-based indices).
pub fn c_var(dim: usize, i: usize, j: usize, h: usize, k: usize) -> usize {
    dim + ((i * dim + j) * dim + h) * dim + k
}

pub fn num_vars(dim: usize) -> usize {
    dim + dim.pow(4)
}

fn check_dim(dim: usize) {
    assert!(dim == 2 || dim == 3, "identity defined for N = 2, 3 only");
}

/// `Q` with `q_ih = sum_{j,k} C_ijhk nu_j nu_k`, over the variables given by `var`.
pub fn build_q<R: Ring>(dim: usize, var: &impl Fn(usize) -> R) -> RingMatrix<R> {
    check_dim(dim);
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|h| {
                    let mut s = R::zero();
                    for j in 0..dim {
                        for k in 0..dim {
                            s = s.add(
                                &var(c_var(dim, i, j, h, k))
                                    .mul(&var(nu_var(j)))
                                    .mul(&var(nu_var(k))),
                            );
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Entry of a geometric row: `+nu_a` or `-nu_a`.
#[derive(Clone, Copy)]
enum Geo {
    Plus(usize),
    Minus(usize),
}

/// Geometric rows of the 3D system: `(column, entry)` pairs, 1-based
/// columns as listed for the unknowns
/// `(s111, s121, s131, s221, s231, s331, s112, ..., s333)`.
const ROWS_3D: [[(usize, Geo); 2]; 15] = {
    use Geo::*;
    [
        [(1, Plus(3)), (3, Minus(1))],
        [(3, Plus(3)), (6, Minus(1))],
        [(2, Plus(3)), (3, Minus(2))],
        [(4, Plus(3)), (5, Minus(2))],
        [(5, Plus(3)), (6, Minus(2))],
        [(7, Plus(3)), (9, Minus(1))],
        [(9, Plus(3)), (12, Minus(1))],
        [(8, Plus(3)), (9, Minus(2))],
        [(10, Plus(3)), (11, Minus(2))],
        [(11, Plus(3)), (12, Minus(2))],
        [(13, Plus(3)), (15, Minus(1))],
        [(15, Plus(3)), (18, Minus(1))],
        [(14, Plus(3)), (15, Minus(2))],
        [(16, Plus(3)), (17, Minus(2))],
        [(17, Plus(3)), (18, Minus(2))],
    ]
};

/// Columns of the constitutive rows of the 3D system and the pair `(h, k)`
/// of `C_{j l h k}` they carry (coefficients `a_j, b_j, ..., i_j`).
const C_COLUMNS_3D: [(usize, (usize, usize)); 9] = [
    (3, (1, 1)),
    (5, (1, 2)),
    (6, (1, 3)),
    (9, (2, 1)),
    (11, (2, 2)),
    (12, (2, 3)),
    (15, (3, 1)),
    (17, (3, 2)),
    (18, (3, 3)),
];

/// `sum_l C_{j l h k} nu_l`, all indices 1-based.
fn c_nu<R: Ring>(dim: usize, var: &impl Fn(usize) -> R, j: usize, h: usize, k: usize) -> R {
    let mut s = R::zero();
    for l in 1..=dim {
        s = s.add(&var(c_var(dim, j - 1, l - 1, h - 1, k - 1)).mul(&var(nu_var(l - 1))));
    }
    s
}

/// The boundary system matrix: 6x6 for `N = 2`, 18x18 for `N = 3`.
pub fn build_m<R: Ring>(dim: usize, var: &impl Fn(usize) -> R) -> RingMatrix<R> {
    check_dim(dim);
    let nu = |a: usize| var(nu_var(a - 1));
    if dim == 2 {
        let mut m = vec![vec![R::zero(); 6]; 6];
        // unknowns (s111, s112, s121, s122, s221, s222)
        for (row, j) in [(0, 1), (1, 2)] {
            for (col, (h, k)) in [(2, (1, 1)), (3, (2, 1)), (4, (1, 2)), (5, (2, 2))] {
                m[row][col] = c_nu(2, var, j, h, k);
            }
        }
        for (row, (p, q)) in [(2, (0, 2)), (3, (1, 3)), (4, (2, 4)), (5, (3, 5))] {
            m[row][p] = nu(2);
            m[row][q] = nu(1).neg();
        }
        return m;
    }
    let mut m = vec![vec![R::zero(); 18]; 18];
    for (r, row) in ROWS_3D.iter().enumerate() {
        for &(col, g) in row {
            m[r][col - 1] = match g {
                Geo::Plus(a) => nu(a),
                Geo::Minus(a) => nu(a).neg(),
            };
        }
    }
    for j in 1..=3 {
        for &(col, (h, k)) in &C_COLUMNS_3D {
            m[14 + j][col - 1] = c_nu(3, var, j, h, k);
        }
    }
    m
}

/// Exponent of `nu_N` in the identity.
pub fn nu_power(dim: usize) -> u32 {
    if dim == 2 {
        2
    } else {
        12
    }
}

/// Total degree of `det M - nu_N^p det Q`.
pub fn identity_degree(dim: usize) -> usize {
    if dim == 2 {
        6
    } else {
        21
    }
}

fn poly_var(dim: usize) -> impl Fn(usize) -> MultiPoly {
    let n = num_vars(dim);
    move |i| MultiPoly::var(n, i)
}

/// `det M - nu_2^2 det Q` expanded symbolically (N = 2).
pub fn symbolic_defect_2d() -> MultiPoly {
    let var = poly_var(2);
    let dm = det(&build_m(2, &var));
    let dq = det(&build_q(2, &var));
    let nu2 = var(nu_var(1));
    &dm - &(&(&nu2 * &nu2) * &dq)
}

/// Flips the sign of one entry of `M` (mutation testing).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Mutation {
    pub row: usize,
    pub col: usize,
}

/// Random point of `F_p^{vars}` at which the identity failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub point: Vec<u64>,
    pub det_m: u64,
    pub rhs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub dim: usize,
    pub trials: usize,
    pub verified: bool,
    /// `+1` or `-1`: the sign `s` in `det M = s nu_N^p det Q`.
    pub sign: Option<i8>,
    /// Whether the exact symbolic expansion was performed and vanished.
    pub symbolic_zero: Option<bool>,
    pub symbolic_terms: Option<usize>,
    pub degree: usize,
    /// Schwartz–Zippel bound `2 (deg / p)^trials` on accepting a false identity.
    pub failure_bound: f64,
    pub log10_failure_bound: f64,
    pub counterexample: Option<Counterexample>,
}

fn eval_sides(dim: usize, point: &[Fp], mutation: Option<Mutation>) -> (Fp, Fp) {
    let var = |i: usize| point[i];
    let mut m = build_m(dim, &var);
    if let Some(mu) = mutation {
        m[mu.row][mu.col] = m[mu.row][mu.col].neg();
    }
    let dm = det(&m);
    let dq = det(&build_q(dim, &var));
    let rhs = Ring::mul(&point[nu_var(dim - 1)].pow(nu_power(dim) as u64), &dq);
    (dm, rhs)
}

/// Checks `det M = s nu_N^p det Q` at `trials` random points of `F_p`, with a
/// single sign `s` for all points; for `N = 2` also expands symbolically.
pub fn verify_identity(
    dim: usize,
    trials: usize,
    seed: u64,
    mutation: Option<Mutation>,
) -> IdentityReport {
    check_dim(dim);
    assert!(trials >= 1, "at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num_vars(dim);
    let mut sign: Option<i8> = None;
    let mut counterexample = None;
    for trial in 0..trials {
        let point: Vec<Fp> = (0..n).map(|_| Fp::random(&mut rng)).collect();
        let (dm, rhs) = eval_sides(dim, &point, mutation);
        if dm.is_zero() && rhs.is_zero() {
            continue;
        }
        // The planar identity holds with sign +1; only N = 3 is stated up to sign.
        let s = if dm == rhs {
            Some(1)
        } else if dim == 3 && dm == rhs.neg() {
            Some(-1)
        } else {
            None
        };
        let consistent = match (sign, s) {
            (_, None) => false,
            (None, Some(v)) => {
                sign = Some(v);
                true
            }
            (Some(a), Some(b)) => a == b,
        };
        if !consistent {
            counterexample = Some(Counterexample {
                trial,
                point: point.iter().map(|v| v.value()).collect(),
                det_m: dm.value(),
                rhs: rhs.value(),
            });
            break;
        }
    }
    let (symbolic_zero, symbolic_terms) = if dim == 2 {
        let defect = if let Some(mu) = mutation {
            let var = poly_var(2);
            let mut m = build_m(2, &var);
            m[mu.row][mu.col] = -&m[mu.row][mu.col];
            let nu2 = var(nu_var(1));
            &det(&m) - &(&(&nu2 * &nu2) * &det(&build_q(2, &var)))
        } else {
            symbolic_defect_2d()
        };
        (Some(defect.is_zero()), Some(defect.num_terms()))
    } else {
        (None, None)
    };
    let degree = identity_degree(dim);
    let per_trial = degree as f64 / P61 as f64;
    let log10_failure_bound = 2f64.log10() + trials as f64 * per_trial.log10();
    let verified = counterexample.is_none() && symbolic_zero.unwrap_or(true);
    IdentityReport {
        dim,
        trials,
        verified,
        sign: if counterexample.is_none() { sign } else { None },
        symbolic_zero,
        symbolic_terms,
        degree,
        failure_bound: 10f64.powf(log10_failure_bound),
        log10_failure_bound,
        counterexample,
    }
}

/// Integer substitution into a symbolic matrix.
pub fn substitute(m: &RingMatrix<MultiPoly>, point: &[BigInt]) -> RingMatrix<BigInt> {
    m.iter()
        .map(|row| row.iter().map(|p| p.eval(point, |c| c.clone())).collect())
        .collect()
}

/// Isotropic tensor `l d_ij d_hk + m (d_ih d_jk + d_ik d_jh)` as variable values.
pub fn isotropic_point(dim: usize, nu: &[i64], lame_l: i64, lame_m: i64) -> Vec<BigInt> {
    let mut p = vec![<BigInt as Zero>::zero(); num_vars(dim)];
    for (j, v) in nu.iter().enumerate() {
        p[nu_var(j)] = BigInt::from(*v);
    }
    let d = |a: usize, b: usize| i64::from(a == b);
    for i in 0..dim {
        for j in 0..dim {
            for h in 0..dim {
                for k in 0..dim {
                    let v = lame_l * d(i, j) * d(h, k)
                        + lame_m * (d(i, h) * d(j, k) + d(i, k) * d(j, h));
                    p[c_var(dim, i, j, h, k)] = BigInt::from(v);
                }
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly3(vars: usize) -> impl Fn(usize) -> MultiPoly {
        move |i| MultiPoly::var(vars, i)
    }

    #[test]
    fn small_determinants() {
        let v = poly3(4);
        let id: RingMatrix<MultiPoly> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| MultiPoly::constant(4, i64::from(i == j)))
                    .collect()
            })
            .collect();
        assert_eq!(det(&id), MultiPoly::constant(4, 1));
        let z = MultiPoly::zero(4);
        let diag = vec![
            vec![v(0), z.clone(), z.clone()],
            vec![z.clone(), v(1), z.clone()],
            vec![z.clone(), z.clone(), v(2)],
        ];
        assert_eq!(det(&diag), &(&v(0) * &v(1)) * &v(2));
        let two = vec![vec![v(0), v(1)], vec![v(2), v(3)]];
        assert_eq!(det(&two), &(&v(0) * &v(3)) - &(&v(1) * &v(2)));
        // pivoting path
        let swap = vec![vec![z.clone(), v(1)], vec![v(2), z.clone()]];
        assert_eq!(det(&swap), -&(&v(1) * &v(2)));
    }

    #[test]
    fn field_determinant_is_multiplicative_and_alternating() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a: RingMatrix<Fp> = (0..4)
                .map(|_| (0..4).map(|_| Fp::random(&mut rng)).collect())
                .collect();
            let b: RingMatrix<Fp> = (0..4)
                .map(|_| (0..4).map(|_| Fp::random(&mut rng)).collect())
                .collect();
            let ab: RingMatrix<Fp> = (0..4)
                .map(|i| {
                    (0..4)
                        .map(|j| {
                            (0..4).fold(Fp::zero(), |s, k| {
                                Ring::add(&s, &Ring::mul(&a[i][k], &b[k][j]))
                            })
                        })
                        .collect()
                })
                .collect();
            assert_eq!(det(&ab), Ring::mul(&det(&a), &det(&b)));
            let mut sw = a.clone();
            sw.swap(0, 2);
            assert_eq!(det(&sw), det(&a).neg());
        }
        assert_eq!(Fp::from_i64(-1), Fp::new(P61 - 1));
        assert_eq!(
            Ring::mul(&Fp::new(12345), &Fp::new(12345).inverse().unwrap()),
            Fp::one()
        );
    }

    #[test]
    fn polynomial_division_is_exact() {
        let v = poly3(3);
        let a = &v(0) + &v(1);
        let b = &(&v(1) * &v(2)) - &MultiPoly::constant(3, 3);
        let ab = &a * &b;
        assert_eq!(ab.checked_div(&a).unwrap(), b);
        assert_eq!(ab.checked_div(&b).unwrap(), a);
        assert!(a.checked_div(&b).is_none());
    }

    #[test]
    fn isotropic_q_is_diagonal() {
        for (dim, nu) in [(2usize, vec![0i64, 1]), (3, vec![0, 0, 1])] {
            let q = build_q(dim, &poly_var(dim));
            let qi = substitute(&q, &isotropic_point(dim, &nu, 2, 3));
            for i in 0..dim {
                for h in 0..dim {
                    let expect = if i != h {
                        0
                    } else if i == dim - 1 {
                        2 + 2 * 3
                    } else {
                        3
                    };
                    assert_eq!(qi[i][h], BigInt::from(expect));
                }
            }
        }
    }

    #[test]
    fn q_is_symmetric_under_major_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 3;
        let mut p = vec![Fp::zero(); num_vars(dim)];
        for v in p.iter_mut() {
            *v = Fp::random(&mut rng);
        }
        for i in 0..3 {
            for j in 0..3 {
                for h in 0..3 {
                    for k in 0..3 {
                        p[c_var(dim, h, k, i, j)] = p[c_var(dim, i, j, h, k)];
                    }
                }
            }
        }
        let q = build_q(dim, &|i: usize| p[i]);
        for i in 0..3 {
            for h in 0..3 {
                assert_eq!(q[i][h], q[h][i]);
            }
        }
    }

    #[test]
    fn matrix_structure_3d() {
        let m = build_m(3, &poly_var(3));
        assert_eq!(m.len(), 18);
        for row in &m[..15] {
            let nz: Vec<&MultiPoly> = row.iter().filter(|p| !p.is_zero()).collect();
            assert_eq!(nz.len(), 2);
            assert!(nz
                .iter()
                .all(|p| p.total_degree() == 1 && p.num_terms() == 1));
        }
        for row in &m[15..] {
            let nz: Vec<&MultiPoly> = row.iter().filter(|p| !p.is_zero()).collect();
            assert_eq!(nz.len(), 9);
            assert!(nz
                .iter()
                .all(|p| p.total_degree() == 2 && p.num_terms() == 3));
        }
    }

    #[test]
    fn vertical_normal_reduces_to_det_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [2usize, 3] {
            let mut p: Vec<BigInt> = (0..num_vars(dim))
                .map(|_| BigInt::from(rng.random_range(-9i64..10)))
                .collect();
            for j in 0..dim {
                p[nu_var(j)] = BigInt::from(i64::from(j == dim - 1));
            }
            let dm = det(&substitute(&build_m(dim, &poly_var(dim)), &p));
            let dq = det(&substitute(&build_q(dim, &poly_var(dim)), &p));
            assert!(dm == dq || dm == -dq.clone(), "{dm} vs {dq}");
        }
    }

    #[test]
    fn two_dimensional_identity_is_exact() {
        let defect = symbolic_defect_2d();
        assert!(defect.is_zero(), "{defect:?}");
        let r = verify_identity(2, 10, 0, None);
        assert!(r.verified && r.symbolic_zero == Some(true) && r.sign == Some(1));
    }

    #[test]
    fn three_dimensional_identity_holds_at_random_points() {
        let r = verify_identity(3, 40, 7, None);
        assert!(r.verified, "{r:?}");
        assert_eq!(r.degree, 21);
        assert_eq!(r.sign, Some(1));
        assert!(r.log10_failure_bound < -15.0);
    }

    #[test]
    fn sign_mutations_are_detected() {
        for (dim, mu) in [
            (2, Mutation { row: 3, col: 1 }),
            (3, Mutation { row: 16, col: 8 }),
            (3, Mutation { row: 4, col: 4 }),
        ] {
            let r = verify_identity(dim, 3, 11, Some(mu));
            assert!(!r.verified, "{mu:?}");
            assert_eq!(r.counterexample.unwrap().trial, 0);
        }
    }
}
