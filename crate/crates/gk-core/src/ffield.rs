//! Exact arithmetic in the field tower GF(p) ⊂ GF(ℓ) ⊂ GF(ℓ²) ⊂ GF(ℓ⁶).
//!
//! Every level is a Zech-logarithm table: a nonzero element is stored as
//! `1 + k` where it equals `g^k` for the level's fixed generator `g`, and
//! zero is stored as `0`. Multiplication is an exponent addition and
//! addition is one Zech lookup, which keeps the matrix-heavy group and
//! curve computations downstream cheap.
//!
//! The levels are built independently as extensions of GF(p) with the
//! smallest primitive polynomial (smallest value of Σ cᵢ pⁱ over the
//! non-leading coefficients), so construction is deterministic and does
//! not assume Conway polynomial tables. Embeddings between consecutive
//! levels send the subfield generator to the least root of its defining
//! polynomial in the bigger level; skip-level maps are the composites.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest ℓ accepted by default. ℓ ∈ {3, 4, 5} covers the verification
/// targets; 7, 8, 9 stay available for spot checks.
pub const DEFAULT_ELL_CAP: u32 = 9;

/// Errors from tower construction and field arithmetic.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("ℓ must be a prime power greater than 2, got {0}")]
    NotPrimePower(u32),
    #[error("ℓ = {ell} exceeds the configured cap {cap}")]
    CapExceeded { ell: u32, cap: u32 },
    #[error("inversion of zero in GF({size})")]
    DivisionByZero { size: u32 },
    #[error("{n} does not divide the unit-group order {order}")]
    BadRootOrder { n: u64, order: u64 },
    #[error("no embedding from level {0} to level {1}")]
    LevelMismatch(usize, usize),
    #[error("negative power of zero")]
    ZeroToNegativePower,
    #[error("bad tower dump: {0}")]
    BadDump(String),
}

/// Field parameters derived from ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldParams {
    /// Characteristic.
    pub p: u32,
    /// ℓ = p^h.
    pub h: u32,
    /// The base prime power ℓ > 2.
    pub ell: u32,
    /// q = ℓ³.
    pub q: u64,
    /// Highest power of 3 dividing ℓ + 1.
    pub mu1: u32,
    /// gcd(ℓ² − ℓ + 1, 3); equals 3 exactly when ℓ ≡ 2 (mod 3).
    pub mu2: u32,
}

impl FieldParams {
    pub fn new(ell: u32, cap: u32) -> Result<Self, FieldError> {
        let (p, h) = prime_power_split(ell).ok_or(FieldError::NotPrimePower(ell))?;
        if ell <= 2 {
            return Err(FieldError::NotPrimePower(ell));
        }
        if ell > cap {
            return Err(FieldError::CapExceeded { ell, cap });
        }
        let mut mu1 = 1u32;
        let mut m = ell + 1;
        while m % 3 == 0 {
            mu1 *= 3;
            m /= 3;
        }
        let n = ell * ell - ell + 1;
        let mu2 = if n % 3 == 0 { 3 } else { 1 };
        Ok(FieldParams {
            p,
            h,
            ell,
            q: (ell as u64).pow(3),
            mu1,
            mu2,
        })
    }

    /// ℓ² − ℓ + 1, the order of the central group Λ.
    pub fn n_lambda(&self) -> u64 {
        let l = self.ell as u64;
        l * l - l + 1
    }
}

/// Splits n = p^h with p prime, if possible.
pub fn prime_power_split(n: u32) -> Option<(u32, u32)> {
    if n < 2 {
        return None;
    }
    let mut p = 0u32;
    for cand in 2..=n {
        if n % cand == 0 {
            p = cand;
            break;
        }
    }
    let mut m = n;
    let mut h = 0;
    while m % p == 0 {
        m /= p;
        h += 1;
    }
    if m == 1 {
        Some((p, h))
    } else {
        None
    }
}

/// One field level: GF(p^degree) with Zech-logarithm tables.
///
/// Element codes: `0` is zero, `1 + k` is `g^k` for the fixed generator g.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    /// Characteristic.
    pub p: u32,
    /// Extension degree over GF(p).
    pub degree: u32,
    /// Field size p^degree.
    pub size: u32,
    /// Defining polynomial x^degree + Σ poly[i]·x^i (coefficients in 0..p).
    pub poly: Vec<u32>,
    /// zech[k] = code of 1 + g^k (0 when 1 + g^k = 0).
    zech: Vec<u32>,
    /// Code of −1.
    pub minus_one: u32,
    /// Codes of the prime-field constants 0, 1, …, p−1.
    prime_codes: Vec<u32>,
}

impl Level {
    /// Builds GF(p^degree) with the smallest primitive polynomial.
    fn build(p: u32, degree: u32) -> Level {
        let size = p.checked_pow(degree).expect("level size fits u32");
        let order = (size - 1) as u64;
        let prime_factors = prime_factors(order.max(1));
        let deg_factors = prime_factors_u32(degree);

        let mut chosen: Option<Vec<u32>> = None;
        'search: for c in 0..size {
            let mut coeffs = Vec::with_capacity(degree as usize + 1);
            let mut v = c;
            for _ in 0..degree {
                coeffs.push(v % p);
                v /= p;
            }
            coeffs.push(1); // monic
            if coeffs[0] == 0 {
                continue; // x divides f
            }
            if !poly_is_irreducible(&coeffs, p, &deg_factors) {
                continue;
            }
            // x must generate the unit group.
            for &r in &prime_factors {
                let e = order / r;
                if poly_pow_x(&coeffs, p, e) == monomial_one(degree as usize) {
                    continue 'search;
                }
            }
            chosen = Some(coeffs);
            break;
        }
        let poly = chosen.expect("a primitive polynomial of every degree exists");

        // Exponent table in packed base-p form, then the Zech table.
        let mut exp_packed = vec![0u32; order as usize];
        let mut log_code = vec![0u32; size as usize];
        let mut cur = vec![0u32; degree as usize];
        if degree as usize > 0 {
            cur[0] = 1;
        }
        for (k, slot) in exp_packed.iter_mut().enumerate() {
            let packed = pack(&cur, p);
            *slot = packed;
            log_code[packed as usize] = k as u32 + 1;
            cur = poly_mul_x_mod(&cur, &poly, p);
        }
        debug_assert_eq!(pack(&cur, p), 1, "g^(size-1) must return to 1");

        let mut zech = vec![0u32; order as usize];
        for k in 0..order as usize {
            let packed = exp_packed[k];
            // add 1 to the constant coefficient mod p
            let c0 = packed % p;
            let bumped = if c0 + 1 == p { packed - c0 } else { packed + 1 };
            zech[k] = log_code[bumped as usize];
        }

        let minus_one = if p == 2 { 1 } else { (size - 1) / 2 + 1 };

        let mut prime_codes = vec![0u32; p as usize];
        if p > 1 {
            prime_codes[1] = 1;
        }
        for c in 2..p as usize {
            // c = (c-1) + 1, via the Zech table
            let prev = prime_codes[c - 1];
            let l = Level {
                p,
                degree,
                size,
                poly: poly.clone(),
                zech: zech.clone(),
                minus_one,
                prime_codes: Vec::new(),
            };
            prime_codes[c] = l.add(prev, 1);
        }

        Level {
            p,
            degree,
            size,
            poly,
            zech,
            minus_one,
            prime_codes,
        }
    }

    #[inline]
    pub fn zero(&self) -> u32 {
        0
    }

    #[inline]
    pub fn one(&self) -> u32 {
        1
    }

    /// Code of the fixed multiplicative generator.
    #[inline]
    pub fn gen_code(&self) -> u32 {
        if self.size == 2 {
            1
        } else {
            2
        }
    }

    /// Code of the prime-field constant c.
    #[inline]
    pub fn from_prime(&self, c: u32) -> u32 {
        self.prime_codes[(c % self.p) as usize]
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        let m = (self.size - 1) as u64;
        ((a as u64 - 1 + b as u64 - 1) % m) as u32 + 1
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        if a == 0 {
            return b;
        }
        if b == 0 {
            return a;
        }
        let m = (self.size - 1) as u64;
        let d = ((b as u64 + m - a as u64) % m) as usize;
        let z = self.zech[d];
        if z == 0 {
            0
        } else {
            ((a as u64 - 1 + z as u64 - 1) % m) as u32 + 1
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        self.mul(a, self.minus_one)
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    pub fn inv(&self, a: u32) -> Result<u32, FieldError> {
        if a == 0 {
            return Err(FieldError::DivisionByZero { size: self.size });
        }
        let m = (self.size - 1) as u64;
        Ok(((m - (a as u64 - 1)) % m) as u32 + 1)
    }

    pub fn div(&self, a: u32, b: u32) -> Result<u32, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// a^e with square-and-multiply semantics on the exponent lattice:
    /// for nonzero a this is an exponent product mod (size − 1).
    pub fn pow(&self, a: u32, e: i64) -> Result<u32, FieldError> {
        if a == 0 {
            return match e.cmp(&0) {
                std::cmp::Ordering::Greater => Ok(0),
                std::cmp::Ordering::Equal => Ok(1),
                std::cmp::Ordering::Less => Err(FieldError::ZeroToNegativePower),
            };
        }
        let m = (self.size - 1) as i64;
        let r = e.rem_euclid(m) as u64;
        Ok(((a as u64 - 1) * r % m as u64) as u32 + 1)
    }

    /// x^(p^k), the absolute Frobenius iterated k times.
    pub fn frob_p(&self, a: u32, k: u32) -> u32 {
        if a == 0 {
            return 0;
        }
        let m = (self.size - 1) as u64;
        let e = mod_pow(self.p as u64, k as u64, m);
        ((a as u64 - 1) * e % m) as u32 + 1
    }

    /// Discrete log of a nonzero element w.r.t. the fixed generator.
    #[inline]
    pub fn log(&self, a: u32) -> Option<u64> {
        if a == 0 {
            None
        } else {
            Some(a as u64 - 1)
        }
    }

    /// Multiplicative order of a nonzero element.
    pub fn order_of(&self, a: u32) -> Option<u64> {
        let k = self.log(a)?;
        let m = (self.size - 1) as u64;
        Some(m / gcd_u64(m, k))
    }

    /// Evaluates a polynomial with prime-field coefficients at y.
    fn eval_prime_poly(&self, coeffs: &[u32], y: u32) -> u32 {
        let mut acc = 0u32;
        for &c in coeffs.iter().rev() {
            acc = self.add(self.mul(acc, y), self.from_prime(c));
        }
        acc
    }
}

fn pack(v: &[u32], p: u32) -> u32 {
    let mut acc = 0u64;
    for &c in v.iter().rev() {
        acc = acc * p as u64 + c as u64;
    }
    acc as u32
}

fn monomial_one(degree: usize) -> Vec<u32> {
    let mut v = vec![0u32; degree.max(1)];
    v[0] = 1;
    v
}

/// c · x mod f, for c of length deg f.
fn poly_mul_x_mod(c: &[u32], f: &[u32], p: u32) -> Vec<u32> {
    let d = f.len() - 1;
    let mut out = vec![0u32; d];
    let lead = c[d - 1];
    for i in (1..d).rev() {
        out[i] = c[i - 1];
    }
    if lead != 0 {
        // subtract lead · (f − x^d)
        for i in 0..d {
            let s = (lead * f[i]) % p;
            out[i] = (out[i] + p - s) % p;
        }
    }
    out
}

fn poly_mul_mod(a: &[u32], b: &[u32], f: &[u32], p: u32) -> Vec<u32> {
    let d = f.len() - 1;
    let mut prod = vec![0u64; 2 * d];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            prod[i + j] += ai as u64 * bj as u64;
        }
    }
    for v in prod.iter_mut() {
        *v %= p as u64;
    }
    // reduce
    for i in (d..2 * d).rev() {
        let c = prod[i];
        if c == 0 {
            continue;
        }
        prod[i] = 0;
        for j in 0..d {
            let t = (c * f[j] as u64) % p as u64;
            prod[i - d + j] = (prod[i - d + j] + p as u64 - t) % p as u64;
        }
    }
    prod[..d].iter().map(|&v| v as u32).collect()
}

/// x^e mod f.
fn poly_pow_x(f: &[u32], p: u32, e: u64) -> Vec<u32> {
    let d = f.len() - 1;
    let mut base = vec![0u32; d];
    if d >= 2 {
        base[1] = 1;
    } else {
        // x ≡ −f[0] in the degree-1 case
        base[0] = (p - f[0] % p) % p;
    }
    let mut acc = monomial_one(d);
    let mut e = e;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_mul_mod(&acc, &b, f, p);
        }
        b = poly_mul_mod(&b, &b, f, p);
        e >>= 1;
    }
    acc
}

fn poly_is_irreducible(f: &[u32], p: u32, deg_prime_factors: &[u32]) -> bool {
    let d = (f.len() - 1) as u32;
    // x^(p^d) ≡ x mod f
    let xpd = poly_pow_x(f, p, mod_pow_exact(p as u64, d as u64));
    let x = {
        let mut v = vec![0u32; d as usize];
        if d >= 2 {
            v[1] = 1;
        } else {
            v[0] = (p - f[0] % p) % p;
        }
        v
    };
    if xpd != x {
        return false;
    }
    // gcd(x^(p^(d/r)) − x, f) = 1 for each prime r | d
    for &r in deg_prime_factors {
        let e = mod_pow_exact(p as u64, (d / r) as u64);
        let xe = poly_pow_x(f, p, e);
        let mut diff: Vec<u32> = xe
            .iter()
            .zip(x.iter())
            .map(|(&a, &b)| (a + p - b) % p)
            .collect();
        while diff.last() == Some(&0) {
            diff.pop();
        }
        if diff.is_empty() {
            return false; // x^(p^(d/r)) = x, so f has a small-degree factor
        }
        let g = poly_gcd(f.to_vec(), diff, p);
        if g.len() > 1 {
            return false;
        }
    }
    true
}

fn poly_gcd(mut a: Vec<u32>, mut b: Vec<u32>, p: u32) -> Vec<u32> {
    loop {
        while a.last() == Some(&0) {
            a.pop();
        }
        while b.last() == Some(&0) {
            b.pop();
        }
        if b.is_empty() {
            return a;
        }
        if a.len() < b.len() {
            std::mem::swap(&mut a, &mut b);
            continue;
        }
        // a mod b
        let lead_inv = mod_inv(*b.last().unwrap() as u64, p as u64) as u32;
        while a.len() >= b.len() && !a.is_empty() {
            while a.last() == Some(&0) {
                a.pop();
            }
            if a.len() < b.len() {
                break;
            }
            let shift = a.len() - b.len();
            let c = (*a.last().unwrap() * lead_inv) % p;
            for i in 0..b.len() {
                let t = (c * b[i]) % p;
                a[shift + i] = (a[shift + i] + p - t) % p;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
}

fn mod_pow(mut b: u64, mut e: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

fn mod_pow_exact(b: u64, e: u64) -> u64 {
    let mut acc = 1u64;
    for _ in 0..e {
        acc *= b;
    }
    acc
}

fn mod_inv(a: u64, m: u64) -> u64 {
    // extended Euclid; m prime in every use here
    let (mut t, mut new_t) = (0i64, 1i64);
    let (mut r, mut new_r) = (m as i64, (a % m) as i64);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    ((t % m as i64 + m as i64) % m as i64) as u64
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm_u64(a: u64, b: u64) -> u64 {
    a / gcd_u64(a, b) * b
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn prime_factors_u32(n: u32) -> Vec<u32> {
    prime_factors(n as u64).into_iter().map(|v| v as u32).collect()
}

/// An element tagged with the level it lives at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    /// Level index: 0 = GF(p), 1 = GF(ℓ), 2 = GF(ℓ²), 3 = GF(ℓ⁶).
    pub level: usize,
    pub code: u32,
}

/// The full tower with embeddings. Immutable after construction and safe
/// to share across worker threads; all operations are pure.
#[derive(Debug, Clone)]
pub struct FieldTower {
    pub params: FieldParams,
    /// Levels 0..4: GF(p), GF(ℓ), GF(ℓ²), GF(ℓ⁶).
    pub levels: Vec<Level>,
    /// emb_next[i]: level i → level i+1.
    emb_next: Vec<Vec<u32>>,
    /// emb_top[i]: level i → top (composite of the adjacent maps).
    emb_top: Vec<Vec<u32>>,
}

pub const LEVEL_P: usize = 0;
pub const LEVEL_ELL: usize = 1;
pub const LEVEL_ELL2: usize = 2;
pub const LEVEL_TOP: usize = 3;

impl FieldTower {
    pub fn new(ell: u32) -> Result<FieldTower, FieldError> {
        Self::with_cap(ell, DEFAULT_ELL_CAP)
    }

    pub fn with_cap(ell: u32, cap: u32) -> Result<FieldTower, FieldError> {
        let params = FieldParams::new(ell, cap)?;
        let degrees = [1, params.h, 2 * params.h, 6 * params.h];
        let levels: Vec<Level> = degrees.iter().map(|&d| Level::build(params.p, d)).collect();

        let mut emb_next = Vec::with_capacity(3);
        for i in 0..3 {
            emb_next.push(embed_level(&levels[i], &levels[i + 1]));
        }
        let mut emb_top: Vec<Vec<u32>> = Vec::with_capacity(4);
        for i in 0..4 {
            let mut map: Vec<u32> = (0..levels[i].size).collect();
            for j in i..3 {
                map = map.iter().map(|&c| emb_next[j][c as usize]).collect();
            }
            emb_top.push(map);
        }
        Ok(FieldTower {
            params,
            levels,
            emb_next,
            emb_top,
        })
    }

    #[inline]
    pub fn top(&self) -> &Level {
        &self.levels[LEVEL_TOP]
    }

    pub fn element(&self, level: usize, code: u32) -> FieldElement {
        FieldElement { level, code }
    }

    /// Embeds an element into a higher (or equal) level.
    pub fn embed(&self, x: FieldElement, to: usize) -> Result<FieldElement, FieldError> {
        if to < x.level || to > LEVEL_TOP {
            return Err(FieldError::LevelMismatch(x.level, to));
        }
        let mut code = x.code;
        for j in x.level..to {
            code = self.emb_next[j][code as usize];
        }
        Ok(FieldElement { level: to, code })
    }

    /// Top-level code of an element at any level.
    pub fn to_top(&self, x: FieldElement) -> u32 {
        self.emb_top[x.level][x.code as usize]
    }

    fn lift_pair(&self, a: FieldElement, b: FieldElement) -> (usize, u32, u32) {
        let lvl = a.level.max(b.level);
        let ac = self.embed(a, lvl).expect("upward embedding").code;
        let bc = self.embed(b, lvl).expect("upward embedding").code;
        (lvl, ac, bc)
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let (lvl, ac, bc) = self.lift_pair(a, b);
        FieldElement {
            level: lvl,
            code: self.levels[lvl].add(ac, bc),
        }
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let (lvl, ac, bc) = self.lift_pair(a, b);
        FieldElement {
            level: lvl,
            code: self.levels[lvl].mul(ac, bc),
        }
    }

    pub fn neg(&self, a: FieldElement) -> FieldElement {
        FieldElement {
            level: a.level,
            code: self.levels[a.level].neg(a.code),
        }
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        Ok(FieldElement {
            level: a.level,
            code: self.levels[a.level].inv(a.code)?,
        })
    }

    pub fn pow(&self, a: FieldElement, e: i64) -> Result<FieldElement, FieldError> {
        Ok(FieldElement {
            level: a.level,
            code: self.levels[a.level].pow(a.code, e)?,
        })
    }

    /// x^(ℓ^e) on a top-level code.
    pub fn frobenius(&self, x: u32, e: u32) -> u32 {
        self.top().frob_p(x, e * self.params.h)
    }

    /// True when a top-level code lies in the embedded copy of the given level.
    pub fn in_sublevel(&self, x: u32, level: usize) -> bool {
        if x == 0 {
            return true;
        }
        let big = (self.top().size - 1) as u64;
        let small = (self.levels[level].size - 1) as u64;
        (x as u64 - 1) % (big / small) == 0
    }

    /// All n-th roots of unity at the top level, as ζ^0, ζ^1, …, ζ^(n−1)
    /// for the deterministic primitive root ζ.
    pub fn roots_of_unity(&self, n: u64) -> Result<Vec<u32>, FieldError> {
        let zeta = self.primitive_root_of_unity(n)?;
        let top = self.top();
        let mut out = Vec::with_capacity(n as usize);
        let mut cur = top.one();
        for _ in 0..n {
            out.push(cur);
            cur = top.mul(cur, zeta);
        }
        Ok(out)
    }

    /// The least power of the fixed generator with exact order n.
    pub fn primitive_root_of_unity(&self, n: u64) -> Result<u32, FieldError> {
        let order = (self.top().size - 1) as u64;
        if n == 0 || order % n != 0 {
            return Err(FieldError::BadRootOrder { n, order });
        }
        Ok((order / n) as u32 + 1)
    }

    /// Norm GF(ℓ²) → GF(ℓ) as x · x^ℓ, returned as a level-1 element.
    pub fn norm_l2_to_l1(&self, x: FieldElement) -> Result<FieldElement, FieldError> {
        if x.level != LEVEL_ELL2 {
            return Err(FieldError::LevelMismatch(x.level, LEVEL_ELL2));
        }
        let lvl = &self.levels[LEVEL_ELL2];
        let n = lvl.mul(x.code, lvl.frob_p(x.code, self.params.h));
        // The norm lands in GF(ℓ); translate codes via the embedding map.
        if n == 0 {
            return Ok(FieldElement {
                level: LEVEL_ELL,
                code: 0,
            });
        }
        let code = self.emb_next[LEVEL_ELL]
            .iter()
            .position(|&c| c == n)
            .expect("norm lands in the subfield") as u32;
        Ok(FieldElement {
            level: LEVEL_ELL,
            code,
        })
    }

    /// Enumerates the embedded copy of a level inside the top field, in the
    /// level's element order (0, then generator powers).
    pub fn sublevel_elements_in_top(&self, level: usize) -> Vec<u32> {
        self.emb_top[level].clone()
    }

    /// Serializes the tower tables (magic "GKFF", version, p, h, defining
    /// polynomials, Zech tables, embeddings).
    pub fn dump<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"GKFF")?;
        put_u32(w, 1)?; // format version
        put_u32(w, self.params.p)?;
        put_u32(w, self.params.h)?;
        put_u32(w, self.params.ell)?;
        for lvl in &self.levels {
            put_u32(w, lvl.degree)?;
            put_u32(w, lvl.poly.len() as u32)?;
            for &c in &lvl.poly {
                put_u32(w, c)?;
            }
            put_u32(w, lvl.zech.len() as u32)?;
            for &z in &lvl.zech {
                put_u32(w, z)?;
            }
        }
        for map in &self.emb_next {
            put_u32(w, map.len() as u32)?;
            for &c in map {
                put_u32(w, c)?;
            }
        }
        Ok(())
    }

    /// Reloads a tower previously written by [`FieldTower::dump`].
    pub fn load<R: Read>(r: &mut R) -> Result<FieldTower, FieldError> {
        let bad = |m: &str| FieldError::BadDump(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != b"GKFF" {
            return Err(bad("magic mismatch"));
        }
        if get_u32(r)? != 1 {
            return Err(bad("unsupported version"));
        }
        let p = get_u32(r)?;
        let h = get_u32(r)?;
        let ell = get_u32(r)?;
        let params = FieldParams::new(ell, u32::MAX)?;
        if params.p != p || params.h != h {
            return Err(bad("parameter mismatch"));
        }
        let mut levels = Vec::with_capacity(4);
        for _ in 0..4 {
            let degree = get_u32(r)?;
            let plen = get_u32(r)? as usize;
            let mut poly = Vec::with_capacity(plen);
            for _ in 0..plen {
                poly.push(get_u32(r)?);
            }
            let zlen = get_u32(r)? as usize;
            let mut zech = Vec::with_capacity(zlen);
            for _ in 0..zlen {
                zech.push(get_u32(r)?);
            }
            let size = p.pow(degree);
            if zlen != (size - 1) as usize {
                return Err(bad("zech table size mismatch"));
            }
            let minus_one = if p == 2 { 1 } else { (size - 1) / 2 + 1 };
            let mut lvl = Level {
                p,
                degree,
                size,
                poly,
                zech,
                minus_one,
                prime_codes: vec![0u32; p as usize],
            };
            let mut codes = vec![0u32; p as usize];
            if p > 1 {
                codes[1] = 1;
            }
            for c in 2..p as usize {
                codes[c] = lvl.add(codes[c - 1], 1);
            }
            lvl.prime_codes = codes;
            levels.push(lvl);
        }
        let mut emb_next = Vec::with_capacity(3);
        for i in 0..3 {
            let mlen = get_u32(r)? as usize;
            if mlen != levels[i].size as usize {
                return Err(bad("embedding size mismatch"));
            }
            let mut map = Vec::with_capacity(mlen);
            for _ in 0..mlen {
                map.push(get_u32(r)?);
            }
            emb_next.push(map);
        }
        let mut emb_top: Vec<Vec<u32>> = Vec::with_capacity(4);
        for i in 0..4 {
            let mut map: Vec<u32> = (0..levels[i].size).collect();
            for j in i..3 {
                map = map.iter().map(|&c| emb_next[j][c as usize]).collect();
            }
            emb_top.push(map);
        }
        Ok(FieldTower {
            params,
            levels,
            emb_next,
            emb_top,
        })
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, FieldError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| FieldError::BadDump("truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

/// Builds the embedding sub → big by sending the subfield generator to the
/// least root (in element order) of the subfield's defining polynomial.
fn embed_level(sub: &Level, big: &Level) -> Vec<u32> {
    let step = ((big.size - 1) / (sub.size - 1).max(1)) as u64;
    let mut root = None;
    // Candidate roots are the elements of the unique subfield of the right
    // size, i.e. powers of G^step; scan in ascending exponent order.
    for t in 0..(sub.size - 1) as u64 {
        let cand = (t * step) as u32 + 1;
        if big.eval_prime_poly(&sub.poly, cand) == 0 {
            root = Some(cand);
            break;
        }
    }
    // Degree-1 subfield of equal size: identity-like map still needs a root.
    let root = root.expect("the subfield polynomial splits in the extension");
    let m = (big.size - 1) as u64;
    let mut map = vec![0u32; sub.size as usize];
    for k in 0..(sub.size - 1) as u64 {
        map[k as usize + 1] = ((root as u64 - 1) * k % m) as u32 + 1;
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_small_ells() {
        let p3 = FieldParams::new(3, 9).unwrap();
        assert_eq!((p3.p, p3.h), (3, 1));
        assert_eq!((p3.mu1, p3.mu2), (1, 1));
        let p4 = FieldParams::new(4, 9).unwrap();
        assert_eq!((p4.p, p4.h), (2, 2));
        assert_eq!((p4.mu1, p4.mu2), (1, 1));
        // 3 ∥ 6 and gcd(21, 3) = 3
        let p5 = FieldParams::new(5, 9).unwrap();
        assert_eq!((p5.mu1, p5.mu2), (3, 3));
        let p8 = FieldParams::new(8, 9).unwrap();
        assert_eq!(p8.mu1, 9);
    }

    #[test]
    fn rejects_bad_ell() {
        assert!(FieldParams::new(6, 9).is_err());
        assert!(FieldParams::new(2, 9).is_err());
        assert!(FieldParams::new(11, 9).is_err());
        assert!(FieldParams::new(11, 16).is_ok());
    }

    #[test]
    fn level_sizes_ell3() {
        let t = FieldTower::new(3).unwrap();
        let sizes: Vec<u32> = t.levels.iter().map(|l| l.size).collect();
        assert_eq!(sizes, vec![3, 3, 9, 729]);
    }

    #[test]
    fn level_sizes_ell4_and_5() {
        let t = FieldTower::new(4).unwrap();
        let sizes: Vec<u32> = t.levels.iter().map(|l| l.size).collect();
        assert_eq!(sizes, vec![2, 4, 16, 4096]);
        let t = FieldTower::new(5).unwrap();
        let sizes: Vec<u32> = t.levels.iter().map(|l| l.size).collect();
        assert_eq!(sizes, vec![5, 5, 25, 15625]);
    }

    #[test]
    fn field_axioms_exhaustive_gf729() {
        let t = FieldTower::new(3).unwrap();
        let f = t.top();
        for a in 0..f.size {
            assert_eq!(f.add(a, 0), a);
            assert_eq!(f.mul(a, 1), a);
            if a != 0 {
                let inv = f.inv(a).unwrap();
                assert_eq!(f.mul(a, inv), 1, "x·x⁻¹ = 1 for x = {a}");
            }
        }
        // generator order
        let g = f.gen_code();
        assert_eq!(f.order_of(g), Some(728));
        assert_eq!(f.pow(g, 728).unwrap(), 1);
    }

    #[test]
    fn associativity_distributivity_exhaustive_gf27ish() {
        // Exhaustive on the ℓ = 3 second level (GF(9)) and a full pass over
        // GF(729) triples is too big; the spec asks exhaustive at ℓ=3 for
        // each level, which is feasible for sizes 3, 3, 9 and sampled for 729.
        let t = FieldTower::new(3).unwrap();
        for lvl in &t.levels[..3] {
            let n = lvl.size;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let ab_c = lvl.mul(lvl.mul(a, b), c);
                        let a_bc = lvl.mul(a, lvl.mul(b, c));
                        assert_eq!(ab_c, a_bc);
                        let l = lvl.mul(a, lvl.add(b, c));
                        let r = lvl.add(lvl.mul(a, b), lvl.mul(a, c));
                        assert_eq!(l, r);
                    }
                }
            }
        }
    }

    #[test]
    fn frobenius_fixed_sets() {
        let t = FieldTower::new(3).unwrap();
        let f = t.top();
        let mut fixed2 = 0u32;
        for x in 0..f.size {
            assert_eq!(t.frobenius(x, 6), x, "full-field Frobenius is identity");
            assert_eq!(t.frobenius(x, 0), x);
            let in_l2 = t.frobenius(x, 2) == x;
            if in_l2 {
                fixed2 += 1;
            }
            assert_eq!(in_l2, t.in_sublevel(x, LEVEL_ELL2));
        }
        assert_eq!(fixed2, 9, "Frobenius² fixes exactly the embedded GF(9)");
    }

    #[test]
    fn frobenius_on_l2_fixes_embedded_l1() {
        let t = FieldTower::new(4).unwrap();
        let l1: std::collections::HashSet<u32> =
            t.sublevel_elements_in_top(LEVEL_ELL).into_iter().collect();
        for x in 0..t.top().size {
            if t.in_sublevel(x, LEVEL_ELL2) {
                let fixed = t.frobenius(x, 1) == x;
                assert_eq!(fixed, l1.contains(&x));
            }
        }
    }

    #[test]
    fn embeddings_are_ring_homs() {
        for ell in [3u32, 4, 5] {
            let t = FieldTower::new(ell).unwrap();
            for i in 0..3 {
                let sub = &t.levels[i];
                let big = &t.levels[i + 1];
                let map = &t.emb_next[i];
                assert_eq!(map[0], 0);
                assert_eq!(map[1], 1);
                for a in 0..sub.size {
                    for b in 0..sub.size {
                        assert_eq!(map[sub.add(a, b) as usize], big.add(map[a as usize], map[b as usize]));
                        assert_eq!(map[sub.mul(a, b) as usize], big.mul(map[a as usize], map[b as usize]));
                    }
                }
                // injectivity
                let mut seen = std::collections::HashSet::new();
                for &v in map {
                    assert!(seen.insert(v));
                }
            }
        }
    }

    #[test]
    fn composite_embedding_hits_a_root() {
        // The direct GF(ℓ) → GF(ℓ⁶) map is the composite; it must send the
        // level-1 generator to a root of the level-1 polynomial.
        for ell in [3u32, 5, 7] {
            let t = FieldTower::new(ell).unwrap();
            let g1 = t.levels[LEVEL_ELL].gen_code();
            let img = t.to_top(t.element(LEVEL_ELL, g1));
            assert_eq!(t.top().eval_prime_poly(&t.levels[LEVEL_ELL].poly, img), 0);
        }
    }

    #[test]
    fn roots_of_unity_counts() {
        let t = FieldTower::new(3).unwrap();
        // 728 = 7 · 104 and 728 = 28 · 26
        let r7 = t.roots_of_unity(7).unwrap();
        assert_eq!(r7.len(), 7);
        let uniq: std::collections::HashSet<_> = r7.iter().collect();
        assert_eq!(uniq.len(), 7);
        let r28 = t.roots_of_unity(28).unwrap();
        assert_eq!(r28.len(), 28);
        assert_eq!(t.roots_of_unity(1).unwrap(), vec![1]);
        assert!(t.roots_of_unity(11).is_err());
        let z = t.primitive_root_of_unity(7).unwrap();
        assert_eq!(t.top().order_of(z), Some(7));
    }

    #[test]
    fn norm_l2_to_l1_surjective() {
        for ell in [3u32, 4, 5] {
            let t = FieldTower::new(ell).unwrap();
            let mut image = std::collections::HashSet::new();
            for x in 0..t.levels[LEVEL_ELL2].size {
                let n = t
                    .norm_l2_to_l1(t.element(LEVEL_ELL2, x))
                    .unwrap();
                image.insert(n.code);
            }
            assert_eq!(image.len(), t.levels[LEVEL_ELL].size as usize);
        }
    }

    #[test]
    fn zero_inverse_is_an_error() {
        let t = FieldTower::new(3).unwrap();
        assert!(t.top().inv(0).is_err());
    }

    #[test]
    fn dump_load_round_trip() {
        let t = FieldTower::new(4).unwrap();
        let mut buf = Vec::new();
        t.dump(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"GKFF");
        let t2 = FieldTower::load(&mut buf.as_slice()).unwrap();
        assert_eq!(t2.params, t.params);
        for i in 0..4 {
            assert_eq!(t2.levels[i], t.levels[i]);
        }
        assert!(FieldTower::load(&mut &b"NOPE"[..]).is_err());
    }
}
