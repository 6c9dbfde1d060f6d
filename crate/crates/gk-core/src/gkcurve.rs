//! Rational points of the GK curve over F_{q²} (q = ℓ³), of the Hermitian
//! curve over F_{ℓ²} and F_{ℓ⁶}, and of the Fermat quotient models; plus the
//! covering φ onto the Hermitian curve, its fibers, the two-orbit split of
//! the rational points, and fixed-point counting for projectivities.
//!
//! The GK curve is the complete intersection of Z^(ℓ²−ℓ+1) = X·h(Y) with the
//! Hermitian cone Y^ℓ + Y = X^(ℓ+1), where h(Y) = Σ_{i=0}^{ℓ} (−1)^(i+1)
//! Y^(i(ℓ−1)). Points are enumerated from the cone: for each x the y-fiber
//! comes from a precomputed trace table, then z from a precomputed
//! (ℓ²−ℓ+1)-th power table, so nothing scans all of PG(3).

use std::collections::HashMap;

use thiserror::Error;

use crate::ffield::{FieldError, FieldTower, LEVEL_ELL2};
use crate::projgroup::Projectivity;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("unsupported curve tag for this operation")]
    UnsupportedTag,
    #[error("point is not on the curve")]
    PointNotOnCurve,
    #[error("projectivity does not preserve the point set")]
    NotPreserved,
    #[error("Fermat exponent must divide ℓ+1 and be positive")]
    BadFermatExponent,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Which model a point set enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveTag {
    /// GK curve over F_{ℓ⁶}, points in PG(3).
    Gk,
    /// Hermitian curve restricted to F_{ℓ²}-rational points.
    Hermitian2,
    /// Hermitian curve over F_{ℓ⁶}.
    Hermitian6,
    /// Fermat curve X^k + Y^k + T^k = 0 over F_{ℓ⁶}.
    Fermat(u32),
}

/// A projective point with the last nonzero coordinate normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CurvePoint {
    pub dim: u8,
    pub coords: [u32; 4],
}

impl CurvePoint {
    pub fn new(dim: u8, coords: [u32; 4]) -> Self {
        CurvePoint { dim, coords }
    }

    /// True when the homogenizing coordinate vanishes.
    pub fn is_infinite(&self) -> bool {
        self.coords[self.dim as usize - 1] == 0
    }
}

/// Normalizes homogeneous coordinates so the last nonzero one is 1.
pub fn normalize(tower: &FieldTower, dim: u8, v: &[u32]) -> CurvePoint {
    let top = tower.top();
    let lead = v
        .iter()
        .rev()
        .copied()
        .find(|&c| c != 0)
        .expect("projective point has a nonzero coordinate");
    let inv = top.inv(lead).unwrap();
    let mut coords = [0u32; 4];
    for (i, &c) in v.iter().enumerate() {
        coords[i] = top.mul(c, inv);
    }
    CurvePoint { dim, coords }
}

/// The rational points of one curve model, with a coordinate index and the
/// orbit partition (O₁ = F_{ℓ²}-rational, O₂ = the rest) when applicable.
pub struct CurvePointSet {
    pub tag: CurveTag,
    pub ell: u32,
    pub points: Vec<CurvePoint>,
    /// orbit[i] = 1 or 2; 0 when the split does not apply (Fermat).
    pub orbit: Vec<u8>,
    index: HashMap<CurvePoint, u32>,
}

impl CurvePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &CurvePoint) -> bool {
        self.index.contains_key(p)
    }

    pub fn position(&self, p: &CurvePoint) -> Option<u32> {
        self.index.get(p).copied()
    }

    pub fn o1_size(&self) -> usize {
        self.orbit.iter().filter(|&&o| o == 1).count()
    }

    pub fn o2_size(&self) -> usize {
        self.orbit.iter().filter(|&&o| o == 2).count()
    }

    /// The two orbits as point lists.
    pub fn orbit_split(&self) -> (Vec<CurvePoint>, Vec<CurvePoint>) {
        let mut o1 = Vec::new();
        let mut o2 = Vec::new();
        for (i, &p) in self.points.iter().enumerate() {
            match self.orbit[i] {
                1 => o1.push(p),
                2 => o2.push(p),
                _ => {}
            }
        }
        (o1, o2)
    }
}

/// Evaluates h(y) = Σ_{i=0}^{ℓ} (−1)^{i+1} y^{i(ℓ−1)}.
pub fn h_eval(tower: &FieldTower, y: u32) -> u32 {
    let top = tower.top();
    let ell = tower.params.ell as i64;
    let mut acc = 0u32;
    let step = if y == 0 { 0 } else { top.pow(y, ell - 1).unwrap() };
    let mut ypow = 1u32; // y^(i(ℓ−1)), i = 0
    for i in 0..=ell {
        let term = if i % 2 == 1 { ypow } else { top.neg(ypow) };
        acc = top.add(acc, term);
        ypow = top.mul(ypow, step);
    }
    acc
}

/// Preimage table of an arbitrary map code ↦ f(code) over the top field.
fn preimages<F: Fn(u32) -> u32>(tower: &FieldTower, f: F) -> HashMap<u32, Vec<u32>> {
    let mut map: HashMap<u32, Vec<u32>> = HashMap::new();
    for x in 0..tower.top().size {
        map.entry(f(x)).or_default().push(x);
    }
    map
}

/// Enumerates the rational points of the requested model.
pub fn enumerate_curve(tower: &FieldTower, tag: CurveTag) -> Result<CurvePointSet, CurveError> {
    let top = tower.top();
    let ell = tower.params.ell as i64;
    let n_lambda = tower.params.n_lambda() as i64;
    let mut points: Vec<CurvePoint> = Vec::new();
    let mut orbit: Vec<u8> = Vec::new();

    let is_l2 = |c: u32| tower.in_sublevel(c, LEVEL_ELL2);

    match tag {
        CurveTag::Gk => {
            let trace_pre = preimages(tower, |y| top.add(tower.frobenius(y, 1), y));
            let zn_pre = preimages(tower, |z| top.pow(z, n_lambda).unwrap_or(0));
            for x in 0..top.size {
                let xn = if x == 0 { 0 } else { top.pow(x, ell + 1).unwrap() };
                let Some(ys) = trace_pre.get(&xn) else { continue };
                for &y in ys {
                    let w = top.mul(x, h_eval(tower, y));
                    if w == 0 {
                        points.push(CurvePoint::new(4, [x, y, 0, 1]));
                        orbit.push(if is_l2(x) && is_l2(y) { 1 } else { 2 });
                    } else if let Some(zs) = zn_pre.get(&w) {
                        for &z in zs {
                            if z == 0 {
                                continue;
                            }
                            points.push(CurvePoint::new(4, [x, y, z, 1]));
                            orbit.push(if is_l2(x) && is_l2(y) && is_l2(z) { 1 } else { 2 });
                        }
                    }
                }
            }
            points.push(CurvePoint::new(4, [0, 1, 0, 0]));
            orbit.push(1);
        }
        CurveTag::Hermitian6 | CurveTag::Hermitian2 => {
            let trace_pre = preimages(tower, |y| top.add(tower.frobenius(y, 1), y));
            let restrict = matches!(tag, CurveTag::Hermitian2);
            for x in 0..top.size {
                if restrict && !is_l2(x) {
                    continue;
                }
                let xn = if x == 0 { 0 } else { top.pow(x, ell + 1).unwrap() };
                let Some(ys) = trace_pre.get(&xn) else { continue };
                for &y in ys {
                    if restrict && !is_l2(y) {
                        continue;
                    }
                    points.push(CurvePoint::new(3, [x, y, 1, 0]));
                    orbit.push(if is_l2(x) && is_l2(y) { 1 } else { 2 });
                }
            }
            points.push(CurvePoint::new(3, [0, 1, 0, 0]));
            orbit.push(1);
        }
        CurveTag::Fermat(k) => {
            if k == 0 || (ell + 1) % k as i64 != 0 {
                return Err(CurveError::BadFermatExponent);
            }
            let k = k as i64;
            let kth_pre = preimages(tower, |z| top.pow(z, k).unwrap_or(0));
            for x in 0..top.size {
                let xk = if x == 0 { 0 } else { top.pow(x, k).unwrap() };
                let rhs = top.neg(top.add(xk, 1));
                if let Some(ys) = kth_pre.get(&rhs) {
                    for &y in ys {
                        points.push(CurvePoint::new(3, [x, y, 1, 0]));
                        orbit.push(0);
                    }
                }
            }
            // line T = 0: points (x : 1 : 0) with x^k = −1
            let neg1 = top.minus_one;
            if let Some(xs) = kth_pre.get(&neg1) {
                for &x in xs {
                    points.push(CurvePoint::new(3, [x, 1, 0, 0]));
                    orbit.push(0);
                }
            }
        }
    }

    let index: HashMap<CurvePoint, u32> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    debug_assert_eq!(index.len(), points.len(), "no duplicate points");
    Ok(CurvePointSet {
        tag,
        ell: tower.params.ell,
        points,
        orbit,
        index,
    })
}

/// φ(x : y : z : 1) = (x : y : 1) and φ(P∞) = (0 : 1 : 0).
pub fn phi(point: &CurvePoint) -> CurvePoint {
    debug_assert_eq!(point.dim, 4);
    if point.is_infinite() {
        CurvePoint::new(3, [0, 1, 0, 0])
    } else {
        CurvePoint::new(3, [point.coords[0], point.coords[1], 1, 0])
    }
}

/// The fiber of φ over a Hermitian point: a single point over the
/// F_{ℓ²}-rational locus, ℓ²−ℓ+1 points elsewhere.
pub fn phi_fiber(
    tower: &FieldTower,
    hpoint: &CurvePoint,
) -> Result<Vec<CurvePoint>, CurveError> {
    debug_assert_eq!(hpoint.dim, 3);
    let top = tower.top();
    if hpoint.is_infinite() {
        return Ok(vec![CurvePoint::new(4, [0, 1, 0, 0])]);
    }
    let (x, y) = (hpoint.coords[0], hpoint.coords[1]);
    let w = top.mul(x, h_eval(tower, y));
    if w == 0 {
        return Ok(vec![CurvePoint::new(4, [x, y, 0, 1])]);
    }
    let n = tower.params.n_lambda();
    // one N-th root by discrete log, then the full μ_N coset
    let q = (top.size - 1) as u64;
    let e = top.log(w).unwrap();
    let g = crate::ffield::gcd_u64(n, q);
    if e % g != 0 {
        return Err(CurveError::PointNotOnCurve);
    }
    // solve n·k ≡ e (mod q)
    let k = {
        let m2 = q / g;
        let a2 = (n % q) / g;
        let b2 = (e % q) / g;
        let (mut t, mut new_t) = (0i64, 1i64);
        let (mut r, mut new_r) = (m2 as i64, (a2 % m2.max(1)) as i64);
        while new_r != 0 {
            let qq = r / new_r;
            (t, new_t) = (new_t, t - qq * new_t);
            (r, new_r) = (new_r, r - qq * new_r);
        }
        let inv = ((t % m2 as i64 + m2 as i64) % m2.max(1) as i64) as u64;
        b2 * inv % m2.max(1)
    };
    let z0 = (k % q) as u32 + 1;
    let zeta = tower.primitive_root_of_unity(n)?;
    let mut out = Vec::with_capacity(n as usize);
    let mut z = z0;
    for _ in 0..n {
        out.push(CurvePoint::new(4, [x, y, z, 1]));
        z = top.mul(z, zeta);
    }
    Ok(out)
}

/// Applies a projectivity to a point and renormalizes.
pub fn apply_point(tower: &FieldTower, g: &Projectivity, p: &CurvePoint) -> CurvePoint {
    debug_assert_eq!(g.dim, p.dim);
    let img = g.apply(tower, &p.coords[..p.dim as usize]);
    normalize(tower, p.dim, &img)
}

/// Counts fixed points of g, split by orbit; errors if g moves any point
/// off the set (so preservation is verified on the fly).
pub fn fixed_points(
    tower: &FieldTower,
    g: &Projectivity,
    ps: &CurvePointSet,
) -> Result<(u64, u64), CurveError> {
    let mut n1 = 0u64;
    let mut n2 = 0u64;
    for (i, p) in ps.points.iter().enumerate() {
        let img = apply_point(tower, g, p);
        if img == *p {
            match ps.orbit[i] {
                1 => n1 += 1,
                _ => n2 += 1,
            }
        } else if !ps.contains(&img) {
            return Err(CurveError::NotPreserved);
        }
    }
    Ok((n1, n2))
}

/// The fixed set itself (indices into the point list).
pub fn fixed_set(
    tower: &FieldTower,
    g: &Projectivity,
    ps: &CurvePointSet,
) -> Result<Vec<u32>, CurveError> {
    let mut out = Vec::new();
    for (i, p) in ps.points.iter().enumerate() {
        let img = apply_point(tower, g, p);
        if img == *p {
            out.push(i as u32);
        } else if !ps.contains(&img) {
            return Err(CurveError::NotPreserved);
        }
    }
    Ok(out)
}

/// True when g maps the point set onto itself.
pub fn preserves(tower: &FieldTower, g: &Projectivity, ps: &CurvePointSet) -> bool {
    ps.points
        .iter()
        .all(|p| ps.contains(&apply_point(tower, g, p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projgroup::{GroupBuilder, GroupSpec};

    #[test]
    fn gk_point_count_ell3() {
        let t = FieldTower::new(3).unwrap();
        let ps = enumerate_curve(&t, CurveTag::Gk).unwrap();
        // 729 + 1 + 2·99·27
        assert_eq!(ps.len(), 6076);
        assert_eq!(ps.o1_size(), 28);
        assert_eq!(ps.o2_size(), 6048);
    }

    #[test]
    fn hermitian_counts_ell3() {
        let t = FieldTower::new(3).unwrap();
        let h2 = enumerate_curve(&t, CurveTag::Hermitian2).unwrap();
        assert_eq!(h2.len(), 28, "ℓ³+1 rational points over F_{{ℓ²}}");
        let h6 = enumerate_curve(&t, CurveTag::Hermitian6).unwrap();
        assert_eq!(h6.len(), 892, "maximal over F_{{ℓ⁶}}: ℓ⁶+1+ℓ(ℓ−1)ℓ³");
        assert_eq!(h6.o1_size(), 28);
        assert_eq!(h6.o2_size(), 864);
    }

    #[test]
    fn o1_points_lie_in_plane_z_zero() {
        let t = FieldTower::new(3).unwrap();
        let ps = enumerate_curve(&t, CurveTag::Gk).unwrap();
        for (i, p) in ps.points.iter().enumerate() {
            if ps.orbit[i] == 1 {
                assert!(p.coords[2] == 0, "O₁ ⊂ {{Z = 0}}");
            }
        }
    }

    #[test]
    fn fibers_have_expected_sizes() {
        let t = FieldTower::new(3).unwrap();
        let h6 = enumerate_curve(&t, CurveTag::Hermitian6).unwrap();
        let gk = enumerate_curve(&t, CurveTag::Gk).unwrap();
        let mut total = 0usize;
        for (i, hp) in h6.points.iter().enumerate() {
            let fiber = phi_fiber(&t, hp).unwrap();
            let expect = if h6.orbit[i] == 1 { 1 } else { 7 };
            assert_eq!(fiber.len(), expect);
            for q in &fiber {
                assert!(gk.contains(q), "fiber point lies on the GK curve");
                assert_eq!(phi(q), *hp);
            }
            total += fiber.len();
        }
        assert_eq!(total, gk.len());
    }

    #[test]
    fn alpha_fixes_exactly_o1() {
        let t = FieldTower::new(3).unwrap();
        let gk = enumerate_curve(&t, CurveTag::Gk).unwrap();
        let b = GroupBuilder::new(&t);
        let lambda = b.build(&GroupSpec::Lambda).unwrap();
        for e in &lambda.elements {
            if e.is_identity() {
                assert_eq!(fixed_points(&t, e, &gk).unwrap(), (28, 6048));
            } else {
                assert_eq!(fixed_points(&t, e, &gk).unwrap(), (28, 0));
            }
        }
    }

    #[test]
    fn unipotent_fixes_one_point() {
        let t = FieldTower::new(3).unwrap();
        let gk = enumerate_curve(&t, CurveTag::Gk).unwrap();
        let b = GroupBuilder::new(&t);
        // ξ_{1,0,c}, c ≠ 0 fixes exactly one rational point
        let c = b.trace_kernel().into_iter().find(|&c| c != 0).unwrap();
        let xi = b.xi_abc(1, 0, c).unwrap();
        assert_eq!(fixed_points(&t, &xi, &gk).unwrap(), (1, 0));
    }

    #[test]
    fn fermat_line_model_is_rational_curve() {
        let t = FieldTower::new(3).unwrap();
        // k = 1: a line, ℓ⁶ + 1 points
        let e = enumerate_curve(&t, CurveTag::Fermat(1)).unwrap();
        assert_eq!(e.len(), 730);
        assert!(enumerate_curve(&t, CurveTag::Fermat(3)).is_err());
        let e4 = enumerate_curve(&t, CurveTag::Fermat(4)).unwrap();
        // genus 3 maximal curve over F_{3⁶}: 729 + 1 + 2·3·27
        assert_eq!(e4.len(), 892);
    }
}
