//! The ground-truth genus oracle: fixed-point sums, the n₁/n₂
//! decomposition over the Hermitian quotient, exact tame Riemann–Hurwitz,
//! the wild computation at the infinite point, and the Hermitian/Fermat
//! quotient genera.
//!
//! Fixed points are counted over the F_{q²}-rational sets only; that is
//! complete because every point fixed by a nontrivial automorphism maps to
//! the rational Hermitian locus, whose fibers are fully rational. The
//! integrality checks on every Hurwitz equation double as the runtime
//! guard: a missed fixed point would break an exact genus match.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ffield::FieldTower;
use crate::gkcurve::{
    apply_point, fixed_points, phi_fiber, CurveError, CurvePoint, CurvePointSet, CurveTag,
};
use crate::projgroup::{
    fixes_p_infinity, pi_project, unipotent_block_sizes, Group, GroupError, Projectivity,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("group does not preserve the point set")]
    NotPreserving,
    #[error("wild group where a tame computation was requested")]
    WildGroup,
    #[error("wild computation needs a subgroup of the P∞-stabilizer")]
    NotPinfinityStabilizer,
    #[error("non-integral Hurwitz bookkeeping: {0}")]
    NonIntegral(String),
    #[error("preimage-choice invariance failed for l_(h̄,P̄)")]
    PreimageChoice,
    #[error("expected curve tag {0:?}")]
    WrongTag(CurveTag),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Ramification filtration data of a P∞-stabilizer subgroup. The higher
/// groups are constant on two blocks: |L_i| = b1 for 1 ≤ i ≤ ℓ²−ℓ+1 and
/// |L_i| = b2 for ℓ²−ℓ+2 ≤ i ≤ ℓ³+1, trivial beyond.
#[derive(Debug, Clone, Serialize)]
pub struct RamificationProfile {
    pub order: u64,
    /// |L ∩ {ξ_{1,b,c}}|.
    pub b1: u64,
    /// |L ∩ {ξ_{1,0,c}}|.
    pub b2: u64,
    /// Tame layer Σ_P (|L_P| − 1) over the rational points.
    pub e_l: u64,
    /// Σ_{i≥1} (|L_i(P∞)| − 1).
    pub different_tail: u64,
}

impl RamificationProfile {
    /// |L_i(P∞)| for i ≥ 0.
    pub fn size_at(&self, ell: u64, i: u64) -> u64 {
        let n = ell * ell - ell + 1;
        if i == 0 {
            self.order
        } else if i <= n {
            self.b1
        } else if i <= ell * ell * ell + 1 {
            self.b2
        } else {
            1
        }
    }
}

/// One oracle verdict, mirrored field-for-field by the CLI JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub recipe: String,
    pub e_l: u64,
    pub n1: Option<u64>,
    pub n2: Option<u64>,
    pub genus: i64,
    pub method: String,
    pub elapsed_ms: u128,
}

/// e_L = Σ_{h ∈ L, h ≠ id} N_h by direct counting over the rational points.
pub fn e_brute(tower: &FieldTower, group: &Group, ps: &CurvePointSet) -> Result<u64, OracleError> {
    let counts: Result<Vec<u64>, CurveError> = group
        .elements
        .par_iter()
        .map(|g| {
            if g.is_identity() {
                Ok(0)
            } else {
                let (a, b) = fixed_points(tower, g, ps)?;
                Ok(a + b)
            }
        })
        .collect();
    Ok(counts?.into_iter().sum())
}

/// Λ-membership of a canonical projectivity: α_u ~ diag(1, 1, s, 1) with
/// s^(ℓ²−ℓ+1) = 1. Returns the z-scale s.
pub fn lambda_shape(tower: &FieldTower, g: &Projectivity) -> Option<u32> {
    if g.dim != 4 {
        return None;
    }
    for i in 0..4 {
        for j in 0..4 {
            if i != j && g.entry(i, j) != 0 {
                return None;
            }
        }
    }
    if g.entry(0, 0) != 1 || g.entry(1, 1) != 1 || g.entry(3, 3) != 1 {
        return None;
    }
    let s = g.entry(2, 2);
    let n = tower.params.n_lambda() as i64;
    if s != 0 && tower.top().pow(s, n).unwrap() == 1 {
        Some(s)
    } else {
        None
    }
}

/// The decomposition e_L = (|L_Λ|−1)(ℓ³+1) + |L_Λ|·n₁ + |L_Λ|·n₂, with n₂
/// counted through the fiber-orbit multiplicities l_(h̄,P̄).
pub fn e_decomposed(
    tower: &FieldTower,
    group: &Group,
    h6: &CurvePointSet,
) -> Result<(u64, u64, u64), OracleError> {
    if h6.tag != CurveTag::Hermitian6 {
        return Err(OracleError::WrongTag(CurveTag::Hermitian6));
    }
    if !group.tame {
        return Err(OracleError::WildGroup);
    }
    let top = tower.top();
    let ell = tower.params.ell as u64;

    // L_Λ and its z-scale set.
    let mut lambda_scales: HashSet<u32> = HashSet::new();
    for e in &group.elements {
        if let Some(s) = lambda_shape(tower, e) {
            lambda_scales.insert(s);
        }
    }
    let l_lambda = lambda_scales.len() as u64;

    // π(L) with one chosen preimage per image, in discovery order.
    let mut bar: Vec<(Projectivity, Projectivity)> = Vec::new();
    let mut seen: HashSet<Projectivity> = HashSet::new();
    for e in &group.elements {
        let img = pi_project(tower, e)?;
        if seen.insert(img) {
            bar.push((img, *e));
        }
    }

    let mut n1 = 0u64;
    let mut n2 = 0u64;
    for (img, pre) in &bar {
        if img.is_identity() {
            continue;
        }
        for (i, hp) in h6.points.iter().enumerate() {
            let moved = apply_point(tower, img, hp);
            if moved != *hp {
                continue;
            }
            if h6.orbit[i] == 1 {
                n1 += 1;
            } else {
                let l = fiber_orbits_fixed(tower, pre, hp, &lambda_scales)?;
                if l_lambda > 1 {
                    // any preimage must give the same count
                    let k = group
                        .elements
                        .iter()
                        .find(|e| lambda_shape(tower, e).map(|s| s != 1).unwrap_or(false))
                        .expect("nontrivial Λ-part exists");
                    let alt = pre.mul(tower, k);
                    if fiber_orbits_fixed(tower, &alt, hp, &lambda_scales)? != l {
                        return Err(OracleError::PreimageChoice);
                    }
                }
                n2 += l;
            }
        }
    }
    let _ = top;
    let e = (l_lambda - 1) * (ell * ell * ell + 1) + l_lambda * (n1 + n2);
    Ok((n1, n2, e))
}

/// l_(h̄,P̄): the number of L_Λ-orbits of the fiber over P̄ fixed by h.
fn fiber_orbits_fixed(
    tower: &FieldTower,
    h: &Projectivity,
    hp: &CurvePoint,
    lambda_scales: &HashSet<u32>,
) -> Result<u64, OracleError> {
    let top = tower.top();
    let fiber = phi_fiber(tower, hp)?;
    // Group the z-values into L_Λ-cosets and test one representative each.
    let mut reps: Vec<u32> = Vec::new();
    let mut covered: HashSet<u32> = HashSet::new();
    for q in &fiber {
        let z = q.coords[2];
        if covered.contains(&z) {
            continue;
        }
        reps.push(z);
        for &s in lambda_scales {
            covered.insert(top.mul(z, s));
        }
    }
    let mut l = 0u64;
    for &z in &reps {
        let q = CurvePoint::new(4, [hp.coords[0], hp.coords[1], z, 1]);
        let img = apply_point(tower, h, &q);
        if img.coords[0] == q.coords[0] && img.coords[1] == q.coords[1] {
            let ratio = top
                .mul(img.coords[2], top.inv(z).map_err(GroupError::from)?);
            if lambda_scales.contains(&ratio) {
                l += 1;
            }
        }
    }
    Ok(l)
}

/// Exact tame quotient genus from (ℓ³+1)(ℓ²−2) = |L|(2g−2) + e_L.
pub fn tame_genus(tower: &FieldTower, group: &Group, gk: &CurvePointSet) -> Result<i64, OracleError> {
    if gk.tag != CurveTag::Gk {
        return Err(OracleError::WrongTag(CurveTag::Gk));
    }
    if !group.tame {
        return Err(OracleError::WildGroup);
    }
    let e = e_brute(tower, group, gk)? as i64;
    let ell = tower.params.ell as i64;
    let total = (ell.pow(3) + 1) * (ell * ell - 2);
    solve_hurwitz(total - e, group.order() as i64, &group.recipe)
}

fn solve_hurwitz(num: i64, order: i64, recipe: &str) -> Result<i64, OracleError> {
    if num % order != 0 {
        return Err(OracleError::NonIntegral(format!(
            "{recipe}: (2g−2)·|L| = {num} is not a multiple of |L| = {order}"
        )));
    }
    let two_g_minus_2 = num / order;
    if (two_g_minus_2 + 2) % 2 != 0 || two_g_minus_2 + 2 < 0 {
        return Err(OracleError::NonIntegral(format!(
            "{recipe}: 2g−2 = {two_g_minus_2} has no genus solution"
        )));
    }
    Ok((two_g_minus_2 + 2) / 2)
}

/// Wild (or tame) quotient genus for a subgroup of the P∞-stabilizer, via
/// the two-block ramification filtration.
pub fn wild_genus(
    tower: &FieldTower,
    group: &Group,
    gk: &CurvePointSet,
) -> Result<(RamificationProfile, i64), OracleError> {
    if gk.tag != CurveTag::Gk {
        return Err(OracleError::WrongTag(CurveTag::Gk));
    }
    if !fixes_p_infinity(tower, group) {
        return Err(OracleError::NotPinfinityStabilizer);
    }
    let ell = tower.params.ell as u64;
    let n = ell * ell - ell + 1;
    let (b1, b2) = unipotent_block_sizes(group);
    // |L₁| must be the p-part of |L₀|
    let mut p_part = 1u64;
    let mut o = group.order() as u64;
    let p = tower.params.p as u64;
    while o % p == 0 {
        p_part *= p;
        o /= p;
    }
    if b1 != p_part {
        return Err(OracleError::NonIntegral(format!(
            "{}: first filtration block {} is not the p-part {} of the order",
            group.recipe, b1, p_part
        )));
    }
    if b2 > b1 || b1 % b2 != 0 {
        return Err(OracleError::NonIntegral(format!(
            "{}: filtration blocks ({b1}, {b2}) are not nested",
            group.recipe
        )));
    }
    let e = e_brute(tower, group, gk)?;
    let tail = n * (b1 - 1) + (ell * ell * ell - ell * ell + ell) * (b2 - 1);
    let total = (ell.pow(3) + 1) as i64 * (ell * ell - 2) as i64;
    let genus = solve_hurwitz(
        total - e as i64 - tail as i64,
        group.order() as i64,
        &group.recipe,
    )?;
    Ok((
        RamificationProfile {
            order: group.order() as u64,
            b1,
            b2,
            e_l: e,
            different_tail: tail,
        },
        genus,
    ))
}

/// Genus of the Hermitian quotient H/Ḡ for a tame 3×3 group, counting
/// fixed points over H(F_{ℓ⁶}).
pub fn hermitian_quotient_genus(
    tower: &FieldTower,
    group: &Group,
    h6: &CurvePointSet,
) -> Result<i64, OracleError> {
    if h6.tag != CurveTag::Hermitian6 {
        return Err(OracleError::WrongTag(CurveTag::Hermitian6));
    }
    if !group.tame {
        return Err(OracleError::WildGroup);
    }
    let e = e_brute(tower, group, h6)? as i64;
    let ell = tower.params.ell as i64;
    let two_gh_minus_2 = ell * (ell - 1) - 2;
    solve_hurwitz(two_gh_minus_2 - e, group.order() as i64, &group.recipe)
}

/// The coordinate symmetries of the Fermat model that act on the quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FermatAction {
    /// The involution (X, Y, T) ↦ (T, Y, X).
    SwapXT,
    /// The 3-cycle subgroup ⟨(X, Y, T) ↦ (Y, T, X)⟩.
    Cycle3,
    /// All six coordinate permutations.
    Sym3,
}

/// Genus of E/(permutation subgroup) for E: X^k + Y^k + T^k = 0, by tame
/// Hurwitz with fixed points counted on E(F_{ℓ⁶}).
pub fn fermat_quotient_genus(
    tower: &FieldTower,
    k: u32,
    action: FermatAction,
) -> Result<i64, OracleError> {
    let p = tower.params.p;
    let order: i64 = match action {
        FermatAction::SwapXT => 2,
        FermatAction::Cycle3 => 3,
        FermatAction::Sym3 => 6,
    };
    if order as u32 % p == 0 || (order == 6 && (p == 2 || p == 3)) {
        return Err(OracleError::WildGroup);
    }
    let e_set = crate::gkcurve::enumerate_curve(tower, CurveTag::Fermat(k))?;
    let perms: Vec<[usize; 3]> = match action {
        FermatAction::SwapXT => vec![[2, 1, 0]],
        FermatAction::Cycle3 => vec![[1, 2, 0], [2, 0, 1]],
        FermatAction::Sym3 => vec![[2, 1, 0], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1]],
    };
    let mut e_sum = 0i64;
    for perm in &perms {
        let g = permutation_projectivity(tower, perm);
        let (a, b) = fixed_points(tower, &g, &e_set)?;
        e_sum += (a + b) as i64;
    }
    let kk = k as i64;
    let two_ge_minus_2 = (kk - 1) * (kk - 2) - 2;
    solve_hurwitz(two_ge_minus_2 - e_sum, order, "fermat quotient")
}

fn permutation_projectivity(tower: &FieldTower, perm: &[usize; 3]) -> Projectivity {
    let mut m = [0u32; 9];
    for (i, &src) in perm.iter().enumerate() {
        m[i * 3 + src] = 1;
    }
    Projectivity::new(tower, 3, &m).unwrap()
}

/// Bundles the decomposition counters into the wire-format result.
pub fn oracle_result(
    recipe: &str,
    e_l: u64,
    n1: Option<u64>,
    n2: Option<u64>,
    genus: i64,
    method: &str,
    elapsed_ms: u128,
) -> OracleResult {
    OracleResult {
        recipe: recipe.to_string(),
        e_l,
        n1,
        n2,
        genus,
        method: method.to_string(),
        elapsed_ms,
    }
}

/// π(L) as an explicit 3×3 group (with structural deduplication).
pub fn project_group(tower: &FieldTower, group: &Group) -> Result<Group, OracleError> {
    let mut elements = Vec::new();
    let mut seen = HashSet::new();
    for e in &group.elements {
        let img = pi_project(tower, e)?;
        if seen.insert(img) {
            elements.push(img);
        }
    }
    let mut gens = Vec::new();
    for g in &group.generators {
        gens.push(pi_project(tower, g)?);
    }
    Ok(Group::from_elements(
        tower,
        3,
        elements,
        gens,
        format!("π({})", group.recipe),
    ))
}

/// Multiplicity check data: fibers over O̅₂ points are single Λ-orbits.
pub fn fiber_is_lambda_orbit(
    tower: &FieldTower,
    hp: &CurvePoint,
) -> Result<bool, OracleError> {
    let top = tower.top();
    let fiber = phi_fiber(tower, hp)?;
    if fiber.len() == 1 {
        return Ok(true);
    }
    let z0 = fiber[0].coords[2];
    let n = tower.params.n_lambda();
    let zeta = tower.primitive_root_of_unity(n).map_err(GroupError::from)?;
    let mut zs: HashSet<u32> = HashSet::new();
    let mut z = z0;
    for _ in 0..n {
        zs.insert(z);
        z = top.mul(z, zeta);
    }
    Ok(fiber.iter().all(|q| zs.contains(&q.coords[2])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gkcurve::enumerate_curve;
    use crate::projgroup::{GroupBuilder, GroupSpec};

    #[test]
    fn lambda_e_and_genus_ell3() {
        let t = FieldTower::new(3).unwrap();
        let gk = enumerate_curve(&t, CurveTag::Gk).unwrap();
        let b = GroupBuilder::new(&t);
        let lambda = b.build(&GroupSpec::Lambda).unwrap();
        // 6 nontrivial elements × 28 fixed points each
        assert_eq!(e_brute(&t, &lambda, &gk).unwrap(), 168);
        assert_eq!(tame_genus(&t, &lambda, &gk).unwrap(), 3);
    }

    #[test]
    fn trivial_group_gives_gk_genus() {
        let t = FieldTower::new(3).unwrap();
        let gk = enumerate_curve(&t, CurveTag::Gk).unwrap();
        let b = GroupBuilder::new(&t);
        let triv = b
            .build(&GroupSpec::FamilyB {
                i1: 7,
                i2: 7,
                rot: false,
            })
            .unwrap();
        assert_eq!(triv.order(), 1);
        assert_eq!(e_brute(&t, &triv, &gk).unwrap(), 0);
        assert_eq!(tame_genus(&t, &triv, &gk).unwrap(), 99);
    }

    #[test]
    fn e_decomposed_trivial_group() {
        let t = FieldTower::new(3).unwrap();
        let h6 = enumerate_curve(&t, CurveTag::Hermitian6).unwrap();
        let b = GroupBuilder::new(&t);
        let triv = b
            .build(&GroupSpec::FamilyB {
                i1: 7,
                i2: 7,
                rot: false,
            })
            .unwrap();
        assert_eq!(e_decomposed(&t, &triv, &h6).unwrap(), (0, 0, 0));
    }

    #[test]
    fn wild_genus_fixed_cases_ell3() {
        let t = FieldTower::new(3).unwrap();
        let gk = enumerate_curve(&t, CurveTag::Gk).unwrap();
        let b = GroupBuilder::new(&t);
        // {ξ_{1,0,c}}: order 3, both blocks 3 ⇒ different 58, genus 24
        let u = b.build(&GroupSpec::Unipotent { v: 0, w: 1 }).unwrap();
        assert_eq!(u.order(), 3);
        let (prof, g) = wild_genus(&t, &u, &gk).unwrap();
        assert_eq!((prof.b1, prof.b2), (3, 3));
        assert_eq!(prof.e_l + prof.different_tail, 2 + 56);
        assert_eq!(g, 24);
        // the full unipotent group of order 27 ⇒ genus 0
        let full = b.build(&GroupSpec::Unipotent { v: 2, w: 1 }).unwrap();
        assert_eq!(full.order(), 27);
        let (prof, g) = wild_genus(&t, &full, &gk).unwrap();
        assert_eq!((prof.b1, prof.b2), (27, 3));
        assert_eq!(g, 0);
        // order 9 with second block 3 ⇒ genus 6
        let mid = b.build(&GroupSpec::Unipotent { v: 1, w: 1 }).unwrap();
        assert_eq!(mid.order(), 9);
        let (prof, g) = wild_genus(&t, &mid, &gk).unwrap();
        assert_eq!((prof.b1, prof.b2), (9, 3));
        assert_eq!(g, 6);
    }

    #[test]
    fn hermitian_quotient_of_trivial_group() {
        let t = FieldTower::new(3).unwrap();
        let h6 = enumerate_curve(&t, CurveTag::Hermitian6).unwrap();
        let id = Group::from_elements(
            &t,
            3,
            vec![Projectivity::identity(3)],
            vec![],
            "trivial".into(),
        );
        assert_eq!(hermitian_quotient_genus(&t, &id, &h6).unwrap(), 3);
    }

    #[test]
    fn fermat_quotient_examples() {
        // ℓ = 5, k = 6, Sym₃: genus-10 curve, quotient genus 1
        let t5 = FieldTower::new(5).unwrap();
        assert_eq!(fermat_quotient_genus(&t5, 6, FermatAction::Sym3).unwrap(), 1);
        // ℓ = 5, k = 3, the swap involution: genus 0
        assert_eq!(fermat_quotient_genus(&t5, 3, FermatAction::SwapXT).unwrap(), 0);
        // wild cases rejected
        let t4 = FieldTower::new(4).unwrap();
        assert!(fermat_quotient_genus(&t4, 5, FermatAction::SwapXT).is_err());
        let t3 = FieldTower::new(3).unwrap();
        assert!(fermat_quotient_genus(&t3, 4, FermatAction::Cycle3).is_err());
    }
}
