//! Classical order conditions (through order 6), the `phi_{l,k}` residual
//! family, simplifying assumptions B/C/S/T, stage order, the error-constant
//! objective `F(A, b)`, and the redundancy bookkeeping used when constructing
//! schemes with high weak stage order.
//!
//! Condition ids: `T<k>` for `b^T A^{k-1} e = 1/k!`, `B<k>` for
//! `b^T c^{k-1} = 1/k`, `phi_<l>_<k>` for `b^T A^{l-k} c^k = k!/(l+1)!`, and
//! `tree_<order>_<index>` for the remaining rooted trees in row order.

use crate::tableau::Tableau;
use crate::wso;
use thiserror::Error;

/// Absolute tolerance below which an order condition is considered satisfied.
pub const CONDITION_TOL: f64 = 1e-8;

/// Largest order with encoded conditions (order 6 feeds the objective at p=5).
pub const MAX_ORDER: usize = 6;

fn dot(b: &[f64], v: &[f64]) -> f64 {
    b.iter().zip(v).map(|(x, y)| x * y).sum()
}

fn had(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(x, y)| x * y).collect()
}

/// Dense helper for raw `(A, b)` input; also accepts non-DIRK arrays so the
/// residual evaluator itself can be validated on fully implicit methods.
struct Raw<'a> {
    s: usize,
    a: &'a [f64],
    b: &'a [f64],
}

impl<'a> Raw<'a> {
    fn av(&self, v: &[f64]) -> Vec<f64> {
        (0..self.s)
            .map(|i| dot(&self.a[i * self.s..(i + 1) * self.s], v))
            .collect()
    }

    fn c(&self) -> Vec<f64> {
        self.av(&vec![1.0; self.s])
    }
}

/// Residuals of every rooted-tree condition of exact order `ord` (`lhs - rhs`).
fn tree_residuals(raw: &Raw<'_>, ord: usize) -> Vec<(&'static str, f64)> {
    let b = raw.b;
    let c = raw.c();
    let e = vec![1.0; raw.s];
    match ord {
        1 => vec![("T1", dot(b, &e) - 1.0)],
        2 => vec![("T2", dot(b, &c) - 0.5)],
        3 => {
            let ac = raw.av(&c);
            vec![
                ("T3", dot(b, &ac) - 1.0 / 6.0),
                ("B3", dot(b, &had(&c, &c)) - 1.0 / 3.0),
            ]
        }
        4 => {
            let ac = raw.av(&c);
            let c2 = had(&c, &c);
            let c3 = had(&c2, &c);
            vec![
                ("T4", dot(b, &raw.av(&ac)) - 1.0 / 24.0),
                ("B4", dot(b, &c3) - 0.25),
                ("phi_3_2", dot(b, &raw.av(&c2)) - 1.0 / 12.0),
                ("tree_4_1", dot(b, &had(&c, &ac)) - 0.125),
            ]
        }
        5 => {
            let ac = raw.av(&c);
            let a2c = raw.av(&ac);
            let c2 = had(&c, &c);
            let c3 = had(&c2, &c);
            let c4 = had(&c3, &c);
            vec![
                ("T5", dot(b, &raw.av(&a2c)) - 1.0 / 120.0),
                ("B5", dot(b, &c4) - 0.2),
                ("phi_4_2", dot(b, &raw.av(&raw.av(&c2))) - 1.0 / 60.0),
                ("phi_4_3", dot(b, &raw.av(&c3)) - 1.0 / 20.0),
                ("tree_5_1", dot(b, &had(&c2, &ac)) - 0.1),
                ("tree_5_2", dot(b, &had(&c, &raw.av(&c2))) - 1.0 / 15.0),
                ("tree_5_3", dot(b, &had(&c, &a2c)) - 1.0 / 30.0),
                ("tree_5_4", dot(b, &raw.av(&had(&c, &ac))) - 1.0 / 40.0),
                ("tree_5_5", dot(b, &had(&ac, &ac)) - 1.0 / 20.0),
            ]
        }
        6 => {
            let ac = raw.av(&c);
            let a2c = raw.av(&ac);
            let a3c = raw.av(&a2c);
            let c2 = had(&c, &c);
            let c3 = had(&c2, &c);
            let c4 = had(&c3, &c);
            let c5 = had(&c4, &c);
            let ac2 = raw.av(&c2);
            let ac3 = raw.av(&c3);
            vec![
                ("T6", dot(b, &raw.av(&a3c)) - 1.0 / 720.0),
                ("B6", dot(b, &c5) - 1.0 / 6.0),
                ("phi_5_2", dot(b, &raw.av(&raw.av(&ac2))) - 1.0 / 360.0),
                ("phi_5_3", dot(b, &raw.av(&raw.av(&c3))) - 1.0 / 120.0),
                ("phi_5_4", dot(b, &raw.av(&c4)) - 1.0 / 30.0),
                ("tree_6_1", dot(b, &had(&c3, &ac)) - 1.0 / 12.0),
                ("tree_6_2", dot(b, &had(&c2, &ac2)) - 1.0 / 18.0),
                ("tree_6_3", dot(b, &had(&c2, &a2c)) - 1.0 / 36.0),
                ("tree_6_4", dot(b, &had(&c, &had(&ac, &ac))) - 1.0 / 24.0),
                ("tree_6_5", dot(b, &had(&c, &ac3)) - 1.0 / 24.0),
                ("tree_6_6", dot(b, &had(&c, &raw.av(&had(&c, &ac)))) - 1.0 / 48.0),
                ("tree_6_7", dot(b, &had(&c, &raw.av(&ac2))) - 1.0 / 72.0),
                ("tree_6_8", dot(b, &had(&c, &a3c)) - 1.0 / 144.0),
                ("tree_6_9", dot(b, &had(&ac, &ac2)) - 1.0 / 36.0),
                ("tree_6_10", dot(b, &had(&ac, &a2c)) - 1.0 / 72.0),
                ("tree_6_11", dot(b, &raw.av(&had(&c2, &ac))) - 1.0 / 60.0),
                ("tree_6_12", dot(b, &raw.av(&had(&c, &ac2))) - 1.0 / 90.0),
                ("tree_6_13", dot(b, &raw.av(&had(&c, &a2c))) - 1.0 / 180.0),
                ("tree_6_14", dot(b, &raw.av(&had(&ac, &ac))) - 1.0 / 120.0),
                ("tree_6_15", dot(b, &raw.av(&raw.av(&had(&c, &ac)))) - 1.0 / 240.0),
            ]
        }
        _ => panic!("order conditions encoded only through order {MAX_ORDER}"),
    }
}

/// Residual evaluator on raw row-major arrays (accepts non-lower-triangular
/// input; used to validate the order-6 set against classical fully implicit
/// methods).
pub fn order_residuals_raw(s: usize, a: &[f64], b: &[f64], p: usize) -> Vec<(String, f64)> {
    assert!(p >= 1 && p <= MAX_ORDER);
    assert_eq!(a.len(), s * s);
    assert_eq!(b.len(), s);
    let raw = Raw { s, a, b };
    let mut out = Vec::new();
    for ord in 1..=p {
        for (id, r) in tree_residuals(&raw, ord) {
            out.push((id.to_string(), r));
        }
    }
    out
}

fn raw_parts(t: &Tableau) -> (usize, Vec<f64>) {
    let s = t.s();
    let mut a = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..=i {
            a[i * s + j] = t.a(i, j);
        }
    }
    (s, a)
}

/// One `(condition_id, residual)` entry per rooted tree of each order `<= p`.
pub fn order_residuals(t: &Tableau, p: usize) -> Vec<(String, f64)> {
    let (s, a) = raw_parts(t);
    order_residuals_raw(s, &a, t.b(), p)
}

/// `phi_{l,k} = b^T A^{l-k} c^k - k!/(l+1)!` with `A^0 = I` and componentwise
/// powers of `c`.
pub fn phi(t: &Tableau, l: usize, k: usize) -> f64 {
    assert!(k <= l, "phi requires k <= l");
    let s = t.s();
    let c = t.c();
    let mut v = vec![1.0; s];
    for i in 0..s {
        v[i] = c[i].powi(k as i32);
    }
    for _ in 0..(l - k) {
        let mut next = vec![0.0; s];
        t.apply_a(&v, &mut next);
        v = next;
    }
    let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>().max(1.0);
    dot(t.b(), &v) - fact(k) / fact(l + 1)
}

/// Largest `p <= 6` with every residual through order `p` within tolerance,
/// per-order worst residuals, stage order, and the largest satisfied index of
/// each simplifying-assumption family.
#[derive(Clone, Debug)]
pub struct OrderReport {
    pub order: usize,
    /// `residuals_by_order[p-1]` = worst residual magnitude among order-`p` trees.
    pub residuals_by_order: Vec<f64>,
    /// `min(B_max, C_max)`.
    pub stage_order: usize,
    pub b_max: usize,
    pub c_max: usize,
    pub s_max: usize,
    pub t_max: usize,
}

const FAMILY_CAP: usize = 10;

/// Order, stage order, and B/C/S/T family indices at tolerance [`CONDITION_TOL`].
pub fn report(t: &Tableau) -> OrderReport {
    let s = t.s();
    let c = t.c();
    let b = t.b();
    let e = vec![1.0; s];

    let residuals_by_order: Vec<f64> = {
        let (sz, a) = raw_parts(t);
        let raw = Raw { s: sz, a: &a, b };
        (1..=MAX_ORDER)
            .map(|ord| {
                tree_residuals(&raw, ord)
                    .iter()
                    .map(|(_, r)| r.abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let mut order = 0;
    for (i, r) in residuals_by_order.iter().enumerate() {
        if *r <= CONDITION_TOL {
            order = i + 1;
        } else {
            break;
        }
    }

    // B(xi): b^T c^{k-1} = 1/k
    let mut b_max = 0;
    let mut cpow = e.clone();
    for k in 1..=FAMILY_CAP {
        if (dot(b, &cpow) - 1.0 / k as f64).abs() <= CONDITION_TOL {
            b_max = k;
        } else {
            break;
        }
        cpow = had(&cpow, c);
    }

    // C(xi): tau^(k) = 0
    let taus = wso::stage_residuals(t, FAMILY_CAP);
    let mut c_max = 0;
    for k in 1..=FAMILY_CAP {
        if taus.tau[k - 1].iter().all(|v| v.abs() <= CONDITION_TOL) {
            c_max = k;
        } else {
            break;
        }
    }

    // T(xi): b^T A^{k-1} e = 1/k!
    let mut t_max = 0;
    let mut v = e.clone();
    let mut fact = 1.0;
    for k in 1..=FAMILY_CAP {
        fact *= k as f64;
        if (dot(b, &v) - 1.0 / fact).abs() <= CONDITION_TOL {
            t_max = k;
        } else {
            break;
        }
        let mut next = vec![0.0; s];
        t.apply_a(&v, &mut next);
        v = next;
    }

    // S(xi): b^T A^j tau^(k) = 0 for k > 0, j + k < xi
    let mut s_max = 0;
    'sloop: for xi in 1..=FAMILY_CAP {
        for k in 1..xi {
            let mut v = taus.tau[k - 1].clone();
            for _j in 0..(xi - k) {
                if dot(b, &v).abs() > CONDITION_TOL {
                    break 'sloop;
                }
                let mut next = vec![0.0; s];
                t.apply_a(&v, &mut next);
                v = next;
            }
        }
        s_max = xi;
    }

    let stage_order = b_max.min(c_max);
    // an irreducible DIRK with nonsingular A cannot exceed stage order 1
    if (0..s).all(|i| t.a(i, i) != 0.0) && !crate::tableau::reduce_confluent(t).reducible {
        debug_assert!(stage_order <= 1);
    }

    OrderReport {
        order,
        residuals_by_order,
        stage_order,
        b_max,
        c_max,
        s_max,
        t_max,
    }
}

/// Error-constant proxy: sum of squares of all order-(p+1) residuals.
pub fn objective_f(t: &Tableau, p: usize) -> f64 {
    assert!(p >= 1 && p < MAX_ORDER);
    let (s, a) = raw_parts(t);
    let raw = Raw { s, a: &a, b: t.b() };
    tree_residuals(&raw, p + 1).iter().map(|(_, r)| r * r).sum()
}

#[derive(Debug, Error)]
#[error("redundancy table has no row for (p, q) = ({p}, {q})")]
pub struct UntabulatedPair {
    pub p: usize,
    pub q: usize,
}

/// Order-condition selection for constructing a scheme of order `p` with weak
/// stage order `q`.
#[derive(Clone, Debug)]
pub struct RetainedConditions {
    /// `phi_{l,k}` pairs kept (the subquadrature family `phi_{j,j}`).
    pub kept_phi: Vec<(usize, usize)>,
    /// Non-`phi` conditions kept (`T1` and the additional rooted trees).
    pub kept_other: Vec<String>,
    /// `phi_{l,k}` pairs implied by weak stage order and the kept set.
    pub redundant_phi: Vec<(usize, usize)>,
}

impl RetainedConditions {
    pub fn kept_ids(&self) -> Vec<String> {
        self.kept_phi
            .iter()
            .map(|(l, k)| format!("phi_{l}_{k}"))
            .chain(self.kept_other.iter().cloned())
            .collect()
    }

    pub fn redundant_ids(&self) -> Vec<String> {
        self.redundant_phi
            .iter()
            .map(|(l, k)| format!("phi_{l}_{k}"))
            .collect()
    }
}

/// Which order conditions must be imposed explicitly for order `p` under weak
/// stage order `q`, and which become redundant.
///
/// With WSO `q`, the identity `b^T A^j tau^(k) = phi_{j+k,k-1} - phi_{j+k,k}/k`
/// makes all `phi_{l,k} = 0` with `1 <= k <= min(l, q)` equivalent for fixed
/// `l`, so only `phi_{l,l}` is kept from each family. The redundant count is
/// `(p-1)(p-2)/2` for the tabulated pairs.
pub fn retained_conditions(p: usize, q: usize) -> Result<RetainedConditions, UntabulatedPair> {
    let tabulated = [(3, 2), (3, 3), (4, 3), (4, 4), (5, 4), (5, 5)];
    if !tabulated.contains(&(p, q)) {
        return Err(UntabulatedPair { p, q });
    }
    let kept_phi: Vec<(usize, usize)> = (1..p).map(|j| (j, j)).collect();
    let mut kept_other = vec!["T1".to_string()];
    if p >= 4 {
        kept_other.push("tree_4_1".to_string());
    }
    if p >= 5 {
        for i in 1..=5 {
            kept_other.push(format!("tree_5_{i}"));
        }
    }
    let mut redundant_phi = Vec::new();
    for l in 2..p {
        for k in 1..l {
            redundant_phi.push((l, k));
        }
    }
    Ok(RetainedConditions { kept_phi, kept_other, redundant_phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{builtin, validate};

    fn midpoint() -> Tableau {
        validate(&[vec![0.5]], &[1.0], "implicit midpoint").unwrap()
    }

    #[test]
    fn phi_examples() {
        let be = builtin("backward_euler").unwrap();
        assert_eq!(phi(&be, 0, 0), 0.0); // b^T e - 1
        assert!((phi(&be, 1, 0) - 0.5).abs() < 1e-16); // b^T A e - 1/2
        let mp = midpoint();
        assert!((phi(&mp, 2, 2) + 1.0 / 12.0).abs() < 1e-16); // 1/4 - 1/3
    }

    #[test]
    fn gauss3_satisfies_all_order6_conditions() {
        // Kuntzmann-Butcher 3-stage Gauss method of order 6 exercises the whole
        // order-6 residual set; it is fully implicit, hence the raw entry point.
        let r15 = 15.0f64.sqrt();
        let a = [
            5.0 / 36.0, 2.0 / 9.0 - r15 / 15.0, 5.0 / 36.0 - r15 / 30.0,
            5.0 / 36.0 + r15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r15 / 24.0,
            5.0 / 36.0 + r15 / 30.0, 2.0 / 9.0 + r15 / 15.0, 5.0 / 36.0,
        ];
        let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
        let res = order_residuals_raw(3, &a, &b, 6);
        assert_eq!(res.len(), 1 + 1 + 2 + 4 + 9 + 20);
        for (id, r) in res {
            assert!(r.abs() < 1e-14, "{id}: {r}");
        }
    }

    #[test]
    fn dirk744_order_exactly_4() {
        let t = builtin("dirk744").unwrap();
        let res = order_residuals(&t, 4);
        for (id, r) in &res {
            assert!(r.abs() <= 1e-7, "{id}: {r}");
        }
        let res5 = order_residuals(&t, 5);
        let worst5 = res5
            .iter()
            .filter(|(id, _)| !res.iter().any(|(i2, _)| i2 == id))
            .map(|(_, r)| r.abs())
            .fold(0.0, f64::max);
        assert!(worst5 > 1e-4, "order-5 residuals unexpectedly small: {worst5}");
    }

    #[test]
    fn midpoint_order_2_exact() {
        let res = order_residuals(&midpoint(), 2);
        for (id, r) in res {
            assert!(r.abs() < 1e-16, "{id}: {r}");
        }
    }

    #[test]
    fn report_backward_euler() {
        let rep = report(&builtin("backward_euler").unwrap());
        assert_eq!(rep.order, 1);
        assert_eq!(rep.stage_order, 1);
        assert!(rep.t_max >= 1);
        assert_eq!(rep.b_max, 1);
    }

    #[test]
    fn report_crank_nicolson() {
        let rep = report(&builtin("crank_nicolson_dirk").unwrap());
        assert_eq!(rep.order, 2);
        assert_eq!(rep.stage_order, 2);
    }

    #[test]
    fn report_dirk1255() {
        let rep = report(&builtin("dirk1255").unwrap());
        assert_eq!(rep.order, 5);
        assert_eq!(rep.stage_order, 1); // nonsingular A caps the stage order
    }

    #[test]
    fn report_reference_schemes() {
        let rep = report(&builtin("dirk541").unwrap());
        assert_eq!(rep.order, 4);
        let rep = report(&builtin("dirk551").unwrap());
        assert_eq!(rep.order, 5);
    }

    #[test]
    fn objective_backward_euler_p1() {
        let f = objective_f(&builtin("backward_euler").unwrap(), 1);
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn objective_midpoint_p2() {
        // (1/12)^2 + (1/12)^2 = 1/72
        let f = objective_f(&midpoint(), 2);
        assert!((f - 1.0 / 72.0).abs() < 1e-16);
    }

    #[test]
    fn objective_zero_for_higher_order_scheme() {
        // Crank-Nicolson has order 2, so its order-2 objective (p=1) vanishes
        let f = objective_f(&builtin("crank_nicolson_dirk").unwrap(), 1);
        assert!(f < 1e-30);
    }

    #[test]
    fn retained_44() {
        let r = retained_conditions(4, 4).unwrap();
        assert_eq!(r.kept_phi, vec![(1, 1), (2, 2), (3, 3)]);
        assert_eq!(r.redundant_phi, vec![(2, 1), (3, 1), (3, 2)]);
    }

    #[test]
    fn retained_55_redundant_count() {
        let r = retained_conditions(5, 5).unwrap();
        assert_eq!(r.redundant_phi.len(), 6); // (p-1)(p-2)/2
    }

    #[test]
    fn retained_32() {
        let r = retained_conditions(3, 2).unwrap();
        assert_eq!(r.kept_phi, vec![(1, 1), (2, 2)]);
    }

    #[test]
    fn retained_rejects_untabulated() {
        assert!(retained_conditions(6, 4).is_err());
        assert!(retained_conditions(4, 2).is_err());
    }

    #[test]
    fn redundant_phis_hold_for_new_schemes() {
        // mechanical verification of the redundancy claim on the three
        // high-WSO schemes: after the kept set, discarded phis also vanish
        for (name, p, q) in [("dirk744", 4, 4), ("dirk1254", 5, 4), ("dirk1255", 5, 5)] {
            let t = builtin(name).unwrap();
            let r = retained_conditions(p, q).unwrap();
            for (l, k) in r.redundant_phi {
                assert!(phi(&t, l, k).abs() <= 1e-8, "{name} phi_{l}_{k}");
            }
        }
    }
}
