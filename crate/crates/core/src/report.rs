//! Combined verification report for a scheme: order, stage order, weak stage
//! order and Krylov structure, stiff accuracy, stability, and reducibility.

use crate::conditions::{self, OrderReport};
use crate::stability::{self, ScanMode, StabilityReport};
use crate::tableau::{self, Tableau};
use crate::wso::{self, KrylovReport, MinPolyCheck};
use std::fmt::Write as _;

/// Verified properties of a tableau, as printed by the `verify` command.
#[derive(Clone, Debug)]
pub struct SchemeReport {
    pub label: String,
    pub s: usize,
    pub order: OrderReport,
    pub krylov: KrylovReport,
    pub min_poly: MinPolyCheck,
    pub stiffly_accurate: bool,
    pub stability: StabilityReport,
    pub reducible: bool,
    pub max_coeff: f64,
}

/// Run all verifiers on a tableau. `fine` selects the dense a-posteriori
/// imaginary-axis scan instead of the coarse optimization grid.
pub fn verify_scheme(t: &Tableau, fine: bool) -> SchemeReport {
    let order = conditions::report(t);
    let krylov = wso::wso_of_default(t);
    let min_poly = wso::verify_min_poly(t, krylov.q_effective);
    let mode = if fine { ScanMode::Fine } else { ScanMode::Coarse };
    SchemeReport {
        label: t.label().to_string(),
        s: t.s(),
        order,
        krylov,
        min_poly,
        stiffly_accurate: t.stiffly_accurate(),
        stability: stability::check_a_stability(t, mode),
        reducible: tableau::reduce_confluent(t).reducible,
        max_coeff: t.max_coeff(),
    }
}

impl SchemeReport {
    /// Machine-readable `key: value` lines, tolerances echoed.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "label: {}", self.label);
        let _ = writeln!(o, "stages: {}", self.s);
        let _ = writeln!(o, "order: {}", self.order.order);
        for (p, r) in self.order.residuals_by_order.iter().enumerate() {
            let _ = writeln!(o, "max_residual_order_{}: {:.17e}", p + 1, r);
        }
        let _ = writeln!(o, "stage_order: {}", self.order.stage_order);
        let _ = writeln!(o, "b_max: {}", self.order.b_max);
        let _ = writeln!(o, "c_max: {}", self.order.c_max);
        let _ = writeln!(o, "s_max: {}", self.order.s_max);
        let _ = writeln!(o, "t_max: {}", self.order.t_max);
        let _ = writeln!(o, "wso: {}", self.krylov.q);
        let _ = writeln!(o, "dim_kq: {}", self.krylov.dim_kq);
        let _ = writeln!(o, "min_poly_degree: {}", self.krylov.min_poly_degree);
        let roots: Vec<String> = self
            .krylov
            .min_poly_roots
            .iter()
            .map(|z| {
                if z.im.abs() < 1e-12 {
                    format!("{:.17e}", z.re)
                } else {
                    format!("{:.17e}{:+.17e}i", z.re, z.im)
                }
            })
            .collect();
        let _ = writeln!(o, "min_poly_roots: [{}]", roots.join(", "));
        let _ = writeln!(o, "min_poly_residual: {:.17e}", self.min_poly.residual);
        let _ = writeln!(
            o,
            "wso_orthogonality_residual: {:.17e}",
            self.krylov.orthogonality_residual
        );
        let _ = writeln!(o, "stiffly_accurate: {}", self.stiffly_accurate);
        let _ = writeln!(o, "a_stable: {}", self.stability.a_stable);
        let _ = writeln!(o, "l_stable: {}", self.stability.l_stable);
        let _ = writeln!(
            o,
            "max_imag_axis_modulus: {:.17e}",
            self.stability.max_imag_axis_modulus
        );
        let _ = writeln!(o, "r_at_minus_1e12: {:.17e}", self.stability.r_at_minus_inf);
        let _ = writeln!(o, "stability_samples: {}", self.stability.sample_count);
        let _ = writeln!(o, "reducible: {}", self.reducible);
        let _ = writeln!(o, "max_coeff: {:.17e}", self.max_coeff);
        let _ = writeln!(o, "tolerance_order_conditions: {:.1e}", conditions::CONDITION_TOL);
        let _ = writeln!(o, "tolerance_wso: {:.1e} (scaled)", wso::WSO_TOL);
        let _ = writeln!(o, "tolerance_rank_cutoff: {:.1e} (relative)", wso::RANK_CUTOFF);
        o
    }

    /// Human-oriented summary.
    pub fn to_pretty(&self) -> String {
        let q = &self.krylov;
        format!(
            "{} ({} stages)\n  order {}, stage order {}, WSO {} (dim K_q = {}, min poly degree {})\n  stiffly accurate: {}, A-stable: {}, L-stable: {} (max |R(iy)| = {:.6}, |R(-1e12)| = {:.3e})\n  reducible: {}, max |coefficient| = {:.6}\n",
            self.label,
            self.s,
            self.order.order,
            self.order.stage_order,
            q.q,
            q.dim_kq,
            q.min_poly_degree,
            self.stiffly_accurate,
            self.stability.a_stable,
            self.stability.l_stable,
            self.stability.max_imag_axis_modulus,
            self.stability.r_at_minus_inf,
            self.reducible,
            self.max_coeff,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::builtin;
    use crate::wso::Wso;

    #[test]
    fn dirk744_report() {
        let rep = verify_scheme(&builtin("dirk744").unwrap(), false);
        assert_eq!(rep.order.order, 4);
        assert_eq!(rep.krylov.q, Wso::Finite(4));
        assert_eq!(rep.krylov.dim_kq, 2);
        assert!(rep.stiffly_accurate);
        assert!(rep.stability.l_stable);
        assert!(!rep.reducible);
        let text = rep.to_text();
        assert!(text.contains("order: 4"));
        assert!(text.contains("wso: 4"));
        assert!(text.contains("tolerance_wso"));
    }

    #[test]
    fn backward_euler_report() {
        let rep = verify_scheme(&builtin("backward_euler").unwrap(), false);
        assert_eq!(rep.order.order, 1);
        assert_eq!(rep.krylov.q, Wso::Finite(1));
        assert!(rep.stability.l_stable);
    }
}
