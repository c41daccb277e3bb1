//! Nested-commutator ansatz terms, their variational coefficients, and the
//! exact gauge potential for comparison.

use cdforge::ansatz::{enumerate_terms, exact_agp, nc_terms};
use cdforge::operator::{materialize, OperatorSum};
use cdforge::paths::{HamiltonianPath, IsingPath, IsingPathSpec};
use cdforge::variational::{build_gram, optimize_local_terms, solve, AnsatzSpec, RegionPlan};
use cdforge::ansatz::AnsatzMode;
use cdforge::CdResult;
use num_complex::Complex64 as C64;

fn residual_action(h: &OperatorSum, dh: &OperatorSum, a: &nalgebra::DMatrix<C64>) -> CdResult<f64> {
    let (hm, dm) = (materialize(h)?, materialize(dh)?);
    let r = &dm + (a * &hm - &hm * a) * C64::new(0.0, 1.0);
    Ok(r.norm_squared() / hm.nrows() as f64)
}

fn main() -> CdResult<()> {
    let path = IsingPath::new(IsingPathSpec::new(6))?;
    let s = 0.4;
    let (h, dh) = (path.terms(s)?.merged_by_window(), path.dterms(s)?);

    for order in 1..=2 {
        let wnc = enumerate_terms(&h, &dh, order, 6)?;
        let nc = nc_terms(&h, &dh, order, 6)?;
        let sol = solve(&build_gram(&wnc, &h, &dh)?)?;
        println!(
            "order {order}: {} WNC terms in {} groups, NC uses {} groups; rank {}",
            wnc.len(),
            wnc.group_count(),
            nc.group_count(),
            sol.rank
        );
    }

    let spec = AnsatzSpec::new(AnsatzMode::Wnc, 1);
    let local = optimize_local_terms(&h, &dh, &spec, &RegionPlan::new(3, 1)?)?;
    println!("local WNC l=1 action {:.5} (unassisted {:.5})", local.action, local.action_zero);

    let exact = exact_agp(&materialize(&h)?, &materialize(&dh)?, 1e-10)?;
    println!("exact AGP action {:.2e}", residual_action(&h, &dh, &exact)?);
    Ok(())
}
