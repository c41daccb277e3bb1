//! The two benchmark paths: the Ising chain and the parent Hamiltonian of a
//! one-parameter MPS family.

use cdforge::linalg::{dot, eigh};
use cdforge::operator::materialize;
use cdforge::paths::{g_of_xi, HamiltonianPath, IsingPath, IsingPathSpec, MpsPath, MpsPathSpec};
use cdforge::schedule::{ScheduleKind, SchedulePlan};
use cdforge::CdResult;

fn main() -> CdResult<()> {
    let plan = SchedulePlan::new(ScheduleKind::Sin2Sin2, 2.0)?;
    for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let (s, s_dot) = plan.eval(t)?;
        println!("t = {t:.1}  s = {s:.4}  ds/dt = {s_dot:.4}");
    }

    let ising = IsingPath::new(IsingPathSpec::new(6))?;
    for s in [0.0, 0.5, 1.0] {
        let (e, _) = eigh(&materialize(&ising.terms(s)?)?);
        println!("Ising N=6, s = {s}: gap {:.4}", e[1] - e[0]);
    }

    let g = g_of_xi(3.8)?;
    let mps = MpsPath::new(MpsPathSpec::new(4, g))?;
    println!("xi = 3.8 -> g = {g:.5}");
    for s in [0.0, 0.5, 1.0] {
        let h = mps.terms(s)?;
        let psi = mps.state(s)?;
        let energy = dot(psi.amplitudes(), &h.apply(psi.amplitudes())).re;
        let (e, _) = eigh(&materialize(&h)?);
        println!("MPS N_p=4, s = {s}: <H> = {energy:.1e}, lowest levels {:.2e} {:.4}", e[0], e[1]);
    }
    Ok(())
}
