//! Driving between two injective MPS through their parent Hamiltonians.

use cdforge::dynamics::{evolve, CdSpec, Driver, EvolutionConfig};
use cdforge::paths::{g_of_xi, MpsPath, MpsPathSpec};
use cdforge::CdResult;

fn main() -> CdResult<()> {
    let n_p = 4;
    for xi in [1.0, 3.8] {
        let path = MpsPath::new(MpsPathSpec::new(n_p, g_of_xi(xi)?))?;
        for d in [Driver::Adiabatic, Driver::Cd(CdSpec::nc(1)), Driver::Cd(CdSpec::wnc(1))] {
            let r = evolve(&path, &EvolutionConfig::new(d.clone(), 2.0))?;
            println!("xi = {xi:<4} {:<16} 1 - F = {:.4e}", d.label(), 1.0 - r.fidelity);
        }
    }
    Ok(())
}
