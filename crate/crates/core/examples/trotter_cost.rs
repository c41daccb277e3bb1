//! First-order product formula for the MPS path with a CNOT estimate per
//! applied unitary.

use cdforge::dynamics::{cnot_cost, trotter_evolve, CdSpec, Driver, EvolutionConfig};
use cdforge::paths::{g_of_xi, MpsPath, MpsPathSpec};
use cdforge::CdResult;

fn main() -> CdResult<()> {
    for m in 1..=4 {
        println!("cnot_cost({m}) = {}", cnot_cost(m)?);
    }
    let path = MpsPath::new(MpsPathSpec::new(3, g_of_xi(3.8)?))?;
    for d in [Driver::Adiabatic, Driver::Cd(CdSpec::wnc(1))] {
        for t in [0.5, 1.0, 2.0] {
            let (_, rep) = trotter_evolve(&path, &EvolutionConfig::new(d.clone(), t), 0.05)?;
            println!(
                "{:<16} T = {t:<4} steps {:>3}  CNOTs {:>6}  F = {:.4}  supports {:?}",
                d.label(),
                rep.n_steps,
                rep.total_cnot,
                rep.fidelity_trotter,
                rep.support_histogram
            );
        }
    }
    Ok(())
}
