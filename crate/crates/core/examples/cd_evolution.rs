//! Ground-state preparation on a 10-spin Ising chain with and without
//! counterdiabatic assistance.

use cdforge::dynamics::{evolve, CdSpec, Driver, EvolutionConfig};
use cdforge::paths::{IsingPath, IsingPathSpec};
use cdforge::variational::RegionPlan;
use cdforge::CdResult;

fn main() -> CdResult<()> {
    let path = IsingPath::new(IsingPathSpec::new(10))?;
    let drivers = [
        Driver::Adiabatic,
        Driver::Cd(CdSpec::nc(1)),
        Driver::Cd(CdSpec::nc(2)),
        Driver::Cd(CdSpec::wnc(1)),
        Driver::Cd(CdSpec::wnc_local(1, RegionPlan::new(3, 1)?)),
    ];
    println!("{:>5}  {:<16} {:>12}", "T", "driver", "1 - F");
    for t in [0.5, 2.0] {
        for d in &drivers {
            let r = evolve(&path, &EvolutionConfig::new(d.clone(), t))?;
            println!("{t:>5}  {:<16} {:>12.4e}", d.label(), 1.0 - r.fidelity);
        }
    }
    Ok(())
}
