//! Fits `F = exp(-kappa N - c)` over chain sizes and predicts the evolution
//! time needed at a larger size.

use cdforge::analysis::{fit_scaling, predict_tp};
use cdforge::dynamics::{evolve, Driver, EvolutionConfig};
use cdforge::paths::{IsingPath, IsingPathSpec};
use cdforge::CdResult;

fn main() -> CdResult<()> {
    let sizes = [4, 6, 8];
    let mut fits = Vec::new();
    for t in [2.0, 4.0, 8.0, 16.0] {
        let samples = sizes
            .iter()
            .map(|&n| {
                let path = IsingPath::new(IsingPathSpec::new(n))?;
                Ok((n, evolve(&path, &EvolutionConfig::new(Driver::Adiabatic, t))?.fidelity))
            })
            .collect::<CdResult<Vec<_>>>()?;
        let fit = fit_scaling(&samples, t)?;
        println!("T = {t:<4} kappa = {:.4e}  c = {:+.4e}  residual = {:.1e}", fit.kappa, fit.c, fit.residual);
        fits.push(fit);
    }
    for n in [10, 20, 40] {
        match predict_tp(&fits, n, 0.5) {
            Ok(p) => println!("N = {n}: T_p(F = 0.5) = {:.3}", p.t_p),
            Err(e) => println!("N = {n}: {e}"),
        }
    }
    Ok(())
}
