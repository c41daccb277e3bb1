//! Windowed operators: products, commutators and Hilbert–Schmidt inner
//! products without ever touching the full chain.

use cdforge::operator::{commutator, embed, hs_inner, pauli, OperatorSum, SiteWindow};
use cdforge::CdResult;

fn main() -> CdResult<()> {
    let xy = pauli::string(0, "XY")?;
    let zx = pauli::string(1, "ZX")?;
    let c = commutator(&xy, &zx)?.expect("overlapping strings anticommute here");
    println!("[X0 Y1, Z1 X2] lives on {} with max entry {:.3}", c.window(), c.max_norm());

    // the embedded version agrees
    let full = SiteWindow::new(0, 3)?;
    let e = embed(&c, full)?;
    println!("embedded dimension {}, Hermitian residual of i[A,B]: {:.1e}", e.dim(), c.scaled(num_complex::Complex64::new(0.0, 1.0)).hermitian_residual());

    // normalized inner products do not depend on the window used
    let a = pauli::string(2, "Z")?;
    let b = embed(&pauli::string(2, "Z")?, SiteWindow::new(1, 4)?)?;
    println!("<Z2, Z2> = {} (local) = {} (embedded)", hs_inner(&a, &a)?.re, hs_inner(&a, &b)?.re);

    let mut h = OperatorSum::new(4, 2);
    for j in 0..3 {
        h.push(pauli::string(j, "ZZ")?)?;
    }
    for j in 0..4 {
        h.push(pauli::string(j, "X")?.scaled_real(2.0))?;
    }
    println!("||H||^2 = {} over {} terms", h.norm2()?, h.len());
    Ok(())
}
