//! G_n by brute-force trapezoid sums over a dense (x, t) grid, using the
//! transport modes directly rather than Gauss–Hermite projections.

use esta_core::esta::EstaInputs;
use num_complex::Complex64;

/// ∫₀^{t_f} ⟨χ_n|ΔV|χ_0⟩ dt with `nx` points on x ∈ q_c(t) ± `half_width`
/// and `nt` points in time.
pub fn dense_gn(inputs: &EstaInputs, n: usize, nx: usize, nt: usize, half_width: f64) -> Complex64 {
    let modes = inputs.modes();
    let tf = inputs.q0.t_f();
    let dt = tf / (nt - 1) as f64;
    let dx = 2.0 * half_width / (nx - 1) as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..nt {
        let t = i as f64 * dt;
        let centre = inputs.auxiliary().value(t);
        let trap = inputs.q0.value(t);
        let (phase_n, phase_0) = (modes.lr_phase(n, t), modes.lr_phase(0, t));
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..nx {
            let x = centre - half_width + j as f64 * dx;
            let bra = modes.mode_with_phase(n, x, t, phase_n).conj();
            row += bra * inputs.delta_v(x - trap) * modes.mode_with_phase(0, x, t, phase_0);
        }
        let w = if i == 0 || i == nt - 1 { 0.5 } else { 1.0 };
        total += w * dt * dx * row;
    }
    total
}
