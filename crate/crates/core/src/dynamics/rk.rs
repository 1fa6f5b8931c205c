//! Dormand–Prince 5(4) step for three-component systems.

use crate::error::Result;

use super::vec3::{add, scale, Vec3};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_HAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One step of size `h` along `s` from position `tau` (which decreases by `h`).
/// `rhs(tau, y)` returns `dy/ds`. Returns the fifth-order result and the
/// difference to the embedded fourth-order result.
pub(super) fn step(
    rhs: &impl Fn(f64, Vec3) -> Result<Vec3>,
    tau: f64,
    y: Vec3,
    h: f64,
) -> Result<(Vec3, Vec3)> {
    let mut k = [[0.0; 3]; 7];
    for i in 0..7 {
        let mut yi = y;
        for (j, kj) in k.iter().enumerate().take(i) {
            yi = add(yi, scale(*kj, h * A[i][j]));
        }
        k[i] = rhs(tau - C[i] * h, yi)?;
    }
    let mut high = y;
    let mut err = [0.0; 3];
    for i in 0..7 {
        high = add(high, scale(k[i], h * B[i]));
        err = add(err, scale(k[i], h * (B[i] - B_HAT[i])));
    }
    Ok((high, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifth_order_on_linear_rotation() {
        // y' = ω × y with ω = (0, 0, 1): exact rotation by angle h.
        let rhs = |_tau: f64, y: Vec3| Ok([-y[1], y[0], 0.0]);
        let errs: Vec<f64> = [0.2, 0.1]
            .iter()
            .map(|&h| {
                let (y, _) = step(&rhs, 1.0, [1.0, 0.0, 0.0], h).unwrap();
                (y[0] - h.cos()).abs() + (y[1] - h.sin()).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 5.5, "observed local order {order}");
    }
}
