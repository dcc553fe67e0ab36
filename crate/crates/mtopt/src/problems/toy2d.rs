//! Two-task 2-D toy objective used for trajectory visualizations, adopted
//! from the reference implementation of the two-task toy landscape and
//! snapshot-tested against autograd values.
//!
//! Both losses blend a logarithmic valley (active for `x2 > 0`) with a
//! shifted quadratic bowl (active for `x2 < 0`) through `tanh` gates; the
//! Pareto set lies in the lower half plane between the two bowls.

/// The five initializations shipped with the reference visualization.
pub const INITS: [[f64; 2]; 5] = [
    [-8.5, 7.5],
    [-8.5, -5.0],
    [9.0, 9.0],
    [-7.5, -0.5],
    [9.0, -1.0],
];

/// Per-task minima (equal by symmetry), attained near (+-7, -4.952).
pub const TASK_MINIMA: [f64; 2] = [-18.065223125574, -18.065223125574];

const CLAMP_FLOOR: f64 = 1e-6;

/// Losses and analytic gradients of both tasks at `(x1, x2)`.
pub fn eval(x1: f64, x2: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let th = x2.tanh();
    let sech2 = 1.0 - th * th;

    // Log-valley branch.
    let u1 = -0.5 * x1 - 3.5 + th;
    let u2 = -0.5 * x1 + 3.5 - th;
    let f1l = u1.abs().max(CLAMP_FLOOR).ln() + 6.0;
    let f2l = u2.abs().max(CLAMP_FLOOR).ln() + 6.0;
    // d ln(max(|u|, floor)) = u' / u above the floor, 0 below it.
    let (f1l_x1, f1l_x2) = if u1.abs() > CLAMP_FLOOR {
        (-0.5 / u1, sech2 / u1)
    } else {
        (0.0, 0.0)
    };
    let (f2l_x1, f2l_x2) = if u2.abs() > CLAMP_FLOOR {
        (-0.5 / u2, -sech2 / u2)
    } else {
        (0.0, 0.0)
    };

    // Quadratic-bowl branch.
    let f1q = ((x1 - 7.0).powi(2) + 0.1 * (x2 - 8.0).powi(2)) / 10.0 - 20.0;
    let f2q = ((x1 + 7.0).powi(2) + 0.1 * (x2 - 8.0).powi(2)) / 10.0 - 20.0;
    let f1q_x1 = (x1 - 7.0) / 5.0;
    let f2q_x1 = (x1 + 7.0) / 5.0;
    let fq_x2 = (x2 - 8.0) / 50.0;

    // Gates: c1 active in the upper half plane, c2 in the lower.
    let half_th = (0.5 * x2).tanh();
    let half_sech2 = 1.0 - half_th * half_th;
    let (c1, c1_x2) = if half_th > 0.0 {
        (half_th, 0.5 * half_sech2)
    } else {
        (0.0, 0.0)
    };
    let (c2, c2_x2) = if -half_th > 0.0 {
        (-half_th, -0.5 * half_sech2)
    } else {
        (0.0, 0.0)
    };

    let l1 = f1l * c1 + f1q * c2;
    let l2 = f2l * c1 + f2q * c2;
    let g1 = [
        f1l_x1 * c1 + f1q_x1 * c2,
        f1l_x2 * c1 + f1l * c1_x2 + fq_x2 * c2 + f1q * c2_x2,
    ];
    let g2 = [
        f2l_x1 * c1 + f2q_x1 * c2,
        f2l_x2 * c1 + f2l * c1_x2 + fq_x2 * c2 + f2q * c2_x2,
    ];
    ([l1, l2], [g1, g2])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Snapshot values from the reference formulas run under autograd
    /// (float64): (x1, x2, [L1, L2], [dL1/dx1, dL1/dx2], [dL2/dx1, dL2/dx2]).
    #[rustfmt::skip]
    const ORACLE: [(f64, f64, [f64; 2], [f64; 2], [f64; 2]); 10] = [
        (-8.5, 7.5, [6.5523634077713266e0, 7.9007981431728478e0], [-2.8539851198351834e-1, 7.2487202260299310e-3], [-7.3992174236197722e-2, 8.7394375279218808e-3]),
        (-8.5, -5.0, [5.6385007139354206e0, -1.7842919582068618e1], [-3.0585043242694341e0, -3.3250700526650318e-1], [-2.9598428944542909e-1, -1.6059507736892464e-2]),
        (9.0, 9.0, [7.9439491889783271e0, 6.6914953692170061e0], [7.1410943321262757e-2, 1.9607137553373883e-3], [2.4993830651856216e-1, 1.6516227427198639e-3]),
        (-7.5, -0.5, [4.2799536255048137e-1, -4.7152965479274105e0], [-7.1026412097075642e-1, -8.6297414675320261e-1], [-2.4491866240370912e-2, 9.0071817657137672e0]),
        (9.0, -1.0, [-8.6831813849155832e0, 2.9621709780366645e0], [1.8484686290400393e-1, 7.3054953629080863e0], [1.4787749032320314e0, -2.6037460724626005e0]),
        (0.0, 5.0, [6.8237471577376905e0, 6.8237471577376905e0], [1.9731569346073033e-1, 9.1888609915448463e-2], [-1.9731569346073033e-1, 9.1888609915448463e-2]),
        (2.5, -3.5, [-1.5676256154826078e1, -9.0866273853450661e0], [-8.4723798464755873e-1, 7.3111158646021612e-1], [1.7886135231448461e0, 3.3276925214391850e-1]),
        (-4.0, 1.5, [3.4809699924148956e0, 4.7794555291438252e0], [5.3387163799977799e-1, 1.4418629442372666e0], [-6.9115282434424496e-2, 2.2196559786494796e0]),
        (6.0, -6.0, [-1.7851282281139945e1, -1.1343624192028734e0], [-1.9901095073734609e-1, -1.9011697765828622e-1], [2.5871423595854992e0, -2.7299168984798361e-1]),
        (1.0, 0.5, [1.7789736799491151e0, 1.6976121229704411e0], [3.4613732745037221e-2, 3.3594685302389142e0], [-4.8252554901093474e-2, 3.1818804334442086e0]),
    ];

    #[test]
    fn matches_autograd_snapshot() {
        for (x1, x2, losses, g1, g2) in ORACLE {
            let (l, g) = eval(x1, x2);
            for i in 0..2 {
                let scale = losses[i].abs().max(1.0);
                assert!(
                    (l[i] - losses[i]).abs() < 1e-10 * scale,
                    "loss {i} at ({x1}, {x2}): {} vs {}",
                    l[i],
                    losses[i]
                );
            }
            for d in 0..2 {
                assert!(
                    (g[0][d] - g1[d]).abs() < 1e-10 * g1[d].abs().max(1.0),
                    "g1[{d}] at ({x1}, {x2}): {} vs {}",
                    g[0][d],
                    g1[d]
                );
                assert!(
                    (g[1][d] - g2[d]).abs() < 1e-10 * g2[d].abs().max(1.0),
                    "g2[{d}] at ({x1}, {x2}): {} vs {}",
                    g[1][d],
                    g2[d]
                );
            }
        }
    }

    #[test]
    fn symmetric_tasks() {
        // The landscape is mirror symmetric: L1(x1, x2) = L2(-x1, x2).
        for (x1, x2) in [(3.0, 4.0), (-2.0, -6.0), (0.5, 1.0)] {
            let (l, _) = eval(x1, x2);
            let (lm, _) = eval(-x1, x2);
            assert!((l[0] - lm[1]).abs() < 1e-12);
            assert!((l[1] - lm[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn task_minima_constants_are_attained() {
        let (l, _) = eval(7.0, -4.952089);
        assert!((l[0] - TASK_MINIMA[0]).abs() < 1e-6, "task 0 min {}", l[0]);
        let (l, _) = eval(-7.0, -4.952089);
        assert!((l[1] - TASK_MINIMA[1]).abs() < 1e-6, "task 1 min {}", l[1]);
    }
}
