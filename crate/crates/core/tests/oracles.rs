//! Band structure against independently computed Mathieu characteristic
//! values (q = V0/4, a = ε) and basis-truncation convergence.

use approx::assert_abs_diff_eq;
use ret_core::{average_band_gap, bloch_eigensystem, LatticeParams};

// q, a0, b1, a1, b2, a2
const MATHIEU: [[f64; 6]; 3] = [
    [
        0.5,
        -0.121_765_544_941_082_7,
        0.470_654_354_933_839_1,
        1.466_766_842_516_055_8,
        3.979_189_215_751_357,
        4.100_900_595_560_48,
    ],
    [
        1.0,
        -0.455_138_604_107_413_64,
        -0.110_248_816_992_095_21,
        1.859_108_072_514_363_4,
        3.917_024_772_998_471,
        4.371_300_982_735_086,
    ],
    [
        2.5,
        -2.153_078_342_041_735,
        -2.076_331_505_828_794_6,
        2.495_930_746_446_916_3,
        3.492_474_366_738_956,
        5.613_041_084_867_152,
    ],
];

#[test]
fn spectrum_matches_mathieu_characteristic_values() {
    for row in MATHIEU {
        let v0 = 4.0 * row[0];
        let p = LatticeParams::new(v0, 0.0, 0.0);
        let centre = bloch_eigensystem(&p, 0.0).unwrap().energies;
        let edge = bloch_eigensystem(&p, 1.0).unwrap().energies;
        assert_abs_diff_eq!(centre[0], row[1], epsilon = 1e-10);
        assert_abs_diff_eq!(edge[0], row[2], epsilon = 1e-10);
        assert_abs_diff_eq!(edge[1], row[3], epsilon = 1e-10);
        assert_abs_diff_eq!(centre[1], row[4], epsilon = 1e-10);
        assert_abs_diff_eq!(centre[2], row[5], epsilon = 1e-10);
    }
}

#[test]
fn doubling_the_basis_leaves_low_bands_unchanged() {
    for v0 in [1.0, 5.8, 10.0] {
        for k in [0.0, 0.37, 1.0] {
            let base = LatticeParams::new(v0, 0.0, k);
            let wide = base.with_basis_halfwidth(2 * base.basis_halfwidth);
            let a = bloch_eigensystem(&base, k).unwrap().energies;
            let b = bloch_eigensystem(&wide, k).unwrap().energies;
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-9);
        }
    }
}

#[test]
fn average_gap_reference_values() {
    // trapezoid over the half zone, 512 points, vs a 4096-point reference
    for (v0, reference) in [
        (1.0, 2.1063),
        (2.0, 2.33519),
        (4.0, 2.9665),
        (16.0, 6.793),
        (25.0, 8.855),
    ] {
        let g = average_band_gap(&LatticeParams::new(v0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g, reference, epsilon = 1e-3);
    }
}
