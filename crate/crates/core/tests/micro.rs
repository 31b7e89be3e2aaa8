use darcylab::geometry::{HoleShape, PerforationSpec};
use darcylab::micro::*;

fn coarse() -> ExteriorGrid {
    ExteriorGrid { cells_per_radius: 2, core: 1.5, growth: 1.25 }
}

#[test]
fn permeability_is_symmetric_and_grows_with_the_hole() {
    let small = permeability(&HoleShape::ball(0.1), &[8.0, 16.0], coarse(), 1e-10).unwrap();
    let large = permeability(&HoleShape::ball(0.12), &[8.0, 16.0], coarse(), 1e-10).unwrap();
    assert!(small.asymmetry <= 1e-8, "{}", small.asymmetry);
    for i in 0..3 {
        assert!(small.eigenvalues[i] > 0.0);
        assert!(large.eigenvalues[i] > small.eigenvalues[i]);
        for j in 0..3 {
            if i != j {
                assert!(small.m[i][j].abs() <= 0.02 * small.m[i][i]);
            }
        }
    }
    let stokes = 6.0 * std::f64::consts::PI * 0.1;
    // coarse, but the drag must land in the right neighbourhood
    assert!((small.m[0][0] / stokes - 1.0).abs() < 0.5, "{:?}", small.m);
}

#[test]
fn short_truncation_is_refused() {
    assert!(solve_exterior_stokes(&HoleShape::ball(0.1), 4.0, coarse(), 1e-8).is_err());
    assert!(permeability(&HoleShape::ball(0.1), &[16.0], coarse(), 1e-8).is_err());
}

#[test]
fn tiled_block_reproduces_cell_norms() {
    let spec = PerforationSpec::new(0.25, 1.5, HoleShape::ball(0.25));
    let ext = solve_exterior_stokes(&spec.hole, 8.0, ExteriorGrid { cells_per_radius: 4, ..coarse() }, 1e-8).unwrap();
    let cf = build_corrector(&spec, 16, &ext, 1e-9).unwrap();
    let tiled = tile_corrector(&cf, 2);
    let a = corrector_norms(&cf, 2.0).unwrap();
    let b = corrector_norms(&tiled, 2.0).unwrap();
    assert!((a.w_minus_id - b.w_minus_id).abs() <= 1e-12 * a.w_minus_id);
    assert!((a.grad_w - b.grad_w).abs() <= 1e-12 * a.grad_w);
    let p = pairing_matrix(&cf);
    assert!(p[0][0] > 0.0 && (p[0][0] - p[1][1]).abs() < 1e-6 * p[0][0]);
}
