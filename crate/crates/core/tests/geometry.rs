use darcylab::geometry::*;
use darcylab::Error;
use proptest::prelude::*;

fn spec(eps: f64, alpha: f64, rho: f64) -> PerforationSpec {
    PerforationSpec::new(eps, alpha, HoleShape::ball(rho))
}

#[test]
fn hole_count_is_cells_cubed() {
    for inv in [1usize, 2, 3, 4, 8] {
        let s = spec(1.0 / inv as f64, 1.5, 0.5);
        assert_eq!(hole_centers(&s).unwrap().len(), inv.pow(3));
    }
    let m = build_mask(&spec(0.25, 1.5, 0.5), GridSpec::new(64)).unwrap();
    assert_eq!(m.holes, 64);
}

#[test]
fn porosity_tends_to_one() {
    let mut last = f64::INFINITY;
    for (inv, n) in [(4usize, 64usize), (8, 128), (16, 256)] {
        let s = spec(1.0 / inv as f64, 1.25, 1.0);
        let phi = s.analytic_solid_fraction().unwrap();
        assert!(phi < last);
        last = phi;
        if validate_spec(&s, GridSpec::new(n)).is_empty() {
            let m = build_mask_window(&s, GridSpec::new(n), Window::Slab { axis: 0 }).unwrap();
            let voxel = 1.0 - m.porosity;
            assert!((voxel / phi - 1.0).abs() < 0.05 * 4.0, "{voxel} vs {phi}");
        }
    }
}

#[test]
fn spec_examples() {
    assert!(validate_spec(&spec(1.0 / 3.0, 1.5, 0.0), GridSpec::new(12)).is_empty());
    let v = validate_spec(&spec(1.0 / 3.0, 1.5, 0.0), GridSpec::new(10));
    assert!(v.iter().any(|x| matches!(x, Violation::Tiling { .. })));
    let v = validate_spec(&spec(0.25, 1.5, 0.2), GridSpec::new(64));
    assert!(v.iter().any(|x| matches!(x, Violation::Containment { .. })));
    assert!(matches!(
        build_mask(&spec(0.25, 2.0, 0.1), GridSpec::new(32)),
        Err(Error::Unresolved { .. }) | Err(Error::InvalidSpec(_))
    ));
}

#[test]
fn mask_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(0.5, 1.5, 0.5);
    let m = build_mask(&s, GridSpec::new(16)).unwrap();
    let stem = dir.path().join("mask");
    m.save(&stem, &s).unwrap();
    let (header, back) = DomainMask::load(&stem).unwrap();
    assert_eq!(header.n, 16);
    assert_eq!(back.solid, m.solid);
    assert_eq!(back.face_solid, m.face_solid);
}

#[test]
fn window_masks_agree_with_full_torus() {
    let s = spec(0.25, 1.5, 0.5);
    let full = build_mask(&s, GridSpec::new(32)).unwrap();
    let slab = build_mask_window(&s, GridSpec::new(32), Window::Slab { axis: 1 }).unwrap();
    let cell = build_mask_window(&s, GridSpec::new(32), Window::Cell).unwrap();
    assert_eq!(slab.grid.dims(), [8, 32, 8]);
    assert_eq!(cell.grid.dims(), [8, 8, 8]);
    for k in 0..8 {
        for j in 0..32 {
            for i in 0..8 {
                assert_eq!(slab.solid[slab.grid.index(i, j, k)], full.solid[full.grid.index(i, j, k)]);
            }
        }
    }
    assert!((cell.porosity - full.porosity).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shifting_the_offset_by_one_cell_shifts_the_mask(axis in 0usize..3, k in 1usize..4) {
        let n = 32;
        let base = spec(0.25, 1.5, 0.5);
        let mut x0 = [0.0; 3];
        x0[axis] = k as f64 / 8.0;
        let shifted = base.clone().with_offset(x0);
        let a = build_mask(&base, GridSpec::new(n)).unwrap();
        let b = build_mask(&shifted, GridSpec::new(n)).unwrap();
        for q in 0..a.grid.len() {
            let mut c = a.grid.coords(q);
            c[axis] = (c[axis] + k) % n;
            prop_assert_eq!(a.solid[q], b.solid[b.grid.index(c[0], c[1], c[2])]);
        }
    }

    #[test]
    fn faces_are_solid_iff_a_neighbour_is(rho in 0.3f64..0.5, inv in 2usize..5) {
        let s = spec(1.0 / inv as f64, 1.5, rho);
        let n = GridSpec::required_for(&s).max(8 * inv).div_ceil(inv) * inv;
        let m = build_mask(&s, GridSpec::new(n)).unwrap();
        let len = m.grid.len();
        for q in 0..len {
            let c = m.grid.coords(q);
            for a in 0..3 {
                let p = m.grid.prev(a, q, c[a]);
                prop_assert_eq!(m.face_solid[a * len + q], m.solid[q] || m.solid[p]);
            }
            prop_assert_eq!(m.solid[q], s.in_hole(m.grid.cell_center(c)));
        }
    }
}
