//! Property tests for the structural invariants of meshes, coefficients, the
//! scheme, the semi-norms and the linear solver.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use upwind_core::coupling::Csr;
use upwind_core::discretize::*;
use upwind_core::mesh_core::*;
use upwind_core::seminorm::*;
use upwind_core::upwind::*;
use upwind_core::vcoords::*;

fn mollified() -> &'static GeneralMesh {
    static M: OnceLock<GeneralMesh> = OnceLock::new();
    M.get_or_init(|| {
        let pm = build_cartesian_mesh(6, 6, Domain::unit_square()).unwrap();
        mollify_polygon_mesh_with(&pm, pm.delta_x / 4.0, pm.delta_x).unwrap()
    })
}

fn alternating() -> &'static GeneralMesh {
    static M: OnceLock<GeneralMesh> = OnceLock::new();
    M.get_or_init(|| sharp_polygon_mesh(&build_alternating_mesh(0.25, Domain::unit_square()).unwrap(), 0.0).unwrap())
}

fn closed_coeffs(mesh: &GeneralMesh, vals: &[f64]) -> FaceCoeffs {
    FaceCoeffs { values: (0..mesh.n_edges()).map(|e| [vals[2 * e % vals.len()], vals[(2 * e + 1) % vals.len()]]).collect(), time: None }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn partition_of_unity(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let m = mollified();
        prop_assert!((m.unity([x, y]) - 1.0).abs() < 1e-12);
        for &i in m.candidates([x, y]) {
            let c = m.chi(i, [x, y]);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&c));
        }
    }

    #[test]
    fn face_functions_antisymmetric(x in 0.0f64..1.0, y in 0.0f64..1.0, e in 0usize..1000) {
        let m = mollified();
        let e = e % m.n_edges();
        let ed = m.edges[e];
        let a = m.face_fn_directed(e, ed.i, [x, y]);
        let b = m.face_fn_directed(e, ed.j, [x, y]);
        prop_assert!((a[0] + b[0]).abs() < 1e-14 && (a[1] + b[1]).abs() < 1e-14);
    }

    #[test]
    fn projected_coefficients_nonnegative(bx in -2.0f64..2.0, by in -2.0f64..2.0, w in -3.0f64..3.0) {
        let m = mollified();
        let a = project_to_face(m, |x| [bx + w * (x[1] - 0.5), by - w * (x[0] - 0.5)], &QuadratureSpec::default()).unwrap();
        prop_assert!(a.values.iter().all(|v| v[0] >= 0.0 && v[1] >= 0.0));
    }

    #[test]
    fn closed_system_conserves_mass_and_sign(
        vals in proptest::collection::vec(0.0f64..1.0, 1..40),
        u in proptest::collection::vec(0.0f64..2.0, 24),
    ) {
        let m = alternating();
        let a = closed_coeffs(m, &vals);
        let u0 = CellValues { values: u };
        let st = SchemeState::new(m, u0);
        let m0 = st.mass(m);
        let spec = StepperSpec { method: Method::ExplicitEuler, ..StepperSpec::default() };
        let tr = integrate(m, st, |_| Ok(a.clone()), 0.3, &spec).unwrap();
        prop_assert!((tr.last().mass(m) - m0).abs() <= 1e-12 * m0.max(1.0));
        prop_assert!(tr.last().u.values.iter().all(|&v| v >= -1e-14));
    }

    #[test]
    fn divergence_sums_to_zero_on_closed_system(vals in proptest::collection::vec(0.0f64..1.0, 1..40)) {
        let m = alternating();
        let a = closed_coeffs(m, &vals);
        let d = discrete_divergence_full(m, &a).unwrap();
        let s: f64 = d.values.iter().zip(&m.volumes).map(|(d, p)| d * p).sum();
        prop_assert!(s.abs() < 1e-12);
    }

    #[test]
    fn seminorm_shift_invariant_and_nonnegative(
        u in proptest::collection::vec(-1.0f64..1.0, 24),
        c in -5.0f64..5.0,
        tx in -3.0f64..3.0,
    ) {
        let m = alternating();
        let params = SemiNormParams::new(0.1, 1.0, 1.0).unwrap();
        let bary = VirtualCoordinates::barycenters(m);
        let moved = VirtualCoordinates::from_points(&m.barycenters.iter().map(|x| [x[0] + tx, x[1] - tx]).collect::<Vec<_>>());
        let a = discrete_seminorm(m, &CellValues { values: u.clone() }, &params, &bary).unwrap().value;
        let b = discrete_seminorm(m, &CellValues { values: u.iter().map(|v| v + c).collect() }, &params, &moved).unwrap().value;
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
    }

    #[test]
    fn kruzkov_entropy_term_nonpositive(
        vals in proptest::collection::vec(0.0f64..1.0, 1..40),
        u in proptest::collection::vec(0.0f64..1.0, 24),
        h in 0.05f64..0.45,
    ) {
        let m = alternating();
        let a = closed_coeffs(m, &vals);
        let k = KernelSpec::new(h, 2).unwrap();
        let r = kruzkov_decomposition(m, &a, &CellValues { values: u }, &k, &VirtualCoordinates::barycenters(m)).unwrap();
        prop_assert!(r.n_k <= 1e-14);
        prop_assert!((r.decomposition() - r.ds_dt).abs() <= 1e-10 * (1.0 + r.ds_dt.abs()));
    }

    #[test]
    fn bounded_solution_solves_with_zero_block_means(seed in 0u64..10_000, n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = vec![(0..n / 2).collect::<Vec<_>>(), (n / 2..n).collect()];
        let m = random_diffusion_matrix(&groups, n, (0.1, 1.0), &mut rng);
        m.validate(1e-12).unwrap();
        let y: Vec<f64> = (0..n).map(|i| ((i * 7 + seed as usize) % 11) as f64 / 11.0 - 0.5).collect();
        let phi = m.mul(&y);
        let sol = solve_bounded(&m, &phi).unwrap();
        prop_assert!(sol.relative_residual < 1e-10);
        for b in &sol.blocks {
            let mean: f64 = b.iter().map(|&i| sol.x[i]).sum();
            prop_assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn csr_assembly_order_independent(mut t in proptest::collection::vec((0usize..5, 0usize..5, -1.0f64..1.0), 1..30)) {
        let a = Csr::from_triplets(5, t.clone());
        t.reverse();
        let b = Csr::from_triplets(5, t);
        prop_assert_eq!(a, b);
    }
}
