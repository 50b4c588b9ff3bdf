//! Randomized checks of the discrete operator identities the energy law rests on.

mod common;

use common::identities::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn discrete_laplacian_is_adjoint_to_stiffness(seed in any::<u64>(), dim in 2usize..=3, moved in any::<bool>()) {
        let e = laplacian_adjointness(&mut Instance::new(seed, dim, moved));
        prop_assert!(e <= IDENTITY_TOL, "{e:e}");
    }

    #[test]
    fn interpolation_is_adjoint_to_lumped_projection(seed in any::<u64>(), dim in 2usize..=3, moved in any::<bool>()) {
        let e = interpolation_adjoint(&mut Instance::new(seed, dim, moved));
        prop_assert!(e <= IDENTITY_TOL, "{e:e}");
    }

    #[test]
    fn recovered_gradient_is_stable(seed in any::<u64>(), dim in 2usize..=3, moved in any::<bool>()) {
        let e = recovered_gradient_stability(&mut Instance::new(seed, dim, moved));
        prop_assert!(e <= IDENTITY_TOL, "{e:e}");
    }

    #[test]
    fn convection_is_skew_symmetric(seed in any::<u64>(), dim in 2usize..=3, moved in any::<bool>()) {
        let e = convection_skew(&mut Instance::new(seed, dim, moved));
        prop_assert!(e <= IDENTITY_TOL, "{e:e}");
    }

    #[test]
    fn dissipative_form_is_symmetric(seed in any::<u64>(), dim in 2usize..=3, moved in any::<bool>()) {
        let e = dissipative_symmetry(&mut Instance::new(seed, dim, moved));
        prop_assert!(e <= IDENTITY_TOL, "{e:e}");
    }

    #[test]
    fn dissipative_form_is_coercive(seed in any::<u64>(), dim in 2usize..=3, moved in any::<bool>()) {
        let e = dissipative_coercivity(&mut Instance::new(seed, dim, moved));
        prop_assert!(e <= IDENTITY_TOL, "{e:e}");
    }
}

#[test]
fn laplacian_identity_needs_the_lumped_product() {
    let mut inst = Instance::new(1, 2, true);
    let e = laplacian_adjointness(&mut inst);
    assert!(e <= IDENTITY_TOL);
    let p1 = nematic::fespace::FESpace::new(inst.mesh.clone(), nematic::fespace::SpaceKind::P1Vector);
    let f: Vec<f64> = (0..p1.dof_count()).map(|i| (i as f64 * 0.37).sin()).collect();
    let lap = nematic::operators::leslie::discrete_laplacian(&p1, &f);
    let k = nematic::operators::forms::stiffness_matrix(&p1);
    let nv = p1.num_nodes();
    // pairing with the consistent mass instead of the lumped weights breaks it
    let g: Vec<f64> = (0..p1.dof_count()).map(|i| if p1.is_boundary_node(i % nv) { 0.0 } else { 1.0 }).collect();
    let m = nematic::operators::forms::mass_matrix(&p1);
    let consistent = m.bilinear(&g, &lap);
    assert!((consistent + k.bilinear(&g, &f)).abs() > 1e-6);
}
