use proptest::prelude::*;
use qcl_core::linalg::{
    c, haar_unitary, herm_to_vec, polar_unitary, random_hermitian, trace_prod, traceless_basis, unitarity_error, vec_to_herm,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_coordinates_are_isometric(seed in 0u64..100_000, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hermitian(n, &mut rng);
        let b = random_hermitian(n, &mut rng);
        let (va, vb) = (herm_to_vec(&a), herm_to_vec(&b));
        prop_assert!((va.dot(&vb) - trace_prod(&a, &b).re).abs() < 1e-10);
        prop_assert!((vec_to_herm(&va, n) - a).norm() < 1e-12);
    }

    #[test]
    fn traceless_basis_is_orthonormal(n in 2usize..6) {
        let b = traceless_basis(n);
        prop_assert_eq!(b.shape(), (n * n, n * n - 1));
        let gram = b.transpose() * &b;
        prop_assert!((gram - nalgebra::DMatrix::<f64>::identity(n * n - 1, n * n - 1)).amax() < 1e-12);
        for j in 0..b.ncols() {
            let m = vec_to_herm(&b.column(j).into_owned(), n);
            prop_assert!(m.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn polar_factor_is_nearest_unitary(seed in 0u64..100_000, n in 1usize..5, noise in 0.0f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = haar_unitary(n, &mut rng);
        let perturbed = &u + random_hermitian(n, &mut rng) * c(noise, 0.0);
        let p = polar_unitary(&perturbed);
        prop_assert!(unitarity_error(&p) < 1e-12);
        let v = haar_unitary(n, &mut rng);
        prop_assert!((&p - &perturbed).norm() <= (&v - &perturbed).norm() + 1e-12);
        prop_assert!((polar_unitary(&u) - &u).norm() < 1e-12);
    }
}
