//! Compiler round-trip invariants across mesh sizes.

use meshsim::compiler::{decompose, reconstruct};
use meshsim::matrix::{align_global_phase, haar_random_unitary};
use meshsim::mesh::cell_count;

#[test]
fn haar_round_trips_across_sizes() {
    for n in [2usize, 3, 4, 8, 12, 16] {
        for seed in 0..200u64 {
            let u = haar_random_unitary(n, seed * 1009 + n as u64).unwrap();
            let result = decompose(&u).unwrap();
            assert!(
                result.residual < 1e-9,
                "n={n} seed={seed}: residual {:.3e}",
                result.residual
            );
            let recon = reconstruct(&result.config).unwrap();
            let (_, diff) = align_global_phase(recon.matrix(), u.matrix()).unwrap();
            assert!(diff < 1e-9, "n={n} seed={seed}: aligned diff {diff:.3e}");
        }
    }
}

#[test]
fn phase_budget_matches_mesh() {
    for n in [2usize, 5, 12] {
        let u = haar_random_unitary(n, 1).unwrap();
        let result = decompose(&u).unwrap();
        assert_eq!(result.config.thetas.len(), cell_count(n));
        assert_eq!(result.config.phis.len(), cell_count(n));
        assert_eq!(result.config.input_phases.len(), n);
        assert_eq!(result.config.output_phases.len(), n);
    }
}
