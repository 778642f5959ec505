//! Property tests of the kernel, certificate and solver.

use proptest::prelude::*;

use operator_root::contour::{build_dip_contour, scale_to_variation, DipParams, HalfPlane, SolvabilityCertificate};
use operator_root::linalg::op_norm;
use operator_root::model::{Coupling, ProblemInstance, RadialTerm, SpaceDim, SpectralInterval};
use operator_root::rootsolve::SolverOptions;
use operator_root::transfer::Continuation;
use operator_root::C64;

fn instance(v: Vec<(f64, f64)>, alpha: f64, dim: SpaceDim) -> ProblemInstance {
    let a1 = (1..=v.len()).map(|i| i as f64 * 1.5).collect();
    ProblemInstance::new(
        a1,
        SpectralInterval::half_line(0.0),
        Coupling::SchrodingerRadial {
            dim,
            terms: vec![RadialTerm {
                v: v.into_iter().map(|(re, im)| C64::new(re, im)).collect(),
                alpha,
            }],
        },
    )
    .unwrap()
}

fn coefficients() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_conjugation_symmetric(v in coefficients(), alpha in 0.05..1.0f64, x in 0.01..20.0f64, y in -3.0..3.0f64, three in any::<bool>()) {
        let dim = if three { SpaceDim::Three } else { SpaceDim::One };
        let inst = instance(v, alpha, dim);
        let mu = C64::new(x, y);
        let k = inst.kprime_matrix(mu).unwrap();
        let k_conj = inst.kprime_matrix(mu.conj()).unwrap();
        let scale = 1.0 + op_norm(&k);
        prop_assert!(op_norm(&(k_conj - k.adjoint())) <= 1e-13 * scale);
    }

    #[test]
    fn kernel_is_nonnegative_on_the_interval(v in coefficients(), alpha in 0.05..1.0f64, x in 0.01..20.0f64) {
        let inst = instance(v, alpha, SpaceDim::Three);
        let k = inst.kprime_matrix(C64::new(x, 0.0)).unwrap();
        let scale = 1.0 + op_norm(&k);
        prop_assert!(op_norm(&(&k - k.adjoint())) <= 1e-13 * scale);
        let eig = k.clone().symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e >= -1e-12 * scale));
    }

    #[test]
    fn certificate_radii_are_ordered(d0 in 0.1..5.0f64, frac in 0.0..0.999f64) {
        let v0 = frac * 0.25 * d0 * d0;
        let cert = SolvabilityCertificate::from_parts(v0, d0);
        prop_assert!(cert.admissible);
        let r = cert.r_min.unwrap();
        prop_assert!(r >= 0.0 && r <= 0.5 * d0 + 1e-12);
        prop_assert!(r <= cert.r_max + 1e-12);
        // r_min solves r^2 - d0 r + V0 = 0
        prop_assert!((r * r - d0 * r + v0).abs() <= 1e-12 * (1.0 + d0 * d0));
        prop_assert!(cert.contraction_factor().unwrap() < 1.0);
    }

    #[test]
    fn certificate_rejects_the_boundary_and_beyond(d0 in 0.1..5.0f64, frac in 1.0..3.0f64) {
        let cert = SolvabilityCertificate::from_parts(frac * 0.25 * d0 * d0, d0);
        prop_assert!(!cert.admissible);
        prop_assert!(cert.r_min.is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solution_stays_in_the_certified_ball(v in prop::collection::vec((-1.0..1.0f64, -0.5..0.5f64), 2..4), frac in 0.1..0.9f64) {
        let raw = instance(v, 0.5, SpaceDim::Three);
        let m = raw.dim() as f64;
        let dip = DipParams { depth: 0.7, x_lo: 0.0, x_hi: 1.5 * m + 1.0, r_join: 1.5 * m + 3.0, r_max: 60.0 };
        let contour = build_dip_contour(&raw, HalfPlane::Lower, &dip, 20).unwrap();
        prop_assume!(!raw.coupling.is_zero());
        let d0 = contour.d0(&raw);
        let (inst, _) = scale_to_variation(&raw, &contour, frac * 0.25 * d0 * d0).unwrap();
        let cont = Continuation::new(&inst, &contour).unwrap();
        let root = cont.solve(&SolverOptions::default()).unwrap();
        let r_min = root.certificate.r_min.unwrap();
        prop_assert!(op_norm(&root.x) <= r_min + 1e-9 * root.scale);
        for z in operator_root::linalg::eigenvalues(&root.h1).unwrap() {
            prop_assert!(z.im <= 1e-10);
            prop_assert!(cont.distance_to_a1(z) <= r_min + 1e-9);
        }
    }
}
