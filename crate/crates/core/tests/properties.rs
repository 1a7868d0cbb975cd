use std::f64::consts::TAU;

use proptest::prelude::*;

use znav::curvature::kappa_cozermelo;
use znav::drift::{DriftKind, DriftSpec};
use znav::duality::dualize_zermelo;
use znav::geometry::{Field, Point, Surface};
use znav::hamiltonian::{CoZermelo, CotangentPoint, FiberPoint, Problem, Zermelo};

fn wavy_torus() -> Surface {
    Surface::conformal_torus(Field::parse("0.2*sin(x)*cos(y)").unwrap()).unwrap()
}

/// Frame components of a constant drift with norm in `[lo, hi)`.
fn drift_components(lo: f64, hi: f64) -> impl Strategy<Value = (f64, f64)> {
    (lo..hi, 0.0..TAU).prop_map(|(r, a)| (r * a.cos(), r * a.sin()))
}

fn covector() -> impl Strategy<Value = CotangentPoint> {
    (0.0..TAU, 0.0..TAU, 0.1f64..10.0, 0.0..TAU)
        .prop_map(|(x, y, m, a)| CotangentPoint { q: Point::new(x, y), p: [m * a.cos(), m * a.sin()] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonians_are_positively_homogeneous(
        (c1, c2) in drift_components(0.0, 0.9),
        lambda in covector(),
        s in 0.1f64..10.0,
        vector in any::<bool>(),
    ) {
        let p = if vector {
            Problem::Zermelo(Zermelo::new(wavy_torus(), DriftSpec::constant(DriftKind::VectorField, c1, c2)).unwrap())
        } else {
            Problem::CoZermelo(CoZermelo::new(wavy_torus(), DriftSpec::constant(DriftKind::OneForm, c1, c2)).unwrap())
        };
        let h = p.hamiltonian(&lambda).unwrap();
        let hs = p.hamiltonian(&CotangentPoint { q: lambda.q, p: [s * lambda.p[0], s * lambda.p[1]] }).unwrap();
        prop_assert!(h > 0.0);
        prop_assert!((hs - s * h).abs() <= 1e-12 * (s * h).max(1.0));
    }

    #[test]
    fn fiber_points_lie_on_the_unit_level(
        (c1, c2) in drift_components(0.0, 0.9),
        x in 0.0..TAU, y in 0.0..TAU, theta in 0.0..TAU,
    ) {
        let p = Problem::CoZermelo(CoZermelo::new(wavy_torus(), DriftSpec::constant(DriftKind::OneForm, c1, c2)).unwrap());
        let fp = FiberPoint::new(x, y, theta);
        let lambda = p.covector_of(&fp).unwrap();
        prop_assert!((p.hamiltonian(&lambda).unwrap() - 1.0).abs() < 1e-12);
        let back = p.fiber_point_of(&lambda).unwrap();
        let d = (back.theta - theta).rem_euclid(TAU);
        prop_assert!(d.min(TAU - d) < 1e-10);
    }

    #[test]
    fn dual_problem_has_the_same_hamiltonian(
        (c1, c2) in drift_components(0.05, 0.9),
        lambda in covector(),
    ) {
        let z = Zermelo::new(wavy_torus(), DriftSpec::constant(DriftKind::VectorField, c1, c2)).unwrap();
        let d = dualize_zermelo(&z, None).unwrap();
        let a = d.source.hamiltonian(&lambda).unwrap();
        let b = d.dual.hamiltonian(&lambda).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{} vs {}", a, b);
        let (n, nd) = d.drift_norms(lambda.q).unwrap();
        prop_assert!((n - nd).abs() < 1e-12);
    }

    #[test]
    fn round_sphere_curvature_is_inverse_square_radius(
        radius in 0.3f64..3.0,
        x in -3.0f64..3.0, y in -3.0f64..3.0, theta in 0.0..TAU,
    ) {
        let s = Surface::sphere(radius).unwrap();
        let k = kappa_cozermelo(&s, &DriftSpec::zero(DriftKind::OneForm), &FiberPoint::new(x, y, theta)).unwrap();
        prop_assert!((k * radius * radius - 1.0).abs() < 1e-8, "{}", k);
    }
}
