use nlqf_core::algebra::characteristic_from;
use nlqf_core::densities::{
    g_deformed_density, integrate_density, integrate_spec, DensitySpec, GDescriptor, PreparedDensity,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn spd(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), n).prop_map(move |a| {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { 0.3 } else { 0.0 })
                    .collect()
            })
            .collect()
    })
}

fn box_for(f: &[Vec<f64>]) -> Vec<(f64, f64)> {
    (0..f.len()).map(|i| (-10.0 * f[i][i].sqrt(), 10.0 * f[i][i].sqrt())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn vacuum_density_is_normalized(f in (1usize..=2).prop_flat_map(spd)) {
        let b = box_for(&f);
        let total = integrate_spec(&DensitySpec::VacuumGaussian { f }, &b, 161).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-6, "{}", total);
    }

    #[test]
    fn one_particle_density_is_normalized(f in spd(2), re in prop::collection::vec(-1.0f64..1.0, 2), im in prop::collection::vec(-1.0f64..1.0, 2)) {
        let s: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        // rescale so that S†F⁻¹S = 1/2
        let d = PreparedDensity::new(&DensitySpec::OneParticle { f: f.clone(), s: s.clone() }, 0.0).unwrap();
        let c = (0.5 / d.s_norm().unwrap()).sqrt();
        let s: Vec<Complex64> = s.iter().map(|z| z * c).collect();
        let b = box_for(&f);
        let spec = DensitySpec::OneParticle { f, s };
        let d = PreparedDensity::new(&spec, 0.0).unwrap();
        prop_assert!((d.s_norm().unwrap() - 0.5).abs() < 1e-12);
        let total = integrate_spec(&spec, &b, 161).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-6, "{}", total);
    }

    #[test]
    fn g_deformed_density_is_normalized(v in 0.05f64..2.0) {
        let half = 1.0 + 9.0 * v.sqrt();
        let total = integrate_density(|x| g_deformed_density(&GDescriptor::XMinusTanh, v, x[0]).unwrap(), &[(-half, half)], 4001).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-6, "{}", total);
    }

    #[test]
    fn one_particle_prefactor_is_a_quadratic_form(f in spd(2), x in prop::collection::vec(-3.0f64..3.0, 2)) {
        // S ∝ first column of F: F⁻¹S is a unit vector
        let s = vec![Complex64::new(f[0][0], 0.0), Complex64::new(f[1][0], 0.0)];
        let c = 1.0 / f[0][0].sqrt();
        let s: Vec<Complex64> = s.iter().map(|z| z * c).collect();
        let d = PreparedDensity::new(&DensitySpec::OneParticle { f, s }, 0.0).unwrap();
        prop_assert!((d.s_norm().unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((d.prefactor(&x) - c * c * x[0] * x[0]).abs() < 1e-10 * (1.0 + x[0] * x[0] * c * c));
    }
}

#[test]
fn density_is_the_fourier_transform_of_the_characteristic_function() {
    // p(x) = (1/2π) ∫ e^{-iλx} χ(λ) dλ in one dimension
    let f = vec![vec![0.7]];
    let s = [Complex64::new(0.5, 0.3)];
    let spec = DensitySpec::OneParticle { f: f.clone(), s: s.to_vec() };
    let d = PreparedDensity::new(&spec, 0.0).unwrap();
    for x in [-1.5, -0.2, 0.0, 0.8, 2.0] {
        let integrand = |l: &[f64]| {
            let chi = characteristic_from(&f, Some(&s), &[l[0]]).unwrap();
            (Complex64::from_polar(1.0, -l[0] * x) * chi).re / (2.0 * std::f64::consts::PI)
        };
        // the characteristic function is a Gaussian times a polynomial: box of ±16
        let p = integrate_density(integrand, &[(-16.0, 16.0)], 4001).unwrap();
        assert!((p - d.eval(&[x]).unwrap()).abs() < 1e-10, "x = {x}");
    }
}

#[test]
fn unit_norm_excess_is_flagged() {
    let spec = DensitySpec::OneParticle { f: vec![vec![1.0]], s: vec![Complex64::new(1.2, 0.0)] };
    let d = PreparedDensity::new(&spec, 0.0).unwrap();
    assert!(d.exceeds_unit_norm());
    assert!(d.eval(&[0.0]).unwrap() < 0.0);
}

#[test]
fn identity_deformation_is_the_gaussian() {
    let v = 0.8;
    let spec = DensitySpec::VacuumGaussian { f: vec![vec![v]] };
    for y in [-2.0, -0.1, 0.0, 1.3] {
        let a = g_deformed_density(&GDescriptor::Identity, v, y).unwrap();
        let b = nlqf_core::densities::joint_density(&spec, &[y]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
