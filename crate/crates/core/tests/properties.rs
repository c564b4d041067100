use std::f64::consts::PI;

use nalgebra::SMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use csfq::circuit::{diagonalize, CavityParams};
use csfq::config::{CavityConfig, DeviceConfig};
use csfq::constants::{HBAR, K_B};
use csfq::decoherence::{coherence_numeric, fit_powerlaw_psd, gamma_n, PowerLawPsd};
use csfq::design::DesignVector;
use csfq::multilevel::{evolve_populations, readout_calibrate, RateMatrix};
use csfq::noise::Sequence;
use csfq::optim::{nelder_mead, NmOptions};
use csfq::photon::{analytic_coherence, simulate_rtn, PhotonNoiseParams};
use csfq::rb::{clifford_group, dephasing_points, random_sequence, same_up_to_phase, DriveFrame, Lindblad, Rho};
use csfq::table::Table;
use csfq::{BiasPoint, CapacitanceSet, CircuitParams, Truncation};

fn simplex() -> impl Strategy<Value = [f64; 3]> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_filter_map("nonzero", |(a, b, c)| {
        let s = a + b + c;
        (s > 1e-6).then(|| [a / s, b / s, c / s])
    })
}

fn rates() -> impl Strategy<Value = RateMatrix> {
    proptest::array::uniform6(0.0..1e6f64).prop_map(|g| RateMatrix::new([[0.0, g[0], g[1]], [g[2], 0.0, g[3]], [g[4], g[5], 0.0]]).unwrap())
}

fn caps() -> impl Strategy<Value = CapacitanceSet> {
    proptest::array::uniform12(0.0..1.0f64).prop_map(|u| {
        let s = |x: f64, lo: f64, hi: f64| 1e-15 * (lo + (hi - lo) * x);
        CapacitanceSet {
            c12: s(u[0], 10.0, 25.0),
            c13: s(u[1], 10.0, 25.0),
            c23: s(u[2], 6.0, 15.0),
            c01: s(u[3], 40.0, 80.0),
            c02: s(u[4], 20.0, 40.0),
            c03: s(u[5], 20.0, 40.0),
            c1b: s(u[6], 0.0, 3.0),
            c2b: s(u[7], 0.0, 3.0),
            c3b: s(u[8], 0.0, 3.0),
            c1d: s(u[9], 0.0, 0.3),
            c2d: s(u[10], 0.0, 0.3),
            c3d: s(u[11], 0.0, 0.3),
        }
    })
}

fn circuit(caps: CapacitanceSet, alpha: f64) -> CircuitParams {
    CircuitParams { caps, jc: 3.96e6, alpha, area_large: 4.24e-14 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn populations_stay_on_simplex(r in rates(), p0 in simplex(), t in 0.0..1e-4f64) {
        let p = evolve_populations(&r, &p0, t).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn thermal_rates_relax_to_gibbs(
        g in proptest::array::uniform3(1e3..1e6f64),
        f01 in 0.5e9..5e9f64,
        f12 in 0.5e9..8e9f64,
        temp in 0.01..0.3f64,
    ) {
        let (w01, w12) = (2.0 * PI * f01, 2.0 * PI * f12);
        let r = RateMatrix::thermal(g[0], g[1], g[2], w01, w12, temp).unwrap();
        let p = r.stationary().unwrap();
        let b = |w: f64| (-HBAR * w / K_B / temp).exp();
        prop_assert!((p[1] / p[0] - b(w01)).abs() < 1e-8 * b(w01).max(1e-300) + 1e-14);
        prop_assert!((p[2] / p[0] - b(w01 + w12)).abs() < 1e-8 * b(w01 + w12).max(1e-300) + 1e-14);
        let late = evolve_populations(&r, &[0.0, 0.0, 1.0], 1e3 / g.iter().cloned().fold(f64::INFINITY, f64::min)).unwrap();
        for k in 0..3 {
            prop_assert!((late[k] - p[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn readout_calibration_round_trip(
        v in proptest::array::uniform3(-1.0..1.0f64),
        mix in 0.0..0.2f64,
        extra in simplex(),
    ) {
        prop_assume!((v[0] - v[1]).abs() > 1e-3 || (v[1] - v[2]).abs() > 1e-3);
        let preps: Vec<[f64; 3]> = vec![
            [1.0 - mix, mix, 0.0],
            [mix, 1.0 - 2.0 * mix, mix],
            [0.0, mix, 1.0 - mix],
            extra,
        ];
        let data: Vec<([f64; 3], f64)> =
            preps.iter().map(|p| (*p, p.iter().zip(&v).map(|(a, b)| a * b).sum())).collect();
        let cal = readout_calibrate(&data).unwrap();
        for k in 0..3 {
            prop_assert!((cal.v[k] - v[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn clifford_products_close(a in 0usize..24, b in 0usize..24) {
        let g = clifford_group();
        prop_assert_eq!(g.elements.len(), 24);
        let c = g.mul[a][b];
        prop_assert!(same_up_to_phase(&g.elements[c].unitary, &(g.elements[a].unitary * g.elements[b].unitary), 1e-9));
        prop_assert_eq!(g.mul[a][g.inv[a]], 0);
    }

    #[test]
    fn random_sequences_compose_to_identity(m in 0usize..64, seed in any::<u64>()) {
        let g = clifford_group();
        let s = random_sequence(m, seed);
        let total = s.all().fold(0usize, |acc, x| g.mul[x][acc]);
        prop_assert_eq!(total, 0);
        prop_assert_eq!(s.gates.len(), m);
    }

    #[test]
    fn telegraph_coherence_falls_with_occupancy(
        n1 in 0.0..0.3f64,
        dn in 1e-3..0.2f64,
        chi_over_kappa in 0.1..3.0f64,
        tau_kappa in 0.1..10.0f64,
        echo in any::<bool>(),
    ) {
        let omega_r = 2.0 * PI * 8e9;
        let q = 13641.0;
        let kappa = omega_r / q;
        let p = |n: f64| PhotonNoiseParams { omega_r, q_factor: q, n_th: n, chi: chi_over_kappa * kappa };
        let seq = if echo { Sequence::Cpmg(1) } else { Sequence::Ramsey };
        let tau = tau_kappa / kappa;
        let c1 = analytic_coherence(&p(n1), seq, tau).unwrap();
        let c2 = analytic_coherence(&p(n1 + dn), seq, tau).unwrap();
        prop_assert!(c1 <= 1.0 + 1e-12 && c2 >= 0.0);
        prop_assert!(c2 <= c1 + 1e-12, "C({}) = {} > C({}) = {}", n1 + dn, c2, n1, c1);
    }

    #[test]
    fn nelder_mead_never_worsens(
        center in proptest::array::uniform3(-2.0..2.0f64),
        x0 in proptest::array::uniform3(-3.0..3.0f64),
        scale in proptest::array::uniform3(0.1..10.0f64),
    ) {
        let f = |x: &[f64]| x.iter().zip(&center).zip(&scale).map(|((x, c), s)| s * (x - c).powi(2)).sum::<f64>() + (x[0] * x[1]).sin();
        let r = nelder_mead(&f, &x0, &[0.5; 3], &[-5.0; 3], &[5.0; 3], &NmOptions { max_iter: 200, sd_tolerance: 1e-10 });
        prop_assert!(r.f <= f(&x0));
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(r.x.iter().all(|x| (-5.0..=5.0).contains(x)));
    }

    #[test]
    fn config_round_trip(c in caps(), alpha in 0.3..1.0f64, with_cavity in any::<bool>(), v in 1e-7..1e-5f64) {
        let cavity = with_cavity.then_some(CavityConfig {
            params: CavityParams { omega_r: 2.0 * PI * 8.1846e9, q_factor: 13641.0, v_rms: v },
            chi: 2.0 * PI * 0.5e6,
        });
        let d = DeviceConfig { circuit: circuit(c, alpha), c_tilde: 0.05, cavity };
        prop_assert_eq!(DeviceConfig::parse(&d.emit()).unwrap(), d);
    }

    #[test]
    fn table_round_trip(rows in proptest::collection::vec(proptest::array::uniform3(any::<f64>()), 0..20)) {
        let rows: Vec<[f64; 3]> = rows.into_iter().filter(|r| r.iter().all(|x| x.is_finite())).collect();
        let mut t = Table::new(&["a", "b", "c"]);
        t.meta("note", "x");
        for r in &rows {
            t.push(r.to_vec());
        }
        let back = Table::parse(&t.render()).unwrap();
        for (i, name) in ["a", "b", "c"].iter().enumerate() {
            let col = back.column(name).unwrap();
            prop_assert_eq!(col.len(), rows.len());
            for (x, r) in col.iter().zip(&rows) {
                prop_assert_eq!(x.to_bits(), r[i].to_bits());
            }
        }
    }

    #[test]
    fn gamma_n_round_trip(a in 1e4..1e12f64, alpha in 0.1..1.5f64) {
        let pts: Vec<(u32, f64)> = [1u32, 2, 5, 10, 50, 100].iter().map(|&n| (n, gamma_n(a, alpha, n))).collect();
        let f = fit_powerlaw_psd(&pts).unwrap();
        prop_assert!((f.alpha - alpha).abs() < 1e-6);
        prop_assert!((f.a / a - 1.0).abs() < 1e-5);
    }

    #[test]
    fn cpmg_coherence_is_bounded_and_decreasing(
        a in 1e6..1e10f64,
        alpha in 0.3..1.2f64,
        n in 1u32..20,
        t1 in 0.1e-6..5e-6f64,
        ratio in 1.1..3.0f64,
    ) {
        let psd = PowerLawPsd::new(a, alpha, 2.0 * PI, 2.0 * PI * 1e9).unwrap();
        let c1 = coherence_numeric(&psd, n, t1).unwrap();
        let c2 = coherence_numeric(&psd, n, t1 * ratio).unwrap();
        prop_assert!((0.0..=1.0).contains(&c1));
        prop_assert!(c2 <= c1 + 1e-12);
    }

    #[test]
    fn dephasing_points_reproduce_rates(g in proptest::array::uniform3(1e4..1e6f64)) {
        // triangle inequality on the distances sqrt(2 gamma)
        let d = g.map(|x| (2.0 * x).sqrt());
        prop_assume!(d[0] + d[1] > d[2] && d[1] + d[2] > d[0] && d[0] + d[2] > d[1]);
        let p = dephasing_points(g).unwrap();
        let dist2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
        prop_assert!((dist2(p[0], p[1]) / (2.0 * g[0]) - 1.0).abs() < 1e-9);
        prop_assert!((dist2(p[1], p[2]) / (2.0 * g[1]) - 1.0).abs() < 1e-9);
        prop_assert!((dist2(p[0], p[2]) / (2.0 * g[2]) - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn swapping_nodes_two_and_three_keeps_spectrum(c in caps(), alpha in 0.4..0.8f64, flux in 0.495..0.505f64) {
        let p = circuit(c, alpha);
        let mut q = p;
        q.caps.c12 = c.c13;
        q.caps.c13 = c.c12;
        q.caps.c02 = c.c03;
        q.caps.c03 = c.c02;
        q.caps.c2b = c.c3b;
        q.caps.c3b = c.c2b;
        q.caps.c2d = c.c3d;
        q.caps.c3d = c.c2d;
        let t = Truncation { nmax: 8 };
        let a = diagonalize(&p, &BiasPoint::at_flux(flux), 3, t).unwrap();
        // mirror image: node 2 <-> 3 reverses the loop orientation
        let b = diagonalize(&q, &BiasPoint::at_flux(1.0 - flux), 3, t).unwrap();
        for (j, k) in [(0, 1), (1, 2), (0, 2)] {
            let (x, y) = (a.transition(j, k).unwrap(), b.transition(j, k).unwrap());
            prop_assert!((x - y).abs() < 1e-6 * x.abs(), "{} vs {}", x, y);
        }
    }

    #[test]
    fn design_vector_ignores_pad_labels(c in caps(), alpha in 0.4..0.8f64) {
        let p = circuit(c, alpha);
        let mut q = p;
        q.caps.c12 = c.c13;
        q.caps.c13 = c.c12;
        q.caps.c02 = c.c03;
        q.caps.c03 = c.c02;
        q.caps.c2b = c.c3b;
        q.caps.c3b = c.c2b;
        q.caps.c2d = c.c3d;
        q.caps.c3d = c.c2d;
        let (a, b) = (DesignVector::from_circuit(&p, 0.05).unwrap(), DesignVector::from_circuit(&q, 0.05).unwrap());
        for k in 0..6 {
            prop_assert!((a.lambda[k] - b.lambda[k]).abs() <= 1e-12 * a.lambda[k].abs());
        }
    }

    #[test]
    fn lindblad_keeps_density_matrix_physical(
        r in proptest::array::uniform6(0.0..1e6f64),
        deph in proptest::array::uniform3(1e4..3e5f64),
        amp in 0.0..2e9f64,
        phi in 0.0..(2.0 * PI),
        rwa in any::<bool>(),
    ) {
        let d = deph.map(|x| (2.0 * x).sqrt());
        prop_assume!(d[0] + d[1] > d[2] && d[1] + d[2] > d[0] && d[0] + d[2] > d[1]);
        let levels = [0.0, 2.0 * PI * 1.71e9, 2.0 * PI * 7.11e9];
        let coupling = SMatrix::<f64, 3, 3>::from_row_slice(&[0.0, 1.0, 0.0, 1.0, 0.0, 2.58, 0.0, 2.58, 0.0]);
        let rates = [[0.0, r[0], r[1]], [r[2], 0.0, r[3]], [r[4], r[5], 0.0]];
        let frame = if rwa { DriveFrame::Rwa } else { DriveFrame::CounterRotating };
        let l = Lindblad::new(levels, coupling, rates, dephasing_points(deph).unwrap(), frame);
        let mut rho: Rho<3> = Rho::zeros();
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let out = l.evolve(&rho, 0.0, 5e-9, |_| amp, phi, 2e-13).unwrap();
        let tr: C64 = out.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-9 && tr.im.abs() < 1e-9);
        prop_assert!((out - out.adjoint()).norm() < 1e-9);
        let herm = (out + out.adjoint()) * C64::new(0.5, 0.0);
        let ev = herm.symmetric_eigenvalues();
        prop_assert!(ev.iter().all(|&e| e > -1e-7), "{:?}", ev);
    }
}

#[test]
fn telegraph_occupancy_obeys_detailed_balance() {
    let omega_r = 2.0 * PI * 8.1846e9;
    for (i, n) in [0.05, 0.2, 0.6].into_iter().enumerate() {
        let p = PhotonNoiseParams { omega_r, q_factor: 13641.0, n_th: n, chi: 2.0 * PI * 0.5e6 };
        assert!((p.rate_up() / p.rate_down() - p.occupancy() / (1.0 - p.occupancy())).abs() < 1e-12);
        let tau_c = 1.0 / (p.rate_up() + p.rate_down());
        let duration = 4e-3;
        let traj = simulate_rtn(&p, duration, 1e-8, 100 + i as u64).unwrap();
        let q = p.occupancy();
        let se = (2.0 * q * (1.0 - q) * tau_c / duration).sqrt();
        let z = (traj.occupancy() - q) / se;
        assert!(z.abs() < 4.0, "n = {n}: z = {z}");
    }
}
