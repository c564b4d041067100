//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! always exits 0; the lines are the result.

use std::f64::consts::PI;
use std::time::Instant;

use csfq::circuit::*;
use csfq::constants::{ghz, to_ghz};
use csfq::decoherence::*;
use csfq::design::*;
use csfq::multilevel::*;
use csfq::noise::*;
use csfq::photon::*;
use csfq::rb::*;
use csfq::spectro::*;

const HZ: f64 = 2.0 * PI;

fn device() -> CircuitParams {
    let f = 1e-15;
    CircuitParams {
        caps: CapacitanceSet {
            c12: 18.13 * f,
            c13: 17.91 * f,
            c23: 10.56 * f,
            c01: 62.9 * f,
            c02: 30.4 * f,
            c03: 32.9 * f,
            c1b: 2.60 * f,
            c2b: 2.61 * f,
            c3b: 0.21 * f,
            c1d: 0.15 * f,
            c2d: 0.02 * f,
            c3d: 0.11 * f,
        },
        jc: 3.96e6,
        alpha: 0.61,
        area_large: 0.0424e-12,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

type Outcome = Result<(bool, String), csfq::Error>;

fn c1() -> Outcome {
    let s = diagonalize(&device(), &BiasPoint::at_flux(0.5), 3, Truncation::default())?;
    let (w01, w12, w02) = (to_ghz(s.transition(0, 1)?), to_ghz(s.transition(1, 2)?), to_ghz(s.transition(0, 2)?));
    let an = w12 - w01;
    let ok = rel(w01, 1.708) < 0.02 && rel(w12, 5.398) < 0.02 && rel(w02, 7.107) < 0.02 && rel(an, 3.69) < 0.03;
    Ok((ok, format!("w01 {w01:.4} w12 {w12:.4} w02 {w02:.4} anharm {an:.4} GHz")))
}

fn c2() -> Outcome {
    let p = device();
    let trunc = Truncation::default();
    let fluxes: Vec<f64> = (0..=20).map(|i| 0.498 + 0.0002 * i as f64).collect();
    let sp = sweep_flux(&p, &BiasPoint::at_flux(0.5), &fluxes, 3, trunc)?;
    let mut asym: f64 = 0.0;
    for i in 0..fluxes.len() {
        let j = fluxes.len() - 1 - i;
        for (a, b) in [(0, 1), (0, 2)] {
            let (x, y) = (sp[i].transition(a, b)?, sp[j].transition(a, b)?);
            asym = asym.max(rel(x, y));
        }
    }
    let mut data = SpectroscopyDataset::default();
    for (k, s) in sp.iter().enumerate().step_by(2) {
        for tag in [TransitionTag::T01, TransitionTag::T02] {
            data.points.push(SpectroPoint { flux: fluxes[k], freq_ghz: to_ghz(tag.observed(&s.energies)), tag, weight: 1.0 });
        }
    }
    let start = CircuitParams { jc: 3.6e6, alpha: 0.66, ..p };
    let fit = fit_junctions(&start, &data, &JunctionBounds::default(), trunc, 400)?;
    let (ej, ea) = (rel(fit.params.jc, p.jc), rel(fit.params.alpha, p.alpha));
    let ok = asym < 1e-6 && ej < 5e-3 && ea < 5e-3;
    Ok((ok, format!("max asymmetry {asym:.1e}; fit jc err {ej:.1e} alpha err {ea:.1e}")))
}

fn c3() -> Outcome {
    let m = charge_modulation(&device(), 0.5, 8, Truncation::default())?.map(|w| w / HZ);
    let paper = [133.0, 626.0, 493.0];
    let ok = m.iter().zip(paper).all(|(a, b)| a / b <= 2.0 && b / a <= 2.0);
    Ok((ok, format!("{:.1} / {:.1} / {:.1} Hz", m[0], m[1], m[2])))
}

fn c4() -> Outcome {
    let p = device();
    let t = Truncation::default();
    let at_sym = drive_matrix_element(&p, &BiasPoint::at_flux(0.5), 0, 2, t)?;
    let off = drive_matrix_element(&p, &BiasPoint::at_flux(0.5018), 0, 2, t)?;
    Ok((at_sym * 1e4 <= off, format!("|N02| {at_sym:.2e} at 0.5, {off:.2e} at 0.5018")))
}

fn c5() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2u32, 10, 50, 150] {
        let (i, xs) = filter_moments(n)?;
        let good = (i - 1.24).abs() <= 0.02 && rel(xs, PI * n as f64) <= 0.02;
        ok &= good;
        parts.push(format!("N={n}: I {i:.4} X*/Npi {:.4}{}", xs / (PI * n as f64), if good { "" } else { " (out)" }));
    }
    Ok((ok, parts.join("; ")))
}

const A_FLUX: f64 = 1.8e-14;
const ALPHA: f64 = 0.68;

fn slope_0501() -> csfq::Result<f64> {
    Ok(flux_sensitivity(&device(), &BiasPoint::at_flux(0.501), (0, 1), 1, Truncation::default())?.abs())
}

fn c6() -> Outcome {
    let k = slope_0501()?;
    let a = A_FLUX * k * k;
    let pts: Vec<(u32, f64)> = [1u32, 5, 10, 20, 40, 100].iter().map(|&n| (n, gamma_n(a, ALPHA, n))).collect();
    let fit = fit_powerlaw_psd(&pts)?;
    let ratio = gamma_n(a, ALPHA, 1) / gamma_n(a, ALPHA, 100);
    let measured = 6.8 / 1.4;
    let ok = rel(fit.a, a) < 1e-6 && (fit.alpha - ALPHA).abs() < 1e-6 && (ratio - 6.46).abs() < 0.05 && rel(ratio, measured) <= 0.35;
    Ok((
        ok,
        format!(
            "A err {:.1e} alpha err {:.1e}; T(100)/T(1) {ratio:.3} vs measured {measured:.2} ({:.0}% apart)",
            rel(fit.a, a),
            (fit.alpha - ALPHA).abs(),
            100.0 * rel(ratio, measured)
        ),
    ))
}

fn c7() -> Outcome {
    let k = slope_0501()?;
    let psd = PowerLawPsd::new(A_FLUX, ALPHA, HZ * 1.0, HZ * 1e9)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [1u32, 10, 100] {
        let g = gamma_n(A_FLUX * k * k, ALPHA, n);
        let taus: Vec<f64> = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0].iter().map(|f| f / g).collect();
        let mc = coherence_curves(&psd, Coupling::Linear(k), &[Sequence::Cpmg(n)], &taus, 512, 1024, 42)?;
        let worst = mc[0].iter().map(|e| ((e.coherence - (-(g * e.tau).powf(1.0 + ALPHA)).exp()) / e.stderr).abs()).fold(0.0, f64::max);
        ok &= worst <= 3.0;
        parts.push(format!("N={n}: max |z| {worst:.2}"));
    }
    Ok((ok, parts.join("; ")))
}

fn c8() -> Outcome {
    let p = device();
    let k2 = 0.5 * flux_sensitivity(&p, &BiasPoint::at_flux(0.5), (0, 1), 2, Truncation::default())?;
    let k1 = slope_0501()?;
    let omega_min = HZ / (200e-6 * 2f64.powi(18));
    // second anchor: 1/f noise with the same echo rate at 0.501
    let g1 = gamma_n(A_FLUX * k1 * k1, ALPHA, 1);
    let a_pink = (g1.powi(2) / (2.0 * FILTER_AREA)) * PI / (k1 * k1);
    let tau = 4.7e-6;
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, a, al) in [("A=1.8e-14 alpha=0.68", A_FLUX, ALPHA), ("echo-matched 1/f", a_pink, 1.0 - 1e-9)] {
        let psd = PowerLawPsd::new(a, al, omega_min, HZ * 1e9)?;
        let e = coherence_curves(&psd, Coupling::Quadratic(k2), &[Sequence::Ramsey], &[tau], 512, 1024, 8)?[0][0];
        let good = e.coherence - 3.0 * e.stderr > (-1.0f64).exp();
        ok &= good;
        parts.push(format!("{label}: C(4.7us) {:.4} +- {:.4}", e.coherence, e.stderr));
    }
    Ok((ok, parts.join("; ")))
}

fn c9() -> Outcome {
    let p = device();
    let t = Truncation::default();
    let temp = 27e-3;
    let mut worst: f64 = 0.0;
    for (flux, g10, g01, g21, g20) in [(0.5, 29.5e3, 1.4e3, 124.3e3, 27.8e3), (0.501, 63.4e3, 1.2e3, 78.1, 61.1e3)] {
        let s = diagonalize(&p, &BiasPoint::at_flux(flux), 3, t)?;
        let (w12, w02) = (s.transition(1, 2)?, s.transition(0, 2)?);
        let rates = RateMatrix::constrained(g10, g01, g21, g20, w12, w02, temp)?;
        let times: Vec<f64> = (0..=120).map(|i| i as f64 * 1e-6).collect();
        let p0 = [0.0, 0.0, 1.0];
        let traces = RelaxationTraces::simulate(&rates, &p0, &times)?;
        let c = RelaxationConstraints { gamma10: g10, gamma01: g01, omega12: w12, omega02: w02, temperature: temp, initial: p0 };
        let fit = fit_relaxation(&traces, &c)?;
        worst = worst.max(rel(fit.gamma21, g21)).max(rel(fit.gamma20, g20));
    }
    let s = diagonalize(&p, &BiasPoint::at_flux(0.5), 3, t)?;
    let (w01, w12) = (s.transition(0, 1)?, s.transition(1, 2)?);
    let th = RateMatrix::thermal(29.5e3, 124.3e3, 27.8e3, w01, w12, temp)?.stationary()?;
    let kt = csfq::constants::K_B * temp / csfq::constants::HBAR;
    let b = [1.0, (-w01 / kt).exp(), (-(w01 + w12) / kt).exp()];
    let z: f64 = b.iter().sum();
    let gibbs_err = (0..3).map(|i| (th[i] - b[i] / z).abs()).fold(0.0, f64::max);
    let teff = effective_temperature(0.95, ghz(1.708))?;
    let ok = worst < 0.01 && gibbs_err < 1e-9 && (27e-3..=32e-3).contains(&teff);
    Ok((ok, format!("rate round trip err {worst:.1e}; Gibbs err {gibbs_err:.1e}; T_eff {:.2} mK", teff * 1e3)))
}

fn c10() -> Outcome {
    let kappa = HZ * 0.6e6;
    let chi = HZ * 0.5e6;
    let wr = calibrate_cavity_frequency(&[(213e3, 0.25), (4.68e3, 0.067)], kappa, chi)?;
    let t_hi = required_temperature(213e3, wr, kappa, chi, Sequence::Ramsey)?;
    let t_lo = required_temperature(4.68e3, wr, kappa, chi, Sequence::Ramsey)?;
    let params = PhotonNoiseParams::from_temperature(wr, wr / kappa, 0.25, chi)?;
    let dur = 2e-3;
    let traj = simulate_rtn(&params, dur, 1e-8, 3)?;
    let occ = traj.occupancy();
    let expect = params.n_th / (1.0 + 2.0 * params.n_th);
    let tc = 1.0 / (params.rate_up() + params.rate_down());
    let se = (2.0 * expect * (1.0 - expect) * tc / dur).sqrt();
    let z = (occ - expect) / se;
    let ok = rel(t_hi, 0.25) <= 0.2 && rel(t_lo, 0.067) <= 0.2 && z.abs() <= 5.0;
    Ok((
        ok,
        format!(
            "omega_r/2pi {:.4} GHz; T(213 kHz) {:.1} mK; T(4.68 kHz) {:.1} mK; occupancy {occ:.4} vs {expect:.4} (z {z:.2})",
            to_ghz(wr),
            t_hi * 1e3,
            t_lo * 1e3
        ),
    ))
}

fn rb_device() -> csfq::Result<RbDevice> {
    let rates = RateMatrix::new([[0.0, 1.4e3, 0.1], [29.5e3, 0.0, 8.8], [27.8e3, 124.3e3, 0.0]])?;
    RbDevice::from_circuit(&device(), &BiasPoint::at_flux(0.5), Truncation::default(), rates, [1.0 / 4.7e-6, 1.0 / 3.4e-6, 1.0 / 5.4e-6])
}

fn c11() -> Outcome {
    let b = RbBackend::Pulsed { device: rb_device()?, pulses: PulseSpec::default() };
    let rwa = fit_rb(&run_rb(&RbConfig { frame: DriveFrame::Rwa, ..Default::default() }, &b)?)?.f_ave * 100.0;
    let cr = fit_rb(&run_rb(&RbConfig { frame: DriveFrame::CounterRotating, ..Default::default() }, &b)?)?.f_ave * 100.0;
    let cfg3 = RbConfig { levels: 3, frame: DriveFrame::Rwa, ..Default::default() };
    let rec3 = run_rb(&cfg3, &b)?;
    let longest = *cfg3.lengths.iter().max().unwrap();
    let last: Vec<f64> = rec3.iter().filter(|r| r.m == longest).map(|r| r.leakage).collect();
    let p2 = last.iter().sum::<f64>() / last.len() as f64;
    let (a0, b0, p): (f64, f64, f64) = (0.47, 0.51, 0.9985);
    let synth: Vec<RbRecord> =
        DEFAULT_LENGTHS.iter().map(|&m| RbRecord { m, randomization: 0, survival: a0 * p.powi(m as i32) + b0, leakage: 0.0 }).collect();
    let f = fit_rb(&synth)?;
    let rt = rel(f.a0, a0).max(rel(f.b0, b0)).max(rel(f.p, p));
    let ok = (rwa - 99.95).abs() <= 0.03 && (cr - 99.85).abs() <= 0.05 && p2 < 1e-3 && rt < 1e-9;
    Ok((
        ok,
        format!("F_ave RWA {rwa:.3}%, counter-rotating {cr:.3}%; 3-level mean p2 at m={longest}: {p2:.2e}; synthetic fit err {rt:.1e}"),
    ))
}

fn c12() -> Outcome {
    let p = device();
    let c_tilde = 50e-3;
    let lv = DesignVector::from_circuit(&p, c_tilde)?;
    let m0 = metrics(&lv, p.jc, c_tilde, Truncation::default())?;
    let bound = HZ * 1e3;
    let t = |metric, value: f64, weight, upper_bound| Target { metric, value, weight, upper_bound };
    let targets = DesignTargets {
        entries: vec![
            t(Metric::Omega01, m0.omega01, 1.0, None),
            t(Metric::Anharmonicity, m0.anharmonicity, 1.0, None),
            t(Metric::PersistentCurrent, m0.persistent_current, 1.0, None),
            t(Metric::ChargeMod01, 0.0, 0.0, Some(bound)),
            t(Metric::ChargeMod12, 0.0, 0.0, Some(bound)),
            t(Metric::ChargeMod02, 0.0, 0.0, Some(bound)),
        ],
        tolerance: 0.05,
    };
    let three = optimize(&targets, &DesignOptions { mode: PadMode::ThreePad, ..Default::default() }, None)?;
    let two = optimize(&targets, &DesignOptions { mode: PadMode::TwoPad, ..Default::default() }, None)?;
    let worst3 = [Metric::Omega01, Metric::Anharmonicity, Metric::PersistentCurrent]
        .iter()
        .map(|m| rel(m.of(&three.metrics), m.of(&m0)))
        .fold(0.0, f64::max);
    let cm2 = two.metrics.charge_modulation.iter().cloned().fold(0.0, f64::max) / HZ;
    let ok = worst3 <= 0.05 && three.feasible && !two.feasible && cm2 > 0.1e6;
    Ok((
        ok,
        format!(
            "three-pad feasible {} worst target error {:.2}%; two-pad feasible {} max charge modulation {:.3} MHz",
            three.feasible,
            worst3 * 100.0,
            two.feasible,
            cm2 / 1e6
        ),
    ))
}

fn c13() -> Outcome {
    let run = || -> csfq::Result<Vec<u64>> {
        let psd = PowerLawPsd::new(A_FLUX, ALPHA, HZ, HZ * 1e9)?;
        let mc = coherence_curves(&psd, Coupling::Linear(7e11), &[Sequence::Cpmg(1), Sequence::Cpmg(10)], &[1e-6, 3e-6], 256, 256, 7)?;
        let mut bits: Vec<u64> = mc.iter().flatten().flat_map(|e| [e.coherence.to_bits(), e.stderr.to_bits()]).collect();
        let ph = PhotonNoiseParams::from_temperature(ghz(8.0), 13000.0, 0.2, HZ * 0.5e6)?;
        bits.push(dephasing_decay(&ph, Sequence::Ramsey, 2e-6, 300, 7)?.coherence.to_bits());
        let cfg = RbConfig { lengths: vec![2, 8, 16], randomizations: 6, seed: 7, ..Default::default() };
        let rb = run_rb(&cfg, &RbBackend::Depolarizing { p: 0.999 })?;
        bits.extend(rb.iter().map(|r| r.survival.to_bits()));
        let pulsed = RbBackend::Pulsed { device: rb_device()?, pulses: PulseSpec::default() };
        let rb = run_rb(&RbConfig { lengths: vec![2, 4, 8], randomizations: 4, seed: 7, ..Default::default() }, &pulsed)?;
        bits.extend(rb.iter().map(|r| r.survival.to_bits()));
        Ok(bits)
    };
    let mut outs = Vec::new();
    for threads in [1usize, 8, 1] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        outs.push(pool.install(run)?);
    }
    let ok = outs.windows(2).all(|w| w[0] == w[1]);
    Ok((ok, format!("{} values bit-identical across runs with 1, 8, 1 threads: {ok}", outs[0].len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("spectrum reproduction", c1),
        ("flux-sweep symmetry and junction fit", c2),
        ("charge dispersion", c3),
        ("selection rule", c4),
        ("filter moments", c5),
        ("PSD round trip and pulse-number scaling", c6),
        ("Monte Carlo vs closed form", c7),
        ("symmetry-point flux noise", c8),
        ("multilevel dynamics", c9),
        ("photon noise", c10),
        ("randomized benchmarking", c11),
        ("design optimization", c12),
        ("determinism", c13),
    ];
    let only: Vec<usize> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect()).unwrap_or_default();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok((true, d)) => ("PASS", d),
            Ok((false, d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        println!("{tag} {:>2}. {name}: {detail} [{:.1} s]", i + 1, t.elapsed().as_secs_f64());
    }
}
