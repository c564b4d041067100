//! `csfq` command-line front end.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use csfq::circuit::{diagonalize, flux_sensitivity, sweep_flux};
use csfq::config::DeviceConfig;
use csfq::constants::to_ghz;
use csfq::decoherence::{coherence_approx, coherence_numeric, fit_powerlaw_psd, gamma_n, PowerLawPsd};
use csfq::design::{self, DesignOptions, DesignTargets, DesignVector, Metric, PadMode, Target};
use csfq::multilevel::{fit_relaxation, RateMatrix, RelaxationConstraints, RelaxationTraces};
use csfq::noise::{coherence_curves, frequency_histogram, sample_trajectories, Coupling, NoiseModel, Sequence};
use csfq::photon::{analytic_coherence, dephasing_decay, dephasing_rate, n_thermal, required_temperature, PhotonNoiseParams};
use csfq::rb::{average_by_length, fit_rb, run_rb, DriveFrame, PulseSpec, RampShape, RbBackend, RbConfig, RbDevice};
use csfq::spectro::{fit_junctions, JunctionBounds, SpectroscopyDataset};
use csfq::table::Table;
use csfq::{BiasPoint, Truncation};

const BUILTIN_DEVICE: &str = include_str!("../../../data/device_paper.cfg");
const HZ: f64 = 2.0 * PI;

#[derive(Parser, Debug)]
#[command(name = "csfq", version, about = "Capacitively shunted flux qubit modeling")]
struct Cli {
    /// Device description file; the bundled fabricated device if omitted.
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Charges per island kept in the basis.
    #[arg(long, global = true, default_value_t = 12)]
    nmax: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Transition frequencies versus flux.
    Spectrum(SpectrumArgs),
    /// Fit junction parameters to spectroscopy data.
    Fit(FitArgs),
    /// Closed-form CPMG coherence under power-law flux noise.
    Coherence(CoherenceArgs),
    /// Noise amplitude and exponent from decay rates versus pulse number.
    PsdExtract(PsdExtractArgs),
    /// Monte Carlo dephasing with Gaussian flux-noise trajectories.
    Mc(McArgs),
    /// Three-level population relaxation.
    Relax(RelaxArgs),
    /// Fit the 2-1 and 2-0 rates to population traces.
    FitRelax(FitRelaxArgs),
    /// Photon shot-noise dephasing.
    Photon(PhotonArgs),
    /// Randomized benchmarking.
    Rb(RbArgs),
    /// Design-parameter search.
    Design(DesignArgs),
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, default_value_t = 0.49)]
    flux_from: f64,
    #[arg(long, default_value_t = 0.51)]
    flux_to: f64,
    #[arg(long, default_value_t = 41)]
    points: usize,
    /// Levels to compute (at least 3).
    #[arg(long, default_value_t = 3)]
    levels: usize,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// CSV with columns flux,freq_ghz,transition[,weight].
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 400)]
    max_iter: u64,
}

#[derive(Args, Debug, Clone)]
struct NoiseArgs {
    /// Flux-noise amplitude A (Phi0^2 (rad/s)^(alpha-1)).
    #[arg(long, default_value_t = 1.8e-14)]
    psd_a: f64,
    #[arg(long, default_value_t = 0.68)]
    alpha: f64,
    /// Lower PSD cutoff (Hz).
    #[arg(long, default_value_t = 1.0)]
    f_min: f64,
    /// Upper PSD cutoff (Hz).
    #[arg(long, default_value_t = 1e9)]
    f_max: f64,
    /// Bias used to derive the coupling to flux.
    #[arg(long, default_value_t = 0.501)]
    flux: f64,
}

impl NoiseArgs {
    fn psd(&self) -> csfq::Result<PowerLawPsd> {
        PowerLawPsd::new(self.psd_a, self.alpha, HZ * self.f_min, HZ * self.f_max)
    }
}

#[derive(Args, Debug)]
struct CoherenceArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    /// Pulse numbers.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    pulses: Vec<u32>,
    /// Delay range (us).
    #[arg(long, default_value_t = 0.1)]
    tau_from: f64,
    #[arg(long, default_value_t = 20.0)]
    tau_to: f64,
    #[arg(long, default_value_t = 40)]
    points: usize,
}

#[derive(Args, Debug)]
struct PsdExtractArgs {
    /// Table with columns `n rate` (rate in 1/s).
    #[arg(long)]
    rates: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CouplingKind {
    Linear,
    Quadratic,
}

#[derive(Args, Debug)]
struct McArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, value_enum, default_value_t = CouplingKind::Linear)]
    coupling: CouplingKind,
    /// Pulse numbers; 0 is Ramsey.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pulses: Vec<u32>,
    /// Delays (us).
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    taus: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 1024)]
    trajectories: usize,
    /// Emit a histogram of instantaneous frequency shifts with this many bins
    /// instead of coherence values (uses the first delay).
    #[arg(long)]
    histogram: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct RateArgs {
    /// Rates (1/s).
    #[arg(long, default_value_t = 29.5e3)]
    gamma10: f64,
    #[arg(long, default_value_t = 1.4e3)]
    gamma01: f64,
    #[arg(long, default_value_t = 124.3e3)]
    gamma21: f64,
    #[arg(long, default_value_t = 27.8e3)]
    gamma20: f64,
    /// Temperature tying upward 1-2 and 0-2 rates (K).
    #[arg(long, default_value_t = 0.027)]
    temperature: f64,
    #[arg(long, default_value_t = 0.5)]
    flux: f64,
}

#[derive(Args, Debug)]
struct RelaxArgs {
    #[command(flatten)]
    rates: RateArgs,
    /// Initial level.
    #[arg(long, default_value_t = 2)]
    initial: usize,
    /// Duration (us).
    #[arg(long, default_value_t = 100.0)]
    t_max: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
}

#[derive(Args, Debug)]
struct FitRelaxArgs {
    #[command(flatten)]
    rates: RateArgs,
    /// Table with columns t_us p0 p1 p2.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct PhotonArgs {
    #[arg(long, default_value_t = 0.6)]
    kappa_mhz: f64,
    /// Per-photon shift; the device file value when omitted.
    #[arg(long)]
    chi_mhz: Option<f64>,
    /// Pulse number; 0 is Ramsey.
    #[arg(long, default_value_t = 0)]
    pulses: u32,
    /// Temperatures (mK) for the rate table.
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250")]
    temperatures: Vec<f64>,
    /// Rates (kHz) to invert into photon temperatures.
    #[arg(long, value_delimiter = ',')]
    target_rates: Vec<f64>,
    /// Monte Carlo trajectories per temperature (0 disables).
    #[arg(long, default_value_t = 0)]
    trajectories: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FrameKind {
    Rwa,
    CounterRotating,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ShapeKind {
    Linear,
    Cosine,
}

#[derive(Args, Debug)]
struct RbArgs {
    #[command(flatten)]
    rates: RateArgs,
    #[arg(long, value_enum, default_value_t = FrameKind::Rwa)]
    frame: FrameKind,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,196")]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    randomizations: usize,
    /// Pure dephasing times of the 0-1, 1-2, 0-2 pairs (us).
    #[arg(long, value_delimiter = ',', default_value = "4.7,3.4,5.4")]
    t_phi: Vec<f64>,
    #[arg(long, default_value_t = 260.0)]
    drive_mhz: f64,
    #[arg(long, default_value_t = 0.6)]
    rise_ns: f64,
    #[arg(long, default_value_t = 0.6)]
    fall_ns: f64,
    #[arg(long, default_value_t = 0.5)]
    gap_ns: f64,
    #[arg(long, value_enum, default_value_t = ShapeKind::Linear)]
    shape: ShapeKind,
    /// Replace the pulse simulation by a depolarizing channel that keeps
    /// this fraction of the polarization (e.g. 0.999).
    #[arg(long)]
    depolarizing: Option<f64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeKind {
    ThreePad,
    TwoPad,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Targets file: `metric value weight [upper_bound]` per line, SI units;
    /// `-` skips the value or bound. The device's own metrics with a 1 kHz
    /// charge-modulation bound when omitted.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeKind::ThreePad)]
    mode: ModeKind,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 250)]
    max_iter: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Module(String),
}

impl From<csfq::Error> for Failure {
    fn from(e: csfq::Error) -> Self {
        Failure::Module(e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Usage(msg.into()))
}

struct Ctx {
    device: DeviceConfig,
    device_label: String,
    trunc: Truncation,
    seed: Option<u64>,
}

impl Ctx {
    fn seed(&self) -> Res<u64> {
        self.seed.map_or_else(|| usage("this subcommand needs --seed"), Ok)
    }
}

/// Header block shared by all outputs. The thread count and output path are
/// left out so that files compare equal across them.
fn manifest(t: &mut Table, name: &str, ctx: &Ctx, params: &str) {
    t.meta("tool", format!("csfq {}", env!("CARGO_PKG_VERSION")));
    t.meta("subcommand", name);
    t.meta("device", &ctx.device_label);
    t.meta("nmax", ctx.trunc.nmax);
    t.meta("seed", ctx.seed.map_or("none".to_string(), |s| s.to_string()));
    t.meta("params", params);
    let stamp = std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| "unset".into());
    t.meta("timestamp", stamp);
}

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Module(format!("{}: {e}", path.display())))
}

fn spectrum(a: &SpectrumArgs, ctx: &Ctx) -> Res<Table> {
    if a.points < 1 || a.levels < 3 {
        return usage("need --points >= 1 and --levels >= 3");
    }
    let fluxes: Vec<f64> = if a.points == 1 {
        vec![a.flux_from]
    } else {
        (0..a.points).map(|i| a.flux_from + (a.flux_to - a.flux_from) * i as f64 / (a.points - 1) as f64).collect()
    };
    let p = &ctx.device.circuit;
    let sp = sweep_flux(p, &BiasPoint::at_flux(0.5), &fluxes, a.levels, ctx.trunc)?;
    let mut cols: Vec<String> = vec!["flux".into(), "f01_ghz".into(), "f12_ghz".into(), "f02_ghz".into()];
    cols.extend((3..a.levels).map(|k| format!("f0{k}_ghz")));
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs);
    manifest(&mut t, "spectrum", ctx, &format!("{a:?}"));
    for (f, s) in fluxes.iter().zip(&sp) {
        let mut row = vec![*f, to_ghz(s.transition(0, 1)?), to_ghz(s.transition(1, 2)?), to_ghz(s.transition(0, 2)?)];
        for k in 3..a.levels {
            row.push(to_ghz(s.transition(0, k)?));
        }
        t.push(row);
    }
    Ok(t)
}

fn fit(a: &FitArgs, ctx: &Ctx) -> Res<Table> {
    let data = SpectroscopyDataset::parse_csv(&read(&a.data)?)?;
    let r = fit_junctions(&ctx.device.circuit, &data, &JunctionBounds::default(), ctx.trunc, a.max_iter)?;
    let mut t = Table::new(&["iteration", "objective"]);
    manifest(&mut t, "fit", ctx, &format!("{a:?}"));
    t.meta_num("jc_A_per_m2", r.params.jc);
    t.meta_num("alpha", r.params.alpha);
    t.meta_num("objective", r.objective);
    t.meta("converged", r.converged);
    for (i, v) in r.trace.iter().enumerate() {
        t.push(vec![i as f64, *v]);
    }
    Ok(t)
}

fn slope(ctx: &Ctx, flux: f64) -> Res<f64> {
    Ok(flux_sensitivity(&ctx.device.circuit, &BiasPoint::at_flux(flux), (0, 1), 1, ctx.trunc)?.abs())
}

fn coherence(a: &CoherenceArgs, ctx: &Ctx) -> Res<Table> {
    if a.points < 2 || !(a.tau_from > 0.0 && a.tau_to > a.tau_from) || a.pulses.iter().any(|&n| n == 0) {
        return usage("need 0 < tau-from < tau-to, points >= 2 and pulse numbers >= 1");
    }
    let k = slope(ctx, a.noise.flux)?;
    let psd = a.noise.psd()?;
    let freq = PowerLawPsd { a: psd.a * k * k, ..psd };
    let mut t = Table::new(&["n", "tau_us", "numeric", "approx", "closed_form"]);
    manifest(&mut t, "coherence", ctx, &format!("{a:?}"));
    t.meta_num("coupling_rad_per_s_per_phi0", k);
    for &n in &a.pulses {
        let g = gamma_n(freq.a, freq.alpha, n);
        for i in 0..a.points {
            let tau = 1e-6 * (a.tau_from + (a.tau_to - a.tau_from) * i as f64 / (a.points - 1) as f64);
            let cf = (-(g * tau).powf(1.0 + freq.alpha)).exp();
            t.push(vec![n as f64, tau * 1e6, coherence_numeric(&freq, n, tau)?, coherence_approx(&freq, n, tau)?, cf]);
        }
    }
    Ok(t)
}

fn psd_extract(a: &PsdExtractArgs, ctx: &Ctx) -> Res<Table> {
    let text = read(&a.rates)?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed = (f.len() == 2).then(|| Some((f[0].parse::<u32>().ok()?, f[1].parse::<f64>().ok()?))).flatten();
        match parsed {
            Some(p) => pts.push(p),
            None => return Err(Failure::Module(format!("line {}: expected `n rate`", i + 1))),
        }
    }
    let r = fit_powerlaw_psd(&pts)?;
    let mut t = Table::new(&["n", "rate", "model"]);
    manifest(&mut t, "psd-extract", ctx, &format!("{a:?}"));
    t.meta_num("a", r.a);
    t.meta_num("alpha", r.alpha);
    t.meta_num("alpha_stderr", r.alpha_stderr);
    for (n, g) in pts {
        t.push(vec![n as f64, g, gamma_n(r.a, r.alpha, n)]);
    }
    Ok(t)
}

fn mc(a: &McArgs, ctx: &Ctx) -> Res<Table> {
    let seed = ctx.seed()?;
    if a.taus.is_empty() || a.taus.iter().any(|&x| !(x > 0.0)) || a.samples < 2 || a.trajectories == 0 {
        return usage("need positive --taus, --samples >= 2 and --trajectories >= 1");
    }
    let psd = a.noise.psd()?;
    let coupling = match a.coupling {
        CouplingKind::Linear => Coupling::Linear(slope(ctx, a.noise.flux)?),
        CouplingKind::Quadratic => {
            Coupling::Quadratic(0.5 * flux_sensitivity(&ctx.device.circuit, &BiasPoint::at_flux(a.noise.flux), (0, 1), 2, ctx.trunc)?)
        }
    };
    let k = match coupling {
        Coupling::Linear(k) | Coupling::Quadratic(k) => k,
    };
    if let Some(bins) = a.histogram {
        let tau = a.taus[0] * 1e-6;
        let dt = tau / a.samples as f64;
        let model = NoiseModel::from_psd(&psd.band_limited(PI / dt), dt, a.samples)?;
        let h = frequency_histogram(&sample_trajectories(&model, a.trajectories, seed), coupling, bins)?;
        let mut t = Table::new(&["shift_lo_hz", "shift_hi_hz", "count"]);
        manifest(&mut t, "mc", ctx, &format!("{a:?}"));
        t.meta_num("coupling", k);
        t.meta_num("mean_hz", h.mean / HZ);
        t.meta_num("std_hz", h.variance.sqrt() / HZ);
        t.meta_num("skewness", h.skewness);
        t.meta_num("skewness_stderr", h.skewness_stderr);
        for (i, c) in h.counts.iter().enumerate() {
            t.push(vec![h.edges[i] / HZ, h.edges[i + 1] / HZ, *c as f64]);
        }
        return Ok(t);
    }
    let seqs: Vec<Sequence> = a.pulses.iter().map(|&n| if n == 0 { Sequence::Ramsey } else { Sequence::Cpmg(n) }).collect();
    let taus: Vec<f64> = a.taus.iter().map(|x| x * 1e-6).collect();
    let est = coherence_curves(&psd, coupling, &seqs, &taus, a.samples, a.trajectories, seed)?;
    let mut t = Table::new(&["n", "tau_us", "coherence", "stderr"]);
    manifest(&mut t, "mc", ctx, &format!("{a:?}"));
    t.meta_num("coupling", k);
    for (n, row) in a.pulses.iter().zip(&est) {
        for e in row {
            t.push(vec![*n as f64, e.tau * 1e6, e.coherence, e.stderr]);
        }
    }
    Ok(t)
}

fn rate_matrix(r: &RateArgs, ctx: &Ctx) -> Res<(RateMatrix, f64, f64)> {
    let s = diagonalize(&ctx.device.circuit, &BiasPoint::at_flux(r.flux), 3, ctx.trunc)?;
    let (w12, w02) = (s.transition(1, 2)?, s.transition(0, 2)?);
    let m = RateMatrix::constrained(r.gamma10, r.gamma01, r.gamma21, r.gamma20, w12, w02, r.temperature)?;
    Ok((m, w12, w02))
}

fn relax(a: &RelaxArgs, ctx: &Ctx) -> Res<Table> {
    if a.initial > 2 || a.points < 2 || !(a.t_max > 0.0) {
        return usage("need --initial in 0..=2, --points >= 2, --t-max > 0");
    }
    let (m, _, _) = rate_matrix(&a.rates, ctx)?;
    let mut p0 = [0.0; 3];
    p0[a.initial] = 1.0;
    let times: Vec<f64> = (0..a.points).map(|i| 1e-6 * a.t_max * i as f64 / (a.points - 1) as f64).collect();
    let tr = RelaxationTraces::simulate(&m, &p0, &times)?;
    let mut t = Table::new(&["t_us", "p0", "p1", "p2"]);
    manifest(&mut t, "relax", ctx, &format!("{a:?}"));
    for (ti, p) in tr.t.iter().zip(&tr.p) {
        t.push(vec![ti * 1e6, p[0], p[1], p[2]]);
    }
    Ok(t)
}

fn fit_relax(a: &FitRelaxArgs, ctx: &Ctx) -> Res<Table> {
    let data = Table::parse(&read(&a.data)?).ok_or_else(|| Failure::Module("unreadable population table".into()))?;
    let col = |c: &str| data.column(c).ok_or_else(|| Failure::Module(format!("missing column {c}")));
    let (tt, p0, p1, p2) = (col("t_us")?, col("p0")?, col("p1")?, col("p2")?);
    let traces = RelaxationTraces { t: tt.iter().map(|x| x * 1e-6).collect(), p: (0..tt.len()).map(|i| [p0[i], p1[i], p2[i]]).collect() };
    let (_, w12, w02) = rate_matrix(&a.rates, ctx)?;
    let initial = *traces.p.first().ok_or_else(|| Failure::Module("empty table".into()))?;
    let c = RelaxationConstraints {
        gamma10: a.rates.gamma10,
        gamma01: a.rates.gamma01,
        omega12: w12,
        omega02: w02,
        temperature: a.rates.temperature,
        initial,
    };
    let f = fit_relaxation(&traces, &c)?;
    let mut t = Table::new(&["t_us", "p0_fit", "p1_fit", "p2_fit"]);
    manifest(&mut t, "fit-relax", ctx, &format!("{a:?}"));
    t.meta_num("gamma21", f.gamma21);
    t.meta_num("gamma21_stderr", f.gamma21_stderr);
    t.meta_num("gamma20", f.gamma20);
    t.meta_num("gamma20_stderr", f.gamma20_stderr);
    t.meta_num("ssr", f.ssr);
    let model = RelaxationTraces::simulate(&f.rates, &initial, &traces.t.iter().map(|x| x - traces.t[0]).collect::<Vec<_>>())?;
    for (ti, p) in traces.t.iter().zip(&model.p) {
        t.push(vec![ti * 1e6, p[0], p[1], p[2]]);
    }
    Ok(t)
}

fn photon(a: &PhotonArgs, ctx: &Ctx) -> Res<Table> {
    let cav = ctx.device.cavity.ok_or_else(|| Failure::Module("device file has no [cavity] section".into()))?;
    let omega_r = cav.params.omega_r;
    let kappa = HZ * a.kappa_mhz * 1e6;
    let chi = a.chi_mhz.map_or(cav.chi, |c| HZ * c * 1e6);
    if !(kappa > 0.0 && chi != 0.0) {
        return usage("need positive --kappa-mhz and nonzero chi");
    }
    let seq = if a.pulses == 0 { Sequence::Ramsey } else { Sequence::Cpmg(a.pulses) };
    let seed = if a.trajectories > 0 { Some(ctx.seed()?) } else { None };
    let mut t = Table::new(&["temperature_mk", "n_th", "rate_khz", "coherence_at_1_over_rate", "mc_coherence", "mc_stderr"]);
    manifest(&mut t, "photon", ctx, &format!("{a:?}"));
    t.meta_num("omega_r_ghz", to_ghz(omega_r));
    for target in &a.target_rates {
        let temp = required_temperature(target * 1e3, omega_r, kappa, chi, seq)?;
        t.meta_num(&format!("required_temperature_mk_at_{target}_khz"), temp * 1e3);
    }
    for &mk in &a.temperatures {
        let p = PhotonNoiseParams::from_temperature(omega_r, omega_r / kappa, mk * 1e-3, chi)?;
        let rate = dephasing_rate(&p, seq)?;
        let (c, mcv, mse) = if rate > 0.0 {
            let tau = 1.0 / rate;
            let c = analytic_coherence(&p, seq, tau)?;
            match seed {
                Some(s) => {
                    let e = dephasing_decay(&p, seq, tau, a.trajectories, s)?;
                    (c, e.coherence, e.stderr)
                }
                None => (c, f64::NAN, f64::NAN),
            }
        } else {
            (1.0, f64::NAN, f64::NAN)
        };
        t.push(vec![mk, n_thermal(mk * 1e-3, omega_r)?, rate / 1e3, c, mcv, mse]);
    }
    Ok(t)
}

fn rb(a: &RbArgs, ctx: &Ctx) -> Res<Table> {
    let seed = ctx.seed()?;
    if a.t_phi.len() != 3 || a.t_phi.iter().any(|x| !(*x > 0.0)) {
        return usage("--t-phi needs three positive times");
    }
    let (rates, _, _) = rate_matrix(&a.rates, ctx)?;
    let pulses = PulseSpec {
        drive_strength: HZ * a.drive_mhz * 1e6,
        t_rise: a.rise_ns * 1e-9,
        t_fall: a.fall_ns * 1e-9,
        gap: a.gap_ns * 1e-9,
        shape: match a.shape {
            ShapeKind::Linear => RampShape::Linear,
            ShapeKind::Cosine => RampShape::Cosine,
        },
    };
    let backend = match a.depolarizing {
        Some(p) => RbBackend::Depolarizing { p },
        None => {
            let deph = [1e6 / a.t_phi[0], 1e6 / a.t_phi[1], 1e6 / a.t_phi[2]];
            let dev = RbDevice::from_circuit(&ctx.device.circuit, &BiasPoint::at_flux(a.rates.flux), ctx.trunc, rates, deph)?;
            RbBackend::Pulsed { device: dev, pulses }
        }
    };
    let cfg = RbConfig {
        lengths: a.lengths.clone(),
        randomizations: a.randomizations,
        levels: a.levels,
        frame: match a.frame {
            FrameKind::Rwa => DriveFrame::Rwa,
            FrameKind::CounterRotating => DriveFrame::CounterRotating,
        },
        seed,
        ..Default::default()
    };
    let rec = run_rb(&cfg, &backend)?;
    let mut t = Table::new(&["m", "survival_mean", "survival_sem", "leakage_mean"]);
    manifest(&mut t, "rb", ctx, &format!("{a:?}"));
    match fit_rb(&rec) {
        Ok(f) => {
            t.meta_num("a0", f.a0);
            t.meta_num("b0", f.b0);
            t.meta_num("p", f.p);
            t.meta_num("f_ave", f.f_ave);
            t.meta_num("f_ave_stderr", f.f_ave_stderr);
        }
        Err(e) => {
            t.meta("fit", e);
        }
    }
    for (m, mean, sem) in average_by_length(&rec) {
        let l: Vec<f64> = rec.iter().filter(|r| r.m == m).map(|r| r.leakage).collect();
        t.push(vec![m as f64, mean, sem, l.iter().sum::<f64>() / l.len() as f64]);
    }
    Ok(t)
}

fn parse_targets(text: &str) -> Res<DesignTargets> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Failure::Module(format!("targets line {}: expected `metric value weight [bound]`", i + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&f.len()) {
            return Err(bad());
        }
        let metric = Metric::parse(f[0]).ok_or_else(|| Failure::Module(format!("unknown metric {}", f[0])))?;
        let num = |s: &str| if s == "-" { Ok(None) } else { s.parse::<f64>().map(Some).map_err(|_| bad()) };
        let value = num(f[1])?.unwrap_or(0.0);
        let weight = num(f[2])?.ok_or_else(bad)?;
        let upper_bound = if f.len() == 4 { num(f[3])? } else { None };
        entries.push(Target { metric, value, weight, upper_bound });
    }
    Ok(DesignTargets { entries, tolerance: 0.05 })
}

fn device_targets(ctx: &Ctx) -> Res<DesignTargets> {
    let p = &ctx.device.circuit;
    let m = design::metrics(&DesignVector::from_circuit(p, ctx.device.c_tilde)?, p.jc, ctx.device.c_tilde, ctx.trunc)?;
    let bound = HZ * 1e3;
    let t = |metric, value, weight, upper_bound| Target { metric, value, weight, upper_bound };
    Ok(DesignTargets {
        entries: vec![
            t(Metric::Omega01, m.omega01, 1.0, None),
            t(Metric::Anharmonicity, m.anharmonicity, 1.0, None),
            t(Metric::PersistentCurrent, m.persistent_current, 1.0, None),
            t(Metric::ChargeMod01, 0.0, 0.0, Some(bound)),
            t(Metric::ChargeMod12, 0.0, 0.0, Some(bound)),
            t(Metric::ChargeMod02, 0.0, 0.0, Some(bound)),
        ],
        tolerance: 0.05,
    })
}

fn design_cmd(a: &DesignArgs, ctx: &Ctx) -> Res<Table> {
    let seed = ctx.seed()?;
    if !(ctx.device.c_tilde > 0.0) {
        return Err(Failure::Module("device file needs junction.c_tilde".into()));
    }
    let targets = match &a.targets {
        Some(p) => parse_targets(&read(p)?)?,
        None => device_targets(ctx)?,
    };
    let opts = DesignOptions {
        mode: match a.mode {
            ModeKind::ThreePad => PadMode::ThreePad,
            ModeKind::TwoPad => PadMode::TwoPad,
        },
        jc: ctx.device.circuit.jc,
        c_tilde: ctx.device.c_tilde,
        restarts: a.restarts,
        max_iter: a.max_iter,
        seed,
        verify: ctx.trunc,
        ..Default::default()
    };
    let r = design::optimize(&targets, &opts, None)?;
    let mut t = Table::new(&["iteration", "objective"]);
    manifest(&mut t, "design", ctx, &format!("{a:?}"));
    t.meta("feasible", r.feasible);
    t.meta_num("objective", r.objective);
    for (i, l) in r.best.lambda.iter().enumerate() {
        t.meta_num(&format!("lambda{}", i + 1), *l);
    }
    for m in Metric::ALL {
        t.meta_num(m.name(), m.of(&r.metrics));
    }
    for (i, (s, e)) in r.restarts.iter().enumerate() {
        t.meta(&format!("restart{i}"), format!("{s:e} -> {e:e}"));
    }
    for (i, v) in r.trace.iter().enumerate() {
        t.push(vec![i as f64, *v]);
    }
    Ok(t)
}

fn run(cli: &Cli) -> Res<String> {
    if cli.nmax < 4 {
        return usage("--nmax must be at least 4");
    }
    let (device, device_label) = match &cli.device {
        Some(p) => (DeviceConfig::load(p).map_err(|e| Failure::Module(e.to_string()))?, p.display().to_string()),
        None => (DeviceConfig::parse(BUILTIN_DEVICE)?, "builtin".to_string()),
    };
    let ctx = Ctx { device, device_label, trunc: Truncation { nmax: cli.nmax }, seed: cli.seed };
    let t = match &cli.cmd {
        Cmd::Spectrum(a) => spectrum(a, &ctx)?,
        Cmd::Fit(a) => fit(a, &ctx)?,
        Cmd::Coherence(a) => coherence(a, &ctx)?,
        Cmd::PsdExtract(a) => psd_extract(a, &ctx)?,
        Cmd::Mc(a) => mc(a, &ctx)?,
        Cmd::Relax(a) => relax(a, &ctx)?,
        Cmd::FitRelax(a) => fit_relax(a, &ctx)?,
        Cmd::Photon(a) => photon(a, &ctx)?,
        Cmd::Rb(a) => rb(a, &ctx)?,
        Cmd::Design(a) => design_cmd(a, &ctx)?,
    };
    Ok(t.render())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: invalid --threads");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(text) => {
            let written = match &cli.out {
                Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Module(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
