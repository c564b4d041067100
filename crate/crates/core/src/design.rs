//! Six-parameter design space of symmetric three-pad (and reduced two-pad)
//! devices, device metrics at the symmetry point, and a restarted simplex
//! search towards target metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{charge_modulation, diagonalize, persistent_current, BiasPoint, CapacitanceSet, CircuitParams, Truncation};
use crate::error::{invalid, Error, Result};
use crate::optim::{nelder_mead, NmOptions};

/// lambda1: pad 2-3 geometric capacitance (F); lambda2: small-junction area
/// (m^2); lambda3: small/large junction area ratio; lambda4..6: pad 1-2,
/// pad 1-ground and pad 2-ground capacitances relative to lambda1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignVector {
    pub lambda: [f64; 6],
}

impl DesignVector {
    pub fn validate(&self) -> Result<()> {
        let l = &self.lambda;
        if l[0] <= 0.0 || l[1] <= 0.0 || !(l[2] > 0.0 && l[2] <= 1.0) || l.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("lambda1..3 must be positive with lambda3 in (0, 1]; lambda4..6 non-negative");
        }
        Ok(())
    }

    /// Circuit for given critical-current density and junction capacitance
    /// per area (F/m^2). Gate capacitances are taken as part of the ground
    /// capacitances and set to zero.
    pub fn to_circuit(&self, jc: f64, c_tilde: f64) -> Result<CircuitParams> {
        self.validate()?;
        let [l1, l2, l3, l4, l5, l6] = self.lambda;
        let c_small = l2 * c_tilde;
        let c_large = l2 * c_tilde / l3;
        let caps = CapacitanceSet {
            c12: l1 * l4 + c_large,
            c13: l1 * l4 + c_large,
            c23: l1 + c_small,
            c01: l1 * l5,
            c02: l1 * l6,
            c03: l1 * l6,
            c1b: 0.0,
            c2b: 0.0,
            c3b: 0.0,
            c1d: 0.0,
            c2d: 0.0,
            c3d: 0.0,
        };
        let p = CircuitParams { caps, jc, alpha: l3, area_large: l2 / l3 };
        p.validate()?;
        Ok(p)
    }

    /// Symmetrized design vector of an existing device: pad 2/3 entries are
    /// averaged and gate capacitances are added to the ground ones.
    pub fn from_circuit(p: &CircuitParams, c_tilde: f64) -> Result<Self> {
        p.validate()?;
        let c = &p.caps;
        let g = c.ground();
        let l3 = p.alpha;
        let l2 = p.alpha * p.area_large;
        let l1 = c.c23 - l2 * c_tilde;
        if !(l1 > 0.0) {
            return invalid("junction capacitance exceeds the 2-3 capacitance");
        }
        let c12 = 0.5 * (c.c12 + c.c13) - p.area_large * c_tilde;
        let v = Self { lambda: [l1, l2, l3, c12 / l1, g[0] / l1, 0.5 * (g[1] + g[2]) / l1] };
        v.validate()?;
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignMetrics {
    pub omega01: f64,
    pub anharmonicity: f64,
    pub persistent_current: f64,
    /// Peak-to-peak offset-charge modulation of omega01, omega12, omega02.
    pub charge_modulation: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Omega01,
    Anharmonicity,
    PersistentCurrent,
    ChargeMod01,
    ChargeMod12,
    ChargeMod02,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Self::Omega01, Self::Anharmonicity, Self::PersistentCurrent, Self::ChargeMod01, Self::ChargeMod12, Self::ChargeMod02];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Omega01 => "omega01",
            Self::Anharmonicity => "anharmonicity",
            Self::PersistentCurrent => "persistent_current",
            Self::ChargeMod01 => "charge_mod_01",
            Self::ChargeMod12 => "charge_mod_12",
            Self::ChargeMod02 => "charge_mod_02",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn of(&self, m: &DesignMetrics) -> f64 {
        match self {
            Self::Omega01 => m.omega01,
            Self::Anharmonicity => m.anharmonicity,
            Self::PersistentCurrent => m.persistent_current,
            Self::ChargeMod01 => m.charge_modulation[0],
            Self::ChargeMod12 => m.charge_modulation[1],
            Self::ChargeMod02 => m.charge_modulation[2],
        }
    }
}

/// Offset-charge mesh used for the modulation metrics.
pub const CHARGE_GRID: usize = 8;

pub fn metrics(lv: &DesignVector, jc: f64, c_tilde: f64, trunc: Truncation) -> Result<DesignMetrics> {
    metrics_on_grid(lv, jc, c_tilde, trunc, CHARGE_GRID)
}

/// Same with a chosen offset-charge mesh. For symmetric devices the
/// extremes sit at offsets 0 and 1/2, so a 2x2 mesh already finds them.
pub fn metrics_on_grid(lv: &DesignVector, jc: f64, c_tilde: f64, trunc: Truncation, grid: usize) -> Result<DesignMetrics> {
    let p = lv.to_circuit(jc, c_tilde)?;
    let bias = BiasPoint::at_flux(0.5);
    let s = diagonalize(&p, &bias, 3, trunc)?;
    let (w01, w12) = (s.transition(0, 1)?, s.transition(1, 2)?);
    Ok(DesignMetrics {
        omega01: w01,
        anharmonicity: w12 - w01,
        persistent_current: persistent_current(&p, &bias, trunc)?,
        charge_modulation: charge_modulation(&p, 0.5, grid, trunc)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub metric: Metric,
    pub value: f64,
    pub weight: f64,
    /// Hard upper limit on the metric.
    pub upper_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignTargets {
    pub entries: Vec<Target>,
    /// Relative tolerance on weighted targets that counts as reached.
    pub tolerance: f64,
}

impl DesignTargets {
    pub fn validate(&self) -> Result<()> {
        if self.entries.iter().any(|t| !(t.weight >= 0.0) || (t.weight > 0.0 && !(t.value != 0.0 && t.value.is_finite()))) {
            return invalid("weights must be non-negative and weighted targets finite and nonzero");
        }
        if !self.entries.iter().any(|t| t.weight > 0.0) {
            return invalid("at least one target needs a positive weight");
        }
        if self.entries.iter().any(|t| t.upper_bound.is_some_and(|b| !(b > 0.0))) {
            return invalid("bounds must be positive");
        }
        Ok(())
    }

    /// Sum of w ((m - t)/t)^2.
    pub fn misfit(&self, m: &DesignMetrics) -> f64 {
        self.entries.iter().filter(|t| t.weight > 0.0).map(|t| t.weight * ((t.metric.of(m) - t.value) / t.value).powi(2)).sum()
    }

    /// Squared relative excess over the hard bounds.
    pub fn violation(&self, m: &DesignMetrics) -> f64 {
        self.entries.iter().filter_map(|t| t.upper_bound.map(|b| ((t.metric.of(m) - b).max(0.0) / b).powi(2))).sum()
    }

    pub fn targets_reached(&self, m: &DesignMetrics) -> bool {
        self.entries.iter().filter(|t| t.weight > 0.0).all(|t| ((t.metric.of(m) - t.value) / t.value).abs() <= self.tolerance)
    }

    pub fn feasible(&self, m: &DesignMetrics) -> bool {
        self.targets_reached(m) && self.violation(m) == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    ThreePad,
    /// Pad 1 removed: lambda4 = lambda5 = 0.
    TwoPad,
}

impl PadMode {
    fn free(&self) -> &'static [usize] {
        match self {
            Self::ThreePad => &[0, 1, 2, 3, 4, 5],
            Self::TwoPad => &[0, 1, 2, 5],
        }
    }
}

/// Search box for each lambda.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignBounds {
    pub lo: [f64; 6],
    pub hi: [f64; 6],
}

impl Default for DesignBounds {
    fn default() -> Self {
        Self { lo: [1e-15, 5e-15, 0.3, 0.1, 0.1, 0.1], hi: [100e-15, 0.2e-12, 1.0, 10.0, 20.0, 20.0] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignOptions {
    pub mode: PadMode,
    pub bounds: DesignBounds,
    pub jc: f64,
    pub c_tilde: f64,
    pub restarts: usize,
    pub max_iter: u64,
    pub seed: u64,
    /// Basis and offset-charge mesh used inside the search; the final point
    /// is re-evaluated with `verify` on the full mesh.
    pub search: Truncation,
    pub search_grid: usize,
    pub verify: Truncation,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            mode: PadMode::ThreePad,
            bounds: DesignBounds::default(),
            jc: 3.96e6,
            c_tilde: 50e-3,
            restarts: 8,
            max_iter: 250,
            seed: 0,
            search: Truncation { nmax: 10 },
            search_grid: 2,
            verify: Truncation::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignResult {
    pub best: DesignVector,
    pub metrics: DesignMetrics,
    pub objective: f64,
    pub feasible: bool,
    /// Best objective per iteration of the winning restart.
    pub trace: Vec<f64>,
    /// Objective at each restart's start and end.
    pub restarts: Vec<(f64, f64)>,
}

/// Phase-A end points, best first, that seed the second phase.
pub const PHASE_B_STARTS: usize = 3;

/// Penalty weight on hard-bound violations.
pub const WALL: f64 = 1e6;

fn to_x(lv: &DesignVector, free: &[usize]) -> Vec<f64> {
    free.iter().map(|&i| lv.lambda[i].ln()).collect()
}

fn from_x(x: &[f64], free: &[usize], mode: PadMode) -> DesignVector {
    let mut l = [0.0; 6];
    for (v, &i) in x.iter().zip(free) {
        l[i] = v.exp();
    }
    if mode == PadMode::ThreePad {
        return DesignVector { lambda: l };
    }
    l[3] = 0.0;
    l[4] = 0.0;
    DesignVector { lambda: l }
}

struct Search<'a> {
    opts: &'a DesignOptions,
    free: &'static [usize],
}

impl Search<'_> {
    fn run<F: Fn(&DesignMetrics) -> f64 + Sync>(&self, cost: F, starts: &[Vec<f64>]) -> Vec<(f64, Vec<f64>, f64, Vec<f64>)> {
        let lo: Vec<f64> = self.free.iter().map(|&i| self.opts.bounds.lo[i].ln()).collect();
        let hi: Vec<f64> = self.free.iter().map(|&i| self.opts.bounds.hi[i].ln()).collect();
        let f = |x: &[f64]| match metrics_on_grid(
            &from_x(x, self.free, self.opts.mode),
            self.opts.jc,
            self.opts.c_tilde,
            self.opts.search,
            self.opts.search_grid,
        ) {
            Ok(m) => cost(&m),
            Err(_) => f64::INFINITY,
        };
        let step: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.15 * (h - l)).collect();
        starts
            .par_iter()
            .map(|x0| {
                let f0 = f(x0);
                let r = nelder_mead(&f, x0, &step, &lo, &hi, &NmOptions { max_iter: self.opts.max_iter, sd_tolerance: 1e-9 });
                if r.f <= f0 {
                    (f0, r.x, r.f, r.trace)
                } else {
                    (f0, x0.clone(), f0, r.trace)
                }
            })
            .collect()
    }
}

/// Restarted bounded simplex search. Phase A minimizes the weighted misfit
/// plus a wall on the hard bounds. If no restart ends feasible, phase B
/// minimizes the bounded metrics themselves while holding the weighted
/// targets within tolerance, so the reported point shows what meeting the
/// targets costs in the bounded metrics.
pub fn optimize(targets: &DesignTargets, opts: &DesignOptions, start: Option<&DesignVector>) -> Result<DesignResult> {
    targets.validate()?;
    if opts.restarts == 0 {
        return invalid("need at least one restart");
    }
    if opts.bounds.lo.iter().zip(&opts.bounds.hi).any(|(l, h)| !(*l > 0.0 && l < h)) {
        return invalid("bounds must satisfy 0 < lo < hi");
    }
    let free = opts.mode.free();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(s) = start {
        s.validate()?;
        starts.push(to_x(s, free));
    }
    while starts.len() < opts.restarts {
        starts.push(free.iter().map(|&i| rng.random_range(opts.bounds.lo[i].ln()..opts.bounds.hi[i].ln())).collect());
    }
    let search = Search { opts, free };
    let phase_a = search.run(|m| targets.misfit(m) + WALL * targets.violation(m), &starts);
    let restarts: Vec<(f64, f64)> = phase_a.iter().map(|r| (r.0, r.2)).collect();
    let verify = |x: &[f64]| -> Result<(DesignVector, DesignMetrics)> {
        let v = from_x(x, free, opts.mode);
        Ok((v, metrics(&v, opts.jc, opts.c_tilde, opts.verify)?))
    };
    let mut order: Vec<usize> = (0..phase_a.len()).collect();
    order.sort_by(|&a, &b| phase_a[a].2.total_cmp(&phase_a[b].2));
    let (bv, bm) = verify(&phase_a[order[0]].1)?;
    if targets.feasible(&bm) {
        return Ok(DesignResult {
            best: bv,
            objective: targets.misfit(&bm) + WALL * targets.violation(&bm),
            metrics: bm,
            feasible: true,
            trace: phase_a[order[0]].3.clone(),
            restarts,
        });
    }
    // phase B from the phase-A end points
    let tol = targets.tolerance;
    let bounded: Vec<&Target> = targets.entries.iter().filter(|t| t.upper_bound.is_some()).collect();
    let cost_b = |m: &DesignMetrics| {
        let reach: f64 = targets
            .entries
            .iter()
            .filter(|t| t.weight > 0.0)
            .map(|t| ((((t.metric.of(m) - t.value) / t.value).abs() - tol).max(0.0) / tol).powi(2))
            .sum();
        let size: f64 =
            bounded.iter().map(|t| (t.metric.of(m) / t.upper_bound.unwrap()).max(1e-12).ln()).sum::<f64>() / bounded.len().max(1) as f64;
        WALL * reach + size
    };
    let b_starts: Vec<Vec<f64>> = order.iter().take(PHASE_B_STARTS).map(|&i| phase_a[i].1.clone()).collect();
    let phase_b = search.run(cost_b, &b_starts);
    let mut best: Option<(DesignVector, DesignMetrics, Vec<f64>)> = None;
    for r in &phase_b {
        let (v, m) = verify(&r.1)?;
        if !targets.targets_reached(&m) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, bm, _)) => targets.violation(&m) < targets.violation(bm),
        };
        if better {
            best = Some((v, m, r.3.clone()));
        }
    }
    match best {
        Some((v, m, trace)) => Ok(DesignResult {
            best: v,
            objective: targets.misfit(&m) + WALL * targets.violation(&m),
            feasible: targets.feasible(&m),
            metrics: m,
            trace,
            restarts,
        }),
        None => Ok(DesignResult {
            best: bv,
            objective: targets.misfit(&bm) + WALL * targets.violation(&bm),
            metrics: bm,
            feasible: false,
            trace: phase_a[order[0]].3.clone(),
            restarts,
        }),
    }
}

/// Convenience error for callers that need a feasible design.
pub fn require_feasible(r: DesignResult) -> Result<DesignResult> {
    if r.feasible {
        Ok(r)
    } else {
        Err(Error::NoFeasiblePoint(format!("best objective {:.3e}", r.objective)))
    }
}
