//! Single-qubit Clifford group built from x/y quarter and half turns.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::sync::OnceLock;

/// Physical pulse: a rotation about an equatorial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Generator {
    X90,
    Xm90,
    Y90,
    Ym90,
    X180,
    Y180,
}

pub const GENERATORS: [Generator; 6] = [Generator::X90, Generator::Xm90, Generator::Y90, Generator::Ym90, Generator::X180, Generator::Y180];

impl Generator {
    pub fn angle(&self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Self::X180 | Self::Y180 => PI,
            _ => FRAC_PI_2,
        }
    }

    /// Drive phase phi; the rotating-frame coupling is
    /// (Omega/2)(e^{-i phi}|1><0| + h.c.), so phi = 0 is +x and
    /// phi = -pi/2 is +y.
    pub fn phase(&self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Self::X90 | Self::X180 => 0.0,
            Self::Xm90 => PI,
            Self::Y90 | Self::Y180 => -FRAC_PI_2,
            Self::Ym90 => FRAC_PI_2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::X90 => "X90",
            Self::Xm90 => "-X90",
            Self::Y90 => "Y90",
            Self::Ym90 => "-Y90",
            Self::X180 => "X180",
            Self::Y180 => "Y180",
        }
    }

    pub fn unitary(&self) -> Matrix2<C64> {
        rotation(self.angle(), self.phase())
    }
}

/// exp(-i theta/2 (cos phi sx - sin phi sy)).
pub fn rotation(theta: f64, phi: f64) -> Matrix2<C64> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let off = C64::new(0.0, -s) * C64::from_polar(1.0, phi);
    Matrix2::new(C64::new(c, 0.0), off, C64::new(0.0, -s) * C64::from_polar(1.0, -phi), C64::new(c, 0.0))
}

#[derive(Clone, Debug)]
pub struct CliffordElement {
    pub index: usize,
    /// Pulses in application order.
    pub decomposition: Vec<Generator>,
    pub unitary: Matrix2<C64>,
}

pub struct CliffordGroup {
    pub elements: Vec<CliffordElement>,
    /// `mul[a][b]` is the index of U_a U_b.
    pub mul: Vec<Vec<usize>>,
    pub inv: Vec<usize>,
}

/// True when the two unitaries agree up to a global phase.
pub fn same_up_to_phase(a: &Matrix2<C64>, b: &Matrix2<C64>, tol: f64) -> bool {
    ((a.adjoint() * b).trace().norm() - 2.0).abs() < tol
}

fn build() -> CliffordGroup {
    let mut elements = vec![CliffordElement { index: 0, decomposition: Vec::new(), unitary: Matrix2::identity() }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for g in GENERATORS {
            let u = g.unitary() * elements[i].unitary;
            if elements.iter().any(|e| same_up_to_phase(&e.unitary, &u, 1e-9)) {
                continue;
            }
            let mut d = elements[i].decomposition.clone();
            d.push(g);
            let index = elements.len();
            elements.push(CliffordElement { index, decomposition: d, unitary: u });
            queue.push_back(index);
        }
    }
    let find = |u: &Matrix2<C64>| elements.iter().position(|e| same_up_to_phase(&e.unitary, u, 1e-9)).expect("closed group");
    let mul: Vec<Vec<usize>> = elements.iter().map(|a| elements.iter().map(|b| find(&(a.unitary * b.unitary))).collect()).collect();
    let inv = (0..elements.len()).map(|a| (0..elements.len()).find(|&b| mul[a][b] == 0).expect("inverse")).collect();
    CliffordGroup { elements, mul, inv }
}

pub fn clifford_group() -> &'static CliffordGroup {
    static GROUP: OnceLock<CliffordGroup> = OnceLock::new();
    GROUP.get_or_init(build)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RbSequence {
    pub gates: Vec<usize>,
    pub recovery: usize,
}

impl RbSequence {
    /// All Cliffords in application order, recovery last.
    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.gates.iter().copied().chain(std::iter::once(self.recovery))
    }
}

pub(crate) fn sequence_from_rng(m: usize, rng: &mut ChaCha8Rng) -> RbSequence {
    let g = clifford_group();
    let gates: Vec<usize> = (0..m).map(|_| rng.random_range(0..g.elements.len())).collect();
    // total = U_m ... U_1
    let total = gates.iter().fold(0usize, |acc, &x| g.mul[x][acc]);
    RbSequence { gates, recovery: g.inv[total] }
}

/// m uniformly drawn Cliffords and the element that undoes them.
pub fn random_sequence(m: usize, seed: u64) -> RbSequence {
    sequence_from_rng(m, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_order_and_decompositions() {
        let g = clifford_group();
        assert_eq!(g.elements.len(), 24);
        assert!(g.elements[0].decomposition.is_empty());
        for e in &g.elements {
            assert!(e.decomposition.len() <= 3);
            let u = e.decomposition.iter().fold(Matrix2::identity(), |acc, p| p.unitary() * acc);
            assert!(same_up_to_phase(&u, &e.unitary, 1e-12));
        }
    }

    #[test]
    fn y_quarter_turn_maps_z_to_x() {
        let u = Generator::Y90.unitary();
        let sz = Matrix2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0));
        let sx = Matrix2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        assert!((u * sz * u.adjoint() - sx).norm() < 1e-12);
    }

    #[test]
    fn single_gate_recovery_is_inverse() {
        let g = clifford_group();
        let s = random_sequence(1, 9);
        assert_eq!(s.recovery, g.inv[s.gates[0]]);
        assert_eq!(random_sequence(50, 4), random_sequence(50, 4));
    }
}
