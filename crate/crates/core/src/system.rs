//! Nuclei, electron configurations and the Coulomb Hamiltonian in atomic units.

use alloc::vec::Vec;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::wavefunction::Wavefunction;
use crate::{Error, Result};

/// Pairs closer than this (Bohr) are treated as coincident.
pub const COALESCENCE_GUARD: f64 = 1e-12;

/// `log|psi|` below this is treated as a node.
pub const NODE_LOG_THRESHOLD: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spin {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nucleus {
    pub position: [f64; 3],
    pub charge: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolecularSystem {
    nuclei: Vec<Nucleus>,
    n_up: usize,
    n_down: usize,
    /// Add the constant nucleus-nucleus repulsion to potential energies.
    pub nuclear_repulsion: bool,
}

/// Built-in systems: name, nuclei as `(Z, x, y, z)` and `(n_up, n_down)`.
pub const PRESETS: &[(&str, &[(u32, [f64; 3])], usize, usize)] = &[
    ("H", &[(1, [0.0, 0.0, 0.0])], 1, 0),
    ("He", &[(2, [0.0, 0.0, 0.0])], 1, 1),
    ("Be", &[(4, [0.0, 0.0, 0.0])], 2, 2),
    ("O", &[(8, [0.0, 0.0, 0.0])], 5, 3),
    ("Ne", &[(10, [0.0, 0.0, 0.0])], 5, 5),
    ("LiH", &[(3, [0.0, 0.0, 0.0]), (1, [0.0, 0.0, 3.015])], 2, 2),
    ("Li2", &[(3, [0.0, 0.0, 0.0]), (3, [0.0, 0.0, 5.051])], 3, 3),
];

impl MolecularSystem {
    pub fn new(nuclei: Vec<Nucleus>, n_up: usize, n_down: usize) -> Result<Self> {
        if nuclei.is_empty() {
            return Err(Error::InvalidParameter("at least one nucleus is required"));
        }
        if nuclei.iter().any(|n| n.charge == 0) {
            return Err(Error::InvalidParameter("nuclear charges must be at least 1"));
        }
        if nuclei.iter().any(|n| n.position.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite("nuclear position"));
        }
        if n_up + n_down == 0 {
            return Err(Error::InvalidParameter("at least one electron is required"));
        }
        Ok(Self { nuclei, n_up, n_down, nuclear_repulsion: true })
    }

    /// Looks up a built-in system by name (case-sensitive, `Li2` or `Li₂`).
    pub fn preset(name: &str) -> Option<Self> {
        let name = if name == "Li₂" { "Li2" } else { name };
        PRESETS.iter().find(|p| p.0 == name).map(|&(_, nuclei, up, down)| {
            let nuclei = nuclei
                .iter()
                .map(|&(charge, position)| Nucleus { position, charge })
                .collect();
            Self::new(nuclei, up, down).expect("presets are valid")
        })
    }

    pub fn nuclei(&self) -> &[Nucleus] {
        &self.nuclei
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    /// Spins in electron order: all up electrons first.
    pub fn spins(&self) -> Vec<Spin> {
        let mut s = Vec::with_capacity(self.n_electrons());
        s.resize(self.n_up, Spin::Up);
        s.resize(self.n_electrons(), Spin::Down);
        s
    }

    /// `sum_{I<J} Z_I Z_J / |R_I - R_J|`.
    pub fn nucleus_repulsion_energy(&self) -> f64 {
        let mut e = 0.0;
        for (a, na) in self.nuclei.iter().enumerate() {
            for nb in &self.nuclei[a + 1..] {
                e += (na.charge * nb.charge) as f64 / distance(&na.position, &nb.position);
            }
        }
        e
    }

    /// Same system with every nucleus shifted by `t`.
    pub fn translated(&self, t: [f64; 3]) -> Self {
        let mut out = self.clone();
        for n in &mut out.nuclei {
            n.position = add3(n.position, t);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectronConfiguration {
    pub positions: Vec<[f64; 3]>,
    pub spins: Vec<Spin>,
}

impl ElectronConfiguration {
    pub fn new(positions: Vec<[f64; 3]>, spins: Vec<Spin>) -> Result<Self> {
        if positions.len() != spins.len() {
            return Err(Error::DimensionMismatch("positions and spins"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("electron position"));
        }
        Ok(Self { positions, spins })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Whether the spin multiset matches the system's `(n_up, n_down)`.
    pub fn matches(&self, sys: &MolecularSystem) -> bool {
        let up = self.spins.iter().filter(|&&s| s == Spin::Up).count();
        up == sys.n_up() && self.len() - up == sys.n_down()
    }

    pub fn translated(&self, t: [f64; 3]) -> Self {
        Self {
            positions: self.positions.iter().map(|&p| add3(p, t)).collect(),
            spins: self.spins.clone(),
        }
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Coulomb potential energy in Hartree, including the nucleus-nucleus
/// constant when `sys.nuclear_repulsion` is set.
pub fn potential_energy(sys: &MolecularSystem, x: &ElectronConfiguration) -> Result<f64> {
    let mut v = 0.0;
    for (i, r) in x.positions.iter().enumerate() {
        for (a, nuc) in sys.nuclei().iter().enumerate() {
            let d = distance(r, &nuc.position);
            if d < COALESCENCE_GUARD {
                // Nuclei are indexed after the electrons.
                return Err(Error::CoalescencePoint(i, x.len() + a));
            }
            v -= nuc.charge as f64 / d;
        }
    }
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let d = distance(&x.positions[i], &x.positions[j]);
            if d < COALESCENCE_GUARD {
                return Err(Error::CoalescencePoint(i, j));
            }
            v += 1.0 / d;
        }
    }
    if sys.nuclear_repulsion {
        v += sys.nucleus_repulsion_energy();
    }
    Ok(v)
}

/// `E_L = -1/2 sum_i (lap_i log|psi| + |grad_i log|psi||^2) + V`.
pub fn local_energy<W: Wavefunction + ?Sized>(
    sys: &MolecularSystem,
    psi: &W,
    x: &ElectronConfiguration,
) -> Result<f64> {
    let v = potential_energy(sys, x)?;
    let (log_abs, _) = psi.log_psi(x)?;
    if !(log_abs >= NODE_LOG_THRESHOLD) {
        return Err(Error::NodeProximity);
    }
    let (grads, lap) = psi.grad_r_and_laplacian_log_psi(x)?;
    let g2: f64 = grads.iter().flatten().map(|g| g * g).sum();
    Ok(-0.5 * (lap + g2) + v)
}
