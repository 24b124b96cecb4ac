//! Tensor-product mesh of the half nanowire cross-section.
//!
//! The domain is planar: `x` runs along the wire (source at `x = 0`, drain at
//! `x = L`), `y` runs from the symmetry axis (`y = 0`, zero flux) through the
//! silicon body to the top of the gate oxide where the gate contact sits.
//! Nodes are numbered y-fastest, `index = i * ny + j`, so the five-point
//! stencil has a half-bandwidth of `ny`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Vacuum permittivity in F/cm.
pub const EPS0: f64 = 8.854_187_812_8e-14;
/// Elementary charge in C.
pub const Q: f64 = 1.602_176_634e-19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Silicon,
    Oxide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contact {
    None,
    Gate,
    Source,
    Drain,
}

/// Geometry, doping and discretization of the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub radius_nm: f64,
    pub tox_nm: f64,
    pub length_nm: f64,
    pub gate_span_nm: [f64; 2],
    /// Donor density of the source/drain extensions.
    pub nd_cm3: f64,
    /// Acceptor density of the channel body.
    pub na_cm3: f64,
    pub nx: usize,
    pub ny: usize,
    /// Number of the `ny` rows that lie strictly inside the oxide.
    pub ny_ox: usize,
    pub eps_si: f64,
    pub eps_ox: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            radius_nm: 4.0,
            tox_nm: 1.0,
            length_nm: 81.0,
            gate_span_nm: [31.5, 49.5],
            nd_cm3: 1e20,
            na_cm3: 1e10,
            nx: 129,
            ny: 17,
            ny_ox: 4,
            eps_si: 11.7,
            eps_ox: 3.9,
        }
    }
}

impl DeviceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius_nm", self.radius_nm),
            ("tox_nm", self.tox_nm),
            ("length_nm", self.length_nm),
            ("nd_cm3", self.nd_cm3),
            ("eps_si", self.eps_si),
            ("eps_ox", self.eps_ox),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.na_cm3.is_finite() && self.na_cm3 >= 0.0) {
            return Err(Error::Config(format!("na_cm3 must be >= 0, got {}", self.na_cm3)));
        }
        let [g0, g1] = self.gate_span_nm;
        if !(0.0 < g0 && g0 < g1 && g1 < self.length_nm) {
            return Err(Error::Config(format!(
                "gate span [{g0}, {g1}] must lie strictly inside (0, {})",
                self.length_nm
            )));
        }
        if self.nx < 3 {
            return Err(Error::Config(format!("nx must be >= 3, got {}", self.nx)));
        }
        if self.ny_ox == 0 || self.ny < self.ny_ox + 2 {
            return Err(Error::Config(format!(
                "need ny >= ny_ox + 2 and ny_ox >= 1 (ny = {}, ny_ox = {})",
                self.ny, self.ny_ox
            )));
        }
        Ok(())
    }
}

/// The discretization frame shared by the oracle, the surrogate and the PINN.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMesh {
    /// Axial node coordinates in µm.
    pub x_nodes: Vec<f64>,
    /// Radial node coordinates in µm.
    pub y_nodes: Vec<f64>,
    pub region: Vec<Region>,
    pub contact: Vec<Contact>,
    /// N_D − N_A per node in cm⁻³ (zero in the oxide).
    pub net_doping: Vec<f64>,
    pub eps_si: f64,
    pub eps_ox: f64,
    /// Radial coordinate of the Si/SiO₂ interface in µm.
    pub radius_um: f64,
    /// Index of the interface row.
    pub interface_row: usize,
}

/// Builds the device mesh described by `config`.
pub fn build_device_mesh(config: &DeviceConfig) -> Result<TensorMesh> {
    config.validate()?;
    let nx = config.nx;
    let ny = config.ny;
    let n_si = ny - config.ny_ox;

    let length_um = config.length_nm * 1e-3;
    let x_nodes: Vec<f64> = (0..nx)
        .map(|i| length_um * i as f64 / (nx - 1) as f64)
        .collect();

    let radius_um = config.radius_nm * 1e-3;
    let tox_um = config.tox_nm * 1e-3;
    let mut y_nodes: Vec<f64> = (0..n_si)
        .map(|j| radius_um * j as f64 / (n_si - 1) as f64)
        .collect();
    y_nodes.extend((1..=config.ny_ox).map(|k| radius_um + tox_um * k as f64 / config.ny_ox as f64));

    for axis in [&x_nodes, &y_nodes] {
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("mesh coordinates are not strictly increasing".into()));
        }
    }

    let snap = |target_um: f64| -> usize {
        x_nodes
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - target_um)
                    .abs()
                    .partial_cmp(&(b.1 - target_um).abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
            .unwrap()
    };
    let gate_lo = snap(config.gate_span_nm[0] * 1e-3);
    let gate_hi = snap(config.gate_span_nm[1] * 1e-3);
    if gate_lo == 0 || gate_hi >= nx - 1 || gate_lo > gate_hi {
        return Err(Error::Config("gate span collapses onto the source/drain planes".into()));
    }

    let interface_row = n_si - 1;
    let n = nx * ny;
    let mut region = Vec::with_capacity(n);
    let mut contact = Vec::with_capacity(n);
    let mut net_doping = Vec::with_capacity(n);
    for i in 0..nx {
        for j in 0..ny {
            let reg = if j > interface_row { Region::Oxide } else { Region::Silicon };
            let in_gate = (gate_lo..=gate_hi).contains(&i);
            let con = match reg {
                Region::Oxide if j == ny - 1 && in_gate => Contact::Gate,
                Region::Silicon if i == 0 => Contact::Source,
                Region::Silicon if i == nx - 1 => Contact::Drain,
                _ => Contact::None,
            };
            let dop = match reg {
                Region::Oxide => 0.0,
                Region::Silicon if in_gate => -config.na_cm3,
                Region::Silicon => config.nd_cm3,
            };
            region.push(reg);
            contact.push(con);
            net_doping.push(dop);
        }
    }

    Ok(TensorMesh {
        x_nodes,
        y_nodes,
        region,
        contact,
        net_doping,
        eps_si: config.eps_si,
        eps_ox: config.eps_ox,
        radius_um,
        interface_row,
    })
}

impl TensorMesh {
    #[inline]
    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx() && j < self.ny());
        i * self.ny() + j
    }

    /// Inverse of [`TensorMesh::index`].
    #[inline]
    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node / self.ny(), node % self.ny())
    }

    /// Coordinates of a node in µm.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.ij(node);
        (self.x_nodes[i], self.y_nodes[j])
    }

    pub fn length_um(&self) -> f64 {
        *self.x_nodes.last().unwrap()
    }

    pub fn permittivity(&self, region: Region) -> f64 {
        match region {
            Region::Silicon => self.eps_si,
            Region::Oxide => self.eps_ox,
        }
    }

    pub fn nodes_with(&self, contact: Contact) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.contact[k] == contact).collect()
    }

    pub fn gate_nodes(&self) -> Vec<usize> {
        self.nodes_with(Contact::Gate)
    }

    pub fn oxide_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.region[k] == Region::Oxide).collect()
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.contact[node] != Contact::None
    }

    /// Node index of the mirror image under `x -> L - x`.
    pub fn mirror(&self, node: usize) -> usize {
        let (i, j) = self.ij(node);
        self.index(self.nx() - 1 - i, j)
    }

    /// Stable identifier of the mesh geometry, doping and materials (FNV-1a
    /// over the bit patterns of every defining value).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.nx() as u64).to_le_bytes());
        eat(&(self.ny() as u64).to_le_bytes());
        for v in self.x_nodes.iter().chain(&self.y_nodes).chain(&self.net_doping) {
            eat(&v.to_bits().to_le_bytes());
        }
        for (r, c) in self.region.iter().zip(&self.contact) {
            eat(&[*r as u8, *c as u8]);
        }
        eat(&self.eps_si.to_bits().to_le_bytes());
        eat(&self.eps_ox.to_bits().to_le_bytes());
        h
    }
}

/// Index of the node closest to `(x, y)` µm; ties go to the lowest index.
pub fn nearest_node(mesh: &TensorMesh, x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for node in 0..mesh.len() {
        let (xn, yn) = mesh.coords(node);
        let d2 = (xn - x).powi(2) + (yn - y).powi(2);
        if d2 < best_d2 {
            best_d2 = d2;
            best = node;
        }
    }
    best
}

/// An edge of the five-point stencil with its `ε·A/d` conductance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Absolute permittivity times transverse extent over length, F/cm per
    /// unit depth.
    pub conductance: f64,
}

/// Two-point-flux finite-volume coefficients on the tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FvCoefficients {
    pub edges: Vec<Edge>,
    /// Control area of each node's dual cell in cm² (per unit depth).
    pub volume: Vec<f64>,
    /// Portion of each dual cell lying inside silicon, cm².
    pub si_volume: Vec<f64>,
}

impl FvCoefficients {
    /// Divergence of the discrete flux `Σ_nb c·(φ_nb − φ_c)` at every node.
    pub fn flux_divergence(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.volume.len()];
        for e in &self.edges {
            let f = e.conductance * (phi[e.b] - phi[e.a]);
            out[e.a] += f;
            out[e.b] -= f;
        }
        out
    }

    pub fn max_volume(&self) -> f64 {
        self.volume.iter().cloned().fold(0.0, f64::max)
    }
}

/// Assembles box-method coefficients.
///
/// Permittivity is assigned per mesh element (the rectangle between four
/// nodes) by the material at the element centre, and an edge collects a
/// transverse half-width from each adjacent element. The interface lies on a
/// node row, so no edge crosses a material boundary along its length; edges
/// running along the interface combine both materials in parallel.
pub fn assemble_fv_coefficients(mesh: &TensorMesh) -> FvCoefficients {
    let nx = mesh.nx();
    let ny = mesh.ny();
    let to_cm = |um: f64| um * 1e-4;
    let hx: Vec<f64> = mesh.x_nodes.windows(2).map(|w| to_cm(w[1] - w[0])).collect();
    let hy: Vec<f64> = mesh.y_nodes.windows(2).map(|w| to_cm(w[1] - w[0])).collect();

    // Element (i, j) spans [x_i, x_i+1] × [y_j, y_j+1].
    let elem_eps = |j: usize| -> f64 {
        let ymid = 0.5 * (mesh.y_nodes[j] + mesh.y_nodes[j + 1]);
        let region = if ymid > mesh.radius_um { Region::Oxide } else { Region::Silicon };
        EPS0 * mesh.permittivity(region)
    };
    let elem_is_si = |j: usize| 0.5 * (mesh.y_nodes[j] + mesh.y_nodes[j + 1]) < mesh.radius_um;

    let mut edges = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let a = mesh.index(i, j);
            if i + 1 < nx {
                // Horizontal edge, bordered by elements (i, j-1) and (i, j).
                let mut c = 0.0;
                for jj in [j.checked_sub(1), (j + 1 < ny).then_some(j)].into_iter().flatten() {
                    c += elem_eps(jj) * 0.5 * hy[jj] / hx[i];
                }
                edges.push(Edge { a, b: mesh.index(i + 1, j), conductance: c });
            }
            if j + 1 < ny {
                // Vertical edge, bordered by elements (i-1, j) and (i, j).
                let eps = elem_eps(j);
                let mut c = 0.0;
                for ii in [i.checked_sub(1), (i + 1 < nx).then_some(i)].into_iter().flatten() {
                    c += eps * 0.5 * hx[ii] / hy[j];
                }
                edges.push(Edge { a, b: mesh.index(i, j + 1), conductance: c });
            }
        }
    }

    let mut volume = vec![0.0; nx * ny];
    let mut si_volume = vec![0.0; nx * ny];
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let quarter = 0.25 * hx[i] * hy[j];
            for (ii, jj) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                let k = mesh.index(ii, jj);
                volume[k] += quarter;
                if elem_is_si(j) {
                    si_volume[k] += quarter;
                }
            }
        }
    }

    FvCoefficients { edges, volume, si_volume }
}
