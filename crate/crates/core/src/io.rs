//! File formats.
//!
//! Sweeps, reports and loss histories are text; matrices and network
//! weights go into a small versioned binary container. Floats in text files
//! are written with 17 significant digits, so every value reads back
//! bit-for-bit. All writers go through a temporary file and a rename, so a
//! reader never sees a partial file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::autodiff::{Architecture, GeneratorNet};
use crate::error::{Error, Result};
use crate::fermi::SemiconductorParams;
use crate::mesh::{Region, TensorMesh, Q};
use crate::oracle::{Snapshot, SweepDataset};
use crate::pinn::{ErrorReport, LossRecord};
use crate::surrogate::{LinearSurrogate, TrainingMeta};

pub const SWEEP_VERSION: u32 = 1;
pub const CONTAINER_VERSION: u32 = 1;
pub const MAGIC: &[u8; 4] = b"WPNN";

/// 17 significant digits, enough to read back exactly `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn region_tag(r: Region) -> &'static str {
    match r {
        Region::Silicon => "si",
        Region::Oxide => "ox",
    }
}

/// Text sweep: a `#` header, then one record per node per snapshot.
pub fn write_sweep(dataset: &SweepDataset, mesh: &TensorMesh, path: &Path) -> Result<()> {
    if dataset.mesh_fingerprint != mesh.fingerprint() {
        return Err(Error::Format("dataset was produced on a different mesh".into()));
    }
    write_atomic(path, |w| {
        writeln!(w, "# wirepinn sweep")?;
        writeln!(w, "# version {SWEEP_VERSION}")?;
        writeln!(w, "# fingerprint {:016x}", dataset.mesh_fingerprint)?;
        writeln!(w, "# nodes {}", mesh.len())?;
        let p = &dataset.params;
        writeln!(w, "# params {} {} {}", fmt_f64(p.nc), fmt_f64(p.vt), fmt_f64(p.phi_ref))?;
        let biases: Vec<String> = dataset.snapshots.iter().map(|s| fmt_f64(s.v_gate)).collect();
        writeln!(w, "# biases {}", biases.join(" "))?;
        for (k, s) in dataset.snapshots.iter().enumerate() {
            writeln!(w, "# solve {k} {} {} {}", s.converged, fmt_f64(s.residual_norm), s.iterations)?;
        }
        writeln!(w, "# snapshot_index v_gate node_index x_um y_um region phi_V n_cm3")?;
        for (k, s) in dataset.snapshots.iter().enumerate() {
            let vg = fmt_f64(s.v_gate);
            for node in 0..mesh.len() {
                let (x, y) = mesh.coords(node);
                writeln!(
                    w,
                    "{k} {vg} {node} {} {} {} {} {}",
                    fmt_f64(x),
                    fmt_f64(y),
                    region_tag(mesh.region[node]),
                    fmt_f64(s.phi[node]),
                    fmt_f64(s.n[node])
                )?;
            }
        }
        Ok(())
    })
}

struct LineReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl LineReader {
    fn open(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), lines: BufReader::new(File::open(path)?).lines(), line: 0 })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.clone(), line: self.line, message: message.into() }
    }

    fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.lines.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Next header line with the given key; returns the remainder.
    fn header(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?;
        let prefix = format!("# {key}");
        match line.strip_prefix(&prefix) {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok(rest.trim().to_string()),
            _ => Err(self.err(format!("expected `{prefix}` header"))),
        }
    }

    fn num<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field.parse().map_err(|_| self.err(format!("bad {what} `{field}`")))
    }
}

/// Reads a sweep written by [`write_sweep`], checking it against `mesh`.
pub fn read_sweep(path: &Path, mesh: &TensorMesh) -> Result<SweepDataset> {
    let mut r = LineReader::open(path)?;
    let title = r.next_line()?;
    if title != "# wirepinn sweep" {
        return Err(r.err("not a wirepinn sweep file"));
    }
    let version: u32 = {
        let v = r.header("version")?;
        r.num(&v, "version")?
    };
    if version != SWEEP_VERSION {
        return Err(r.err(format!("unsupported sweep version {version} (expected {SWEEP_VERSION})")));
    }
    let fp_text = r.header("fingerprint")?;
    let fingerprint = u64::from_str_radix(&fp_text, 16).map_err(|_| r.err("bad fingerprint"))?;
    if fingerprint != mesh.fingerprint() {
        return Err(r.err(format!(
            "mesh fingerprint {fingerprint:016x} does not match the current mesh {:016x}",
            mesh.fingerprint()
        )));
    }
    let nodes: usize = {
        let v = r.header("nodes")?;
        r.num(&v, "node count")?
    };
    if nodes != mesh.len() {
        return Err(r.err(format!("file has {nodes} nodes, mesh has {}", mesh.len())));
    }
    let pv = r.header("params")?;
    let pf: Vec<f64> = pv.split_whitespace().map(|f| r.num(f, "parameter")).collect::<Result<_>>()?;
    if pf.len() != 3 {
        return Err(r.err("expected nc, vt and phi_ref"));
    }
    let params = SemiconductorParams { nc: pf[0], vt: pf[1], phi_ref: pf[2] };
    let bv = r.header("biases")?;
    let biases: Vec<f64> = bv.split_whitespace().map(|f| r.num(f, "bias")).collect::<Result<_>>()?;
    let mut snapshots = Vec::with_capacity(biases.len());
    for (k, &v_gate) in biases.iter().enumerate() {
        let sv = r.header("solve")?;
        let f: Vec<&str> = sv.split_whitespace().collect();
        if f.len() != 4 || r.num::<usize>(f[0], "snapshot index")? != k {
            return Err(r.err(format!("expected solve record for snapshot {k}")));
        }
        snapshots.push(Snapshot {
            v_gate,
            phi: Vec::with_capacity(nodes),
            n: Vec::with_capacity(nodes),
            net_charge: Vec::with_capacity(nodes),
            converged: r.num(f[1], "converged flag")?,
            residual_norm: r.num(f[2], "residual")?,
            iterations: r.num(f[3], "iteration count")?,
        });
    }
    r.header("snapshot_index")?;
    for (k, snap) in snapshots.iter_mut().enumerate() {
        for node in 0..nodes {
            let line = r.next_line()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 8 {
                return Err(r.err(format!("expected 8 fields, found {}", f.len())));
            }
            let idx: usize = r.num(f[0], "snapshot index")?;
            let vg: f64 = r.num(f[1], "bias")?;
            let nd: usize = r.num(f[2], "node index")?;
            if idx != k || nd != node || vg.to_bits() != snap.v_gate.to_bits() {
                return Err(r.err(format!("expected snapshot {k} node {node}")));
            }
            if f[5] != region_tag(mesh.region[node]) {
                return Err(r.err(format!("region `{}` does not match the mesh", f[5])));
            }
            let phi: f64 = r.num(f[6], "potential")?;
            let n: f64 = r.num(f[7], "density")?;
            snap.phi.push(phi);
            snap.n.push(n);
            snap.net_charge.push(match mesh.region[node] {
                Region::Silicon => Q * (mesh.net_doping[node] - n),
                Region::Oxide => 0.0,
            });
        }
    }
    r.line += 1;
    if let Some(extra) = r.lines.next() {
        let extra = extra?;
        if !extra.trim().is_empty() {
            return Err(r.err("trailing data after the last record"));
        }
    }
    Ok(SweepDataset { snapshots, mesh_fingerprint: fingerprint, params })
}

/// What a binary container holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ModelKind {
    Surrogate = 1,
    Network = 2,
}

/// Decoded binary container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ModelKind,
    pub dims: Vec<u64>,
    pub meta: BTreeMap<String, String>,
    pub payload: Vec<f64>,
}

/// Layout: magic, u32 version, u32 kind, u32 dim count, u64 dims, u32 meta
/// length, UTF-8 `key = value` lines, u64 payload count, f64 payload. All
/// integers and floats little-endian.
pub fn write_container(c: &Container, path: &Path) -> Result<()> {
    let meta: String = c.meta.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    write_atomic(path, |w| {
        w.write_all(MAGIC)?;
        w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        w.write_all(&(c.kind as u32).to_le_bytes())?;
        w.write_all(&(c.dims.len() as u32).to_le_bytes())?;
        for d in &c.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        w.write_all(&(c.payload.len() as u64).to_le_bytes())?;
        for v in &c.payload {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format(format!("{}: missing WPNN magic", path.display())));
    }
    let version = cur.u32()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!(
            "{}: container version {version}, expected {CONTAINER_VERSION}",
            path.display()
        )));
    }
    let kind = match cur.u32()? {
        1 => ModelKind::Surrogate,
        2 => ModelKind::Network,
        other => return Err(Error::Format(format!("{}: unknown model kind {other}", path.display()))),
    };
    let ndims = cur.u32()? as usize;
    let dims = (0..ndims).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?;
    let meta_len = cur.u32()? as usize;
    let meta_text = std::str::from_utf8(cur.take(meta_len)?)
        .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
    let mut meta = BTreeMap::new();
    for line in meta_text.lines() {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Format(format!("bad metadata line `{line}`")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let count = cur.u64()? as usize;
    if bytes.len() - cur.pos != count * 8 {
        return Err(Error::Format(format!(
            "{}: payload declares {count} values but {} bytes remain",
            path.display(),
            bytes.len() - cur.pos
        )));
    }
    let payload = cur.bytes[cur.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Container { kind, dims, meta, payload })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("container is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn meta_get<'m>(meta: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Format(format!("metadata key `{key}` is missing")))
}

fn meta_num<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = meta_get(meta, key)?;
    v.parse().map_err(|_| Error::Format(format!("metadata `{key}` has bad value `{v}`")))
}

fn floats(list: &[f64]) -> String {
    list.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

/// Stores a surrogate fitted on the mesh with `fingerprint`.
pub fn write_surrogate(s: &LinearSurrogate, fingerprint: u64, path: &Path) -> Result<()> {
    let mut meta = BTreeMap::new();
    meta.insert("fingerprint".into(), format!("{fingerprint:016x}"));
    meta.insert("biases".into(), floats(&s.meta.biases));
    meta.insert("rank".into(), s.meta.rank.to_string());
    meta.insert("rcond".into(), fmt_f64(s.meta.rcond));
    meta.insert("ridge".into(), fmt_f64(s.meta.ridge));
    let mut payload = Vec::with_capacity(s.weights().len() + s.dim());
    payload.extend_from_slice(s.weights());
    payload.extend_from_slice(s.intercept());
    let dim = s.dim() as u64;
    write_container(&Container { kind: ModelKind::Surrogate, dims: vec![dim, dim], meta, payload }, path)
}

/// Loads a surrogate; with `expected` set, the stored mesh fingerprint must
/// match.
pub fn read_surrogate(path: &Path, expected: Option<u64>) -> Result<(LinearSurrogate, u64)> {
    let c = read_container(path)?;
    if c.kind != ModelKind::Surrogate {
        return Err(Error::Format(format!("{} does not hold a surrogate", path.display())));
    }
    let fp_text = meta_get(&c.meta, "fingerprint")?;
    let fingerprint =
        u64::from_str_radix(fp_text, 16).map_err(|_| Error::Format(format!("bad fingerprint `{fp_text}`")))?;
    if let Some(want) = expected {
        if want != fingerprint {
            return Err(Error::Format(format!(
                "surrogate was fitted on mesh {fingerprint:016x}, current mesh is {want:016x}"
            )));
        }
    }
    if c.dims.len() != 2 || c.dims[0] != c.dims[1] {
        return Err(Error::Format(format!("surrogate dims {:?} are not square", c.dims)));
    }
    let dim = c.dims[0] as usize;
    if c.payload.len() != dim * dim + dim {
        return Err(Error::Format(format!("surrogate payload has {} values, need {}", c.payload.len(), dim * dim + dim)));
    }
    let biases_text = meta_get(&c.meta, "biases")?;
    let biases = biases_text
        .split_whitespace()
        .map(|b| b.parse().map_err(|_| Error::Format(format!("bad bias `{b}`"))))
        .collect::<Result<Vec<f64>>>()?;
    let meta = TrainingMeta {
        biases,
        rank: meta_num(&c.meta, "rank")?,
        rcond: meta_num(&c.meta, "rcond")?,
        ridge: meta_num(&c.meta, "ridge")?,
    };
    let mut payload = c.payload;
    let intercept = payload.split_off(dim * dim);
    Ok((LinearSurrogate::from_parts(dim, payload, intercept, meta)?, fingerprint))
}

/// Run information stored next to network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMeta {
    pub v_gate: f64,
    pub epochs: usize,
}

pub fn write_network(net: &GeneratorNet, run: &NetworkMeta, path: &Path) -> Result<()> {
    let mut meta = BTreeMap::new();
    meta.insert("architecture".into(), net.architecture.to_string());
    meta.insert("seed".into(), net.seed().to_string());
    meta.insert("grid".into(), format!("{} {}", net.grid().0, net.grid().1));
    meta.insert("epochs".into(), run.epochs.to_string());
    meta.insert("v_gate".into(), fmt_f64(run.v_gate));
    let payload = net.params.values.clone();
    write_container(&Container { kind: ModelKind::Network, dims: vec![payload.len() as u64], meta, payload }, path)
}

pub fn read_network(path: &Path) -> Result<(GeneratorNet, NetworkMeta)> {
    let c = read_container(path)?;
    if c.kind != ModelKind::Network {
        return Err(Error::Format(format!("{} does not hold network weights", path.display())));
    }
    let arch: Architecture = meta_get(&c.meta, "architecture")?.parse()?;
    let grid_text = meta_get(&c.meta, "grid")?;
    let grid: Vec<usize> = grid_text
        .split_whitespace()
        .map(|g| g.parse().map_err(|_| Error::Format(format!("bad grid `{grid_text}`"))))
        .collect::<Result<_>>()?;
    if grid.len() != 2 {
        return Err(Error::Format(format!("bad grid `{grid_text}`")));
    }
    let mut net = GeneratorNet::new(arch, (grid[0], grid[1]), meta_num(&c.meta, "seed")?)?;
    if net.params.values.len() != c.payload.len() {
        return Err(Error::Format(format!(
            "network needs {} parameters, file has {}",
            net.params.values.len(),
            c.payload.len()
        )));
    }
    net.params.values = c.payload;
    let run = NetworkMeta { v_gate: meta_num(&c.meta, "v_gate")?, epochs: meta_num(&c.meta, "epochs")? };
    Ok((net, run))
}

/// Key/value summary followed by per-node error columns.
pub fn write_report(report: &ErrorReport, mesh: &TensorMesh, path: &Path) -> Result<()> {
    if report.phi_err.len() != mesh.len() {
        return Err(Error::Shape(format!("report has {} nodes, mesh has {}", report.phi_err.len(), mesh.len())));
    }
    write_atomic(path, |w| {
        writeln!(w, "# wirepinn error report")?;
        writeln!(w, "v_gate = {}", fmt_f64(report.v_gate))?;
        writeln!(w, "max_phi_err_pct = {}", fmt_f64(report.max_phi_err_pct))?;
        writeln!(w, "max_logn_err_pct = {}", fmt_f64(report.max_logn_err_pct))?;
        writeln!(w, "max_abs_phi_err_v = {}", fmt_f64(report.max_abs_phi_err_v))?;
        writeln!(w, "v_gate_prime = {}", fmt_f64(report.v_gate_prime))?;
        writeln!(w, "epochs = {}", report.epochs)?;
        if let Some(l) = report.final_losses {
            writeln!(w, "final_loss_boundary = {}", fmt_f64(l.boundary))?;
            writeln!(w, "final_loss_fd = {}", fmt_f64(l.fd))?;
            writeln!(w, "final_loss_total = {}", fmt_f64(l.total))?;
        }
        writeln!(w, "# node x_um y_um region phi_err_V logn_err")?;
        for node in 0..mesh.len() {
            let (x, y) = mesh.coords(node);
            writeln!(
                w,
                "{node} {} {} {} {} {}",
                fmt_f64(x),
                fmt_f64(y),
                region_tag(mesh.region[node]),
                fmt_f64(report.phi_err[node]),
                fmt_f64(report.logn_err[node])
            )?;
        }
        Ok(())
    })
}

/// Summary keys of a report file.
pub fn read_report_summary(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut r = LineReader::open(path)?;
    if r.next_line()? != "# wirepinn error report" {
        return Err(r.err("not a wirepinn report"));
    }
    let mut out = BTreeMap::new();
    loop {
        let line = r.next_line()?;
        if line.starts_with('#') {
            break;
        }
        let (k, v) = line.split_once(" = ").ok_or_else(|| r.err("expected `key = value`"))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub fn write_loss_history(history: &[LossRecord], path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "step,lr,loss_boundary,loss_fd,loss_total")?;
        for r in history {
            writeln!(w, "{},{},{},{},{}", r.step, fmt_f64(r.lr), fmt_f64(r.boundary), fmt_f64(r.fd), fmt_f64(r.total))?;
        }
        Ok(())
    })
}

pub fn read_loss_history(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = LineReader::open(path)?;
    if r.next_line()? != "step,lr,loss_boundary,loss_fd,loss_total" {
        return Err(r.err("not a loss history"));
    }
    let mut out = Vec::new();
    while let Some(line) = r.lines.next() {
        r.line += 1;
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(r.err(format!("expected 5 fields, found {}", f.len())));
        }
        out.push(LossRecord {
            step: r.num(f[0], "step")?,
            lr: r.num(f[1], "learning rate")?,
            boundary: r.num(f[2], "loss")?,
            fd: r.num(f[3], "loss")?,
            total: r.num(f[4], "loss")?,
        });
    }
    Ok(out)
}

/// One snapshot as a node table: `node,x_um,y_um,region,phi_V,n_cm3`.
pub fn write_snapshot_csv(snapshot: &Snapshot, mesh: &TensorMesh, path: &Path) -> Result<()> {
    if snapshot.phi.len() != mesh.len() {
        return Err(Error::Shape("snapshot does not match the mesh".into()));
    }
    write_atomic(path, |w| {
        writeln!(w, "node,x_um,y_um,region,phi_V,n_cm3")?;
        for node in 0..mesh.len() {
            let (x, y) = mesh.coords(node);
            writeln!(
                w,
                "{node},{},{},{},{},{}",
                fmt_f64(x),
                fmt_f64(y),
                region_tag(mesh.region[node]),
                fmt_f64(snapshot.phi[node]),
                fmt_f64(snapshot.n[node])
            )?;
        }
        Ok(())
    })
}

/// Reads a node table written by [`write_snapshot_csv`].
pub fn read_snapshot_csv(path: &Path, mesh: &TensorMesh, v_gate: f64) -> Result<Snapshot> {
    let mut r = LineReader::open(path)?;
    if r.next_line()? != "node,x_um,y_um,region,phi_V,n_cm3" {
        return Err(r.err("not a snapshot table"));
    }
    let mut phi = Vec::with_capacity(mesh.len());
    let mut n = Vec::with_capacity(mesh.len());
    for node in 0..mesh.len() {
        let line = r.next_line()?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(r.err(format!("expected 6 fields, found {}", f.len())));
        }
        if r.num::<usize>(f[0], "node index")? != node {
            return Err(r.err(format!("expected node {node}")));
        }
        phi.push(r.num(f[4], "potential")?);
        n.push(r.num(f[5], "density")?);
    }
    let net_charge = n
        .iter()
        .zip(&mesh.net_doping)
        .zip(&mesh.region)
        .map(|((&n, &d), &reg)| if reg == Region::Silicon { Q * (d - n) } else { 0.0 })
        .collect();
    Ok(Snapshot { v_gate, phi, n, net_charge, converged: true, residual_norm: f64::NAN, iterations: 0 })
}

/// Generic CSV with a header row and float columns.
pub fn write_csv(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0, 1e10] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn container_round_trip_and_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let mut meta = BTreeMap::new();
        meta.insert("a".to_string(), "1 2".to_string());
        let c = Container { kind: ModelKind::Network, dims: vec![3], meta, payload: vec![1.5, -0.0, 1e-300] };
        write_container(&c, &path).unwrap();
        assert_eq!(read_container(&path).unwrap(), c);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_container(&path), Err(Error::Format(_))));
        bytes[0] = b'W';
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_container(&path).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn no_temporary_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_loss_history(&[LossRecord { step: 1, lr: 1e-3, boundary: 0.5, fd: 0.25, total: 0.75 }], &path).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("h.csv")]);
        assert_eq!(read_loss_history(&path).unwrap()[0].total, 0.75);
    }
}
