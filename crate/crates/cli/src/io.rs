//! Artifact serialisation: deterministic JSON, the binary field format, OBJ
//! line exports, and ASCII voxel masks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use gls_core::currents::MultiplicityCurrent;
use gls_core::field::{FieldState, GridSpec};

/// JSON with every float printed as 17 significant digits in scientific
/// notation, so identical runs produce byte-identical artifacts.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialise any JSON value deterministically (sorted keys come from using
/// `serde_json::Value` maps, which are ordered).
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    let mut ser = serde_json::Serializer::with_formatter(&mut writer, SciFormatter);
    serde::Serialize::serialize(value, &mut ser)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn json_string(value: &serde_json::Value) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    serde::Serialize::serialize(value, &mut ser)?;
    Ok(String::from_utf8(buf)?)
}

/// Network document in the shared currents schema, with optional extras.
pub fn network_json(net: &MultiplicityCurrent, extras: &[(&str, serde_json::Value)]) -> serde_json::Value {
    let net = net.sorted();
    let edges: Vec<serde_json::Value> = net
        .edges
        .iter()
        .map(|e| {
            serde_json::json!({
                "a": e.a,
                "b": e.b,
                "g": e.g,
            })
        })
        .collect();
    let mut doc = serde_json::json!({
        "N": net.n_terminals,
        "edges": edges,
    });
    for (k, v) in extras {
        doc[*k] = v.clone();
    }
    doc
}

const FIELD_MAGIC: &[u8; 4] = b"GLF1";

/// Binary field dump: magic "GLF1", u32 n, u32 N, u32 dims[n], f64 h, then
/// little-endian f64 values, component-major with node-major (x-fastest)
/// vectors inside.
pub fn write_fields(path: &Path, fs: &FieldState) -> Result<()> {
    let grid = &fs.grid;
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(grid.n as u32).to_le_bytes())?;
    w.write_all(&(grid.n_terminals as u32).to_le_bytes())?;
    for d in &grid.dims {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    w.write_all(&grid.h.to_le_bytes())?;
    for comp in &fs.comps {
        for v in comp {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read back the header and raw component data of a field dump.
pub fn read_fields(path: &Path) -> Result<(usize, usize, Vec<usize>, f64, Vec<Vec<f64>>)> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        bail!("bad magic in field file");
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut u32buf)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let n_terminals = u32::from_le_bytes(u32buf) as usize;
    let mut dims = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut u32buf)?;
        dims.push(u32::from_le_bytes(u32buf) as usize);
    }
    r.read_exact(&mut f64buf)?;
    let h = f64::from_le_bytes(f64buf);
    let nodes: usize = dims.iter().product();
    let per_comp = nodes * (n - 1);
    let mut comps = Vec::with_capacity(n_terminals - 1);
    for _ in 0..n_terminals - 1 {
        let mut comp = Vec::with_capacity(per_comp);
        for _ in 0..per_comp {
            r.read_exact(&mut f64buf)?;
            comp.push(f64::from_le_bytes(f64buf));
        }
        comps.push(comp);
    }
    Ok((n, n_terminals, dims, h, comps))
}

/// Wavefront OBJ with one polyline (`l` record) per network edge.
pub fn write_obj(path: &Path, net: &MultiplicityCurrent) -> Result<()> {
    let net = net.sorted();
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for e in &net.edges {
        for p in [&e.a, &e.b] {
            write!(w, "v")?;
            for c in p {
                write!(w, " {c:.16e}")?;
            }
            writeln!(w)?;
        }
    }
    for (k, e) in net.edges.iter().enumerate() {
        writeln!(w, "# g = {:?}", e.g)?;
        writeln!(w, "l {} {}", 2 * k + 1, 2 * k + 2)?;
    }
    w.flush()?;
    Ok(())
}

/// ASCII voxel file: header `nx ny nz h`, then one 0/1 per node in x-fastest
/// order.
pub fn write_voxels(path: &Path, grid: &GridSpec, values: &[u8]) -> Result<()> {
    if grid.n != 3 {
        bail!("voxel export is defined for n = 3");
    }
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {} {} {:.16e}", grid.dims[0], grid.dims[1], grid.dims[2], grid.h)?;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            if i % grid.dims[0] == 0 {
                writeln!(w)?;
            } else {
                write!(w, " ")?;
            }
        }
        write!(w, "{v}")?;
    }
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
