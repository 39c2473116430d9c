//! File formats: distribution, kernel and spectrum CSVs, and the raw
//! sample binary (`MCSN`).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sigprop_core::{ConditionalKernel, Grid, MixedDensity};

use crate::error::{Error, Result};

pub const MCSN_MAGIC: &[u8; 4] = b"MCSN";
pub const MCSN_VERSION: u32 = 1;

/// Writes `# atom0=<v> leaked=<v> z_max=<v> n_points=<n>`, then `z,density`
/// rows at the cell centres. Floats use the shortest round-trip form.
pub fn write_distribution<W: Write>(mut w: W, p: &MixedDensity) -> Result<()> {
    let g = p.grid();
    writeln!(
        w,
        "# atom0={} leaked={} z_max={} n_points={}",
        p.atom0(),
        p.leaked_mass(),
        g.z_max(),
        g.n_points()
    )?;
    writeln!(w, "z,density")?;
    for (z, d) in g.centers().zip(p.density()) {
        writeln!(w, "{z},{d}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad {what}: {s:?}")))
}

/// Reads the format written by [`write_distribution`].
pub fn read_distribution<R: Read>(r: R) -> Result<MixedDensity> {
    let mut lines = BufReader::new(r).lines();
    let comment = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty distribution file".into()))?;
    let body = comment
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing `# atom0=` comment line".into()))?;
    let (mut atom0, mut leaked, mut z_max, mut n_points) = (None, None, None, None);
    for field in body.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field {field:?}")))?;
        match k {
            "atom0" => atom0 = Some(parse_f64(v, k)?),
            "leaked" => leaked = Some(parse_f64(v, k)?),
            "z_max" => z_max = Some(parse_f64(v, k)?),
            "n_points" => {
                n_points = Some(v.parse::<usize>().map_err(|_| Error::Format(format!("bad n_points: {v:?}")))?)
            }
            _ => {}
        }
    }
    let (atom0, leaked) = match (atom0, leaked) {
        (Some(a), Some(l)) => (a, l),
        _ => return Err(Error::Format("header needs atom0 and leaked".into())),
    };
    if lines.next().transpose()?.as_deref().map(str::trim) != Some("z,density") {
        return Err(Error::Format("expected `z,density` header".into()));
    }
    let mut zs = Vec::new();
    let mut density = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (z, d) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("bad row {line:?}")))?;
        zs.push(parse_f64(z, "z")?);
        density.push(parse_f64(d, "density")?);
    }
    let n = n_points.unwrap_or(density.len());
    if n != density.len() || n == 0 {
        return Err(Error::Format(format!("expected {n} rows, found {}", density.len())));
    }
    // without an explicit z_max, recover it from the first centre
    let z_max = z_max.unwrap_or(2.0 * zs[0] * n as f64);
    let grid = Grid::new(z_max, n)?;
    Ok(MixedDensity::new(grid, atom0, density, leaked)?)
}

pub fn save_distribution(path: &Path, p: &MixedDensity) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_distribution(BufWriter::new(f), p)
}

pub fn load_distribution(path: &Path) -> Result<MixedDensity> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_distribution(f)
}

/// Dense kernel matrix: header `y,atom0,leaked,<cell centres>`, one row per source.
pub fn write_kernel<W: Write>(w: W, kernel: &ConditionalKernel) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["y".to_string(), "atom0".into(), "leaked".into()];
    header.extend(kernel.grid().centers().map(|z| z.to_string()));
    out.write_record(&header)?;
    for i in 0..kernel.n_rows() {
        let mut rec = vec![kernel.source(i).to_string(), kernel.row_atom(i).to_string(), kernel.row_leaked(i).to_string()];
        rec.extend(kernel.row_density(i).iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `m,lambda` rows.
pub fn write_spectrum<W: Write>(w: W, m_values: &[f64], lambdas: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["m", "lambda"])?;
    for (m, l) in m_values.iter().zip(lambdas) {
        out.write_record([m.to_string(), l.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_spectrum<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rd = csv::Reader::from_reader(r);
    let (mut ms, mut ls) = (Vec::new(), Vec::new());
    for rec in rd.deserialize() {
        let (m, l): (f64, f64) = rec?;
        ms.push(m);
        ls.push(l);
    }
    Ok((ms, ls))
}

/// Raw samples: `MCSN`, version (u32 LE), count (u64 LE), then f64 LE values.
pub fn write_mcsn<W: Write>(w: W, samples: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(MCSN_MAGIC)?;
    w.write_all(&MCSN_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mcsn(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 16 {
        return Err(Error::Truncated { expected: 16, actual: bytes.len() });
    }
    if &bytes[..4] != MCSN_MAGIC {
        return Err(Error::Format("bad MCSN magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MCSN_VERSION {
        return Err(Error::Format(format!("unsupported MCSN version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = count
        .checked_mul(8)
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::Format("MCSN count overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    Ok(bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
