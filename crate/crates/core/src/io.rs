//! Snapshot files and CSV time series.
//!
//! A snapshot is one ASCII header line `MCFIELD 1 <nx> <ny> <t>\n` followed
//! by `nx·ny` little-endian `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forward::{bounds_violation, Trajectory};
use crate::grid::{h1_norm, Field, Grid};

const MAGIC: &str = "MCFIELD";
const VERSION: &str = "1";

/// Decoded snapshot, not yet attached to a grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Attach to a grid, checking the resolution.
    pub fn into_field(self, grid: Grid) -> Result<Field> {
        if (self.nx, self.ny) != (grid.nx(), grid.ny()) {
            return Err(Error::GridMismatch(
                format!("{}x{} snapshot", self.nx, self.ny),
                grid.describe(),
            ));
        }
        Field::from_values(grid, self.values)
    }
}

pub fn encode_snapshot(field: &Field, t: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = format!("{MAGIC} {VERSION} {} {} {t}\n", g.nx(), g.ny()).into_bytes();
    out.reserve(8 * field.values().len());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 5 || parts[0] != MAGIC {
        return Err(Error::Format(format!("bad header {header:?}")));
    }
    if parts[1] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", parts[1])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Format(format!("bad {what} {s:?}")))
    };
    let (nx, ny) = (num(parts[2], "nx")?, num(parts[3], "ny")?);
    let t: f64 = parts[4]
        .parse()
        .map_err(|_| Error::Format(format!("bad time {:?}", parts[4])))?;
    let body = &bytes[nl + 1..];
    if body.len() != 8 * nx * ny {
        return Err(Error::Format(format!(
            "expected {} bytes of data, found {}",
            8 * nx * ny,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Snapshot { nx, ny, t, values })
}

pub fn write_snapshot(path: &Path, field: &Field, t: f64) -> Result<()> {
    fs::write(path, encode_snapshot(field, t))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode_snapshot(&fs::read(path)?)
}

pub const SERIES_HEADER: &str = "n,t,mass_m,mass_phi,l2_m,l2_phi,h1_m,h1_phi,viol_m,viol_phi";

pub fn series_csv(traj: &Trajectory) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for n in 0..=traj.nt() {
        let (m, p) = (&traj.m[n], &traj.phi[n]);
        let v = bounds_violation(m, p);
        out.push_str(&format!(
            "{n},{:.12e},{:.16e},{:.16e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}\n",
            traj.time(n),
            m.integral(),
            p.integral(),
            m.l2(),
            p.l2(),
            h1_norm(m),
            h1_norm(p),
            v.max_viol_m,
            v.max_viol_phi
        ));
    }
    out
}

pub fn write_timeseries(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(series_csv(traj).as_bytes())?;
    Ok(())
}

/// Snapshots of `m` and `φ` every `stride` steps and at the final step.
/// Returns the written paths.
pub fn write_trajectory_snapshots(dir: &Path, traj: &Trajectory, stride: usize) -> Result<Vec<PathBuf>> {
    let stride = stride.max(1);
    let mut written = Vec::new();
    for n in (0..=traj.nt()).filter(|&n| n % stride == 0 || n == traj.nt()) {
        for (name, f) in [("m", &traj.m[n]), ("phi", &traj.phi[n])] {
            let path = dir.join(format!("{name}_{n:06}.mcf"));
            write_snapshot(&path, f, traj.time(n))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let g = Grid::new(6, 5, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut vals: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>() * 1e3 - 500.0).collect();
        vals[0] = -0.0;
        vals[1] = f64::MIN_POSITIVE / 3.0;
        let f = Field::from_values(g, vals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.mcf");
        write_snapshot(&p, &f, 0.1 + 0.2).unwrap();
        let s = read_snapshot(&p).unwrap();
        assert_eq!(s.t.to_bits(), (0.1f64 + 0.2).to_bits());
        let back = s.into_field(g).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_is_ascii_line() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let bytes = encode_snapshot(&Field::zeros(g), 0.5);
        assert!(bytes.starts_with(b"MCFIELD 1 4 4 0.5\n"));
        assert_eq!(bytes.len(), 18 + 16 * 8);
    }

    #[test]
    fn bad_files_are_format_errors() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let mut bytes = encode_snapshot(&Field::zeros(g), 0.0);
        bytes[0] = b'X';
        assert!(matches!(decode_snapshot(&bytes), Err(Error::Format(_))));
        let short = &encode_snapshot(&Field::zeros(g), 0.0)[..40];
        assert!(matches!(decode_snapshot(short), Err(Error::Format(_))));
        assert!(matches!(decode_snapshot(b"no newline"), Err(Error::Format(_))));
        let s = decode_snapshot(&encode_snapshot(&Field::zeros(g), 0.0)).unwrap();
        assert!(matches!(
            s.into_field(Grid::new(8, 4, 1.0, 1.0).unwrap()),
            Err(Error::GridMismatch(..))
        ));
    }
}
