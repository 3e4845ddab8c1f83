//! Bit-exact kernel snapshots: a JSON header with base64-encoded
//! little-endian `f64` arrays.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Kernel, KernelError, KernelGrid, KernelSequence, ParamKernelSequence};

const FORMAT: &str = "sbrg-kernel-snapshot";
const VERSION: u32 = 1;

/// A single sequence or a spectral-parameter family.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Sequence(KernelSequence),
    Family(ParamKernelSequence),
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    m: usize,
    n: usize,
    values: String,
    r_derivative: String,
}

#[derive(Serialize, Deserialize)]
struct SeqRepr {
    xi: f64,
    max_degree: usize,
    entries: Vec<EntryRepr>,
}

#[derive(Serialize, Deserialize)]
struct Repr {
    format: String,
    version: u32,
    grid: KernelGrid,
    z_range: Option<(f64, f64)>,
    sequences: Vec<SeqRepr>,
}

fn encode(x: &[f64]) -> String {
    let bytes: Vec<u8> = x.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(s: &str, len: usize) -> Result<Vec<f64>, KernelError> {
    let bytes = STANDARD.decode(s).map_err(|e| KernelError::Snapshot(e.to_string()))?;
    if bytes.len() != 8 * len {
        return Err(KernelError::Snapshot(format!("expected {len} values, got {} bytes", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn seq_repr(s: &KernelSequence) -> SeqRepr {
    SeqRepr {
        xi: s.xi,
        max_degree: s.max_degree,
        entries: s
            .entries
            .values()
            .map(|k| EntryRepr { m: k.m, n: k.n, values: encode(&k.values), r_derivative: encode(&k.r_derivative) })
            .collect(),
    }
}

fn seq_from(r: SeqRepr, grid: &Arc<KernelGrid>) -> Result<KernelSequence, KernelError> {
    let mut entries = BTreeMap::new();
    for e in r.entries {
        if e.m + e.n > r.max_degree {
            return Err(KernelError::DegreeOverflow { m: e.m, n: e.n, max: r.max_degree });
        }
        let len = grid.n_r() * grid.tuples(e.m + e.n);
        let k = Kernel {
            m: e.m,
            n: e.n,
            grid: grid.clone(),
            values: decode(&e.values, len)?,
            r_derivative: decode(&e.r_derivative, len)?,
        };
        entries.insert((e.m, e.n), k);
    }
    if !entries.contains_key(&(0, 0)) {
        return Err(KernelError::Snapshot("sequence without w_00".into()));
    }
    Ok(KernelSequence { grid: grid.clone(), xi: r.xi, max_degree: r.max_degree, entries })
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        let (grid, z_range, seqs): (&KernelGrid, _, Vec<&KernelSequence>) = match self {
            Self::Sequence(s) => (&s.grid, None, vec![s]),
            Self::Family(p) => (p.grid(), Some((p.z_min, p.z_max)), p.seqs.iter().collect()),
        };
        let repr = Repr {
            format: FORMAT.into(),
            version: VERSION,
            grid: grid.clone(),
            z_range,
            sequences: seqs.into_iter().map(seq_repr).collect(),
        };
        serde_json::to_string_pretty(&repr).expect("snapshot serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, KernelError> {
        let repr: Repr = serde_json::from_str(s).map_err(|e| KernelError::Snapshot(e.to_string()))?;
        if repr.format != FORMAT || repr.version != VERSION {
            return Err(KernelError::Snapshot(format!("unsupported format {} v{}", repr.format, repr.version)));
        }
        let grid = Arc::new(repr.grid);
        let mut seqs = repr.sequences.into_iter().map(|r| seq_from(r, &grid)).collect::<Result<Vec<_>, _>>()?;
        match repr.z_range {
            None if seqs.len() == 1 => Ok(Self::Sequence(seqs.pop().unwrap())),
            None => Err(KernelError::Snapshot("several sequences without a z-range".into())),
            Some((a, b)) => Ok(Self::Family(ParamKernelSequence::from_parts(a, b, seqs))),
        }
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> std::io::Result<()> {
    std::fs::write(path, snap.to_json())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, KernelError> {
    let s = std::fs::read_to_string(path).map_err(|e| KernelError::Snapshot(e.to_string()))?;
    Snapshot::from_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};

    #[test]
    fn round_trip_is_bit_exact() {
        let g = KernelGrid::new(build_mode_grid(0.1, 1.0, 3, GridScheme::GaussLegendre).unwrap(), 9).unwrap();
        let fam = ParamKernelSequence::build(-0.45, 0.45, 3, |z| {
            let mut s = KernelSequence::free(&g, 0.3, 2, z);
            s.insert(Kernel::from_fn(1, 1, &g, |r, k| ((r * k[0]).exp() / 3.0 + z, k[0] * (r * k[0]).exp() / 3.0)))?;
            Ok::<_, KernelError>(s)
        })
        .unwrap();
        let snap = Snapshot::Family(fam);
        let back = Snapshot::from_json(&snap.to_json()).unwrap();
        assert_eq!(back, snap);
        let one = Snapshot::Sequence(KernelSequence::free(&g, 0.3, 2, 0.1));
        assert_eq!(Snapshot::from_json(&one.to_json()).unwrap(), one);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let g = KernelGrid::new(build_mode_grid(0.1, 1.0, 2, GridScheme::Midpoint).unwrap(), 3).unwrap();
        let json = Snapshot::Sequence(KernelSequence::free(&g, 0.3, 2, 0.0)).to_json();
        let bad = json.replacen("\"values\": \"", "\"values\": \"AAAA", 1);
        assert!(Snapshot::from_json(&bad).is_err());
    }
}
