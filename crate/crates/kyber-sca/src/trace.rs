//! Binary trace file format (`KTR1`).
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "KTR1"
//! 4       4           version (u32) = 1
//! 8       4           d: number of traces (u32)
//! 12      4           t: samples per trace (u32), = 128 * samples_per_call
//! 16      4           samples_per_call (u32)
//! 20      4           q (u32) = 3329
//! 24      d*t*4       samples (f32, row-major)
//! ...     d*128*2*2   ciphertext coefficients (u16), per slot: even, odd
//! ```
//!
//! Round-trips are bit-exact: floats are stored by their IEEE-754 bits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::leakage::TraceSet;
use crate::params::{Q, SLOTS};

pub const MAGIC: [u8; 4] = *b"KTR1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("not a trace file: bad magic {0:02x?}")]
    MalformedMagic([u8; 4]),
    #[error("unsupported trace format version {found} (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("inconsistent header: {0}")]
    HeaderInconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serialize a trace set to its on-disk byte layout.
pub fn to_bytes(ts: &TraceSet) -> Vec<u8> {
    let t = ts.t();
    let mut out = Vec::with_capacity(24 + ts.samples.len() * 4 + ts.ciphertexts.len() * 2);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ts.d as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(ts.samples_per_call as u32).to_le_bytes());
    out.extend_from_slice(&(Q as u32).to_le_bytes());
    for &s in &ts.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for &c in &ts.ciphertexts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

/// Parse a trace set from its on-disk byte layout.
pub fn from_bytes(bytes: &[u8]) -> Result<TraceSet, TraceError> {
    if bytes.len() < 4 {
        return Err(TraceError::TruncatedPayload { expected: 24, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(TraceError::MalformedMagic(magic));
    }
    if bytes.len() < 24 {
        return Err(TraceError::TruncatedPayload { expected: 24, found: bytes.len() });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(TraceError::VersionMismatch { found: version });
    }
    let d = word(8) as usize;
    let t = word(12) as usize;
    let samples_per_call = word(16) as usize;
    let q = word(20);
    if q != Q as u32 {
        return Err(TraceError::HeaderInconsistent(format!("modulus {q}, expected {Q}")));
    }
    if samples_per_call == 0 || t != SLOTS * samples_per_call {
        return Err(TraceError::HeaderInconsistent(format!(
            "t = {t} but samples_per_call = {samples_per_call} (t must be 128 * samples_per_call)"
        )));
    }
    if d == 0 {
        return Err(TraceError::HeaderInconsistent("zero traces".into()));
    }
    let expected = 24 + d * t * 4 + d * 2 * SLOTS * 2;
    if bytes.len() != expected {
        return Err(TraceError::TruncatedPayload { expected, found: bytes.len() });
    }
    let mut samples = Vec::with_capacity(d * t);
    let mut off = 24;
    for _ in 0..d * t {
        samples.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        off += 4;
    }
    let mut ciphertexts = Vec::with_capacity(d * 2 * SLOTS);
    for _ in 0..d * 2 * SLOTS {
        let c = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap());
        if c >= Q as u16 {
            return Err(TraceError::HeaderInconsistent(format!(
                "ciphertext coefficient {c} not reduced mod {Q}"
            )));
        }
        ciphertexts.push(c);
        off += 2;
    }
    Ok(TraceSet { d, samples_per_call, samples, ciphertexts })
}

/// Write `ts` to `path`.
pub fn write_trace_file(path: &Path, ts: &TraceSet) -> Result<(), TraceError> {
    let mut f = File::create(path)?;
    f.write_all(&to_bytes(ts))?;
    Ok(())
}

/// Read a trace set from `path`.
pub fn read_trace_file(path: &Path) -> Result<TraceSet, TraceError> {
    let mut f = File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Human-oriented header and per-call statistics, used by trace inspection.
pub fn describe(ts: &TraceSet) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let t = ts.t();
    writeln!(out, "traces:            {}", ts.d).unwrap();
    writeln!(out, "samples per trace: {t}").unwrap();
    writeln!(out, "samples per call:  {}", ts.samples_per_call).unwrap();
    writeln!(out, "modulus:           {Q}").unwrap();
    let spc = ts.samples_per_call;
    writeln!(out, "per-sample-offset mean/std across all calls and traces:").unwrap();
    for s in 0..spc {
        let mut sum = 0f64;
        let mut sumsq = 0f64;
        let mut n = 0f64;
        for trace in 0..ts.d {
            let row = ts.trace(trace);
            for call in 0..SLOTS {
                let v = row[call * spc + s] as f64;
                sum += v;
                sumsq += v * v;
                n += 1.0;
            }
        }
        let mean = sum / n;
        let var = (sumsq / n - mean * mean).max(0.0);
        writeln!(out, "  offset {s}: mean {mean:+.4}, std {:.4}", var.sqrt()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::{simulate_traces, HalfGroup, LeakageConfig};
    use crate::params::KyberParams;
    use crate::poly::sample_secret;

    fn sample_set() -> TraceSet {
        let params = KyberParams::new(512).unwrap();
        let skey = sample_secret(1, &params).ntt();
        let cfg = LeakageConfig { sigma: 0.7, ..LeakageConfig::default() };
        simulate_traces(&skey, 3, &cfg, &params, HalfGroup::Even).unwrap()
    }

    #[test]
    fn roundtrip_bit_exact() {
        let ts = sample_set();
        let bytes = to_bytes(&ts);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(ts, back);
        // Byte-level stability too.
        assert_eq!(bytes, to_bytes(&back));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.ktr");
        let ts = sample_set();
        write_trace_file(&path, &ts).unwrap();
        let back = read_trace_file(&path).unwrap();
        assert_eq!(ts, back);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let ts = sample_set();
        let bytes = to_bytes(&ts);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(from_bytes(&bad_magic), Err(TraceError::MalformedMagic(_))));

        let mut bad_version = bytes.clone();
        bad_version[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bad_version),
            Err(TraceError::VersionMismatch { found: 7 })
        ));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(from_bytes(truncated), Err(TraceError::TruncatedPayload { .. })));

        let mut bad_t = bytes.clone();
        bad_t[12..16].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(from_bytes(&bad_t), Err(TraceError::HeaderInconsistent(_))));
    }

    #[test]
    fn header_layout_is_frozen() {
        let ts = sample_set();
        let bytes = to_bytes(&ts);
        assert_eq!(&bytes[0..4], b"KTR1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1024);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 3329);
        assert_eq!(bytes.len(), 24 + 3 * 1024 * 4 + 3 * 256 * 2);
    }
}
