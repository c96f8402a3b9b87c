//! On-disk formats for fit outputs: posterior draws, pointwise
//! log-likelihood matrices and observation fingerprints.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::sampler::SampleSet;

pub const FORMAT_HEADER_DRAWS: &str = "# bayes-cancel draws v1";
pub const LOGLIK_MAGIC: &[u8] = b"bayes-cancel loglik v1\n";

const STAT_COLUMNS: [&str; 7] = [
    "accept_stat__",
    "treedepth__",
    "n_leapfrog__",
    "divergent__",
    "energy__",
    "energy_error__",
    "stepsize__",
];

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes retained draws with one row per (chain, iteration). Floats use the
/// shortest representation that parses back to the same value.
pub fn write_draws_csv<W: Write>(samples: &SampleSet, mut out: W) -> Result<()> {
    writeln!(out, "{FORMAT_HEADER_DRAWS}").map_err(|e| Error::io("<draws>", e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(samples.param_names.iter().cloned());
    header.extend(STAT_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for c in 0..samples.n_chains() {
        for t in 0..samples.n_iters() {
            let st = &samples.stats[c][t];
            let mut rec = vec![(c + 1).to_string(), (t + 1).to_string()];
            rec.extend(
                samples
                    .draws
                    .slice(ndarray::s![c, t, ..])
                    .iter()
                    .map(f64::to_string),
            );
            rec.extend([
                st.accept_stat.to_string(),
                st.tree_depth.to_string(),
                st.n_leapfrog.to_string(),
                u8::from(st.divergent).to_string(),
                st.energy.to_string(),
                st.energy_error.to_string(),
                st.step_size.to_string(),
            ]);
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<draws>", e))?;
    Ok(())
}

/// Draws read back from a draws file.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsFile {
    pub param_names: Vec<String>,
    /// chains × iterations × dim
    pub draws: Array3<f64>,
    pub divergent: usize,
}

impl DrawsFile {
    /// (chains·iterations) × dim, chain-major.
    pub fn flat_draws(&self) -> Array2<f64> {
        let (c, t, d) = self.draws.dim();
        self.draws
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((c * t, d))
            .expect("contiguous draws")
    }
}

pub fn read_draws_csv(path: impl AsRef<Path>) -> Result<DrawsFile> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if first.trim_end() != FORMAT_HEADER_DRAWS {
        return Err(format_error(
            path,
            format!("expected header {FORMAT_HEADER_DRAWS:?}"),
        ));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(String::from).collect();
    let n_params = header.len().saturating_sub(2 + STAT_COLUMNS.len());
    if header.len() < 3 + STAT_COLUMNS.len() || header[0] != "chain" || header[1] != "iteration" {
        return Err(format_error(path, "malformed column header"));
    }
    let param_names = header[2..2 + n_params].to_vec();
    let divergent_col = 2 + n_params + 3;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut divergent = 0;
    for (line, rec) in csv.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    format_error(
                        path,
                        format!("row {}: bad value in column {}", line + 1, header[j]),
                    )
                })
        };
        let chain = parse(0)? as usize;
        let values = (2..2 + n_params).map(parse).collect::<Result<Vec<_>>>()?;
        divergent += usize::from(parse(divergent_col)? != 0.0);
        rows.push((chain, values));
    }
    let n_chains = rows.iter().map(|(c, _)| *c).max().unwrap_or(0);
    if n_chains == 0 || !rows.len().is_multiple_of(n_chains) {
        return Err(format_error(path, "chains have unequal lengths"));
    }
    let n_iters = rows.len() / n_chains;
    let mut draws = Array3::zeros((n_chains, n_iters, n_params));
    let mut filled = vec![0usize; n_chains];
    for (chain, values) in rows {
        let c = chain - 1;
        if filled[c] == n_iters {
            return Err(format_error(path, "chains have unequal lengths"));
        }
        for (j, v) in values.into_iter().enumerate() {
            draws[[c, filled[c], j]] = v;
        }
        filled[c] += 1;
    }
    Ok(DrawsFile {
        param_names,
        draws,
        divergent,
    })
}

/// Binary N × S matrix: magic line, N and S as little-endian u64, then
/// row-major little-endian f64 values.
pub fn write_loglik<W: Write>(loglik: &Array2<f64>, mut out: W) -> Result<()> {
    let io = |e| Error::io("<loglik>", e);
    out.write_all(LOGLIK_MAGIC).map_err(io)?;
    out.write_all(&(loglik.nrows() as u64).to_le_bytes())
        .map_err(io)?;
    out.write_all(&(loglik.ncols() as u64).to_le_bytes())
        .map_err(io)?;
    let mut buf = Vec::with_capacity(loglik.len() * 8);
    for v in loglik.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(io)?;
    out.flush().map_err(io)
}

pub fn read_loglik(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let body = bytes
        .strip_prefix(LOGLIK_MAGIC)
        .ok_or_else(|| format_error(path, "not a log-likelihood matrix"))?;
    if body.len() < 16 {
        return Err(format_error(path, "truncated header"));
    }
    let n = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
    let s = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let data = &body[16..];
    if n.checked_mul(s).and_then(|v| v.checked_mul(8)) != Some(data.len()) {
        return Err(format_error(path, format!("expected {n} × {s} values")));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((n, s), values).expect("checked length"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Identifies the observations a pointwise matrix refers to: row ids,
/// successes and trials in order. Predictor values are left out so fits with
/// different feature sets on the same rows remain comparable.
pub fn observation_fingerprint(dm: &DesignMatrix) -> String {
    let mut h = Sha256::new();
    for i in 0..dm.n_rows() {
        h.update(dm.row_ids[i].as_bytes());
        h.update([0u8]);
        h.update(dm.y[i].to_le_bytes());
        h.update(dm.trials[i].to_le_bytes());
    }
    hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn loglik_round_trip() {
        let m = array![[-0.1, -2.5, f64::MIN_POSITIVE], [-1e-300, -7.0, 0.0]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loglik.bin");
        write_loglik(&m, std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(read_loglik(&path).unwrap(), m);
    }

    #[test]
    fn truncated_loglik_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loglik.bin");
        let mut bytes = Vec::new();
        write_loglik(&array![[1.0, 2.0]], &mut bytes).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_loglik(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
