//! File formats for the `scr` command-line tool.
//!
//! * systems are JSON documents `{n, m, d, W, V, readout}`; complex entries
//!   are `[re, im]` pairs (a bare number is read as a real entry) and
//!   matrices are row-major nested arrays;
//! * input streams are CSV with an `# M=<bound>` metadata line and a header
//!   `c1_re,c1_im,…`;
//! * traces are CSV with one row per time step.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use scr_core::linalg::{ComplexMatrix, PermutationSpec, C64};
use scr_core::reservoir::{Coupling, InputStream, LinearReservoirSystem, PolyTerm, Readout, ReadoutMap};

/// A complex entry: `[re, im]` or a plain real number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Complex([f64; 2]),
    Real(f64),
}

impl Entry {
    pub fn value(self) -> C64 {
        match self {
            Self::Complex([re, im]) => C64::new(re, im),
            Self::Real(re) => C64::new(re, 0.0),
        }
    }
}

impl From<C64> for Entry {
    fn from(z: C64) -> Self {
        Self::Complex([z.re, z.im])
    }
}

pub type MatrixFile = Vec<Vec<Entry>>;

fn matrix_to_file(m: &ComplexMatrix) -> MatrixFile {
    m.to_rows().into_iter().map(|row| row.into_iter().map(Entry::from).collect()).collect()
}

fn matrix_from_file(rows: &MatrixFile, what: &str, shape: (usize, usize)) -> Result<ComplexMatrix> {
    if rows.len() != shape.0 {
        bail!("{what}: expected {} rows, found {}", shape.0, rows.len());
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != shape.1 {
            bail!("{what}: row {} has {} entries, expected {}", i + 1, row.len(), shape.1);
        }
    }
    let entries = rows.iter().flatten().map(|e| e.value()).collect();
    ComplexMatrix::from_row_major(shape.0, shape.1, entries).map_err(|e| anyhow!("{what}: {e}"))
}

/// `W`, either dense or `scale · (P_1 ⊕ P_2 ⊕ …)` with one-based images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingFile {
    Dense(MatrixFile),
    Permutation { scale: f64, blocks: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFile {
    pub exponents: Vec<u32>,
    pub coefficient: Entry,
    /// Zero-based output index.
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReadoutFile {
    Identity,
    /// `z ↦ L (A x) + c + Σ terms(A x)`; `A` defaults to the identity.
    Polynomial {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pre_transform: Option<MatrixFile>,
        linear: MatrixFile,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        constant: Vec<Entry>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        terms: Vec<TermFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    #[serde(rename = "W")]
    pub w: CouplingFile,
    #[serde(rename = "V")]
    pub v: MatrixFile,
    pub readout: ReadoutFile,
}

impl SystemFile {
    pub fn from_system(r: &LinearReservoirSystem) -> Result<Self> {
        let w = match r.coupling() {
            Coupling::Dense(w) => CouplingFile::Dense(matrix_to_file(w)),
            Coupling::PermutationBlocks { scale, blocks } => CouplingFile::Permutation {
                scale: *scale,
                blocks: blocks.iter().map(|p| p.image().iter().map(|i| i + 1).collect()).collect(),
            },
        };
        let readout = match r.readout().map() {
            ReadoutMap::Custom { name, .. } => bail!("readout `{name}` is a custom function and cannot be saved"),
            ReadoutMap::Polynomial {
                linear,
                constant,
                terms,
            } => ReadoutFile::Polynomial {
                pre_transform: r.readout().pre_transform().map(matrix_to_file),
                linear: matrix_to_file(linear),
                constant: if constant.iter().all(|c| *c == C64::new(0.0, 0.0)) {
                    Vec::new()
                } else {
                    constant.iter().copied().map(Entry::from).collect()
                },
                terms: terms
                    .iter()
                    .map(|t| TermFile {
                        exponents: t.exponents.clone(),
                        coefficient: t.coefficient.into(),
                        output: t.output,
                    })
                    .collect(),
            },
        };
        Ok(Self {
            n: r.n(),
            m: r.m(),
            d: r.d(),
            w,
            v: matrix_to_file(r.v()),
            readout,
        })
    }

    pub fn to_system(&self) -> Result<LinearReservoirSystem> {
        let (n, m, d) = (self.n, self.m, self.d);
        let w = match &self.w {
            CouplingFile::Dense(rows) => Coupling::from_dense(matrix_from_file(rows, "W", (n, n))?),
            CouplingFile::Permutation { scale, blocks } => {
                let blocks = blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| PermutationSpec::from_one_based(b).map_err(|e| anyhow!("W block {}: {e}", i + 1)))
                    .collect::<Result<Vec<_>>>()?;
                let total: usize = blocks.iter().map(PermutationSpec::size).sum();
                if total != n {
                    bail!("W: permutation blocks cover {total} states, expected n = {n}");
                }
                Coupling::PermutationBlocks { scale: *scale, blocks }
            }
        };
        let v = matrix_from_file(&self.v, "V", (n, m))?;
        let readout = match &self.readout {
            ReadoutFile::Identity => Readout::identity(n),
            ReadoutFile::Polynomial {
                pre_transform,
                linear,
                constant,
                terms,
            } => {
                let inner = match pre_transform {
                    Some(rows) => {
                        let k = rows.first().map_or(0, Vec::len);
                        let a = rows.len();
                        if k != n {
                            bail!("readout.pre_transform: expected {n} columns, found {k}");
                        }
                        Some(matrix_from_file(rows, "readout.pre_transform", (a, n))?)
                    }
                    None => None,
                };
                let z = inner.as_ref().map_or(n, ComplexMatrix::rows);
                let lin = matrix_from_file(linear, "readout.linear", (d, z))?;
                let constant: Vec<C64> = if constant.is_empty() {
                    vec![C64::new(0.0, 0.0); d]
                } else {
                    constant.iter().map(|e| e.value()).collect()
                };
                let terms = terms
                    .iter()
                    .map(|t| PolyTerm {
                        exponents: t.exponents.clone(),
                        coefficient: t.coefficient.value(),
                        output: t.output,
                    })
                    .collect();
                let base = Readout::polynomial(lin, constant, terms).map_err(|e| anyhow!("readout: {e}"))?;
                match inner {
                    Some(a) => base.with_pre_transform(a).map_err(|e| anyhow!("readout: {e}"))?,
                    None => base,
                }
            }
        };
        if readout.output_dim() != d {
            bail!("readout produces {} outputs, expected d = {d}", readout.output_dim());
        }
        LinearReservoirSystem::with_coupling(w, v, readout).map_err(|e| anyhow!("system: {e}"))
    }
}

pub fn load_system(path: &Path) -> Result<LinearReservoirSystem> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: SystemFile = serde_json::from_str(&text).map_err(|e| {
        anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column())
    })?;
    file.to_system().with_context(|| format!("in {}", path.display()))
}

pub fn save_system(r: &LinearReservoirSystem, path: &Path) -> Result<()> {
    let file = SystemFile::from_system(r)?;
    write_json(&file, path)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parses a stream file: leading `#` lines carry `key=value` metadata, of
/// which `M` is required, followed by CSV with a header row.
pub fn parse_stream(text: &str, origin: &str) -> Result<InputStream> {
    let mut bound = None;
    let mut skipped = 0usize;
    for line in text.lines() {
        let Some(meta) = line.trim_start().strip_prefix('#') else {
            break;
        };
        skipped += 1;
        for item in meta.split([',', ' ']).filter(|s| !s.is_empty()) {
            if let Some(v) = item.strip_prefix("M=") {
                bound = Some(
                    v.parse::<f64>()
                        .map_err(|e| anyhow!("{origin}:{skipped}: bad value for M: {e}"))?,
                );
            }
        }
    }
    let bound = bound.ok_or_else(|| anyhow!("{origin}: missing `# M=<bound>` metadata line"))?;
    let body: String = text.lines().skip(skipped).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| anyhow!("{origin}:{}: {e}", skipped + 1))?.clone();
    if header.len() % 2 != 0 || header.is_empty() {
        bail!("{origin}:{}: header needs c<i>_re,c<i>_im column pairs", skipped + 1);
    }
    let m = header.len() / 2;
    for i in 0..m {
        let (re, im) = (format!("c{}_re", i + 1), format!("c{}_im", i + 1));
        if header[2 * i] != re || header[2 * i + 1] != im {
            bail!("{origin}:{}: expected columns {re},{im}", skipped + 1);
        }
    }
    let mut samples = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            anyhow!("{origin}:{}: {e}", line + skipped)
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + skipped;
        let values = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| anyhow!("{origin}:{line}: `{f}`: {e}")))
            .collect::<Result<Vec<_>>>()?;
        let sample: Vec<C64> = values.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        let norm = sample.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > bound * (1.0 + 1e-12) {
            bail!("{origin}:{line}: sample norm {norm} exceeds M = {bound}");
        }
        samples.push(sample);
    }
    InputStream::new(m, bound, samples).map_err(|e| anyhow!("{origin}: {e}"))
}

pub fn load_stream(path: &Path) -> Result<InputStream> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_stream(&text, &path.display().to_string())
}

pub fn write_stream(u: &InputStream, mut out: impl Write) -> Result<()> {
    writeln!(out, "# M={}", u.bound())?;
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=u.m()).flat_map(|i| [format!("c{i}_re"), format!("c{i}_im")]).collect();
    w.write_record(&header)?;
    for c in u.samples() {
        w.write_record(c.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]))?;
    }
    w.flush()?;
    Ok(())
}

/// Simulates `r` on `u` and writes `t, x…, y…` rows (or `t, y…` when
/// `outputs_only`).
pub fn write_trace(r: &LinearReservoirSystem, u: &InputStream, outputs_only: bool, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    if !outputs_only {
        header.extend((1..=r.n()).flat_map(|i| [format!("x{i}_re"), format!("x{i}_im")]));
    }
    header.extend((1..=r.d()).flat_map(|i| [format!("y{i}_re"), format!("y{i}_im")]));
    w.write_record(&header)?;
    let mut failure = None;
    r.simulate_with(u, |t, x, y| {
        if failure.is_some() {
            return;
        }
        let mut row = vec![t.to_string()];
        if !outputs_only {
            row.extend(x.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]));
        }
        row.extend(y.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]));
        if let Err(e) = w.write_record(&row) {
            failure = Some(e);
        }
    })
    .map_err(|e| anyhow!("simulation: {e}"))?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}
