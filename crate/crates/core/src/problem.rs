//! Composite problems with a quadratic smooth part.
//!
//! The smooth part is `f(x) = ½xᵀQx − cᵀx + constant` with `Q` stored dense
//! and row-major; the nonsmooth part is a [`SeparableRegularizer`] applied to
//! every coordinate. Everything the solvers need from the problem (objective,
//! one gradient entry, the Lipschitz constants) lives here.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prox::SeparableRegularizer;

const SYMMETRY_RTOL: f64 = 1e-12;
const SINGULAR_RTOL: f64 = 1e-10;

/// `F(x) = ½xᵀQx − cᵀx + constant + Σ g(x_i)`.
///
/// Immutable once built, so it can be shared by reference across worker
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeProblem {
    n: usize,
    q: Vec<f64>,
    c: Vec<f64>,
    constant: f64,
    reg: SeparableRegularizer,
}

/// Coordinate and restricted Lipschitz constants of `∇f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzInfo {
    pub l_max: f64,
    pub l_res: f64,
    /// `l_res / l_max`, always in `[1, √n]`.
    pub lambda_ratio: f64,
}

impl CompositeProblem {
    /// Builds a problem from a row-major `n×n` matrix and a length-`n` vector.
    ///
    /// Rejects non-finite data, asymmetric `Q` (entrywise relative tolerance
    /// `1e-12`) and negative diagonal entries.
    pub fn new(q: Vec<f64>, c: Vec<f64>, constant: f64, reg: SeparableRegularizer) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::InvalidArgument("problem dimension must be positive".into()));
        }
        if q.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("c"));
        }
        if !constant.is_finite() {
            return Err(Error::NonFinite("constant"));
        }
        reg.validate()?;
        for i in 0..n {
            let d = q[i * n + i];
            if d < 0.0 {
                return Err(Error::NegativeDiagonal { i, value: d });
            }
            for j in (i + 1)..n {
                let a = q[i * n + j];
                let b = q[j * n + i];
                if (a - b).abs() > SYMMETRY_RTOL * a.abs().max(b.abs()) {
                    return Err(Error::NotSymmetric { i, j, a, b });
                }
            }
        }
        Ok(CompositeProblem { n, q, c, constant, reg })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row-major `Q`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn regularizer(&self) -> &SeparableRegularizer {
        &self.reg
    }

    /// Same smooth part, different regularizer.
    pub fn with_regularizer(&self, reg: SeparableRegularizer) -> Result<Self> {
        reg.validate()?;
        Ok(CompositeProblem { reg, ..self.clone() })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            })
        }
    }

    /// `f(x)` alone.
    pub fn smooth_value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.smooth_value_unchecked(x))
    }

    pub(crate) fn smooth_value_unchecked(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..self.n {
            quad += x[i] * dot(self.row(i), x);
            lin += self.c[i] * x[i];
        }
        0.5 * quad - lin + self.constant
    }

    /// `F(x)`. Returns `+∞` when `x` leaves the box of an indicator regularizer.
    pub fn evaluate_objective(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x"));
        }
        Ok(self.objective_unchecked(x))
    }

    pub(crate) fn objective_unchecked(&self, x: &[f64]) -> f64 {
        let g = self.reg.value(x);
        if g.is_infinite() {
            return f64::INFINITY;
        }
        self.smooth_value_unchecked(x) + g
    }

    /// `∇_i f(x) = Q_{i·}·x − c_i`.
    pub fn gradient_coordinate(&self, snapshot: &[f64], i: usize) -> Result<f64> {
        self.check_len(snapshot)?;
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(self.gradient_coordinate_unchecked(snapshot, i))
    }

    #[inline]
    pub(crate) fn gradient_coordinate_unchecked(&self, snapshot: &[f64], i: usize) -> f64 {
        dot(self.row(i), snapshot) - self.c[i]
    }

    /// `Qx − c`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok((0..self.n).map(|i| self.gradient_coordinate_unchecked(x, i)).collect())
    }

    /// `l_max = max |Q_ij|`, `l_res = max_i ‖Q_{·i}‖₂`.
    pub fn lipschitz_info(&self) -> Result<LipschitzInfo> {
        let l_max = self.q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if l_max == 0.0 {
            return Err(Error::ZeroLipschitz);
        }
        // Q is symmetric, so row norms are column norms.
        let l_res = (0..self.n)
            .map(|i| dot(self.row(i), self.row(i)).sqrt())
            .fold(0.0f64, f64::max);
        Ok(LipschitzInfo {
            l_max,
            l_res,
            lambda_ratio: l_res / l_max,
        })
    }

    /// Smallest eigenvalue of `Q`, the optimal-strong-convexity modulus when
    /// `f` is strongly convex.
    ///
    /// Strong convexity of `f` with modulus `l` carries over to `F = f + g`
    /// for any convex `g`, so this holds for every regularizer kind. Singular
    /// `Q` (smallest eigenvalue at most `1e-10·l_max`) has no modulus we can
    /// compute and is reported as an error.
    pub fn osc_modulus(&self) -> Result<f64> {
        let l_max = self
            .lipschitz_info()
            .map_err(|_| Error::OscUnavailable("Q is zero".into()))?
            .l_max;
        let m = nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.q);
        let eig = nalgebra::SymmetricEigen::new(m);
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= SINGULAR_RTOL * l_max {
            return Err(Error::OscUnavailable(format!(
                "Q is singular to tolerance (smallest eigenvalue {min:e})"
            )));
        }
        Ok(min)
    }

    /// Writes the binary instance format: a one-line text header followed by
    /// `Q` (row-major) and `c` as little-endian `f64`s.
    pub fn write_instance<W: Write>(&self, mut w: W) -> Result<()> {
        let header = format!(
            "ASYSPCD1 n={} reg={} const={}\n",
            self.n,
            encode_regularizer(&self.reg),
            self.constant
        );
        let io = |e| Error::io("<instance>", e);
        w.write_all(header.as_bytes()).map_err(io)?;
        let mut buf = Vec::with_capacity(8 * self.n);
        for row in self.q.chunks(self.n).chain(std::iter::once(&self.c[..])) {
            buf.clear();
            for v in row {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_instance<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = Vec::new();
        r.read_until(b'\n', &mut header)
            .map_err(|e| Error::io("<instance>", e))?;
        if header.last() != Some(&b'\n') {
            return Err(Error::Format("missing header line".into()));
        }
        let header = std::str::from_utf8(&header[..header.len() - 1])
            .map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let (n, reg, constant) = parse_header(header)?;
        let mut q = vec![0.0; n * n];
        let mut c = vec![0.0; n];
        read_f64s(&mut r, &mut q)?;
        read_f64s(&mut r, &mut c)?;
        let mut probe = [0u8; 1];
        match r.read(&mut probe) {
            Ok(0) => {}
            Ok(_) => return Err(Error::Format("trailing bytes after c".into())),
            Err(e) => return Err(Error::io("<instance>", e)),
        }
        CompositeProblem::new(q, c, constant, reg)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_instance(std::io::BufWriter::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_instance(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Hex SHA-256 of the instance-file encoding.
    pub fn digest(&self) -> String {
        struct HashWriter(Sha256);
        impl Write for HashWriter {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.update(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut hw = HashWriter(Sha256::new());
        self.write_instance(&mut hw).expect("hashing cannot fail");
        hw.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A-priori estimate `1 + √(n/m)` of `Λ` for `Q = AᵀA` with Gaussian `A` (m×n).
pub fn gaussian_lambda_estimate(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("m and n must be positive".into()));
    }
    Ok(1.0 + (n as f64 / m as f64).sqrt())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn encode_regularizer(reg: &SeparableRegularizer) -> String {
    match *reg {
        SeparableRegularizer::Zero => "zero".to_string(),
        SeparableRegularizer::L1 { lambda } => format!("l1:{lambda}"),
        SeparableRegularizer::Box { lo, hi } => format!("box:{lo}:{hi}"),
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("bad {what} value {s:?}")))
}

fn parse_header(header: &str) -> Result<(usize, SeparableRegularizer, f64)> {
    let mut parts = header.split(' ');
    if parts.next() != Some("ASYSPCD1") {
        return Err(Error::Format("bad magic, expected ASYSPCD1".into()));
    }
    let mut field = |key: &str| -> Result<&str> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .ok_or_else(|| Error::Format(format!("expected field {key}")))
    };
    let n_str = field("n=")?;
    let reg_str = field("reg=")?;
    let const_str = field("const=")?;
    let n: usize = n_str
        .parse()
        .map_err(|_| Error::Format(format!("bad dimension {n_str:?}")))?;
    let reg = match reg_str.split(':').collect::<Vec<_>>().as_slice() {
        ["zero"] => SeparableRegularizer::Zero,
        ["l1", lambda] => SeparableRegularizer::L1 {
            lambda: parse_f64(lambda, "l1")?,
        },
        ["box", lo, hi] => SeparableRegularizer::Box {
            lo: parse_f64(lo, "box")?,
            hi: parse_f64(hi, "box")?,
        },
        _ => return Err(Error::Format(format!("bad regularizer {reg_str:?}"))),
    };
    let constant = parse_f64(const_str, "const")?;
    if parts.next().is_some() {
        return Err(Error::Format("unexpected trailing header fields".into()));
    }
    Ok((n, reg, constant))
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8 * 512];
    for chunk in out.chunks_mut(512) {
        let bytes = &mut buf[..8 * chunk.len()];
        r.read_exact(bytes).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format("truncated payload".into())
            } else {
                Error::io("<instance>", e)
            }
        })?;
        for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().unwrap());
        }
    }
    Ok(())
}
