//! Parameter sampling, target generation and dataset persistence.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "TRJDSET\0"
//! version  u32      1
//! role     u32      0 = train, 1 = validation, 2 = test
//! q, m, k  u64 x 3  parameter count, grid points, rows
//! t0, tf   f64 x 2  grid interval
//! seed     u64
//! stream   u64      see RngStream::id
//! params   k*q f64  row-major
//! targets  k*m f64  row-major
//! ```

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{DynamicalSystem, ParameterDomain};
use crate::integrator::{theta, IntegrationError, TimeGrid, ToleranceSettings};
use crate::linalg::Matrix;
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"TRJDSET\0";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a dataset file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("integration failed for sample row {row}: {source}")]
    RowFailure {
        row: usize,
        #[source]
        source: IntegrationError,
    },
}

/// Which of the three sample sets a dataset is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Train, Role::Validation, Role::Test];

    pub fn tag(self) -> u32 {
        match self {
            Role::Train => 0,
            Role::Validation => 1,
            Role::Test => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.tag() == tag)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown sample set `{s}` (expected train, validation or test)"))
    }
}

/// Named random stream. Each stream is an independent ChaCha8 stream under the
/// same 64-bit seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RngStream {
    Sampling(Role),
    Weights,
}

impl RngStream {
    pub fn id(self) -> u64 {
        match self {
            RngStream::Sampling(role) => 1 + role.tag() as u64,
            RngStream::Weights => 16,
        }
    }

    pub fn from_id(id: u64) -> Option<Self> {
        match id {
            16 => Some(RngStream::Weights),
            1..=3 => Role::from_tag((id - 1) as u32).map(RngStream::Sampling),
            _ => None,
        }
    }
}

/// Seed plus stream; identical values give identical draws on every platform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub value: u64,
    pub stream: RngStream,
}

impl RngSeed {
    pub fn sampling(value: u64, role: Role) -> Self {
        Self {
            value,
            stream: RngStream::Sampling(role),
        }
    }

    pub fn weights(value: u64) -> Self {
        Self {
            value,
            stream: RngStream::Weights,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.value);
        rng.set_stream(self.stream.id());
        rng
    }
}

/// `k` independent uniform draws from the box, one per row.
pub fn sample_parameters<T: Real>(domain: &ParameterDomain<T>, k: usize, seed: RngSeed) -> Matrix<T> {
    let mut rng = seed.rng();
    let q = domain.dim();
    let mut out = Matrix::zeros(k, q);
    for i in 0..k {
        for j in 0..q {
            let (lo, hi) = (domain.lower()[j], domain.upper()[j]);
            let u = T::lit(rng.random::<f64>());
            out[(i, j)] = (lo + (hi - lo) * u).max(lo).min(hi);
        }
    }
    out
}

/// What to do when a single integration fails.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    #[default]
    Abort,
    Skip,
}

/// Targets of a generation run. With [`FailurePolicy::Skip`], `kept` lists the
/// parameter rows that produced a target row, in order.
#[derive(Debug)]
pub struct Generated<T> {
    pub targets: Matrix<T>,
    pub kept: Vec<usize>,
    pub failures: Vec<(usize, IntegrationError)>,
}

/// Solves one IVP per parameter row and samples its trajectory on `grid`.
/// Rows are independent and computed in parallel; the result does not depend
/// on scheduling.
pub fn generate_targets<T: Real, S: DynamicalSystem<T> + ?Sized>(
    sys: &S,
    params: &Matrix<T>,
    grid: &TimeGrid<T>,
    tol: &ToleranceSettings<T>,
    policy: FailurePolicy,
) -> Result<Generated<T>, DatasetError> {
    let rows: Vec<Result<Vec<T>, IntegrationError>> = (0..params.rows())
        .into_par_iter()
        .map(|i| theta(sys, params.row(i), grid, tol).map(|t| t.into_vec()))
        .collect();
    let m = grid.len();
    let mut data = Vec::with_capacity(rows.len() * m);
    let mut kept = Vec::with_capacity(rows.len());
    let mut failures = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        match r {
            Ok(v) => {
                data.extend(v);
                kept.push(i);
            }
            Err(e) if policy == FailurePolicy::Skip => failures.push((i, e)),
            Err(e) => return Err(DatasetError::RowFailure { row: i, source: e }),
        }
    }
    Ok(Generated {
        targets: Matrix::from_vec(kept.len(), m, data),
        kept,
        failures,
    })
}

/// Paired parameter and trajectory rows for one role.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet<T> {
    pub role: Role,
    params: Matrix<T>,
    targets: Matrix<T>,
    pub grid: TimeGrid<T>,
    pub seed: RngSeed,
}

impl<T: Real> SampleSet<T> {
    pub fn new(
        role: Role,
        params: Matrix<T>,
        targets: Matrix<T>,
        grid: TimeGrid<T>,
        seed: RngSeed,
    ) -> Result<Self, DatasetError> {
        if params.rows() != targets.rows() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} parameter rows but {} target rows",
                params.rows(),
                targets.rows()
            )));
        }
        if targets.cols() != grid.len() {
            return Err(DatasetError::DimensionMismatch(format!(
                "targets have {} columns but the grid has {} points",
                targets.cols(),
                grid.len()
            )));
        }
        Ok(Self {
            role,
            params,
            targets,
            grid,
            seed,
        })
    }

    /// Samples `k` parameters and integrates each of them.
    #[allow(clippy::too_many_arguments)]
    pub fn generate<S: DynamicalSystem<T> + ?Sized>(
        sys: &S,
        domain: &ParameterDomain<T>,
        role: Role,
        k: usize,
        grid: TimeGrid<T>,
        tol: &ToleranceSettings<T>,
        seed_value: u64,
        policy: FailurePolicy,
    ) -> Result<(Self, Vec<(usize, IntegrationError)>), DatasetError> {
        let seed = RngSeed::sampling(seed_value, role);
        let mut params = sample_parameters(domain, k, seed);
        let generated = generate_targets(sys, &params, &grid, tol, policy)?;
        if generated.kept.len() != params.rows() {
            let rows: Vec<Vec<T>> = generated.kept.iter().map(|&i| params.row(i).to_vec()).collect();
            params = if rows.is_empty() {
                Matrix::zeros(0, domain.dim())
            } else {
                Matrix::from_rows(&rows)
            };
        }
        let set = Self::new(role, params, generated.targets, grid, seed)?;
        Ok((set, generated.failures))
    }

    pub fn len(&self) -> usize {
        self.params.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn q(&self) -> usize {
        self.params.cols()
    }

    pub fn m(&self) -> usize {
        self.targets.cols()
    }

    pub fn params(&self) -> &Matrix<T> {
        &self.params
    }

    pub fn targets(&self) -> &Matrix<T> {
        &self.targets
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let file = File::open(path)?;
        let size = file.metadata()?.len();
        Self::read_from(&mut BufReader::new(file), Some(size))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), DatasetError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.role.tag().to_le_bytes())?;
        for v in [self.q() as u64, self.m() as u64, self.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.grid.t0().as_f64().to_le_bytes())?;
        w.write_all(&self.grid.tf().as_f64().to_le_bytes())?;
        w.write_all(&self.seed.value.to_le_bytes())?;
        w.write_all(&self.seed.stream.id().to_le_bytes())?;
        for v in self.params.as_slice().iter().chain(self.targets.as_slice()) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dataset; `size`, when known, is checked against the header.
    pub fn read_from<R: Read>(r: &mut R, size: Option<u64>) -> Result<Self, DatasetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(DatasetError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        let role_tag = read_u32(r)?;
        let role =
            Role::from_tag(role_tag).ok_or_else(|| DatasetError::Malformed(format!("unknown role tag {role_tag}")))?;
        let q = read_u64(r)?;
        let m = read_u64(r)?;
        let k = read_u64(r)?;
        let t0 = read_f64(r)?;
        let tf = read_f64(r)?;
        let seed_value = read_u64(r)?;
        let stream_id = read_u64(r)?;
        let stream = RngStream::from_id(stream_id)
            .ok_or_else(|| DatasetError::Malformed(format!("unknown stream id {stream_id}")))?;
        const HEADER: u64 = 8 + 4 + 4 + 3 * 8 + 2 * 8 + 2 * 8;
        let payload = k
            .checked_mul(q.checked_add(m).ok_or_else(overflow)?)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(overflow)?;
        if let Some(size) = size {
            if size != HEADER + payload {
                return Err(DatasetError::DimensionMismatch(format!(
                    "header declares k = {k}, q = {q}, m = {m} ({} payload bytes) but the file holds {}",
                    payload,
                    size.saturating_sub(HEADER)
                )));
            }
        }
        let grid =
            TimeGrid::new(T::lit(t0), T::lit(tf), m as usize).map_err(|e| DatasetError::Malformed(e.to_string()))?;
        let (k, q, m) = (k as usize, q as usize, m as usize);
        let params = Matrix::from_vec(k, q, read_f64s(r, k * q)?);
        let targets = Matrix::from_vec(k, m, read_f64s(r, k * m)?);
        if size.is_none() {
            let mut extra = [0u8; 1];
            if r.read(&mut extra)? != 0 {
                return Err(DatasetError::DimensionMismatch("trailing bytes after targets".into()));
            }
        }
        Self::new(
            role,
            params,
            targets,
            grid,
            RngSeed {
                value: seed_value,
                stream,
            },
        )
    }

    /// CSV with header `p1,...,pq,y1,...,ym`, one sample per line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.q())
            .map(|i| format!("p{i}"))
            .chain((1..=self.m()).map(|i| format!("y{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let fields: Vec<String> = self
                .params
                .row(i)
                .iter()
                .chain(self.targets.row(i))
                .map(|v| format!("{}", v.as_f64()))
                .collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn overflow() -> DatasetError {
    DatasetError::Malformed("declared sizes overflow".into())
}

fn truncated(e: io::Error) -> DatasetError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        DatasetError::Malformed("file is truncated".into())
    } else {
        DatasetError::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DatasetError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DatasetError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, DatasetError> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_f64s<R: Read, T: Real>(r: &mut R, count: usize) -> Result<Vec<T>, DatasetError> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::circuit_system;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn toy_set(k: usize, m: usize) -> SampleSet<f64> {
        let params = Matrix::from_fn(k, 4, |i, j| (i * 4 + j) as f64 * 0.1 + 1e-9);
        let targets = Matrix::from_fn(k, m, |i, j| ((i + 1) as f64).ln() * (j as f64 - 3.3));
        let grid = TimeGrid::new(0.0, 0.5, m).unwrap();
        SampleSet::new(
            Role::Validation,
            params,
            targets,
            grid,
            RngSeed::sampling(99, Role::Validation),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_domain_gives_constant_rows() {
        let d = ParameterDomain::new(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        let p = sample_parameters(&d, 5, RngSeed::sampling(1, Role::Train));
        assert!(p.row_iter().all(|r| r == [1.0, 2.0]));
    }

    #[test]
    fn sampling_is_reproducible_and_stream_separated() {
        let d = ParameterDomain::<f64>::circuit();
        let a = sample_parameters(&d, 20, RngSeed::sampling(5, Role::Train));
        let b = sample_parameters(&d, 20, RngSeed::sampling(5, Role::Train));
        let c = sample_parameters(&d, 20, RngSeed::sampling(5, Role::Test));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_means_approach_midpoints() {
        let d = ParameterDomain::<f64>::circuit();
        let k = 100_000;
        let p = sample_parameters(&d, k, RngSeed::sampling(2024, Role::Train));
        let mid = d.midpoint();
        for j in 0..4 {
            let mean: f64 = (0..k).map(|i| p[(i, j)]).sum::<f64>() / k as f64;
            assert!(
                (mean - mid[j]).abs() < 0.01 * mid[j],
                "coordinate {j}: {mean} vs {}",
                mid[j]
            );
        }
        assert!(p.row_iter().all(|r| d.contains(r)));
    }

    #[test]
    fn single_row_generation_equals_theta() {
        let sys = circuit_system::<f64>();
        let d = ParameterDomain::<f64>::circuit();
        let grid = TimeGrid::for_system(&sys);
        let tol = ToleranceSettings::default();
        let p = sample_parameters(&d, 1, RngSeed::sampling(3, Role::Train));
        let g = generate_targets(&sys, &p, &grid, &tol, FailurePolicy::Abort).unwrap();
        let direct = theta(&sys, p.row(0), &grid, &tol).unwrap();
        assert_eq!(g.targets.row(0), direct.values());
    }

    #[test]
    fn duplicated_rows_and_order_independence() {
        let sys = circuit_system::<f64>();
        let d = ParameterDomain::<f64>::circuit();
        let grid = TimeGrid::for_system(&sys);
        let tol = ToleranceSettings::default();
        let p = sample_parameters(&d, 4, RngSeed::sampling(8, Role::Train));
        let order = [2usize, 0, 3, 1, 2];
        let shuffled = Matrix::from_rows(&order.iter().map(|&i| p.row(i).to_vec()).collect::<Vec<_>>());
        let a = generate_targets(&sys, &p, &grid, &tol, FailurePolicy::Abort).unwrap();
        let b = generate_targets(&sys, &shuffled, &grid, &tol, FailurePolicy::Abort).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            assert_eq!(b.targets.row(pos), a.targets.row(i));
        }
        assert_eq!(b.targets.row(0), b.targets.row(4));
    }

    #[test]
    fn failure_policy_abort_and_skip() {
        // an algebraic system whose start value is inconsistent when p[0] < 0
        let sys_bad = crate::dynsys::FnSystem::new(1, (0.0, 0.5), |_, x: &[f64], _, out: &mut [f64]| out[0] = -x[0])
            .with_param_dim(4)
            .with_mass_matrix(|_| Matrix::from_diagonal(&[0.0]))
            .with_initial_state(|p| vec![if p[0] < 0.0 { 1.0 } else { 0.0 }]);
        let grid = TimeGrid::new(0.0, 0.5, 10).unwrap();
        let tol = ToleranceSettings::default();
        let p = Matrix::from_rows(&[vec![1.0, 1.0, 1.0, 1.0], vec![-1.0, 1.0, 1.0, 1.0]]);
        let err = generate_targets(&sys_bad, &p, &grid, &tol, FailurePolicy::Abort).unwrap_err();
        assert!(matches!(err, DatasetError::RowFailure { row: 1, .. }));
        let g = generate_targets(&sys_bad, &p, &grid, &tol, FailurePolicy::Skip).unwrap();
        assert_eq!(g.kept, vec![0]);
        assert_eq!(g.failures.len(), 1);
        assert_eq!(g.targets.rows(), 1);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let set = toy_set(500, 200);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.bin");
        set.save(&path).unwrap();
        let back = SampleSet::<f64>::load(&path).unwrap();
        assert_eq!(back, set);
        let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.params()), bits(set.params()));
        assert_eq!(bits(back.targets()), bits(set.targets()));
    }

    #[test]
    fn empty_set_round_trips() {
        let set = SampleSet::new(
            Role::Test,
            Matrix::<f64>::zeros(0, 4),
            Matrix::zeros(0, 200),
            TimeGrid::new(0.0, 0.5, 200).unwrap(),
            RngSeed::sampling(0, Role::Test),
        )
        .unwrap();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let back = SampleSet::<f64>::read_from(&mut buf.as_slice(), Some(buf.len() as u64)).unwrap();
        assert_eq!(back, set);
        assert!(back.is_empty());
    }

    #[test]
    fn declared_m_must_match_payload() {
        let set = toy_set(3, 10);
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        // m sits after magic, version, role and q
        let m_offset = 8 + 4 + 4 + 8;
        buf[m_offset..m_offset + 8].copy_from_slice(&11u64.to_le_bytes());
        let len = buf.len() as u64;
        let err = SampleSet::<f64>::read_from(&mut buf.as_slice(), Some(len)).unwrap_err();
        assert!(matches!(err, DatasetError::DimensionMismatch(_)), "{err}");
        let err = SampleSet::<f64>::read_from(&mut buf.as_slice(), None).unwrap_err();
        assert!(
            matches!(err, DatasetError::Malformed(_) | DatasetError::DimensionMismatch(_)),
            "{err}"
        );
    }

    #[test]
    fn header_errors() {
        let set = toy_set(2, 4);
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            SampleSet::<f64>::read_from(&mut bad.as_slice(), None),
            Err(DatasetError::BadMagic)
        ));
        let mut bad = buf.clone();
        bad[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            SampleSet::<f64>::read_from(&mut bad.as_slice(), None),
            Err(DatasetError::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let set = toy_set(2, 3);
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "p1,p2,p3,p4,y1,y2,y3");
        assert_eq!(lines.len(), 3);
        let first: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(&first[..4], set.params().row(0));
        assert_eq!(&first[4..], set.targets().row(0));
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let r = SampleSet::new(
            Role::Train,
            Matrix::<f64>::zeros(2, 4),
            Matrix::zeros(3, 3),
            grid,
            RngSeed::sampling(0, Role::Train),
        );
        assert!(matches!(r, Err(DatasetError::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn sampled_points_stay_in_box(seed in any::<u64>(), lo in -5.0f64..5.0, width in 0.0f64..3.0) {
            let d = ParameterDomain::new(vec![lo, 1e6], vec![lo + width, 2e6]).unwrap();
            let p = sample_parameters(&d, 64, RngSeed::sampling(seed, Role::Train));
            prop_assert!(p.row_iter().all(|r| d.contains(r)));
        }

        #[test]
        fn persistence_is_lossless(seed in any::<u64>(), k in 0usize..6, m in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = Matrix::from_fn(k, 4, |_, _| f64::from_bits(rng.random::<u64>() >> 2));
            let targets = Matrix::from_fn(k, m, |_, _| rng.random_range(-1e3..1e3));
            let set = SampleSet::new(Role::Train, params, targets, TimeGrid::new(0.0, 0.5, m).unwrap(), RngSeed::sampling(seed, Role::Train)).unwrap();
            let mut buf = Vec::new();
            set.write_to(&mut buf).unwrap();
            let back = SampleSet::<f64>::read_from(&mut buf.as_slice(), Some(buf.len() as u64)).unwrap();
            let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(back.params()), bits(set.params()));
            prop_assert_eq!(back.targets(), set.targets());
            prop_assert_eq!(back.seed, set.seed);
        }
    }
}
