use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TspError;

/// Dense symmetric Euclidean distance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds the matrix from planar points. The distance is
    /// `sqrt(dx*dx + dy*dy)`; guest harnesses must use the same expression
    /// to reproduce native tie-breaking bit for bit.
    pub fn from_points(coords: &[[f64; 2]]) -> Self {
        let n = coords.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclidean(coords[i], coords[j]);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[inline]
pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// A symmetric Euclidean TSP instance in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    seed: u64,
    coords: Vec<[f64; 2]>,
    dist: DistanceMatrix,
}

impl TspInstance {
    /// Samples `n` points i.i.d. uniformly in `[0,1)^2`.
    pub fn generate(n: usize, seed: u64) -> Result<Self, TspError> {
        if n < 2 {
            return Err(TspError::InvalidInstance(format!(
                "an instance needs at least 2 nodes, got {n}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        Self::from_coords(coords, seed)
    }

    pub fn from_coords(coords: Vec<[f64; 2]>, seed: u64) -> Result<Self, TspError> {
        if coords.len() < 2 {
            return Err(TspError::InvalidInstance(format!(
                "an instance needs at least 2 nodes, got {}",
                coords.len()
            )));
        }
        if let Some(bad) = coords
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(TspError::InvalidInstance(format!(
                "coordinate {bad} is not finite"
            )));
        }
        let dist = DistanceMatrix::from_points(&coords);
        Ok(TspInstance { seed, coords, dist })
    }

    /// Stable identifier used in reports and baseline import files.
    pub fn id(&self) -> InstanceId {
        InstanceId::new(self.n(), self.seed)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn dist(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn load(path: &Path) -> Result<Self, TspError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TspError::Io(format!("{}: {e}", path.display())))?;
        let file: InstanceFile = serde_json::from_str(&text)
            .map_err(|e| TspError::InvalidInstance(format!("{}: {e}", path.display())))?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<(), TspError> {
        let text = serde_json::to_string_pretty(&InstanceFile::from(self))
            .map_err(|e| TspError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| TspError::Io(format!("{}: {e}", path.display())))
    }
}

/// `tsp{n}-{seed}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(String);

impl InstanceId {
    pub fn new(n: usize, seed: u64) -> Self {
        InstanceId(format!("tsp{n}-{seed}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// On-disk instance layout. Coordinates are written with shortest
/// round-trip precision, so a save/load cycle is lossless.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub seed: u64,
    pub coords: Vec<[f64; 2]>,
}

impl From<&TspInstance> for InstanceFile {
    fn from(inst: &TspInstance) -> Self {
        InstanceFile {
            n: inst.n(),
            seed: inst.seed,
            coords: inst.coords.clone(),
        }
    }
}

impl TryFrom<InstanceFile> for TspInstance {
    type Error = TspError;

    fn try_from(file: InstanceFile) -> Result<Self, TspError> {
        if file.n != file.coords.len() {
            return Err(TspError::InvalidInstance(format!(
                "declared n={} but {} coordinates given",
                file.n,
                file.coords.len()
            )));
        }
        TspInstance::from_coords(file.coords, file.seed)
    }
}

/// Seeds for a batch of `count` instances drawn from one base seed.
pub fn batch_seeds(base_seed: u64, count: usize) -> impl Iterator<Item = u64> {
    (0..count as u64).map(move |k| base_seed.wrapping_mul(1_000_003).wrapping_add(k))
}

pub fn generate_batch(
    n: usize,
    count: usize,
    base_seed: u64,
) -> Result<Vec<TspInstance>, TspError> {
    batch_seeds(base_seed, count)
        .map(|seed| TspInstance::generate(n, seed))
        .collect()
}
