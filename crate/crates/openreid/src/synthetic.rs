//! Gaussian "individuals": each individual is an isotropic Gaussian around
//! its own centre.

use openreid_core::dataset::{EmbeddingDataset, MetadataRecord};
use openreid_core::math;
use openreid_core::rng::Rng;
use openreid_core::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub individuals: usize,
    /// Inclusive range of images per individual.
    pub images: (usize, usize),
    pub dim: usize,
    /// Standard deviation of the centres around the origin.
    pub centre_scale: f64,
    /// Within-individual standard deviation.
    pub noise: f64,
    /// Individual `i` gets `species[i % species.len()]`.
    pub species: Vec<String>,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            individuals: 30,
            images: (8, 12),
            dim: 32,
            centre_scale: 1.5,
            noise: 1.0,
            species: vec!["lynx".into(), "salamander".into(), "turtle".into()],
            seed: 0,
        }
    }
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u = 1.0 - rng.uniform();
    let v = rng.uniform();
    math::sqrt(-2.0 * u.ln()) * (2.0 * std::f64::consts::PI * v).cos()
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: EmbeddingDataset,
    pub centres: Vec<Vec<f64>>,
}

impl Synthetic {
    /// Smallest distance between two centres.
    pub fn min_centre_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.centres.iter().enumerate() {
            for b in &self.centres[i + 1..] {
                best = best.min(math::l2(a, b));
            }
        }
        best
    }
}

pub fn gaussian_clusters(spec: &ClusterSpec) -> Synthetic {
    let mut rng = Rng::new(spec.seed);
    let centres: Vec<Vec<f64>> = (0..spec.individuals)
        .map(|_| {
            (0..spec.dim)
                .map(|_| spec.centre_scale * standard_normal(&mut rng))
                .collect()
        })
        .collect();
    let (lo, hi) = spec.images;
    let mut records = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, c) in centres.iter().enumerate() {
        let count = lo + rng.index(hi - lo + 1);
        let individual = format!("ind{i:03}");
        let species = &spec.species[i % spec.species.len()];
        for j in 0..count {
            records.push(MetadataRecord::new(
                format!("img{i:03}_{j:02}"),
                Some(&individual),
                species.as_str(),
            ));
            rows.push(c.iter().map(|&m| m + spec.noise * standard_normal(&mut rng)).collect());
        }
    }
    let matrix = Matrix::from_f64_rows(spec.dim, &rows).expect("rows have spec.dim columns");
    let dataset = EmbeddingDataset::new(records, matrix).expect("generated records are valid");
    Synthetic { dataset, centres }
}
