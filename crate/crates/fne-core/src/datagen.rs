//! Synthetic paired data with ground-truth semantic clusters.
//!
//! Items are drawn around well-separated latent cluster centers and projected
//! into two views by fixed random linear maps plus Gaussian noise. A fraction
//! of items (`duplicate_rate`) model the same underlying photo captioned
//! independently: their image latents collapse onto the cluster center while
//! their captions keep their own wording, and they carry a shared semantic
//! label. Cross-pairs among them are the ground-truth false negatives. The
//! remaining items get unique labels and act as hard-but-true negatives.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Identifies one dataset item by modality and index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ItemId {
    Image(usize),
    Text(usize),
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub items_per_cluster: usize,
    pub captions_per_image: usize,
    pub latent_dim: usize,
    pub image_view_dim: usize,
    pub text_view_dim: usize,
    pub noise_sigma: f64,
    /// Fraction of items generated as unlabeled semantic duplicates of their
    /// cluster: repeat photos with independently worded captions, whose
    /// cross-pairs are the ground-truth false negatives.
    pub duplicate_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_clusters: 8,
            items_per_cluster: 32,
            captions_per_image: 2,
            latent_dim: 8,
            image_view_dim: 32,
            text_view_dim: 32,
            noise_sigma: 0.05,
            duplicate_rate: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(String::from(msg)))
            }
        }
        check(self.n_clusters > 0, "n_clusters must be positive")?;
        check(self.items_per_cluster > 0, "items_per_cluster must be positive")?;
        check(self.captions_per_image > 0, "captions_per_image must be positive")?;
        check(self.latent_dim > 0, "latent_dim must be positive")?;
        check(
            self.image_view_dim >= self.latent_dim && self.text_view_dim >= self.latent_dim,
            "view dims must be at least latent_dim",
        )?;
        check(
            self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
            "noise_sigma must be nonnegative",
        )?;
        check(
            (0.0..=1.0).contains(&self.duplicate_rate),
            "duplicate_rate must be in [0, 1]",
        )
    }

    pub fn total_items(&self) -> usize {
        self.n_clusters * self.items_per_cluster
    }
}

/// Ground-truth semantic labels, hidden from the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabels {
    pub image: Vec<u64>,
    pub text: Vec<u64>,
}

/// Aligned two-view samples. Each text is annotated with exactly one image;
/// each image carries one or more captions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    image_views: Vec<Vec<f64>>,
    text_views: Vec<Vec<f64>>,
    pair_of: Vec<usize>,
    captions: Vec<Vec<usize>>,
    clusters: Option<ClusterLabels>,
}

impl PairedDataset {
    pub fn new(
        image_views: Vec<Vec<f64>>,
        text_views: Vec<Vec<f64>>,
        pair_of: Vec<usize>,
        clusters: Option<ClusterLabels>,
    ) -> Result<Self> {
        if pair_of.len() != text_views.len() {
            return Err(Error::DimensionMismatch {
                expected: text_views.len(),
                found: pair_of.len(),
            });
        }
        if let Some(c) = &clusters {
            if c.image.len() != image_views.len() || c.text.len() != text_views.len() {
                return Err(Error::DimensionMismatch {
                    expected: image_views.len() + text_views.len(),
                    found: c.image.len() + c.text.len(),
                });
            }
        }
        let mut captions = alloc::vec![Vec::new(); image_views.len()];
        for (t, &i) in pair_of.iter().enumerate() {
            if i >= image_views.len() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "text {t} annotated with out-of-range image {i}"
                )));
            }
            captions[i].push(t);
        }
        Ok(PairedDataset { image_views, text_views, pair_of, captions, clusters })
    }

    pub fn n_images(&self) -> usize {
        self.image_views.len()
    }

    pub fn n_texts(&self) -> usize {
        self.text_views.len()
    }

    pub fn image_view(&self, i: usize) -> &[f64] {
        &self.image_views[i]
    }

    pub fn text_view(&self, t: usize) -> &[f64] {
        &self.text_views[t]
    }

    pub fn image_views(&self) -> &[Vec<f64>] {
        &self.image_views
    }

    pub fn text_views(&self) -> &[Vec<f64>] {
        &self.text_views
    }

    pub fn image_dim(&self) -> usize {
        self.image_views.first().map_or(0, Vec::len)
    }

    pub fn text_dim(&self) -> usize {
        self.text_views.first().map_or(0, Vec::len)
    }

    /// Annotated image for a text.
    pub fn pair_of(&self, text: usize) -> usize {
        self.pair_of[text]
    }

    pub fn pairs(&self) -> &[usize] {
        &self.pair_of
    }

    /// Annotated captions for an image.
    pub fn captions_of(&self, image: usize) -> &[usize] {
        &self.captions[image]
    }

    pub fn clusters(&self) -> Option<&ClusterLabels> {
        self.clusters.as_ref()
    }

    pub fn has_clusters(&self) -> bool {
        self.clusters.is_some()
    }

    pub fn cluster_of(&self, item: ItemId) -> Option<u64> {
        let c = self.clusters.as_ref()?;
        Some(match item {
            ItemId::Image(i) => c.image[i],
            ItemId::Text(t) => c.text[t],
        })
    }

    /// True when `negative` shares `anchor`'s semantic cluster without being
    /// one of its annotated positives.
    pub fn is_false_negative(&self, anchor: ItemId, negative: ItemId) -> Result<bool> {
        let (ca, cn) = match (self.cluster_of(anchor), self.cluster_of(negative)) {
            (Some(a), Some(n)) => (a, n),
            _ => return Err(Error::MissingClusterLabels),
        };
        if ca != cn {
            return Ok(false);
        }
        let annotated = match (anchor, negative) {
            (ItemId::Image(i), ItemId::Text(t)) => self.captions_of(i).contains(&t),
            (ItemId::Text(t), ItemId::Image(i)) => self.pair_of(t) == i,
            _ => false,
        };
        Ok(!annotated)
    }
}

/// Generation byproducts exposed for testing: the latent points and the two
/// view maps.
#[derive(Debug, Clone)]
pub struct GeneratorArtifacts {
    /// Per-item latent behind the image view. Equals `text_latents[i]` for
    /// ordinary items; duplicates get a separate text latent.
    pub latents: Vec<Vec<f64>>,
    pub text_latents: Vec<Vec<f64>>,
    pub image_map: Vec<Vec<f64>>,
    pub text_map: Vec<Vec<f64>>,
    pub duplicate_flags: Vec<bool>,
}

// Relative latent spread of ordinary items around their cluster center.
const ITEM_SPREAD: f64 = 0.35;
// Duplicates model "the same photo captioned independently": their image
// latents collapse onto the cluster center while their text latents keep a
// moderate spread, so twin captions are interchangeable for either image but
// not for each other.
const DUPLICATE_IMAGE_SPREAD: f64 = 0.02;
const DUPLICATE_TEXT_SPREAD: f64 = 0.25;
// Maximum pairwise cosine between cluster centers, enforced by rejection.
const MAX_CENTER_COSINE: f64 = 0.5;
const MAX_CENTER_ATTEMPTS: usize = 100_000;

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one value per call keeps the stream layout simple.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| standard_normal(rng)).collect()
}

fn unit_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim);
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn matvec(matrix: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    matrix
        .iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Quantize through f32 so datasets survive the on-disk format losslessly.
fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

pub fn generate(spec: &SyntheticSpec) -> Result<PairedDataset> {
    generate_with_artifacts(spec).map(|(d, _)| d)
}

pub fn generate_with_artifacts(
    spec: &SyntheticSpec,
) -> Result<(PairedDataset, GeneratorArtifacts)> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    // Cluster centers: unit vectors with bounded pairwise cosine.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.n_clusters);
    let mut attempts = 0;
    while centers.len() < spec.n_clusters {
        attempts += 1;
        if attempts > MAX_CENTER_ATTEMPTS {
            return Err(Error::InfeasibleSpec(alloc::format!(
                "cannot place {} centers with pairwise cosine below {} in {} dims",
                spec.n_clusters,
                MAX_CENTER_COSINE,
                spec.latent_dim
            )));
        }
        let candidate = unit_vec(&mut rng, spec.latent_dim);
        let separated = centers.iter().all(|c| {
            let cos: f64 = c.iter().zip(&candidate).map(|(a, b)| a * b).sum();
            cos.abs() < MAX_CENTER_COSINE
        });
        if separated {
            centers.push(candidate);
        }
    }

    // Fixed random view maps.
    let map_scale = 1.0 / libm::sqrt(spec.latent_dim as f64);
    let mut make_map = |rows: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..spec.latent_dim).map(|_| standard_normal(&mut rng) * map_scale).collect())
            .collect()
    };
    let image_map = make_map(spec.image_view_dim);
    let text_map = make_map(spec.text_view_dim);

    let n_items = spec.total_items();
    let mut latents = Vec::with_capacity(n_items);
    let mut text_latents = Vec::with_capacity(n_items);
    let mut duplicate_flags = Vec::with_capacity(n_items);
    let mut image_labels = Vec::with_capacity(n_items);
    for cluster in 0..spec.n_clusters {
        for _ in 0..spec.items_per_cluster {
            let item = latents.len();
            let duplicate = rng.random::<f64>() < spec.duplicate_rate;
            let scatter = |rng: &mut ChaCha12Rng, spread: f64| -> Vec<f64> {
                centers[cluster]
                    .iter()
                    .zip(normal_vec(rng, spec.latent_dim))
                    .map(|(c, e)| c + spread * e)
                    .collect()
            };
            let (image_latent, text_latent) = if duplicate {
                (
                    scatter(&mut rng, DUPLICATE_IMAGE_SPREAD),
                    scatter(&mut rng, DUPLICATE_TEXT_SPREAD),
                )
            } else {
                let latent = scatter(&mut rng, ITEM_SPREAD);
                (latent.clone(), latent)
            };
            // Duplicates share their cluster's label; everything else is a
            // semantic singleton.
            let label = if duplicate {
                cluster as u64
            } else {
                (spec.n_clusters + item) as u64
            };
            latents.push(image_latent);
            text_latents.push(text_latent);
            duplicate_flags.push(duplicate);
            image_labels.push(label);
        }
    }

    let mut image_views = Vec::with_capacity(n_items);
    let mut text_views = Vec::with_capacity(n_items * spec.captions_per_image);
    let mut pair_of = Vec::with_capacity(n_items * spec.captions_per_image);
    let mut text_labels = Vec::with_capacity(n_items * spec.captions_per_image);
    for (item, latent) in latents.iter().enumerate() {
        let mut view = matvec(&image_map, latent);
        for v in &mut view {
            *v = quantize(*v + spec.noise_sigma * standard_normal(&mut rng));
        }
        image_views.push(view);
        for _ in 0..spec.captions_per_image {
            let mut view = matvec(&text_map, &text_latents[item]);
            for v in &mut view {
                *v = quantize(*v + spec.noise_sigma * standard_normal(&mut rng));
            }
            text_views.push(view);
            pair_of.push(item);
            text_labels.push(image_labels[item]);
        }
    }

    let dataset = PairedDataset::new(
        image_views,
        text_views,
        pair_of,
        Some(ClusterLabels { image: image_labels, text: text_labels }),
    )?;
    Ok((dataset, GeneratorArtifacts { latents, text_latents, image_map, text_map, duplicate_flags }))
}
