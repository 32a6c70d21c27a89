//! Class-structured synthetic datasets, episodic subsampling, and the
//! JSON-lines persistence format.
//!
//! A dataset file holds one meta object on its first line followed by one
//! object per class. Floats are written with 17 significant digits so that
//! a save/load round trip is bit-exact.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{wrap_angle, Family, FamilyParams, DISCRETE_SYMBOLS};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Flat,
    Hierarchical,
    Factorial,
}

impl std::str::FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Structure::Flat),
            "hierarchical" => Ok(Structure::Hierarchical),
            "factorial" => Ok(Structure::Factorial),
            _ => Err(format!(
                "unknown structure '{s}' (expected flat, hierarchical or factorial)"
            )),
        }
    }
}

/// Hyperprior settings for every generator. All of them are recorded in the
/// dataset meta line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub gaussian_mu_sd: f64,
    pub gaussian_sigma: f64,
    pub mixture_center_sd: f64,
    pub mixture_separation: f64,
    pub mixture_sigma: f64,
    pub von_mises_kappa: f64,
    pub gamma_alpha_low: f64,
    pub gamma_alpha_high: f64,
    pub gamma_beta: f64,
    pub hier_tau: f64,
    pub hier_sigma_c: f64,
    pub hier_sigma_x: f64,
    pub factorial_content_sd: f64,
    pub factorial_style_sd: f64,
    pub factorial_sigma: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            gaussian_mu_sd: 10.0,
            gaussian_sigma: 1.0,
            mixture_center_sd: 10.0,
            mixture_separation: 4.0,
            mixture_sigma: 0.5,
            von_mises_kappa: 2.0,
            gamma_alpha_low: 1.0,
            gamma_alpha_high: 5.0,
            gamma_beta: 1.0,
            hier_tau: 5.0,
            hier_sigma_c: 1.0,
            hier_sigma_x: 0.5,
            factorial_content_sd: 5.0,
            factorial_style_sd: 2.0,
            factorial_sigma: 0.3,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("gaussian_mu_sd", self.gaussian_mu_sd),
            ("gaussian_sigma", self.gaussian_sigma),
            ("mixture_center_sd", self.mixture_center_sd),
            ("mixture_sigma", self.mixture_sigma),
            ("gamma_beta", self.gamma_beta),
            ("gamma_alpha_low", self.gamma_alpha_low),
            ("hier_tau", self.hier_tau),
            ("hier_sigma_c", self.hier_sigma_c),
            ("hier_sigma_x", self.hier_sigma_x),
            ("factorial_content_sd", self.factorial_content_sd),
            ("factorial_style_sd", self.factorial_style_sd),
            ("factorial_sigma", self.factorial_sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DataError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.mixture_separation >= 0.0) || !(self.von_mises_kappa >= 0.0) {
            return Err(DataError::Config(
                "mixture_separation and von_mises_kappa must be non-negative".into(),
            ));
        }
        if !(self.gamma_alpha_high > self.gamma_alpha_low) || !self.gamma_alpha_high.is_finite() {
            return Err(DataError::Config(
                "gamma_alpha_high must exceed gamma_alpha_low".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub family: Family,
    pub structure: Structure,
    pub seed: u64,
    pub n_classes: usize,
    pub n_per_class: usize,
    pub hyper: Hyper,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_groups: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_contents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_styles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_offsets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class_id: usize,
    pub true_params: FamilyParams,
    pub elements: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub classes: Vec<ClassRecord>,
}

/// One training or evaluation episode: a target element and a support set
/// drawn from the same class.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub class_id: usize,
    pub x: f64,
    pub x_index: usize,
    pub d: Vec<f64>,
    pub d_indices: Vec<usize>,
    pub class_size: usize,
}

impl Episode {
    /// An episode whose support is exactly {x} from a singleton class.
    pub fn singleton(x: f64) -> Self {
        Episode {
            class_id: 0,
            x,
            x_index: 0,
            d: vec![x],
            d_indices: vec![0],
            class_size: 1,
        }
    }
}

/// The four class types of the discrete family: {1–4}, {5–8}, odd, even.
pub fn discrete_subsets() -> [Vec<f64>; 4] {
    let mask = |keep: fn(usize) -> bool| -> Vec<f64> {
        let members = (1..=DISCRETE_SYMBOLS).filter(|&k| keep(k)).count() as f64;
        (1..=DISCRETE_SYMBOLS)
            .map(|k| if keep(k) { 1.0 / members } else { 0.0 })
            .collect()
    };
    [
        mask(|k| k <= 4),
        mask(|k| k >= 5),
        mask(|k| k % 2 == 1),
        mask(|k| k % 2 == 0),
    ]
}

fn normal<G: Rng>(rng: &mut G) -> f64 {
    rng.sample(StandardNormal)
}

fn check_counts(counts: &[(&str, usize)]) -> Result<(), DataError> {
    for (name, n) in counts {
        if *n == 0 {
            return Err(DataError::Config(format!("{name} must be at least 1")));
        }
    }
    Ok(())
}

fn draw_class_params<G: Rng>(family: Family, hyper: &Hyper, rng: &mut G) -> FamilyParams {
    match family {
        Family::Gaussian => FamilyParams::Gaussian {
            mu: hyper.gaussian_mu_sd * normal(rng),
            sigma: hyper.gaussian_sigma,
        },
        Family::Mixture2 => FamilyParams::Mixture2 {
            center: hyper.mixture_center_sd * normal(rng),
            half_sep: 0.5 * hyper.mixture_separation,
            sigma: hyper.mixture_sigma,
        },
        Family::VonMises => FamilyParams::VonMises {
            mu: wrap_angle(rng.random_range(-PI..PI)),
            kappa: hyper.von_mises_kappa,
        },
        Family::Gamma => FamilyParams::Gamma {
            alpha: rng.random_range(hyper.gamma_alpha_low..hyper.gamma_alpha_high),
            beta: hyper.gamma_beta,
        },
        Family::Discrete => {
            let kind = rng.random_range(0..4);
            FamilyParams::Discrete {
                probs: discrete_subsets()[kind].clone(),
            }
        }
    }
}

/// Flat dataset of `n_classes` classes from one family.
pub fn generate(
    family: Family,
    n_classes: usize,
    n_per_class: usize,
    seed: u64,
    hyper: &Hyper,
) -> Result<Dataset, DataError> {
    check_counts(&[("n_classes", n_classes), ("n_per_class", n_per_class)])?;
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = (0..n_classes)
        .map(|class_id| {
            let true_params = draw_class_params(family, hyper, &mut rng);
            let elements = (0..n_per_class)
                .map(|_| true_params.sample(&mut rng))
                .collect();
            ClassRecord {
                class_id,
                true_params,
                elements,
                group_id: None,
                style_id: None,
                content_id: None,
            }
        })
        .collect();
    Ok(Dataset {
        meta: DatasetMeta {
            family,
            structure: Structure::Flat,
            seed,
            n_classes,
            n_per_class,
            hyper: hyper.clone(),
            n_groups: None,
            group_means: None,
            n_contents: None,
            n_styles: None,
            content_means: None,
            style_offsets: None,
        },
        classes,
    })
}

/// Two-level Gaussian hierarchy: a_g ~ N(0, τ²), c_i ~ N(a_g, σc²),
/// x ~ N(c_i, σx²).
pub fn generate_hierarchical(
    n_groups: usize,
    classes_per_group: usize,
    n_per_class: usize,
    seed: u64,
    hyper: &Hyper,
) -> Result<Dataset, DataError> {
    check_counts(&[
        ("n_groups", n_groups),
        ("classes_per_group", classes_per_group),
        ("n_per_class", n_per_class),
    ])?;
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group_means = Vec::with_capacity(n_groups);
    let mut classes = Vec::with_capacity(n_groups * classes_per_group);
    for g in 0..n_groups {
        let a = hyper.hier_tau * normal(&mut rng);
        group_means.push(a);
        for _ in 0..classes_per_group {
            let c = a + hyper.hier_sigma_c * normal(&mut rng);
            let true_params = FamilyParams::Gaussian {
                mu: c,
                sigma: hyper.hier_sigma_x,
            };
            let elements = (0..n_per_class)
                .map(|_| true_params.sample(&mut rng))
                .collect();
            classes.push(ClassRecord {
                class_id: classes.len(),
                true_params,
                elements,
                group_id: Some(g),
                style_id: None,
                content_id: None,
            });
        }
    }
    Ok(Dataset {
        meta: DatasetMeta {
            family: Family::Gaussian,
            structure: Structure::Hierarchical,
            seed,
            n_classes: classes.len(),
            n_per_class,
            hyper: hyper.clone(),
            n_groups: Some(n_groups),
            group_means: Some(group_means),
            n_contents: None,
            n_styles: None,
            content_means: None,
            style_offsets: None,
        },
        classes,
    })
}

/// Additive content × style grid: x = μ_content + δ_style + ε. Each record
/// is one (content, style) cell.
pub fn generate_factorial(
    n_contents: usize,
    n_styles: usize,
    n_per_cell: usize,
    seed: u64,
    hyper: &Hyper,
) -> Result<Dataset, DataError> {
    check_counts(&[
        ("n_contents", n_contents),
        ("n_styles", n_styles),
        ("n_per_cell", n_per_cell),
    ])?;
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content_means: Vec<f64> = (0..n_contents)
        .map(|_| hyper.factorial_content_sd * normal(&mut rng))
        .collect();
    let style_offsets: Vec<f64> = (0..n_styles)
        .map(|_| hyper.factorial_style_sd * normal(&mut rng))
        .collect();
    let mut classes = Vec::with_capacity(n_contents * n_styles);
    for (ci, &mu) in content_means.iter().enumerate() {
        for (si, &delta) in style_offsets.iter().enumerate() {
            let true_params = FamilyParams::Gaussian {
                mu: mu + delta,
                sigma: hyper.factorial_sigma,
            };
            let elements = (0..n_per_cell)
                .map(|_| true_params.sample(&mut rng))
                .collect();
            classes.push(ClassRecord {
                class_id: classes.len(),
                true_params,
                elements,
                group_id: None,
                style_id: Some(si),
                content_id: Some(ci),
            });
        }
    }
    Ok(Dataset {
        meta: DatasetMeta {
            family: Family::Gaussian,
            structure: Structure::Factorial,
            seed,
            n_classes: classes.len(),
            n_per_class: n_per_cell,
            hyper: hyper.clone(),
            n_groups: None,
            group_means: None,
            n_contents: Some(n_contents),
            n_styles: Some(n_styles),
            content_means: Some(content_means),
            style_offsets: Some(style_offsets),
        },
        classes,
    })
}

/// `n` distinct indices from `0..len`, uniformly without replacement.
pub fn sample_indices<G: Rng>(len: usize, n: usize, rng: &mut G) -> Vec<usize> {
    index::sample(rng, len, n).into_vec()
}

impl Dataset {
    pub fn class(&self, class_id: usize) -> Result<&ClassRecord, DataError> {
        self.classes.get(class_id).ok_or_else(|| {
            DataError::Usage(format!(
                "class {class_id} does not exist ({} classes)",
                self.classes.len()
            ))
        })
    }

    pub fn total_elements(&self) -> usize {
        self.classes.iter().map(|c| c.elements.len()).sum()
    }

    /// Ids of classes belonging to a hierarchical group, in id order.
    pub fn group_classes(&self, group_id: usize) -> Vec<usize> {
        self.classes
            .iter()
            .filter(|c| c.group_id == Some(group_id))
            .map(|c| c.class_id)
            .collect()
    }

    pub fn group_elements(&self, group_id: usize) -> Vec<f64> {
        self.classes
            .iter()
            .filter(|c| c.group_id == Some(group_id))
            .flat_map(|c| c.elements.iter().copied())
            .collect()
    }

    /// All elements sharing a content id, cell by cell in id order.
    pub fn content_elements(&self, content_id: usize) -> Vec<f64> {
        self.classes
            .iter()
            .filter(|c| c.content_id == Some(content_id))
            .flat_map(|c| c.elements.iter().copied())
            .collect()
    }

    pub fn style_elements(&self, style_id: usize) -> Vec<f64> {
        self.classes
            .iter()
            .filter(|c| c.style_id == Some(style_id))
            .flat_map(|c| c.elements.iter().copied())
            .collect()
    }

    /// Splits every class into its first `n_train` elements and the rest.
    pub fn split_elements(&self, n_train: usize) -> Result<(Dataset, Dataset), DataError> {
        if n_train == 0 || n_train >= self.meta.n_per_class {
            return Err(DataError::Usage(format!(
                "cannot keep {n_train} of {} elements per class and hold out the rest",
                self.meta.n_per_class
            )));
        }
        let part = |keep: &dyn Fn(&[f64]) -> Vec<f64>, n: usize| {
            let mut ds = self.clone();
            ds.meta.n_per_class = n;
            for c in &mut ds.classes {
                c.elements = keep(&c.elements);
            }
            ds
        };
        Ok((
            part(&|xs| xs[..n_train].to_vec(), n_train),
            part(
                &|xs| xs[n_train..].to_vec(),
                self.meta.n_per_class - n_train,
            ),
        ))
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.class_id).collect()
    }

    /// Checks the structural invariants: contiguous ids, uniform class sizes,
    /// in-support elements, tags consistent with the structure.
    pub fn validate(&self) -> Result<(), DataError> {
        let meta = &self.meta;
        if self.classes.len() != meta.n_classes {
            return Err(DataError::Config(format!(
                "meta declares {} classes, found {}",
                meta.n_classes,
                self.classes.len()
            )));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.class_id != i {
                return Err(DataError::Config(format!(
                    "class ids must be 0..n in order; position {i} holds id {}",
                    c.class_id
                )));
            }
            if c.elements.len() != meta.n_per_class {
                return Err(DataError::Config(format!(
                    "class {i} has {} elements, expected {}",
                    c.elements.len(),
                    meta.n_per_class
                )));
            }
            if c.true_params.family() != meta.family {
                return Err(DataError::Config(format!(
                    "class {i} has a {} parameter record",
                    c.true_params.family()
                )));
            }
            if let Some(x) = c.elements.iter().find(|&&x| !meta.family.in_support(x)) {
                return Err(DataError::Config(format!(
                    "class {i} element {x} outside the {} support",
                    meta.family
                )));
            }
            let tagged = match meta.structure {
                Structure::Flat => true,
                Structure::Hierarchical => c.group_id.is_some(),
                Structure::Factorial => c.content_id.is_some() && c.style_id.is_some(),
            };
            if !tagged {
                return Err(DataError::Config(format!(
                    "class {i} lacks the ids required by {:?} structure",
                    meta.structure
                )));
            }
        }
        Ok(())
    }

    /// Writes the JSON-lines file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<(), DataError> {
        write_line(out, &self.meta)?;
        for c in &self.classes {
            write_line(out, c)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }

    pub fn read_jsonl<B: BufRead>(input: B) -> Result<Dataset, DataError> {
        let mut lines = input.lines();
        let first = lines.next().ok_or(DataError::Parse {
            line: 1,
            msg: "empty file".into(),
        })??;
        let meta: DatasetMeta = serde_json::from_str(&first).map_err(|e| DataError::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        let mut classes = Vec::with_capacity(meta.n_classes);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let class: ClassRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            classes.push(class);
        }
        if classes.len() != meta.n_classes {
            return Err(DataError::Parse {
                line: classes.len() + 2,
                msg: format!(
                    "expected {} class lines, found {}",
                    meta.n_classes,
                    classes.len()
                ),
            });
        }
        let ds = Dataset { meta, classes };
        ds.validate().map_err(|e| DataError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(ds)
    }
}

/// Episode from one class: x uniform over the class, D uniform without
/// replacement and independent of x (x may appear in D).
pub fn sample_episode<G: Rng>(
    dataset: &Dataset,
    class_id: usize,
    d_size: usize,
    rng: &mut G,
) -> Result<Episode, DataError> {
    let class = dataset.class(class_id)?;
    sample_episode_from(&class.elements, class_id, d_size, rng)
}

pub fn sample_episode_from<G: Rng>(
    elements: &[f64],
    class_id: usize,
    d_size: usize,
    rng: &mut G,
) -> Result<Episode, DataError> {
    let n = elements.len();
    if d_size == 0 || d_size > n {
        return Err(DataError::Usage(format!(
            "support size {d_size} must be in 1..={n} for class {class_id}"
        )));
    }
    let x_index = rng.random_range(0..n);
    let mut d_indices = sample_indices(n, d_size, rng);
    d_indices.shuffle(rng);
    Ok(Episode {
        class_id,
        x: elements[x_index],
        x_index,
        d: d_indices.iter().map(|&i| elements[i]).collect(),
        d_indices,
        class_size: n,
    })
}

/// Writes one JSON value per line with floats at 17 significant digits.
fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), DataError> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *out, SignificantDigits);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// JSON formatter printing every f64 as `{:.16e}` (17 significant digits).
pub struct SignificantDigits;

impl serde_json::ser::Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// `{:.16e}` rendering used by every text output in the crate.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
