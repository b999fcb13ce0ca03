//! Random data matrices and planted observation models.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{compact_svd, norm, RANK_TOL};
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ensemble {
    Gaussian,
    CubicGaussian,
    Haar,
    WhitenedCubic,
    /// Two-component Gaussian mixture (rows drawn around two means).
    Mixture,
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::CubicGaussian => "cubic_gaussian",
            Ensemble::Haar => "haar",
            Ensemble::WhitenedCubic => "whitened_cubic",
            Ensemble::Mixture => "mixture",
        };
        f.write_str(s)
    }
}

impl FromStr for Ensemble {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "cubic_gaussian" | "cubic-gaussian" => Ok(Ensemble::CubicGaussian),
            "haar" => Ok(Ensemble::Haar),
            "whitened_cubic" | "whitened-cubic" => Ok(Ensemble::WhitenedCubic),
            "mixture" => Ok(Ensemble::Mixture),
            _ => Err(Error::Parse(format!("unknown ensemble {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub mat: Mat,
    pub kind: Ensemble,
    pub seed: u64,
}

impl DataMatrix {
    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn d(&self) -> usize {
        self.mat.cols()
    }
}

impl AsRef<Mat> for DataMatrix {
    fn as_ref(&self) -> &Mat {
        &self.mat
    }
}

fn gaussian(rng: &mut impl Rng, n: usize, d: usize, sd: f64) -> Mat {
    Mat::from_fn(n, d, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

fn left_factor(g: &Mat) -> Result<Mat> {
    let s = compact_svd(g, RANK_TOL)?;
    if s.rank() < g.cols() {
        return Err(Error::Rank("draw is rank deficient".into()));
    }
    Ok(s.u)
}

pub fn gen_matrix(kind: Ensemble, n: usize, d: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidShape("n and d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = 1.0 / (n as f64).sqrt();
    let mat = match kind {
        Ensemble::Gaussian => gaussian(&mut rng, n, d, sd),
        Ensemble::CubicGaussian => {
            let g = gaussian(&mut rng, n, d, sd);
            Mat::from_fn(n, d, |i, j| g[(i, j)].powi(3))
        }
        Ensemble::Haar | Ensemble::WhitenedCubic => {
            if n < d {
                return Err(Error::InvalidShape(format!("{kind} needs n >= d (n = {n}, d = {d})")));
            }
            let g = gaussian(&mut rng, n, d, sd);
            if kind == Ensemble::Haar {
                left_factor(&g)?
            } else {
                left_factor(&Mat::from_fn(n, d, |i, j| g[(i, j)].powi(3)))?
            }
        }
        Ensemble::Mixture => {
            return Err(Error::InvalidInput("mixture data comes from gen_gmm".into()));
        }
    };
    Ok(DataMatrix { mat, kind, seed })
}

/// Ground-truth generator of labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    Linear(Vec<f64>),
    Relu(Vec<f64>),
    /// `Σ (Xw_i)₊ r_i`
    ReluSum(Vec<(Vec<f64>, f64)>),
    /// `Σ (Xw_i)₊ / ‖(Xw_i)₊‖ · r_i`
    NormalizedReluSum(Vec<(Vec<f64>, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub plant: Plant,
    pub noise_sigma: f64,
}

impl PlantedModel {
    pub fn new(plant: Plant, noise_sigma: f64) -> Self {
        Self { plant, noise_sigma }
    }

    /// `(w_i, r_i)` pairs; a single neuron has `r = 1`.
    pub fn neurons(&self) -> Vec<(Vec<f64>, f64)> {
        match &self.plant {
            Plant::Linear(w) | Plant::Relu(w) => vec![(w.clone(), 1.0)],
            Plant::ReluSum(v) | Plant::NormalizedReluSum(v) => v.clone(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.plant, Plant::NormalizedReluSum(_))
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput("noise sigma must be >= 0".into()));
        }
        for (w, _) in self.neurons() {
            if norm(&w) == 0.0 {
                return Err(Error::DegeneratePlant("zero planted neuron".into()));
            }
        }
        Ok(())
    }

    /// Noiseless output `y*` on `x`.
    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        self.validate()?;
        let n = x.rows();
        match &self.plant {
            Plant::Linear(w) => Ok(x.matvec(w)),
            Plant::Relu(w) => Ok(relu(&x.matvec(w))),
            Plant::ReluSum(v) => {
                let mut y = vec![0.0; n];
                for (w, r) in v {
                    for (yi, a) in y.iter_mut().zip(relu(&x.matvec(w))) {
                        *yi += r * a;
                    }
                }
                Ok(y)
            }
            Plant::NormalizedReluSum(v) => {
                let mut y = vec![0.0; n];
                let mut masks: Vec<Vec<bool>> = Vec::new();
                for (w, r) in v {
                    let xw = x.matvec(w);
                    let mask: Vec<bool> = xw.iter().map(|&t| t >= 0.0).collect();
                    if masks.contains(&mask) {
                        return Err(Error::DegeneratePlant("planted masks coincide".into()));
                    }
                    masks.push(mask);
                    let a = relu(&xw);
                    let s = norm(&a);
                    if s == 0.0 {
                        return Err(Error::DegeneratePlant("dead planted neuron".into()));
                    }
                    for (yi, ai) in y.iter_mut().zip(a) {
                        *yi += r * ai / s;
                    }
                }
                Ok(y)
            }
        }
    }
}

pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Labels `y = y* + z` with `z ~ N(0, σ²/n)`; the noise is returned separately.
pub fn gen_observation(model: &PlantedModel, x: &Mat, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut y = model.predict(x)?;
    let n = x.rows();
    let mut z = vec![0.0; n];
    if model.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = model.noise_sigma / (n as f64).sqrt();
        for (zi, yi) in z.iter_mut().zip(y.iter_mut()) {
            *zi = sd * rng.sample::<f64, _>(StandardNormal);
            *yi += *zi;
        }
    }
    Ok((y, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantDirection {
    /// `w* ~ N(0, I_d)`
    Gaussian,
    /// `w*` uniform on the unit sphere
    UnitGaussian,
    /// smallest right singular vector of `X`
    SmallestSingular,
}

pub fn planted_direction(dir: PlantDirection, x: &Mat, seed: u64) -> Result<Vec<f64>> {
    let d = x.cols();
    match dir {
        PlantDirection::Gaussian | PlantDirection::UnitGaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if dir == PlantDirection::Gaussian {
                Ok(w)
            } else {
                let s = norm(&w);
                Ok(w.iter().map(|v| v / s).collect())
            }
        }
        PlantDirection::SmallestSingular => {
            let s = compact_svd(x, 1e-300)?;
            if s.rank() < d {
                return Err(Error::Rank("X is rank deficient".into()));
            }
            Ok(s.v.col(d - 1))
        }
    }
}

/// Two-component Gaussian mixture; `q_i = 1` on rows drawn around `mu1`.
pub fn gen_gmm(
    n1: usize,
    n2: usize,
    mu1: &[f64],
    mu2: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<(DataMatrix, Vec<bool>)> {
    if mu1.len() != mu2.len() {
        return Err(Error::InvalidShape("means differ in length".into()));
    }
    if norm(mu1) == 0.0 || norm(mu2) == 0.0 {
        return Err(Error::InvalidInput("means must be nonzero".into()));
    }
    let d = mu1.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mat = Mat::from_fn(n1 + n2, d, |i, j| {
        let mu = if i < n1 { mu1[j] } else { mu2[j] };
        mu + sigma * rng.sample::<f64, _>(StandardNormal)
    });
    let q = (0..n1 + n2).map(|i| i < n1).collect();
    Ok((DataMatrix { mat, kind: Ensemble::Mixture, seed }, q))
}
