//! Feature-space augmentations: the weak view adds small Gaussian noise, the
//! strong view adds larger noise and zeroes random coordinates.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::rng::rng_for;

const WEAK: u64 = 0x5745_414b;
const STRONG: u64 = 0x5354_524f;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Augmenter {
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub dropout: f64,
}

impl Default for Augmenter {
    fn default() -> Self {
        Augmenter {
            weak_sigma: 0.05,
            strong_sigma: 0.2,
            dropout: 0.1,
        }
    }
}

impl Augmenter {
    pub fn weak(&self, x: &Matrix, seed: u64) -> Matrix {
        weak_augment(x, self.weak_sigma, seed)
    }

    pub fn strong(&self, x: &Matrix, seed: u64) -> Matrix {
        strong_augment(x, self.strong_sigma, self.dropout, seed)
    }
}

pub fn weak_augment(x: &Matrix, sigma: f64, seed: u64) -> Matrix {
    let mut out = x.clone();
    if sigma == 0.0 {
        return out;
    }
    let mut rng = rng_for(seed, &[WEAK]);
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    out
}

pub fn strong_augment(x: &Matrix, sigma: f64, dropout: f64, seed: u64) -> Matrix {
    let mut out = x.clone();
    let mut rng = rng_for(seed, &[STRONG]);
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let drop = rng.random::<f64>() < dropout;
        *v = if drop { 0.0 } else { *v + sigma * z };
    }
    out
}
