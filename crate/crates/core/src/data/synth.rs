use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::rng::{Rng, Stream};
use crate::series::{Dataset, Series};
use crate::{Error, Result};

const COMPONENTS: usize = 3;
const WARP_SEGMENTS: usize = 5;

/// Warped copies of smooth random class prototypes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub length: usize,
    pub dim: usize,
    /// Largest ratio between local time-scale factors; 1 disables warping.
    pub warp: f64,
    /// Standard deviation of additive white noise.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, v: String| Err(Error::Invalid(format!("synth.{field} = {v}")));
        if self.classes == 0 {
            return bad("classes", "0".into());
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class", "0".into());
        }
        if self.length < 2 {
            return bad("length", self.length.to_string());
        }
        if self.dim == 0 {
            return bad("dim", "0".into());
        }
        if !(self.warp >= 1.0 && self.warp.is_finite()) {
            return bad("warp", self.warp.to_string());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise", self.noise.to_string());
        }
        Ok(())
    }
}

/// A few Gaussian bumps per feature on `u` in [0, 1]. Localised events are
/// what time warping displaces.
#[derive(Debug, Clone)]
struct Prototype {
    // [dim][component] = (amplitude, centre, width)
    bumps: Vec<[(f64, f64, f64); COMPONENTS]>,
}

impl Prototype {
    fn draw(dim: usize, rng: &mut Rng) -> Self {
        let bumps = (0..dim)
            .map(|_| {
                std::array::from_fn(|_| {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    (
                        sign * rng.random_range(0.5..1.5),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.02..0.05),
                    )
                })
            })
            .collect();
        Prototype { bumps }
    }

    fn at(&self, d: usize, u: f64) -> f64 {
        self.bumps[d]
            .iter()
            .map(|&(a, c, w)| a * (-0.5 * ((u - c) / w).powi(2)).exp())
            .sum()
    }
}

/// Monotone piecewise-linear map of [0, 1] onto itself. Equal-width segments
/// get slopes log-uniform in [1/sqrt(w), sqrt(w)], rescaled to end at 1, so
/// no two local slopes differ by more than a factor `w`.
fn draw_warp(warp: f64, rng: &mut Rng) -> Option<[f64; WARP_SEGMENTS + 1]> {
    if warp == 1.0 {
        return None;
    }
    let half = 0.5 * warp.ln();
    let slopes: [f64; WARP_SEGMENTS] = std::array::from_fn(|_| rng.random_range(-half..=half).exp());
    let total: f64 = slopes.iter().sum();
    let mut knots = [0.0; WARP_SEGMENTS + 1];
    for k in 0..WARP_SEGMENTS {
        knots[k + 1] = knots[k] + slopes[k] / total;
    }
    knots[WARP_SEGMENTS] = 1.0;
    Some(knots)
}

fn apply_warp(knots: &[f64; WARP_SEGMENTS + 1], u: f64) -> f64 {
    let pos = u * WARP_SEGMENTS as f64;
    let seg = (pos.floor() as usize).min(WARP_SEGMENTS - 1);
    let frac = pos - seg as f64;
    knots[seg] + (knots[seg + 1] - knots[seg]) * frac
}

fn prototypes(spec: &SynthSpec) -> Vec<Prototype> {
    let mut rng = Rng::new(spec.seed, Stream::Synth);
    (0..spec.classes).map(|_| Prototype::draw(spec.dim, &mut rng)).collect()
}

/// One independent draw of samples from the prototypes of `spec.seed`.
///
/// Different `part` values share prototypes but not samples, which is how
/// disjoint train and test sets of one family are made.
pub fn synth_part(spec: &SynthSpec, part: u64) -> Result<Dataset> {
    spec.validate()?;
    let protos = prototypes(spec);
    let mut rng = Rng::aux(spec.seed, part);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Invalid(format!("synth.noise: {e}")))?;
    let step = 1.0 / (spec.length - 1) as f64;
    let mut items = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for (label, proto) in protos.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            let warp = draw_warp(spec.warp, &mut rng);
            let mut v = Array2::zeros((spec.length, spec.dim));
            for t in 0..spec.length {
                let u = t as f64 * step;
                let u = warp.as_ref().map_or(u, |k| apply_warp(k, u));
                for d in 0..spec.dim {
                    let eps = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    v[[t, d]] = proto.at(d, u) + eps;
                }
            }
            items.push(Series::labeled(v, label)?.with_id(format!("synth-{part}-{label}-{i}")));
        }
    }
    Dataset::new(items, spec.classes)
}

pub fn synth_warped(spec: &SynthSpec) -> Result<Dataset> {
    synth_part(spec, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::dtw_distance;

    fn spec() -> SynthSpec {
        SynthSpec {
            classes: 4,
            samples_per_class: 10,
            length: 50,
            dim: 2,
            warp: 2.0,
            noise: 0.05,
            seed: 7,
        }
    }

    #[test]
    fn balanced_and_seeded() {
        let a = synth_warped(&spec()).unwrap();
        assert_eq!(a.class_counts(), vec![10; 4]);
        assert_eq!(a.fixed_length(), Some(50));
        assert_eq!(a, synth_warped(&spec()).unwrap());
        assert_ne!(a.items()[0].values(), synth_part(&spec(), 1).unwrap().items()[0].values());
    }

    #[test]
    fn no_distortion_reproduces_prototype() {
        let s = SynthSpec {
            warp: 1.0,
            noise: 0.0,
            ..spec()
        };
        let ds = synth_warped(&s).unwrap();
        for k in 0..4 {
            let first = ds.items()[k * 10].values();
            for i in 1..10 {
                assert_eq!(ds.items()[k * 10 + i].values(), first);
            }
        }
    }

    #[test]
    fn warp_is_monotone_and_bounded() {
        let mut rng = Rng::aux(3, 0);
        for _ in 0..200 {
            let k = draw_warp(2.0, &mut rng).unwrap();
            let slopes: Vec<f64> = k.windows(2).map(|w| (w[1] - w[0]) * WARP_SEGMENTS as f64).collect();
            let (lo, hi) = slopes.iter().fold((f64::MAX, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
            assert!(lo > 0.0);
            assert!(hi / lo <= 2.0 + 1e-12);
            assert_eq!(apply_warp(&k, 0.0), 0.0);
            assert_eq!(apply_warp(&k, 1.0), 1.0);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(synth_warped(&SynthSpec { warp: 0.5, ..spec() }).is_err());
        assert!(synth_warped(&SynthSpec { classes: 0, ..spec() }).is_err());
        assert!(synth_warped(&SynthSpec { noise: -1.0, ..spec() }).is_err());
    }

    fn one_nn(train: &Dataset, test: &Dataset, dist: impl Fn(&Series, &Series) -> f64) -> f64 {
        let mut correct = 0;
        for q in test.items() {
            let best = train
                .items()
                .iter()
                .min_by(|a, b| dist(q, a).total_cmp(&dist(q, b)))
                .unwrap();
            correct += (best.label() == q.label()) as usize;
        }
        correct as f64 / test.len() as f64
    }

    #[test]
    fn warping_favours_dtw_over_euclidean_nearest_neighbour() {
        let s = SynthSpec {
            samples_per_class: 1,
            warp: 2.0,
            noise: 0.05,
            ..spec()
        };
        let mut euclid = 0.0;
        let mut dtw = 0.0;
        for seed in 0..5 {
            let s = SynthSpec { seed, ..s };
            let train = synth_part(&s, 0).unwrap();
            let test = synth_part(&SynthSpec { samples_per_class: 25, ..s }, 1).unwrap();
            euclid += one_nn(&train, &test, |a, b| {
                (&a.values() - &b.values()).mapv(|x| x * x).sum().sqrt()
            });
            dtw += one_nn(&train, &test, |a, b| dtw_distance(a.values(), b.values()).unwrap());
        }
        assert!(euclid < dtw, "euclidean {euclid} vs dtw {dtw}");
    }
}
