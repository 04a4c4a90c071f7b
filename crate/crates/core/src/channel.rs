//! Random channel generation.
//!
//! Each link coefficient is circularly-symmetric complex Gaussian with a
//! declared variance per sub-channel, so its power gain is exponential with
//! that mean. Linked pairs reuse another pair's coefficient scaled by a
//! constant, which is how exact symmetry is imposed per realization.
//!
//! Streams are ChaCha20 keyed by the experiment seed with the realization
//! index as stream id, so any realization can be regenerated in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GainTensor, NetworkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Propagation {
    /// Gains are the fading draws alone.
    Rayleigh,
    /// Coefficient `d^-alpha * h` with transmitters and receivers dropped
    /// uniformly in a square of side `area_side`.
    PathLoss {
        alpha: f64,
        #[serde(default = "default_area_side")]
        area_side: f64,
        /// Distances are clamped below at this value.
        #[serde(default = "default_min_distance")]
        min_distance: f64,
    },
}

fn default_area_side() -> f64 {
    10.0
}

fn default_min_distance() -> f64 {
    1.0
}

/// Variance of the complex coefficient from `tx` to `rx`, per sub-channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkVariance {
    pub tx: usize,
    pub rx: usize,
    pub variance: Vec<f64>,
}

/// `h[target] = scale * h[source]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainLink {
    pub target: [usize; 2],
    pub source: [usize; 2],
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub propagation: Propagation,
    /// Pairs not listed (and not linked) have zero gain.
    pub variances: Vec<LinkVariance>,
    #[serde(default)]
    pub links: Vec<GainLink>,
}

impl ChannelModel {
    pub fn rayleigh(variances: Vec<LinkVariance>, links: Vec<GainLink>) -> Self {
        ChannelModel {
            propagation: Propagation::Rayleigh,
            variances,
            links,
        }
    }

    /// Validate against `config` and return the link application order.
    fn plan(&self, config: &NetworkConfig) -> Result<Vec<usize>> {
        let l = config.n_users();
        let n = config.n_subchannels();
        let mut declared = vec![false; l * l];
        for (k, v) in self.variances.iter().enumerate() {
            let field = format!("channel.variances[{k}]");
            if v.tx >= l || v.rx >= l {
                return Err(Error::config(field, format!("pair ({}, {}) out of range", v.tx, v.rx)));
            }
            if v.variance.len() != n {
                return Err(Error::config(
                    field,
                    format!("expected {n} variances, got {}", v.variance.len()),
                ));
            }
            if let Some(x) = v.variance.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                return Err(Error::config(field, format!("variance must be nonnegative, got {x}")));
            }
            if declared[v.tx * l + v.rx] {
                return Err(Error::config(field, "pair declared twice"));
            }
            declared[v.tx * l + v.rx] = true;
        }
        if let Propagation::PathLoss {
            alpha,
            area_side,
            min_distance,
        } = self.propagation
        {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::config("channel.propagation.alpha", "must be nonnegative"));
            }
            if !(area_side > 0.0 && area_side.is_finite()) {
                return Err(Error::config("channel.propagation.area_side", "must be positive"));
            }
            if !(min_distance > 0.0 && min_distance.is_finite()) {
                return Err(Error::config("channel.propagation.min_distance", "must be positive"));
            }
        }

        let mut target_of = vec![None; l * l];
        for (k, link) in self.links.iter().enumerate() {
            let field = format!("channel.links[{k}]");
            let [ti, tj] = link.target;
            let [si, sj] = link.source;
            if ti >= l || tj >= l || si >= l || sj >= l {
                return Err(Error::config(field, "pair out of range"));
            }
            if !(link.scale >= 0.0 && link.scale.is_finite()) {
                return Err(Error::config(field, format!("scale must be nonnegative, got {}", link.scale)));
            }
            if target_of[ti * l + tj].is_some() {
                return Err(Error::config(field, "target linked twice"));
            }
            target_of[ti * l + tj] = Some(k);
        }

        // Topological order: a link is applied after the link producing its source.
        let mut order = Vec::with_capacity(self.links.len());
        let mut state = vec![0u8; self.links.len()];
        fn visit(
            k: usize,
            links: &[GainLink],
            target_of: &[Option<usize>],
            l: usize,
            state: &mut [u8],
            order: &mut Vec<usize>,
        ) -> Result<()> {
            match state[k] {
                2 => return Ok(()),
                1 => {
                    return Err(Error::config(
                        format!("channel.links[{k}]"),
                        "link graph contains a cycle",
                    ))
                }
                _ => {}
            }
            state[k] = 1;
            let [si, sj] = links[k].source;
            if let Some(dep) = target_of[si * l + sj] {
                visit(dep, links, target_of, l, state, order)?;
            }
            state[k] = 2;
            order.push(k);
            Ok(())
        }
        for k in 0..self.links.len() {
            visit(k, &self.links, &target_of, l, &mut state, &mut order)?;
        }
        Ok(order)
    }

    /// Check the model against a network without drawing.
    pub fn validate(&self, config: &NetworkConfig) -> Result<()> {
        self.plan(config).map(|_| ())
    }
}

/// Independent stream for one realization.
pub fn realization_rng(seed: u64, realization: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

/// Draw one gain tensor.
pub fn draw_gains(
    model: &ChannelModel,
    config: &NetworkConfig,
    seed: u64,
    realization: u64,
) -> Result<GainTensor> {
    let order = model.plan(config)?;
    let l = config.n_users();
    let n = config.n_subchannels();
    let mut rng = realization_rng(seed, realization);

    let path_gain: Option<Vec<f64>> = match model.propagation {
        Propagation::Rayleigh => None,
        Propagation::PathLoss {
            alpha,
            area_side,
            min_distance,
        } => {
            let mut pos = || -> [f64; 2] {
                [
                    rng.random::<f64>() * area_side,
                    rng.random::<f64>() * area_side,
                ]
            };
            let tx: Vec<[f64; 2]> = (0..l).map(|_| pos()).collect();
            let rx: Vec<[f64; 2]> = (0..l).map(|_| pos()).collect();
            let mut pg = vec![0.0; l * l];
            for i in 0..l {
                for j in 0..l {
                    let d = ((tx[i][0] - rx[j][0]).powi(2) + (tx[i][1] - rx[j][1]).powi(2))
                        .sqrt()
                        .max(min_distance);
                    // Power gain of a d^-alpha amplitude law.
                    pg[i * l + j] = d.powf(-2.0 * alpha);
                }
            }
            Some(pg)
        }
    };

    let mut g = vec![0.0; l * l * n];
    let linked: Vec<bool> = {
        let mut v = vec![false; l * l];
        for link in &model.links {
            v[link.target[0] * l + link.target[1]] = true;
        }
        v
    };
    for var in &model.variances {
        if linked[var.tx * l + var.rx] {
            continue;
        }
        let scale = path_gain.as_ref().map_or(1.0, |pg| pg[var.tx * l + var.rx]);
        for (f, &v) in var.variance.iter().enumerate() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(var.tx * l + var.rx) * n + f] = 0.5 * v * (re * re + im * im) * scale;
        }
    }
    for k in order {
        let link = &model.links[k];
        let src = (link.source[0] * l + link.source[1]) * n;
        let dst = (link.target[0] * l + link.target[1]) * n;
        let s2 = link.scale * link.scale;
        for f in 0..n {
            g[dst + f] = s2 * g[src + f];
        }
    }
    GainTensor::new(l, n, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_user() -> NetworkConfig {
        NetworkConfig::single_pu(3, vec![1.0, 1.0, 1.0], 1.0, 0.1).unwrap()
    }

    fn diag(v: f64) -> Vec<LinkVariance> {
        (0..3)
            .map(|i| LinkVariance {
                tx: i,
                rx: i,
                variance: vec![v; 3],
            })
            .collect()
    }

    #[test]
    fn undeclared_pairs_are_zero() {
        let config = three_user();
        let g = draw_gains(&ChannelModel::rayleigh(diag(1.0), vec![]), &config, 1, 0).unwrap();
        assert!(g.link(0, 1).iter().all(|&x| x == 0.0));
        assert!(g.link(1, 1).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_variance_gives_zero_gain() {
        let config = three_user();
        let mut v = diag(1.0);
        v.push(LinkVariance {
            tx: 1,
            rx: 2,
            variance: vec![0.0, 2.0, 0.0],
        });
        let g = draw_gains(&ChannelModel::rayleigh(v, vec![]), &config, 1, 3).unwrap();
        assert_eq!(g.get(1, 2, 0), 0.0);
        assert!(g.get(1, 2, 1) > 0.0);
        assert_eq!(g.get(1, 2, 2), 0.0);
    }

    #[test]
    fn linked_pair_is_exact_multiple() {
        let config = three_user();
        let links = vec![
            GainLink {
                target: [2, 2],
                source: [1, 1],
                scale: 1.0,
            },
            GainLink {
                target: [1, 2],
                source: [1, 1],
                scale: 0.5,
            },
        ];
        let model = ChannelModel::rayleigh(diag(1.0), links);
        for r in 0..50 {
            let g = draw_gains(&model, &config, 9, r).unwrap();
            for f in 0..3 {
                assert_eq!(g.get(1, 2, f), 0.25 * g.get(1, 1, f));
                assert_eq!(g.get(2, 2, f), g.get(1, 1, f));
            }
        }
    }

    #[test]
    fn chained_links_resolve_in_order() {
        let config = three_user();
        // Declared out of order: (0,2) <- (0,1) <- (0,0).
        let links = vec![
            GainLink {
                target: [0, 2],
                source: [0, 1],
                scale: 2.0,
            },
            GainLink {
                target: [0, 1],
                source: [0, 0],
                scale: 3.0,
            },
        ];
        let g = draw_gains(&ChannelModel::rayleigh(diag(1.0), links), &config, 4, 0).unwrap();
        for f in 0..3 {
            assert_eq!(g.get(0, 1, f), 9.0 * g.get(0, 0, f));
            assert_eq!(g.get(0, 2, f), 4.0 * g.get(0, 1, f));
        }
    }

    #[test]
    fn cyclic_links_are_rejected() {
        let config = three_user();
        let links = vec![
            GainLink {
                target: [0, 1],
                source: [0, 2],
                scale: 1.0,
            },
            GainLink {
                target: [0, 2],
                source: [0, 1],
                scale: 1.0,
            },
        ];
        assert!(matches!(
            draw_gains(&ChannelModel::rayleigh(diag(1.0), links), &config, 0, 0),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn deterministic_per_realization() {
        let config = three_user();
        let model = ChannelModel::rayleigh(diag(1.0), vec![]);
        let a = draw_gains(&model, &config, 42, 17).unwrap();
        let b = draw_gains(&model, &config, 42, 17).unwrap();
        let c = draw_gains(&model, &config, 42, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn exponential_mean_concentrates() {
        let config = NetworkConfig::single_pu(1, vec![1.0, 1.0], 1.0, 0.1).unwrap();
        let model = ChannelModel::rayleigh(
            vec![
                LinkVariance {
                    tx: 0,
                    rx: 0,
                    variance: vec![2.0],
                },
                LinkVariance {
                    tx: 1,
                    rx: 1,
                    variance: vec![2.0],
                },
            ],
            vec![],
        );
        let draws = 100_000;
        let mean = (0..draws)
            .map(|r| draw_gains(&model, &config, 5, r).unwrap().get(0, 0, 0))
            .sum::<f64>()
            / draws as f64;
        // Exponential with mean 2 has sd 2; 4 standard errors is ~0.025.
        assert!((1.96..=2.04).contains(&mean), "mean {mean}");
    }

    #[test]
    fn path_loss_attenuates() {
        let config = three_user();
        let model = ChannelModel {
            propagation: Propagation::PathLoss {
                alpha: 2.0,
                area_side: 10.0,
                min_distance: 1.0,
            },
            variances: diag(1.0),
            links: vec![],
        };
        let mut below = 0;
        for r in 0..200 {
            let g = draw_gains(&model, &config, 3, r).unwrap();
            if g.get(0, 0, 0) < 1.0 {
                below += 1;
            }
        }
        assert!(below > 150);
    }
}
