//! Activation-maximization visualization.
//!
//! Particle swarm search for a virtual input whose normalized influence
//! vector matches a backbone's target vector. The search is confined to a
//! per-class pixel whitelist; all other pixels stay at exactly zero. Outputs
//! render to binary PGM (P5) or PNG.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::Backbone;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{influence, LayeredNet};

/// Particle swarm parameters. Positions live in `[0, 1]` per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 50,
            iterations: 200,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 0,
        }
    }
}

impl PsoConfig {
    fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidParam {
                what: "swarm_size".into(),
                message: "need at least 2 particles".into(),
            });
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return Err(Error::InvalidParam {
                what: "inertia".into(),
                message: format!("must lie in (0, 1), got {}", self.inertia),
            });
        }
        Ok(())
    }
}

/// Pixels the optimizer may vary.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitelist {
    mask: Vec<bool>,
    fraction: f64,
}

impl Whitelist {
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn allowed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Whitelist allowing every pixel.
    pub fn all(input_dim: usize) -> Self {
        Whitelist {
            mask: vec![true; input_dim],
            fraction: 1.0,
        }
    }
}

/// Selects the fraction of pixels with the highest mean intensity over the
/// class's instances; ties break toward the lower pixel index.
pub fn pixel_whitelist(data: &LabeledDataset, class: usize, fraction: f64) -> Result<Whitelist> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParam {
            what: "fraction".into(),
            message: format!("must lie in (0, 1], got {fraction}"),
        });
    }
    let dim = data.input_dim();
    let mut sums = vec![0.0; dim];
    let mut count = 0usize;
    for (x, y) in data.iter() {
        if y == class {
            for (s, &v) in sums.iter_mut().zip(x) {
                *s += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::ClassAbsent { class });
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        sums[b]
            .partial_cmp(&sums[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let keep = (fraction * dim as f64).ceil() as usize;
    let mut mask = vec![false; dim];
    for &p in order.iter().take(keep) {
        mask[p] = true;
    }
    Ok(Whitelist { mask, fraction })
}

/// Unit target vector: each backbone neuron carries the largest weight of a
/// pattern containing it, everything else is zero.
pub fn backbone_target(net: &LayeredNet, b: &Backbone) -> Vec<f64> {
    let layout = net.layout();
    let mut target = vec![0.0; layout.total()];
    for p in b.patterns() {
        for &n in &p.neurons {
            let slot = &mut target[layout.flat(n)];
            if p.weight > *slot {
                *slot = p.weight;
            }
        }
    }
    normalize_unit(&mut target);
    target
}

fn normalize_unit(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Distance between the instance's normalized influence vector and the
/// backbone target.
pub fn influence_distance(net: &LayeredNet, x: &[f64], target: &[f64]) -> Result<f64> {
    let trace = net.forward_with_activations(x)?;
    let infl = influence(net, &trace.hidden)?;
    let mut v = infl.flatten();
    normalize_unit(&mut v);
    Ok(v.iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Result of one swarm run.
#[derive(Debug, Clone)]
pub struct PsoResult {
    /// Best virtual instance found, full input dimension.
    pub position: Vec<f64>,
    /// Its objective value.
    pub distance: f64,
    /// Best objective after initialization and after every iteration.
    pub trace: Vec<f64>,
}

/// Minimizes the influence distance to the backbone target by particle swarm
/// search over the whitelisted pixels. Deterministic for a fixed seed.
pub fn pso_maximize(
    net: &LayeredNet,
    b: &Backbone,
    whitelist: &Whitelist,
    cfg: &PsoConfig,
) -> Result<PsoResult> {
    cfg.validate()?;
    if whitelist.mask.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "whitelist".into(),
            expected: net.input_dim(),
            found: whitelist.mask.len(),
        });
    }
    let target = backbone_target(net, b);
    let free: Vec<usize> = (0..net.input_dim())
        .filter(|&i| whitelist.mask[i])
        .collect();
    let dim = free.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let embed = |coords: &[f64]| {
        let mut full = vec![0.0; net.input_dim()];
        for (&pixel, &v) in free.iter().zip(coords) {
            full[pixel] = v;
        }
        full
    };
    let eval = |coords: &[f64]| influence_distance(net, &embed(coords), &target);

    let mut positions: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let mut velocities: Vec<Vec<f64>> = vec![vec![0.0; dim]; cfg.swarm_size];
    let mut personal_best = positions.clone();
    let mut personal_cost: Vec<f64> = Vec::with_capacity(cfg.swarm_size);
    for p in &positions {
        personal_cost.push(eval(p)?);
    }
    let mut best_idx = 0;
    for (i, &c) in personal_cost.iter().enumerate() {
        if c < personal_cost[best_idx] {
            best_idx = i;
        }
    }
    let mut global_best = personal_best[best_idx].clone();
    let mut global_cost = personal_cost[best_idx];
    let mut trace = vec![global_cost];

    for _ in 0..cfg.iterations {
        for i in 0..cfg.swarm_size {
            for d in 0..dim {
                let r1: f64 = rng.random_range(0.0..1.0);
                let r2: f64 = rng.random_range(0.0..1.0);
                velocities[i][d] = cfg.inertia * velocities[i][d]
                    + cfg.cognitive * r1 * (personal_best[i][d] - positions[i][d])
                    + cfg.social * r2 * (global_best[d] - positions[i][d]);
                positions[i][d] = (positions[i][d] + velocities[i][d]).clamp(0.0, 1.0);
            }
            let cost = eval(&positions[i])?;
            if cost < personal_cost[i] {
                personal_cost[i] = cost;
                personal_best[i] = positions[i].clone();
                if cost < global_cost {
                    global_cost = cost;
                    global_best = positions[i].clone();
                }
            }
        }
        trace.push(global_cost);
    }

    Ok(PsoResult {
        position: embed(&global_best),
        distance: global_cost,
        trace,
    })
}

/// Writes a grayscale image; the format follows the extension (`.pgm` binary
/// P5, `.png` via the image crate). Values are clamped to `[0, 1]` and
/// scaled to 8 bits.
pub fn render(x: &[f64], shape: (usize, usize), path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = shape;
    if h * w != x.len() {
        return Err(Error::DimensionMismatch {
            what: "image shape".into(),
            expected: x.len(),
            found: h * w,
        });
    }
    let bytes: Vec<u8> = x
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => {
            let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
            write!(f, "P5\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
            f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
            Ok(())
        }
        Some("png") => {
            let img = image::GrayImage::from_raw(w as u32, h as u32, bytes).ok_or_else(|| {
                Error::InvalidParam {
                    what: "image".into(),
                    message: "buffer does not match shape".into(),
                }
            })?;
            img.save(path).map_err(|e| Error::Parse {
                what: format!("png file {}", path.display()),
                message: e.to_string(),
            })
        }
        other => Err(Error::InvalidParam {
            what: "image path".into(),
            message: format!("unsupported extension {other:?}, use .pgm or .png"),
        }),
    }
}

/// Reads a binary PGM written by [`render`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(Vec<u8>, (usize, usize))> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    let parse_err = |message: &str| Error::Parse {
        what: format!("pgm file {}", path.display()),
        message: message.into(),
    };
    // Header: magic, width, height, maxval, single whitespace, then pixels.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 && pos < raw.len() {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&raw[start..pos]).map_err(|_| parse_err("bad header"))?);
    }
    if fields.len() != 4 || fields[0] != "P5" {
        return Err(parse_err("expected binary P5 header"));
    }
    let w: usize = fields[1].parse().map_err(|_| parse_err("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| parse_err("bad height"))?;
    if fields[3] != "255" {
        return Err(parse_err("expected maxval 255"));
    }
    pos += 1;
    if raw.len() - pos != w * h {
        return Err(parse_err("pixel payload size mismatch"));
    }
    Ok((raw[pos..].to_vec(), (h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::WeightedPattern;
    use crate::net::{Activation, NeuronId};
    use crate::transact::ConceptId;
    use std::collections::BTreeSet;

    fn neuron_set(ids: &[(usize, usize)]) -> BTreeSet<NeuronId> {
        ids.iter().map(|&(l, i)| NeuronId::new(l, i)).collect()
    }

    /// Net where input pixel 0 drives chain ((0,0),(1,0)) and pixel 1 drives
    /// ((0,1),(1,1)); the remaining neurons have zero influence everywhere.
    fn two_chain_net() -> LayeredNet {
        let w0 = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        ];
        let w1 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w2 = vec![vec![1.0], vec![1.0]];
        LayeredNet::new(
            4,
            vec![2, 2],
            1,
            Activation::Relu,
            vec![w0, w1, w2],
            vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0]],
        )
        .unwrap()
    }

    fn two_chain_backbone() -> Backbone {
        Backbone::from_parts(
            ConceptId::ClassCorrect(0),
            1.0,
            vec![
                WeightedPattern {
                    neurons: neuron_set(&[(0, 0), (1, 0)]),
                    support: 1.0,
                    weight: 1.0,
                },
                WeightedPattern {
                    neurons: neuron_set(&[(0, 1), (1, 1)]),
                    support: 0.5,
                    weight: 0.5,
                },
            ],
        )
    }

    #[test]
    fn whitelist_ranks_by_mean_intensity() {
        let data = LabeledDataset::new(
            vec![
                vec![0.0, 0.9, 0.1, 0.8, 0.0, 0.0, 0.7, 0.0, 0.6, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            ],
            vec![0, 1],
            2,
        )
        .unwrap();
        let w = pixel_whitelist(&data, 0, 0.4).unwrap();
        assert_eq!(w.allowed(), 4);
        for p in [1, 3, 6, 8] {
            assert!(w.mask()[p], "pixel {p} should be whitelisted");
        }
    }

    #[test]
    fn whitelist_degenerate_and_ties() {
        let data = LabeledDataset::new(
            vec![vec![0.5; 10], vec![0.5; 10]],
            vec![0, 0],
            1,
        )
        .unwrap();
        let all = pixel_whitelist(&data, 0, 1.0).unwrap();
        assert_eq!(all.allowed(), 10);
        // Uniform image: lowest-index prefix wins.
        let w = pixel_whitelist(&data, 0, 0.3).unwrap();
        assert_eq!(w.allowed(), 3);
        assert!(w.mask()[0] && w.mask()[1] && w.mask()[2]);
        assert!(matches!(
            pixel_whitelist(&data, 5, 0.4),
            Err(Error::ClassAbsent { class: 5 })
        ));
    }

    #[test]
    fn pso_reaches_exact_target() {
        let net = two_chain_net();
        let b = two_chain_backbone();
        // Pixel 1 must settle at half of pixel 0's value.
        let w = Whitelist {
            mask: vec![true, true, false, false],
            fraction: 0.5,
        };
        let cfg = PsoConfig {
            iterations: 200,
            ..PsoConfig::default()
        };
        let out = pso_maximize(&net, &b, &w, &cfg).unwrap();
        assert!(out.distance < 1e-3, "distance {}", out.distance);
        assert_eq!(out.position[2], 0.0);
        assert_eq!(out.position[3], 0.0);
    }

    #[test]
    fn pso_trace_is_monotone() {
        let net = two_chain_net();
        let b = two_chain_backbone();
        let w = Whitelist::all(4);
        let out = pso_maximize(&net, &b, &w, &PsoConfig::default()).unwrap();
        for pair in out.trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert_eq!(out.trace.len(), PsoConfig::default().iterations + 1);
    }

    #[test]
    fn pso_zero_iterations_returns_initial_best() {
        let net = two_chain_net();
        let b = two_chain_backbone();
        let w = Whitelist::all(4);
        let cfg = PsoConfig {
            iterations: 0,
            ..PsoConfig::default()
        };
        let out = pso_maximize(&net, &b, &w, &cfg).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert!(out.distance.is_finite());
    }

    #[test]
    fn pso_is_seed_deterministic() {
        let net = two_chain_net();
        let b = two_chain_backbone();
        let w = Whitelist::all(4);
        let cfg = PsoConfig {
            iterations: 40,
            ..PsoConfig::default()
        };
        let a = pso_maximize(&net, &b, &w, &cfg).unwrap();
        let c = pso_maximize(&net, &b, &w, &cfg).unwrap();
        assert_eq!(a.position, c.position);
        assert_eq!(a.distance.to_bits(), c.distance.to_bits());
        let other = pso_maximize(
            &net,
            &b,
            &w,
            &PsoConfig {
                seed: 7,
                iterations: 40,
                ..PsoConfig::default()
            },
        )
        .unwrap();
        assert_ne!(a.position, other.position);
    }

    #[test]
    fn pso_rejects_bad_config() {
        let net = two_chain_net();
        let b = two_chain_backbone();
        let w = Whitelist::all(4);
        let bad = PsoConfig {
            swarm_size: 1,
            ..PsoConfig::default()
        };
        assert!(pso_maximize(&net, &b, &w, &bad).is_err());
        let bad = PsoConfig {
            inertia: 1.5,
            ..PsoConfig::default()
        };
        assert!(pso_maximize(&net, &b, &w, &bad).is_err());
    }

    #[test]
    fn render_round_trip_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let x = vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.1];
        render(&x, (2, 3), &path).unwrap();
        let (bytes, (h, w)) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (2, 3));
        let expected: Vec<u8> = x.iter().map(|&v| (v * 255.0).round() as u8).collect();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn render_all_black_and_png() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("black.pgm");
        render(&vec![0.0; 4], (2, 2), &pgm).unwrap();
        let (bytes, _) = read_pgm(&pgm).unwrap();
        assert!(bytes.iter().all(|&b| b == 0));
        let png = dir.path().join("img.png");
        render(&[0.0, 0.5, 0.5, 1.0], (2, 2), &png).unwrap();
        assert!(png.exists());
        // Bad shape is rejected.
        assert!(render(&[0.0; 3], (2, 2), dir.path().join("x.pgm")).is_err());
    }
}
