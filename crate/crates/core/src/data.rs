//! Labeled datasets and their on-disk formats.
//!
//! Two ingestion paths are supported: the big-endian IDX image/label pair
//! (magic `0x00000803` / `0x00000801`, pixels scaled to `[0, 1]`) and a CSV
//! fallback with one instance per row and the label in the last column.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    instances: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    input_dim: usize,
}

impl LabeledDataset {
    pub fn new(instances: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if instances.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels".into(),
                expected: instances.len(),
                found: labels.len(),
            });
        }
        let input_dim = instances[0].len();
        for (i, x) in instances.iter().enumerate() {
            if x.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    what: format!("instance {i}"),
                    expected: input_dim,
                    found: x.len(),
                });
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::schema(
                format!("labels[{i}]"),
                format!("label {l} out of range for {num_classes} classes"),
            ));
        }
        Ok(LabeledDataset {
            instances,
            labels,
            num_classes,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        &self.instances[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.instances
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    /// Keeps only the listed classes and relabels them by list position.
    pub fn select_classes(&self, classes: &[usize]) -> Result<Self> {
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (x, y) in self.iter() {
            if let Some(new) = classes.iter().position(|&c| c == y) {
                instances.push(x.to_vec());
                labels.push(new);
            }
        }
        LabeledDataset::new(instances, labels, classes.len())
    }

    /// Splits off the first `n` instances.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        if n == 0 || n >= self.len() {
            return Err(Error::InvalidParam {
                what: "split point".into(),
                message: format!("n = {n} must be inside 1..{}", self.len()),
            });
        }
        let head = LabeledDataset::new(
            self.instances[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.num_classes,
        )?;
        let tail = LabeledDataset::new(
            self.instances[n..].to_vec(),
            self.labels[n..].to_vec(),
            self.num_classes,
        )?;
        Ok((head, tail))
    }

    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        LabeledDataset::new(
            self.instances[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.num_classes,
        )
    }

    /// Loads an IDX image/label pair. Pixels are scaled from `0..=255` into
    /// `[0, 1]`.
    pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Self> {
        let images_path = images_path.as_ref();
        let labels_path = labels_path.as_ref();

        let mut img = open_reader(images_path)?;
        let magic = read_u32(&mut img, images_path)?;
        if magic != IDX_IMAGES_MAGIC {
            return Err(Error::Parse {
                what: format!("idx image file {}", images_path.display()),
                message: format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
            });
        }
        let count = read_u32(&mut img, images_path)? as usize;
        let rows = read_u32(&mut img, images_path)? as usize;
        let cols = read_u32(&mut img, images_path)? as usize;
        let mut pixels = vec![0u8; count * rows * cols];
        img.read_exact(&mut pixels)
            .map_err(|e| Error::io(images_path, e))?;

        let mut lab = open_reader(labels_path)?;
        let magic = read_u32(&mut lab, labels_path)?;
        if magic != IDX_LABELS_MAGIC {
            return Err(Error::Parse {
                what: format!("idx label file {}", labels_path.display()),
                message: format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
            });
        }
        let label_count = read_u32(&mut lab, labels_path)? as usize;
        if label_count != count {
            return Err(Error::DimensionMismatch {
                what: "idx labels".into(),
                expected: count,
                found: label_count,
            });
        }
        let mut raw_labels = vec![0u8; count];
        lab.read_exact(&mut raw_labels)
            .map_err(|e| Error::io(labels_path, e))?;

        let dim = rows * cols;
        let instances: Vec<Vec<f64>> = pixels
            .chunks_exact(dim)
            .map(|chunk| chunk.iter().map(|&p| p as f64 / 255.0).collect())
            .collect();
        let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
        let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
        LabeledDataset::new(instances, labels, num_classes)
    }

    /// Writes the dataset as an IDX pair, quantizing values to 8 bits.
    pub fn save_idx(
        &self,
        images_path: impl AsRef<Path>,
        labels_path: impl AsRef<Path>,
        shape: (usize, usize),
    ) -> Result<()> {
        let (rows, cols) = shape;
        if rows * cols != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "idx image shape".into(),
                expected: self.input_dim,
                found: rows * cols,
            });
        }
        let images_path = images_path.as_ref();
        let mut img = BufWriter::new(
            File::create(images_path).map_err(|e| Error::io(images_path, e))?,
        );
        write_u32(&mut img, IDX_IMAGES_MAGIC, images_path)?;
        write_u32(&mut img, self.len() as u32, images_path)?;
        write_u32(&mut img, rows as u32, images_path)?;
        write_u32(&mut img, cols as u32, images_path)?;
        for x in &self.instances {
            let bytes: Vec<u8> = x
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            img.write_all(&bytes).map_err(|e| Error::io(images_path, e))?;
        }
        img.flush().map_err(|e| Error::io(images_path, e))?;

        let labels_path = labels_path.as_ref();
        let mut lab = BufWriter::new(
            File::create(labels_path).map_err(|e| Error::io(labels_path, e))?,
        );
        write_u32(&mut lab, IDX_LABELS_MAGIC, labels_path)?;
        write_u32(&mut lab, self.len() as u32, labels_path)?;
        let bytes: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        lab.write_all(&bytes).map_err(|e| Error::io(labels_path, e))?;
        lab.flush().map_err(|e| Error::io(labels_path, e))?;
        Ok(())
    }

    /// CSV fallback: one instance per row, label in the last column.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = open_reader(path)?;
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::Parse {
                    what: format!("{}:{}", path.display(), lineno + 1),
                    message: "need at least one feature and a label".into(),
                });
            }
            let (features, label) = fields.split_at(fields.len() - 1);
            let x: Vec<f64> = features
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Parse {
                        what: format!("{}:{}", path.display(), lineno + 1),
                        message: format!("`{f}`: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            let y = label[0].trim().parse::<usize>().map_err(|e| Error::Parse {
                what: format!("{}:{}", path.display(), lineno + 1),
                message: format!("label `{}`: {e}", label[0]),
            })?;
            instances.push(x);
            labels.push(y);
        }
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
        LabeledDataset::new(instances, labels, num_classes)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (x, y) in self.iter() {
            let mut line = String::new();
            for v in x {
                line.push_str(&format!("{v}"));
                line.push(',');
            }
            line.push_str(&format!("{y}\n"));
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

fn write_u32(w: &mut impl Write, v: u32, path: &Path) -> Result<()> {
    w.write_all(&v.to_be_bytes()).map_err(|e| Error::io(path, e))
}

/// Seeded Gaussian blobs, one cluster per class.
pub fn gaussian_blobs(
    seed: u64,
    per_class: usize,
    centers: &[Vec<f64>],
    spread: f64,
) -> LabeledDataset {
    assert!(!centers.is_empty() && per_class > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(per_class * centers.len());
    let mut labels = Vec::with_capacity(per_class * centers.len());
    for _ in 0..per_class {
        for (class, center) in centers.iter().enumerate() {
            let x: Vec<f64> = center
                .iter()
                .map(|&c| c + spread * gaussian(&mut rng))
                .collect();
            instances.push(x);
            labels.push(class);
        }
    }
    LabeledDataset::new(instances, labels, centers.len()).expect("blob construction is valid")
}

/// Box-Muller sample.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        let r = LabeledDataset::new(vec![vec![0.0]], vec![0, 1], 2);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_label_out_of_range() {
        let r = LabeledDataset::new(vec![vec![0.0], vec![1.0]], vec![0, 2], 2);
        assert!(r.is_err());
    }

    #[test]
    fn idx_round_trip() {
        let data = LabeledDataset::new(
            vec![vec![0.0, 0.5, 1.0, 0.25], vec![1.0, 0.0, 0.5, 0.75]],
            vec![0, 1],
            2,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images-idx3-ubyte");
        let lab = dir.path().join("labels-idx1-ubyte");
        data.save_idx(&img, &lab, (2, 2)).unwrap();
        let loaded = LabeledDataset::load_idx(&img, &lab).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.label(0), 0);
        assert_eq!(loaded.label(1), 1);
        // Quantization to 8 bits and back stays within half a step.
        for i in 0..2 {
            for (a, b) in loaded.instance(i).iter().zip(data.instance(i)) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let data = LabeledDataset::new(
            vec![vec![0.125, -3.5], vec![2.0, 7.25]],
            vec![1, 0],
            2,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        data.save_csv(&path).unwrap();
        let loaded = LabeledDataset::load_csv(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.instance(0), data.instance(0));
        assert_eq!(loaded.label(1), 0);
    }

    #[test]
    fn select_classes_relabels() {
        let data = LabeledDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![0, 3, 5, 3],
            6,
        )
        .unwrap();
        let sub = data.select_classes(&[3, 5]).unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.num_classes(), 2);
        assert_eq!(sub.label(0), 0);
        assert_eq!(sub.label(1), 1);
        assert_eq!(sub.label(2), 0);
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = gaussian_blobs(9, 10, &[vec![0.0, 0.0], vec![4.0, 4.0]], 0.5);
        let b = gaussian_blobs(9, 10, &[vec![0.0, 0.0], vec![4.0, 4.0]], 0.5);
        assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            assert_eq!(a.instance(i), b.instance(i));
        }
    }
}
