//! Deterministic synthetic task sequences.
//!
//! Every task shares the same class means; task `t` sees them (and their
//! frames) through an orthogonal rotation whose angle grows with `drift * t`.
//! Rotations act in a fixed, seeded set of planes, so tasks further apart in
//! the sequence are further apart in input space.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binfmt::{Block, Container};
use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix};

/// One labeled sequence. Frames are stored at f32 precision so that cached
/// datasets round-trip bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// `l * d` frame values, frame-major.
    pub frames: Vec<f32>,
    pub frame_labels: Vec<u8>,
    pub label: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 2000,
            val: 400,
            test: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub group_id: usize,
    pub rotation_seed: u64,
    pub noise_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub spec: TaskSpec,
    pub data: TaskData,
}

/// Geometry of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    pub tasks: usize,
    pub drift: f64,
    pub sizes: SplitSizes,
    pub groups: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub frames: usize,
    pub radius: f64,
    pub noise: f64,
    /// Rotation angle (radians) of task `t` is `angle_scale * drift * t`.
    pub angle_scale: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            tasks: 4,
            drift: 0.4,
            sizes: SplitSizes::default(),
            groups: 1,
            input_dim: 16,
            classes: 4,
            frames: 6,
            radius: 3.0,
            noise: 0.5,
            angle_scale: 1.8,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tasks < 2 {
            return Err(Error::InvalidConfig(format!(
                "a task sequence needs at least 2 tasks, got {}",
                self.tasks
            )));
        }
        if self.sizes.train == 0 || self.sizes.val == 0 || self.sizes.test == 0 {
            return Err(Error::InvalidConfig("split sizes must be positive".into()));
        }
        if self.drift < 0.0 || !self.drift.is_finite() {
            return Err(Error::InvalidConfig(
                "drift must be finite and non-negative".into(),
            ));
        }
        if self.groups == 0 {
            return Err(Error::InvalidConfig("groups must be at least 1".into()));
        }
        if self.classes < 2 || self.classes > self.input_dim || self.classes > u8::MAX as usize {
            return Err(Error::InvalidConfig(
                "classes must be in [2, input_dim] and fit in a byte".into(),
            ));
        }
        if !self.input_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig("input_dim must be even".into()));
        }
        if self.frames == 0 {
            return Err(Error::InvalidConfig("frames must be positive".into()));
        }
        Ok(())
    }
}

/// Generator for stream `stream` of the global seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let proj: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Shared geometry drawn from stream 0 of the global seed.
pub struct Geometry {
    /// `C x d` class means.
    pub means: Matrix,
    /// Orthonormal basis whose consecutive column pairs span the rotation planes.
    pub planes: Matrix,
}

impl Geometry {
    pub fn new(spec: &BenchmarkSpec, global_seed: u64) -> Self {
        let mut rng = stream_rng(global_seed, 0);
        let (d, c) = (spec.input_dim, spec.classes);
        let embed = random_orthogonal(d, &mut rng);
        let planes = random_orthogonal(d, &mut rng);
        // Regular simplex: centered standard basis of R^C, scaled to the radius.
        let norm = (1.0 - 1.0 / c as f64).sqrt();
        let simplex = Matrix::from_fn(c, c, |i, j| {
            let e = if i == j { 1.0 } else { 0.0 };
            (e - 1.0 / c as f64) * spec.radius / norm
        });
        let means = Matrix::from_fn(c, d, |i, j| {
            (0..c).map(|k| simplex.get(i, k) * embed.get(j, k)).sum()
        });
        Self { means, planes }
    }

    /// `Q = P R(angle) P^T` with `R` block-diagonal 2x2 rotations.
    pub fn rotation(&self, angle: f64) -> Matrix {
        let d = self.planes.rows();
        let (s, c) = angle.sin_cos();
        let mut r = Matrix::identity(d);
        for k in 0..d / 2 {
            let (i, j) = (2 * k, 2 * k + 1);
            r.set(i, i, c);
            r.set(i, j, -s);
            r.set(j, i, s);
            r.set(j, j, c);
        }
        let pr = matmul(&self.planes, &r).expect("square");
        matmul(&pr, &self.planes.transpose()).expect("square")
    }
}

pub fn task_rotation(spec: &BenchmarkSpec, geometry: &Geometry, task_id: usize) -> Matrix {
    geometry.rotation(spec.angle_scale * spec.drift * task_id as f64)
}

fn generate_split(
    n: usize,
    spec: &BenchmarkSpec,
    rotated_means: &Matrix,
    rng: &mut ChaCha8Rng,
) -> Vec<Example> {
    let (c, d, l) = (spec.classes, spec.input_dim, spec.frames);
    let mut labels: Vec<u8> = (0..n).map(|i| (i % c) as u8).collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .map(|y| {
            let mean = rotated_means.row(y as usize);
            let mut frames = Vec::with_capacity(l * d);
            for _ in 0..l {
                for &m in mean.iter().take(d) {
                    let z: f64 = StandardNormal.sample(rng);
                    frames.push((m + spec.noise * z) as f32);
                }
            }
            Example {
                frames,
                frame_labels: vec![y; l],
                label: y,
            }
        })
        .collect()
}

pub fn generate_task(
    spec: &BenchmarkSpec,
    geometry: &Geometry,
    global_seed: u64,
    task_id: usize,
) -> Task {
    let q = task_rotation(spec, geometry, task_id);
    // Row i of the result is Q * mean_i.
    let rotated = matmul(&geometry.means, &q.transpose()).expect("shapes agree");
    let mut rng = stream_rng(global_seed, task_id as u64);
    let train = generate_split(spec.sizes.train, spec, &rotated, &mut rng);
    let val = generate_split(spec.sizes.val, spec, &rotated, &mut rng);
    let test = generate_split(spec.sizes.test, spec, &rotated, &mut rng);
    Task {
        spec: TaskSpec {
            task_id,
            group_id: (task_id - 1) % spec.groups,
            rotation_seed: global_seed,
            noise_seed: global_seed ^ ((task_id as u64) << 32),
            n_train: spec.sizes.train,
            n_val: spec.sizes.val,
            n_test: spec.sizes.test,
        },
        data: TaskData { train, val, test },
    }
}

/// Tasks `1..=T` of the sequence for `global_seed`.
pub fn generate_sequence(spec: &BenchmarkSpec, global_seed: u64) -> Result<Vec<Task>> {
    spec.validate()?;
    let geometry = Geometry::new(spec, global_seed);
    Ok((1..=spec.tasks)
        .map(|t| generate_task(spec, &geometry, global_seed, t))
        .collect())
}

pub(crate) fn examples_to_blocks(
    prefix: &str,
    examples: &[Example],
    l: usize,
    d: usize,
) -> Vec<Block> {
    let n = examples.len();
    vec![
        Block::f32(
            format!("{prefix}.frames"),
            vec![n, l, d],
            examples
                .iter()
                .flat_map(|e| e.frames.iter().map(|&x| x as f64))
                .collect(),
        ),
        Block::f32(
            format!("{prefix}.frame_labels"),
            vec![n, l],
            examples
                .iter()
                .flat_map(|e| e.frame_labels.iter().map(|&y| y as f64))
                .collect(),
        ),
        Block::f32(
            format!("{prefix}.labels"),
            vec![n],
            examples.iter().map(|e| e.label as f64).collect(),
        ),
    ]
}

pub(crate) fn examples_from_blocks(
    c: &Container,
    prefix: &str,
) -> std::result::Result<Vec<Example>, String> {
    let get = |name: String| c.block(&name).ok_or(format!("missing block {name}"));
    let frames = get(format!("{prefix}.frames"))?;
    let frame_labels = get(format!("{prefix}.frame_labels"))?;
    let labels = get(format!("{prefix}.labels"))?;
    if frames.dims.len() != 3 || frame_labels.dims.len() != 2 || labels.dims.len() != 1 {
        return Err(format!("{prefix}: wrong block ranks"));
    }
    let (n, l, d) = (frames.dims[0], frames.dims[1], frames.dims[2]);
    if frame_labels.dims != [n, l] || labels.dims != [n] {
        return Err(format!("{prefix}: inconsistent block shapes"));
    }
    Ok((0..n)
        .map(|i| Example {
            frames: frames.values[i * l * d..(i + 1) * l * d]
                .iter()
                .map(|&x| x as f32)
                .collect(),
            frame_labels: frame_labels.values[i * l..(i + 1) * l]
                .iter()
                .map(|&y| y as u8)
                .collect(),
            label: labels.values[i] as u8,
        })
        .collect())
}

fn shape_of(examples: &[Example]) -> (usize, usize) {
    examples
        .first()
        .map(|e| {
            let l = e.frame_labels.len();
            (l, e.frames.len() / l.max(1))
        })
        .unwrap_or((0, 0))
}

pub fn export_task(task: &Task, path: &Path) -> Result<()> {
    let (l, d) = shape_of(&task.data.train);
    let mut blocks = Vec::new();
    for (name, split) in [
        ("train", &task.data.train),
        ("val", &task.data.val),
        ("test", &task.data.test),
    ] {
        blocks.extend(examples_to_blocks(name, split, l, d));
    }
    Container {
        meta: serde_json::to_value(&task.spec)?,
        blocks,
    }
    .write(path)
}

pub fn import_task(path: &Path) -> Result<Task> {
    let c = Container::read(path)?;
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let spec: TaskSpec = serde_json::from_value(c.meta.clone()).map_err(|e| fmt(e.to_string()))?;
    let data = TaskData {
        train: examples_from_blocks(&c, "train").map_err(fmt)?,
        val: examples_from_blocks(&c, "val").map_err(fmt)?,
        test: examples_from_blocks(&c, "test").map_err(fmt)?,
    };
    Ok(Task { spec, data })
}
