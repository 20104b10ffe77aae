//! Desk-scale numerical kernels expressed as task regions.
//!
//! Every kernel owns its data, spawns one region iteration through
//! [`Kernel::spawn_iteration`], and carries an independent serial
//! implementation used to check results bit for bit.

use std::cell::UnsafeCell;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use tdg_runtime::{payload_u64, taskloop_chunks, Body, DepClause, Payload, Spawner};

/// Fixed-size `f64` buffer written concurrently by tasks whose dependence
/// clauses keep their accesses apart.
pub struct SharedBuf {
    cells: Box<[UnsafeCell<f64>]>,
}

// SAFETY: the task graph orders every conflicting access; concurrent tasks
// touch disjoint elements or only read.
unsafe impl Sync for SharedBuf {}

impl SharedBuf {
    pub fn new(values: &[f64]) -> Self {
        Self {
            cells: values.iter().map(|&v| UnsafeCell::new(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// # Safety
    /// No task may be writing element `i` concurrently.
    #[inline]
    pub unsafe fn get(&self, i: usize) -> f64 {
        *self.cells[i].get()
    }

    /// # Safety
    /// The caller must be the only task accessing element `i`.
    #[inline]
    pub unsafe fn set(&self, i: usize, v: f64) {
        *self.cells[i].get() = v;
    }

    /// Copies the buffer out. Call only while no region is running.
    pub fn snapshot(&self) -> Vec<f64> {
        // SAFETY: documented quiescence requirement.
        (0..self.len()).map(|i| unsafe { self.get(i) }).collect()
    }

    /// Overwrites the buffer. Call only while no region is running.
    pub fn load(&self, values: &[f64]) {
        assert_eq!(values.len(), self.len());
        for (i, &v) in values.iter().enumerate() {
            // SAFETY: documented quiescence requirement.
            unsafe { self.set(i, v) };
        }
    }
}

pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn tasks_per_iter(&self) -> u64;
    /// Work items (elements, cells or particles) per task.
    fn grain(&self) -> u64;
    /// Restores the initial data.
    fn reset(&self);
    /// Spawns one iteration of the kernel.
    fn spawn_iteration(&self, s: &mut Spawner<'_>);
    /// Every body the kernel spawns; used to load pre-built graphs.
    fn bodies(&self) -> Vec<Body>;
    /// Current state, flattened.
    fn result(&self) -> Vec<f64>;
    /// State after `iters` iterations computed serially from the initial
    /// data.
    fn serial(&self, iters: usize) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Axpy,
    Dotp,
    Heat,
    Nbody,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [Self::Axpy, Self::Dotp, Self::Heat, Self::Nbody];

    /// Builds the kernel. `size` is the vector length, the grid side or the
    /// particle count; `blocks` is the block count (per side for heat).
    pub fn build(self, size: usize, blocks: usize, seed: u64) -> Box<dyn Kernel> {
        match self {
            Self::Axpy => Box::new(Axpy::new(size, blocks, seed)),
            Self::Dotp => Box::new(Dotp::new(size, blocks, seed)),
            Self::Heat => Box::new(Heat::new(size, blocks, seed)),
            Self::Nbody => Box::new(Nbody::new(size, blocks, seed)),
        }
    }

    pub fn default_size(self) -> usize {
        match self {
            Self::Axpy | Self::Dotp => 1 << 20,
            Self::Heat => 256,
            Self::Nbody => 512,
        }
    }

    pub fn default_blocks(self) -> usize {
        match self {
            Self::Axpy | Self::Dotp => 64,
            Self::Heat | Self::Nbody => 16,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Axpy => "axpy",
            Self::Dotp => "dotp",
            Self::Heat => "heat",
            Self::Nbody => "nbody",
        })
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown kernel {s:?} (axpy, dotp, heat, nbody)"))
    }
}

fn tag(array: u64, block: usize) -> u64 {
    (array << 32) | block as u64
}

fn chunks(len: usize, blocks: usize) -> Vec<Range<usize>> {
    taskloop_chunks(0..len as u64, blocks.max(1))
        .expect("non-empty block count")
        .chunks
        .into_iter()
        .map(|c| c.start as usize..c.end as usize)
        .collect()
}

fn random_vec(rng: &mut SmallRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

// ---------------------------------------------------------------- axpy

struct AxpyData {
    a: f64,
    x: Vec<f64>,
    y0: Vec<f64>,
    y: SharedBuf,
    blocks: Vec<Range<usize>>,
}

/// `y = a * x + y`, one task per block.
pub struct Axpy {
    data: Arc<AxpyData>,
    body: Body,
}

impl Axpy {
    const Y: u64 = 1;
    const X: u64 = 2;

    pub fn new(n: usize, blocks: usize, seed: u64) -> Self {
        let mut rng = SmallRng::seed_from_u64(seed);
        let x = random_vec(&mut rng, n, -1.0, 1.0);
        let y0 = random_vec(&mut rng, n, -1.0, 1.0);
        let data = Arc::new(AxpyData {
            a: 0.75,
            y: SharedBuf::new(&y0),
            x,
            y0,
            blocks: chunks(n, blocks),
        });
        let d = Arc::clone(&data);
        let body = Body::new("axpy", move |p| {
            for i in d.blocks[payload_u64(p) as usize].clone() {
                // SAFETY: block i's y elements belong to this task.
                unsafe { d.y.set(i, d.a * d.x[i] + d.y.get(i)) };
            }
        });
        Self { data, body }
    }
}

impl Kernel for Axpy {
    fn name(&self) -> &'static str {
        "axpy"
    }

    fn tasks_per_iter(&self) -> u64 {
        self.data.blocks.len() as u64
    }

    fn grain(&self) -> u64 {
        self.data.blocks.first().map_or(0, |b| b.len() as u64)
    }

    fn reset(&self) {
        self.data.y.load(&self.data.y0);
    }

    fn spawn_iteration(&self, s: &mut Spawner<'_>) {
        for b in 0..self.data.blocks.len() {
            s.spawn(
                &self.body,
                Payload::from_u64(b as u64),
                &[
                    DepClause::inout(tag(Self::Y, b)),
                    DepClause::input(tag(Self::X, b)),
                ],
            );
        }
    }

    fn bodies(&self) -> Vec<Body> {
        vec![self.body.clone()]
    }

    fn result(&self) -> Vec<f64> {
        self.data.y.snapshot()
    }

    fn serial(&self, iters: usize) -> Vec<f64> {
        let d = &self.data;
        let mut y = d.y0.clone();
        for _ in 0..iters {
            for (yi, xi) in y.iter_mut().zip(&d.x) {
                *yi += d.a * xi;
            }
        }
        y
    }
}

// ---------------------------------------------------------------- dotp

struct DotpData {
    x: Vec<f64>,
    y: Vec<f64>,
    partial: SharedBuf,
    total: SharedBuf,
    blocks: Vec<Range<usize>>,
}

/// Blocked dot product: per-block partials, then one reduction task that
/// adds them in block order into a running total.
pub struct Dotp {
    data: Arc<DotpData>,
    partial_body: Body,
    reduce_body: Body,
}

impl Dotp {
    const PARTIAL: u64 = 3;
    const TOTAL: u64 = 4;

    pub fn new(n: usize, blocks: usize, seed: u64) -> Self {
        let mut rng = SmallRng::seed_from_u64(seed);
        let blocks = chunks(n, blocks);
        let data = Arc::new(DotpData {
            x: random_vec(&mut rng, n, -1.0, 1.0),
            y: random_vec(&mut rng, n, -1.0, 1.0),
            partial: SharedBuf::new(&vec![0.0; blocks.len()]),
            total: SharedBuf::new(&[0.0]),
            blocks,
        });
        let d = Arc::clone(&data);
        let partial_body = Body::new("dotp-partial", move |p| {
            let b = payload_u64(p) as usize;
            let mut s = 0.0;
            for i in d.blocks[b].clone() {
                s += d.x[i] * d.y[i];
            }
            // SAFETY: partial[b] belongs to this task.
            unsafe { d.partial.set(b, s) };
        });
        let d = Arc::clone(&data);
        let reduce_body = Body::new("dotp-reduce", move |_| {
            let mut s = 0.0;
            for b in 0..d.partial.len() {
                // SAFETY: every partial writer precedes this task.
                s += unsafe { d.partial.get(b) };
            }
            // SAFETY: the total belongs to this task.
            unsafe { d.total.set(0, d.total.get(0) + s) };
        });
        Self {
            data,
            partial_body,
            reduce_body,
        }
    }
}

impl Kernel for Dotp {
    fn name(&self) -> &'static str {
        "dotp"
    }

    fn tasks_per_iter(&self) -> u64 {
        self.data.blocks.len() as u64 + 1
    }

    fn grain(&self) -> u64 {
        self.data.blocks.first().map_or(0, |b| b.len() as u64)
    }

    fn reset(&self) {
        self.data.partial.load(&vec![0.0; self.data.partial.len()]);
        self.data.total.load(&[0.0]);
    }

    fn spawn_iteration(&self, s: &mut Spawner<'_>) {
        let nb = self.data.blocks.len();
        for b in 0..nb {
            s.spawn(
                &self.partial_body,
                Payload::from_u64(b as u64),
                &[DepClause::output(tag(Self::PARTIAL, b))],
            );
        }
        let mut clauses: Vec<DepClause> = (0..nb)
            .map(|b| DepClause::input(tag(Self::PARTIAL, b)))
            .collect();
        clauses.push(DepClause::inout(tag(Self::TOTAL, 0)));
        s.spawn(&self.reduce_body, Payload::none(), &clauses);
    }

    fn bodies(&self) -> Vec<Body> {
        vec![self.partial_body.clone(), self.reduce_body.clone()]
    }

    fn result(&self) -> Vec<f64> {
        let mut out = self.data.total.snapshot();
        out.extend(self.data.partial.snapshot());
        out
    }

    fn serial(&self, iters: usize) -> Vec<f64> {
        let d = &self.data;
        let partials: Vec<f64> = d
            .blocks
            .iter()
            .map(|r| {
                d.x[r.clone()]
                    .iter()
                    .zip(&d.y[r.clone()])
                    .fold(0.0, |s, (a, b)| s + a * b)
            })
            .collect();
        let dot = partials.iter().fold(0.0, |s, p| s + p);
        let mut total = 0.0;
        for _ in 0..iters {
            total += dot;
        }
        let mut out = vec![total];
        if iters > 0 {
            out.extend(partials);
        } else {
            out.extend(vec![0.0; d.blocks.len()]);
        }
        out
    }
}

// ---------------------------------------------------------------- heat

struct HeatData {
    n: usize,
    u0: Vec<f64>,
    u: SharedBuf,
    /// Interior row (= column) ranges of each block.
    bands: Vec<Range<usize>>,
}

/// Block Gauss-Seidel sweep of the 5-point Laplace stencil on an `n x n`
/// grid with fixed boundary. One iteration is one sweep.
pub struct Heat {
    data: Arc<HeatData>,
    body: Body,
}

impl Heat {
    const BLOCK: u64 = 5;

    pub fn new(n: usize, blocks_per_side: usize, seed: u64) -> Self {
        assert!(n >= 3, "heat grid needs an interior");
        let mut rng = SmallRng::seed_from_u64(seed);
        let mut u0 = random_vec(&mut rng, n * n, 0.0, 1.0);
        u0[..n].fill(100.0);
        let bands: Vec<Range<usize>> = chunks(n - 2, blocks_per_side)
            .into_iter()
            .map(|r| r.start + 1..r.end + 1)
            .collect();
        let data = Arc::new(HeatData {
            n,
            u: SharedBuf::new(&u0),
            u0,
            bands,
        });
        let d = Arc::clone(&data);
        let body = Body::new("heat-block", move |p| {
            let nb = d.bands.len();
            let id = payload_u64(p) as usize;
            let (rows, cols) = (d.bands[id / nb].clone(), d.bands[id % nb].clone());
            let n = d.n;
            for i in rows {
                for j in cols.clone() {
                    // SAFETY: this block is owned by the task; neighbour
                    // blocks are ordered by the In clauses.
                    unsafe {
                        let v = 0.25
                            * (d.u.get((i - 1) * n + j)
                                + d.u.get((i + 1) * n + j)
                                + d.u.get(i * n + j - 1)
                                + d.u.get(i * n + j + 1));
                        d.u.set(i * n + j, v);
                    }
                }
            }
        });
        Self { data, body }
    }
}

impl Kernel for Heat {
    fn name(&self) -> &'static str {
        "heat"
    }

    fn tasks_per_iter(&self) -> u64 {
        (self.data.bands.len() * self.data.bands.len()) as u64
    }

    fn grain(&self) -> u64 {
        self.data
            .bands
            .first()
            .map_or(0, |b| (b.len() * b.len()) as u64)
    }

    fn reset(&self) {
        self.data.u.load(&self.data.u0);
    }

    fn spawn_iteration(&self, s: &mut Spawner<'_>) {
        let nb = self.data.bands.len();
        let mut clauses = Vec::with_capacity(5);
        for bi in 0..nb {
            for bj in 0..nb {
                clauses.clear();
                clauses.push(DepClause::inout(tag(Self::BLOCK, bi * nb + bj)));
                if bi > 0 {
                    clauses.push(DepClause::input(tag(Self::BLOCK, (bi - 1) * nb + bj)));
                }
                if bi + 1 < nb {
                    clauses.push(DepClause::input(tag(Self::BLOCK, (bi + 1) * nb + bj)));
                }
                if bj > 0 {
                    clauses.push(DepClause::input(tag(Self::BLOCK, bi * nb + bj - 1)));
                }
                if bj + 1 < nb {
                    clauses.push(DepClause::input(tag(Self::BLOCK, bi * nb + bj + 1)));
                }
                s.spawn(
                    &self.body,
                    Payload::from_u64((bi * nb + bj) as u64),
                    &clauses,
                );
            }
        }
    }

    fn bodies(&self) -> Vec<Body> {
        vec![self.body.clone()]
    }

    fn result(&self) -> Vec<f64> {
        self.data.u.snapshot()
    }

    fn serial(&self, iters: usize) -> Vec<f64> {
        let d = &self.data;
        let n = d.n;
        let mut u = d.u0.clone();
        for _ in 0..iters {
            for rows in &d.bands {
                for cols in &d.bands {
                    for i in rows.clone() {
                        for j in cols.clone() {
                            u[i * n + j] = 0.25
                                * (u[(i - 1) * n + j]
                                    + u[(i + 1) * n + j]
                                    + u[i * n + j - 1]
                                    + u[i * n + j + 1]);
                        }
                    }
                }
            }
        }
        u
    }
}

// ---------------------------------------------------------------- nbody

const DT: f64 = 0.01;
const SOFTENING: f64 = 1e-3;

struct NbodyData {
    n: usize,
    mass: Vec<f64>,
    pos0: Vec<f64>,
    vel0: Vec<f64>,
    pos: SharedBuf,
    vel: SharedBuf,
    acc: SharedBuf,
    blocks: Vec<Range<usize>>,
}

/// Direct-sum gravity: force tasks read every position block and write
/// their own acceleration block; update tasks integrate one block.
pub struct Nbody {
    data: Arc<NbodyData>,
    force_body: Body,
    update_body: Body,
}

impl Nbody {
    const POS: u64 = 6;
    const VEL: u64 = 7;
    const ACC: u64 = 8;

    pub fn new(n: usize, blocks: usize, seed: u64) -> Self {
        let mut rng = SmallRng::seed_from_u64(seed);
        let pos0 = random_vec(&mut rng, 3 * n, -1.0, 1.0);
        let vel0 = random_vec(&mut rng, 3 * n, -0.1, 0.1);
        let mass = random_vec(&mut rng, n, 0.5, 1.5);
        let data = Arc::new(NbodyData {
            n,
            pos: SharedBuf::new(&pos0),
            vel: SharedBuf::new(&vel0),
            acc: SharedBuf::new(&vec![0.0; 3 * n]),
            mass,
            pos0,
            vel0,
            blocks: chunks(n, blocks),
        });
        let d = Arc::clone(&data);
        let force_body = Body::new("nbody-force", move |p| {
            for i in d.blocks[payload_u64(p) as usize].clone() {
                // SAFETY: positions are read-only while force tasks run;
                // acc of this block belongs to this task.
                unsafe {
                    let pi = [d.pos.get(3 * i), d.pos.get(3 * i + 1), d.pos.get(3 * i + 2)];
                    let mut a = [0.0f64; 3];
                    for j in 0..d.n {
                        if j == i {
                            continue;
                        }
                        let dx = d.pos.get(3 * j) - pi[0];
                        let dy = d.pos.get(3 * j + 1) - pi[1];
                        let dz = d.pos.get(3 * j + 2) - pi[2];
                        let r2 = dx * dx + dy * dy + dz * dz + SOFTENING;
                        let s = d.mass[j] / (r2 * r2.sqrt());
                        a[0] += dx * s;
                        a[1] += dy * s;
                        a[2] += dz * s;
                    }
                    for (k, &v) in a.iter().enumerate() {
                        d.acc.set(3 * i + k, v);
                    }
                }
            }
        });
        let d = Arc::clone(&data);
        let update_body = Body::new("nbody-update", move |p| {
            for i in d.blocks[payload_u64(p) as usize].clone() {
                for k in 3 * i..3 * i + 3 {
                    // SAFETY: pos/vel of this block belong to this task.
                    unsafe {
                        let v = d.vel.get(k) + d.acc.get(k) * DT;
                        d.vel.set(k, v);
                        d.pos.set(k, d.pos.get(k) + v * DT);
                    }
                }
            }
        });
        Self {
            data,
            force_body,
            update_body,
        }
    }
}

impl Kernel for Nbody {
    fn name(&self) -> &'static str {
        "nbody"
    }

    fn tasks_per_iter(&self) -> u64 {
        2 * self.data.blocks.len() as u64
    }

    fn grain(&self) -> u64 {
        self.data.blocks.first().map_or(0, |b| b.len() as u64)
    }

    fn reset(&self) {
        let d = &self.data;
        d.pos.load(&d.pos0);
        d.vel.load(&d.vel0);
        d.acc.load(&vec![0.0; 3 * d.n]);
    }

    fn spawn_iteration(&self, s: &mut Spawner<'_>) {
        let nb = self.data.blocks.len();
        let mut clauses: Vec<DepClause> = (0..nb)
            .map(|c| DepClause::input(tag(Self::POS, c)))
            .collect();
        for b in 0..nb {
            clauses.truncate(nb);
            clauses.push(DepClause::output(tag(Self::ACC, b)));
            s.spawn(&self.force_body, Payload::from_u64(b as u64), &clauses);
        }
        for b in 0..nb {
            s.spawn(
                &self.update_body,
                Payload::from_u64(b as u64),
                &[
                    DepClause::inout(tag(Self::POS, b)),
                    DepClause::inout(tag(Self::VEL, b)),
                    DepClause::input(tag(Self::ACC, b)),
                ],
            );
        }
    }

    fn bodies(&self) -> Vec<Body> {
        vec![self.force_body.clone(), self.update_body.clone()]
    }

    fn result(&self) -> Vec<f64> {
        let d = &self.data;
        let mut out = d.pos.snapshot();
        out.extend(d.vel.snapshot());
        out
    }

    fn serial(&self, iters: usize) -> Vec<f64> {
        let d = &self.data;
        let n = d.n;
        let mut pos = d.pos0.clone();
        let mut vel = d.vel0.clone();
        let mut acc = vec![0.0; 3 * n];
        for _ in 0..iters {
            for i in 0..n {
                let (xi, yi, zi) = (pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]);
                let (mut ax, mut ay, mut az) = (0.0, 0.0, 0.0);
                for j in (0..n).filter(|&j| j != i) {
                    let dx = pos[3 * j] - xi;
                    let dy = pos[3 * j + 1] - yi;
                    let dz = pos[3 * j + 2] - zi;
                    let r2 = dx * dx + dy * dy + dz * dz + SOFTENING;
                    let s = d.mass[j] / (r2 * r2.sqrt());
                    ax += dx * s;
                    ay += dy * s;
                    az += dz * s;
                }
                acc[3 * i] = ax;
                acc[3 * i + 1] = ay;
                acc[3 * i + 2] = az;
            }
            for k in 0..3 * n {
                vel[k] += acc[k] * DT;
                pos[k] += vel[k] * DT;
            }
        }
        pos.extend(vel);
        pos
    }
}

/// First differing element between two results, compared bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub differing: usize,
    pub first_index: usize,
    pub expected: f64,
    pub got: f64,
}

pub fn compare_bits(expected: &[f64], got: &[f64]) -> Option<Mismatch> {
    if expected.len() != got.len() {
        return Some(Mismatch {
            differing: expected.len().abs_diff(got.len()),
            first_index: expected.len().min(got.len()),
            expected: f64::NAN,
            got: f64::NAN,
        });
    }
    let diffs: Vec<usize> = (0..expected.len())
        .filter(|&i| expected[i].to_bits() != got[i].to_bits())
        .collect();
    let &first = diffs.first()?;
    Some(Mismatch {
        differing: diffs.len(),
        first_index: first,
        expected: expected[first],
        got: got[first],
    })
}
