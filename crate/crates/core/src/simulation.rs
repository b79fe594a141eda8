//! Brownian increments and Euler paths on a uniform grid.
//!
//! Trajectory `k` of an ensemble with seed `s` draws from the ChaCha stream
//! `(s, k)`, so its values do not depend on how many trajectories are
//! generated or on the thread count.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::problems::FbsdeProblem;

/// Largest ensemble array, in `f64` elements, built in memory by default.
pub const DEFAULT_ELEMENT_BUDGET: usize = 1 << 28;

const MAGIC: &[u8; 8] = b"FBSDEENS";
const FORMAT_VERSION: u16 = 1;
const BRIDGE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Uniform partition `start = t_0 < … < t_N = end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    start: f64,
    end: f64,
    n: usize,
    h: f64,
}

impl GridSpec {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        Self::between(0.0, horizon, n)
    }

    pub fn between(start: f64, end: f64, n: usize) -> Result<Self> {
        if n == 0 || !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Invalid(format!("bad grid [{start}, {end}] with {n} steps")));
        }
        Ok(Self {
            start,
            end,
            n,
            h: (end - start) / n as f64,
        })
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn horizon(&self) -> f64 {
        self.end
    }

    /// `t_i`; the last node is the horizon exactly.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n {
            self.end
        } else {
            self.start + i as f64 * self.h
        }
    }
}

/// Standard normal by inverse CDF of a uniform in `(0, 1)`.
fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

fn trajectory_rng(seed: u64, trajectory: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trajectory as u64);
    rng
}

fn check_budget(requested: usize, budget: usize) -> Result<()> {
    if requested > budget {
        return Err(Error::AllocationTooLarge { requested, budget });
    }
    Ok(())
}

/// `M×N×d` Brownian increments, trajectory-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Increments {
    grid: GridSpec,
    d: usize,
    m: usize,
    seed: u64,
    data: Vec<f64>,
}

impl Increments {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn trajectories(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `ΔW_i` of one trajectory.
    pub fn step(&self, trajectory: usize, i: usize) -> &[f64] {
        let at = (trajectory * self.grid.n + i) * self.d;
        &self.data[at..at + self.d]
    }

    pub fn trajectory(&self, trajectory: usize) -> &[f64] {
        let len = self.grid.n * self.d;
        &self.data[trajectory * len..(trajectory + 1) * len]
    }
}

pub fn brownian_increments(grid: GridSpec, d: usize, m: usize, seed: u64) -> Result<Increments> {
    brownian_increments_with_budget(grid, d, m, seed, DEFAULT_ELEMENT_BUDGET)
}

pub fn brownian_increments_with_budget(
    grid: GridSpec,
    d: usize,
    m: usize,
    seed: u64,
    budget: usize,
) -> Result<Increments> {
    if m == 0 || d == 0 {
        return Err(Error::Invalid("need at least one trajectory and one dimension".into()));
    }
    let len = grid.n * d;
    check_budget(m.saturating_mul(len), budget)?;
    let mut data = vec![0.0; m * len];
    data.par_chunks_mut(len).enumerate().for_each(|(k, row)| {
        fill_increments(row, grid.h, seed, k);
    });
    Ok(Increments { grid, d, m, seed, data })
}

fn fill_increments(row: &mut [f64], h: f64, seed: u64, trajectory: usize) {
    let mut rng = trajectory_rng(seed, trajectory);
    let scale = h.sqrt();
    for v in row {
        *v = scale * standard_normal(&mut rng);
    }
}

/// Brownian increments and Euler states of `M` trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    increments: Increments,
    x: Vec<f64>,
}

fn euler_trajectory(problem: &dyn FbsdeProblem, grid: &GridSpec, dw: &[f64], x0: &[f64], out: &mut [f64]) -> std::result::Result<(), usize> {
    let d = x0.len();
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    out[..d].copy_from_slice(x0);
    for i in 0..grid.n {
        let t = grid.time(i);
        let (now, next) = out[i * d..(i + 2) * d].split_at_mut(d);
        problem.drift(t, now, &mut b);
        problem.diffusion(t, now, &mut sigma);
        let step = &dw[i * d..(i + 1) * d];
        for k in 0..d {
            let noise: f64 = (0..d).map(|l| sigma[k * d + l] * step[l]).sum();
            next[k] = now[k] + grid.h * b[k] + noise;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(i + 1);
        }
    }
    Ok(())
}

/// Euler scheme `X_{i+1} = X_i + h b(t_i, X_i) + σ(t_i, X_i) ΔW_i`, all
/// trajectories starting at `x0`.
pub fn euler_paths(problem: &dyn FbsdeProblem, increments: Increments, x0: &[f64]) -> Result<PathEnsemble> {
    let d = increments.d;
    if problem.dim() != d || x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: d.min(x0.len()),
        });
    }
    let grid = increments.grid;
    let len = (grid.n + 1) * d;
    check_budget(increments.m.saturating_mul(len), DEFAULT_ELEMENT_BUDGET)?;
    let mut x = vec![0.0; increments.m * len];
    x.par_chunks_mut(len)
        .enumerate()
        .try_for_each(|(k, row)| {
            euler_trajectory(problem, &grid, increments.trajectory(k), x0, row)
                .map_err(|step| Error::NonFiniteState { trajectory: k, step })
        })?;
    Ok(PathEnsemble { increments, x })
}

/// Increments plus Euler paths in one call.
pub fn simulate(problem: &dyn FbsdeProblem, grid: GridSpec, m: usize, seed: u64) -> Result<PathEnsemble> {
    let increments = brownian_increments(grid, problem.dim(), m, seed)?;
    euler_paths(problem, increments, &problem.x0())
}

/// Streaming mode: one trajectory `(ΔW, X)` regenerated from `(seed, k)`
/// without building the ensemble.
pub fn regenerate_trajectory(
    problem: &dyn FbsdeProblem,
    grid: GridSpec,
    seed: u64,
    trajectory: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = problem.dim();
    let mut dw = vec![0.0; grid.n * d];
    fill_increments(&mut dw, grid.h, seed, trajectory);
    let mut x = vec![0.0; (grid.n + 1) * d];
    euler_trajectory(problem, &grid, &dw, &problem.x0(), &mut x)
        .map_err(|step| Error::NonFiniteState { trajectory, step })?;
    Ok((dw, x))
}

impl PathEnsemble {
    pub fn grid(&self) -> &GridSpec {
        &self.increments.grid
    }

    pub fn dim(&self) -> usize {
        self.increments.d
    }

    pub fn trajectories(&self) -> usize {
        self.increments.m
    }

    pub fn seed(&self) -> u64 {
        self.increments.seed
    }

    pub fn increments(&self) -> &Increments {
        &self.increments
    }

    /// `X_i` of one trajectory.
    pub fn state(&self, trajectory: usize, i: usize) -> &[f64] {
        let d = self.increments.d;
        let at = (trajectory * (self.increments.grid.n + 1) + i) * d;
        &self.x[at..at + d]
    }

    pub fn states(&self) -> &[f64] {
        &self.x
    }

    /// `W_{to} − W_{from}` of one trajectory, written into `out`.
    pub fn brownian_change(&self, trajectory: usize, from: usize, to: usize, out: &mut [f64]) {
        out.fill(0.0);
        for i in from..to {
            for (o, w) in out.iter_mut().zip(self.increments.step(trajectory, i)) {
                *o += w;
            }
        }
    }

    /// Refines the coarse steps `from..N` into `r` substeps each. Fine
    /// increments are Brownian-bridge samples summing to the stored coarse
    /// increments; fine states restart from the coarse `X_from` and follow
    /// the Euler scheme on the fine grid.
    pub fn refine_tail(&self, problem: &dyn FbsdeProblem, from: usize, r: usize) -> Result<PathEnsemble> {
        let coarse = self.increments.grid;
        if from >= coarse.n || r == 0 {
            return Err(Error::Invalid(format!(
                "cannot refine steps {from}..{} into {r} substeps",
                coarse.n
            )));
        }
        let d = self.increments.d;
        let m = self.increments.m;
        let fine = GridSpec::between(coarse.time(from), coarse.end, (coarse.n - from) * r)?;
        let len = fine.n * d;
        check_budget(m.saturating_mul(len + fine.n * d + d), DEFAULT_ELEMENT_BUDGET)?;
        let seed = self.increments.seed;
        let mut data = vec![0.0; m * len];
        data.par_chunks_mut(len).enumerate().for_each(|(k, row)| {
            for (c, block) in row.chunks_mut(r * d).enumerate() {
                let i = from + c;
                let mut rng = trajectory_rng(seed ^ BRIDGE_SALT.wrapping_mul(i as u64 + 1), k);
                let target = self.increments.step(k, i);
                let scale = fine.h.sqrt();
                for v in block.iter_mut() {
                    *v = scale * standard_normal(&mut rng);
                }
                for l in 0..d {
                    let sum: f64 = (0..r).map(|s| block[s * d + l]).sum();
                    let shift = (sum - target[l]) / r as f64;
                    for s in 0..r {
                        block[s * d + l] -= shift;
                    }
                }
            }
        });
        let increments = Increments {
            grid: fine,
            d,
            m,
            seed,
            data,
        };
        let xlen = (fine.n + 1) * d;
        let mut x = vec![0.0; m * xlen];
        x.par_chunks_mut(xlen).enumerate().try_for_each(|(k, row)| {
            euler_trajectory(problem, &fine, increments.trajectory(k), self.state(k, from), row)
                .map_err(|step| Error::NonFiniteState { trajectory: k, step })
        })?;
        Ok(PathEnsemble { increments, x })
    }

    /// Flat little-endian dump: 40-byte header, then `ΔW`, then `X`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let grid = &self.increments.grid;
        if grid.start != 0.0 {
            return Err(Error::Invalid("only ensembles starting at t = 0 can be dumped".into()));
        }
        let d = u16::try_from(self.increments.d).map_err(|_| Error::Invalid("dimension exceeds u16".into()))?;
        let n = u32::try_from(grid.n).map_err(|_| Error::Invalid("step count exceeds u32".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&(self.increments.m as u64).to_le_bytes())?;
        w.write_all(&grid.end.to_le_bytes())?;
        w.write_all(&self.increments.seed.to_le_bytes())?;
        for v in self.increments.data.iter().chain(&self.x) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 40];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(Error::Parse("not an ensemble dump".into()));
        }
        let word = |a: usize, b: usize| header[a..b].to_vec();
        let version = u16::from_le_bytes(word(8, 10).try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported ensemble version {version}")));
        }
        let d = u16::from_le_bytes(word(10, 12).try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(word(12, 16).try_into().unwrap()) as usize;
        let m = u64::from_le_bytes(word(16, 24).try_into().unwrap()) as usize;
        let horizon = f64::from_le_bytes(word(24, 32).try_into().unwrap());
        let seed = u64::from_le_bytes(word(32, 40).try_into().unwrap());
        let grid = GridSpec::new(horizon, n)?;
        let count = |len: usize| m.checked_mul(len).ok_or(Error::Parse("ensemble size overflows".into()));
        let (dw_len, x_len) = (count(n * d)?, count((n + 1) * d)?);
        check_budget(dw_len + x_len, DEFAULT_ELEMENT_BUDGET)?;
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let data = read_block(dw_len)?;
        let x = read_block(x_len)?;
        Ok(PathEnsemble {
            increments: Increments { grid, d, m, seed, data },
            x,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
