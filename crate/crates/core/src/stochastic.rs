//! Q-Wiener increments from a truncated Karhunen-Loeve expansion.
//!
//! The covariance eigenfunctions are the Dirichlet Laplacian modes
//! `e_jk = 2 / sqrt(|Omega|) sin(j pi x') sin(k pi y')` (with `x'`, `y'` the
//! coordinates rescaled to `[0, 1]`), and the eigenvalues follow the power law
//! `q_jk = (j^2 + k^2)^{-s}`. An increment over a step of length `tau` is
//!
//! ```text
//! dW = sigma * sum_{j,k <= J} sqrt(q_jk tau) z_jk e_jk,   z_jk ~ N(0, 1) iid
//! ```
//!
//! and the standard normals are drawn from a stream keyed by
//! `(seed, sample, step, field)`, so any sample can be regenerated without
//! replaying the others.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assembly::Discretization;
use crate::error::Result;

/// Sign with which the increment enters the time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseSign {
    /// `L u^n + W^n = R u^{n-1} + W^{n-1}`: the increment is subtracted.
    #[default]
    Subtract,
    /// The usual `du = ... dt + dW` convention: the increment is added.
    Add,
}

impl NoiseSign {
    pub fn factor(self) -> f64 {
        match self {
            Self::Subtract => -1.0,
            Self::Add => 1.0,
        }
    }
}

/// Whether the three equations share one noise path or get independent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoisePaths {
    #[default]
    Shared,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub j: usize,
    pub k: usize,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct QWienerSampler {
    pub truncation: usize,
    pub decay_exponent: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub sign: NoiseSign,
    pub paths: NoisePaths,
}

impl Default for QWienerSampler {
    fn default() -> Self {
        Self {
            truncation: 8,
            decay_exponent: 2.0,
            amplitude: 0.1,
            seed: 0x5eed,
            sign: NoiseSign::Subtract,
            paths: NoisePaths::Shared,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl QWienerSampler {
    pub fn silent() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn eigenvalue(&self, j: usize, k: usize) -> f64 {
        ((j * j + k * k) as f64).powf(-self.decay_exponent)
    }

    /// All `J^2` retained modes, largest eigenvalue first; ties keep `(j, k)`
    /// lexicographic order.
    pub fn spectrum(&self) -> Vec<Mode> {
        let mut modes: Vec<Mode> = (1..=self.truncation)
            .flat_map(|j| {
                (1..=self.truncation).map(move |k| Mode { j, k, q: 0.0 })
            })
            .map(|m| Mode {
                q: self.eigenvalue(m.j, m.k),
                ..m
            })
            .collect();
        modes.sort_by(|a, b| b.q.total_cmp(&a.q));
        modes
    }

    /// Shared paths use stream 0 for every field.
    fn stream(&self, sample_id: u64, step: usize, field: usize) -> ChaCha8Rng {
        let field = match self.paths {
            NoisePaths::Shared => 0,
            NoisePaths::Independent => field as u64 + 1,
        };
        let mut state = splitmix64(self.seed);
        let mut seed = [0u8; 32];
        for (chunk, word) in seed
            .chunks_exact_mut(8)
            .zip([sample_id, step as u64, field, 0x4b4c_5f6e_6f69_7365])
        {
            state = splitmix64(state ^ word);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// Standard normals `z_jk` for one step, in [`spectrum`](Self::spectrum) order.
    pub fn normals(&self, sample_id: u64, step: usize, field: usize) -> Vec<f64> {
        let mut rng = self.stream(sample_id, step, field);
        (0..self.truncation * self.truncation)
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    /// KL amplitudes `sigma sqrt(q_jk tau) z_jk` of one increment.
    pub fn mode_amplitudes(&self, sample_id: u64, step: usize, field: usize, tau: f64) -> Vec<f64> {
        if self.amplitude == 0.0 {
            return vec![0.0; self.truncation * self.truncation];
        }
        self.spectrum()
            .iter()
            .zip(self.normals(sample_id, step, field))
            .map(|(m, z)| self.amplitude * (m.q * tau).sqrt() * z)
            .collect()
    }

    /// Precomputes the projections of every eigenfunction onto the discrete
    /// space.
    pub fn bind(&self, disc: &Discretization) -> Result<NoiseProjector> {
        let modes = self.spectrum();
        let d = disc.mesh().domain();
        let norm = 2.0 / d.area().sqrt();
        let mut loads = Vec::with_capacity(modes.len());
        let mut coeffs = Vec::with_capacity(modes.len());
        for m in &modes {
            let (j, k) = (m.j as f64, m.k as f64);
            let b = disc.load_vector(|x, y| {
                let xs = (x - d.x0) / d.width();
                let ys = (y - d.y0) / d.height();
                norm * (j * PI * xs).sin() * (k * PI * ys).sin()
            })?;
            coeffs.push(disc.solve_mass(&b)?);
            loads.push(b);
        }
        Ok(NoiseProjector {
            sampler: self.clone(),
            n_global: disc.n_global(),
            modes,
            loads,
            coeffs,
        })
    }

    /// Increment for step `n` of `sample_id` projected onto the discrete space.
    pub fn sample_increment(
        &self,
        projector: &NoiseProjector,
        sample_id: u64,
        n: usize,
        tau: f64,
    ) -> NoiseIncrement {
        projector.increment(sample_id, n, 0, tau)
    }
}

/// Eigenfunction projections of a sampler on one discretization.
#[derive(Debug, Clone)]
pub struct NoiseProjector {
    sampler: QWienerSampler,
    n_global: usize,
    modes: Vec<Mode>,
    /// `(e_jk, chi_i)` per mode.
    loads: Vec<Vec<f64>>,
    /// L2 projection coefficients of `e_jk` per mode.
    coeffs: Vec<Vec<f64>>,
}

impl NoiseProjector {
    pub fn sampler(&self) -> &QWienerSampler {
        &self.sampler
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Load vector `(e_m, chi_i)` of mode index `m`.
    pub fn mode_load(&self, m: usize) -> &[f64] {
        &self.loads[m]
    }

    pub fn increment(&self, sample_id: u64, n: usize, field: usize, tau: f64) -> NoiseIncrement {
        let amps = self.sampler.mode_amplitudes(sample_id, n, field, tau);
        let mut coeffs = vec![0.0; self.n_global];
        let mut load = vec![0.0; self.n_global];
        for ((a, c), b) in amps.iter().zip(&self.coeffs).zip(&self.loads) {
            if *a == 0.0 {
                continue;
            }
            for ((o, l), (ci, bi)) in coeffs.iter_mut().zip(load.iter_mut()).zip(c.iter().zip(b)) {
                *o += a * ci;
                *l += a * bi;
            }
        }
        NoiseIncrement {
            step: n,
            coeffs,
            load,
        }
    }

    /// Increments for the three equations at step `n`.
    pub fn increments(&self, sample_id: u64, n: usize, tau: f64) -> [NoiseIncrement; 3] {
        match self.sampler.paths {
            NoisePaths::Shared => {
                let inc = self.increment(sample_id, n, 0, tau);
                [inc.clone(), inc.clone(), inc]
            }
            NoisePaths::Independent => [0, 1, 2].map(|f| self.increment(sample_id, n, f, tau)),
        }
    }
}

/// Projected increment `W^n - W^{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub step: usize,
    /// Coefficients of the L2 projection.
    pub coeffs: Vec<f64>,
    /// `(dW, chi_i)`, equal to `Mass * coeffs`.
    pub load: Vec<f64>,
}

/// Spectrum as CSV with header `j,k,q`.
pub fn write_spectrum_csv<W: Write>(sampler: &QWienerSampler, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "k", "q"])?;
    for m in sampler.spectrum() {
        w.write_record([m.j.to_string(), m.k.to_string(), format!("{:e}", m.q)])?;
    }
    w.flush()?;
    Ok(())
}
