//! Synthetic desk-scale datasets: spectrally synthesized Gaussian random
//! fields (exactly band-limited, so spectral-truncation SR has an exact
//! reconstruction oracle) and a small pseudo-spectral 2D decaying-turbulence
//! solver in vorticity-streamfunction form.

use std::path::Path;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FsrError, Result};
use crate::fields::{write_sfb, DomainBox, GridField};
use crate::spectral::fft2_inplace;
use crate::tensor::Tensor;

/// Split one base seed into independent per-record streams.
pub fn derive_seed(base: u64, lane: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(lane.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Gaussian random fields
// ---------------------------------------------------------------------------

/// Band-limited Gaussian random field: complex-Gaussian coefficients with
/// amplitude `|k|^(-gamma/2)` inside `[k_min, k_max]`, zero outside.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct GrfSpec {
    pub extent: usize,
    /// Power-spectrum slope: power proportional to `k^-gamma`.
    pub gamma: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub seed: u64,
}

impl GrfSpec {
    fn validate(&self) -> Result<()> {
        let nyq = self.extent as f64 / 2.0;
        if self.k_max > nyq - 1.0 {
            return Err(FsrError::invalid(
                "generate-grf",
                format!(
                    "k_max {} reaches the Nyquist zone of extent {} (must be <= {})",
                    self.k_max,
                    self.extent,
                    nyq - 1.0
                ),
            ));
        }
        if self.gamma < 0.0 || self.k_min < 0.0 || self.k_min > self.k_max {
            return Err(FsrError::invalid("generate-grf", "invalid band or slope"));
        }
        Ok(())
    }
}

fn wavenumber(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Zero-mean, unit-variance field with Hermitian-symmetric random phases.
pub fn generate_grf(spec: &GrfSpec) -> Result<GridField<f64>> {
    spec.validate()?;
    let n = spec.extent;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coeff = vec![Complex::new(0.0f64, 0.0); n * n];
    for r in 0..n {
        for q in 0..n {
            let (rc, qc) = ((n - r) % n, (n - q) % n);
            if (rc, qc) < (r, q) {
                continue; // filled by the conjugate partner
            }
            let k = (wavenumber(r, n).powi(2) + wavenumber(q, n).powi(2)).sqrt();
            if k < spec.k_min || k > spec.k_max || k == 0.0 {
                continue;
            }
            let amp = k.powf(-spec.gamma / 2.0);
            if (rc, qc) == (r, q) {
                // self-conjugate bin must stay real
                let g: f64 = StandardNormal.sample(&mut rng);
                coeff[r * n + q] = Complex::new(amp * g, 0.0);
            } else {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let c = Complex::new(amp * re, amp * im);
                coeff[r * n + q] = c;
                coeff[rc * n + qc] = c.conj();
            }
        }
    }
    fft2_inplace(&mut coeff, n, n, true);
    let mut data: Vec<f64> = coeff.iter().map(|c| c.re).collect();
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64;
    let inv_std = 1.0 / var.sqrt();
    for v in data.iter_mut() {
        *v = (*v - mean) * inv_std;
    }
    GridField::new(Tensor::new(vec![1, n, n], data)?, DomainBox::unit())
}

// ---------------------------------------------------------------------------
// Decaying 2D turbulence (vorticity-streamfunction, pseudo-spectral)
// ---------------------------------------------------------------------------

/// Reduced pseudo-spectral solver: RK3 time stepping, 2/3-rule dealiasing,
/// periodic domain `[0, 2pi]^2`, Gaussian-ring initial spectrum at `k0`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TurbSpec {
    pub extent: usize,
    pub viscosity: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// Initial-spectrum ring wavenumber.
    pub k0: f64,
}

struct TurbState {
    n: usize,
    omega_hat: Vec<Complex<f64>>,
    nu: f64,
    dealias: Vec<bool>,
}

impl TurbState {
    fn new(n: usize, nu: f64) -> Self {
        let kcut = n as f64 / 3.0;
        let mut dealias = vec![false; n * n];
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                dealias[r * n + q] = kx.abs() <= kcut && ky.abs() <= kcut;
            }
        }
        TurbState {
            n,
            omega_hat: vec![Complex::new(0.0, 0.0); n * n],
            nu,
            dealias,
        }
    }

    fn streamfunction(&self, omega_hat: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = self.n;
        let mut psi = vec![Complex::new(0.0, 0.0); n * n];
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                let k2 = kx * kx + ky * ky;
                if k2 > 0.0 {
                    psi[r * n + q] = omega_hat[r * n + q] / k2;
                }
            }
        }
        psi
    }

    /// (u, v) spatial velocity from a spectral vorticity.
    fn velocity(&self, omega_hat: &[Complex<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let psi = self.streamfunction(omega_hat);
        let mut u_hat = vec![Complex::new(0.0, 0.0); n * n];
        let mut v_hat = vec![Complex::new(0.0, 0.0); n * n];
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                let i = Complex::new(0.0, 1.0);
                u_hat[r * n + q] = i * ky * psi[r * n + q]; // u = d(psi)/dy
                v_hat[r * n + q] = -(i * kx * psi[r * n + q]); // v = -d(psi)/dx
            }
        }
        (self.to_real(u_hat), self.to_real(v_hat))
    }

    fn to_real(&self, mut hat: Vec<Complex<f64>>) -> Vec<f64> {
        fft2_inplace(&mut hat, self.n, self.n, true);
        let scale = 1.0 / (self.n * self.n) as f64;
        hat.iter().map(|c| c.re * scale).collect()
    }

    fn to_hat(&self, real: &[f64]) -> Vec<Complex<f64>> {
        let mut hat: Vec<Complex<f64>> = real.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2_inplace(&mut hat, self.n, self.n, false);
        hat
    }

    /// Spectral right-hand side `-J(psi, omega) + nu lap(omega)`, dealiased.
    fn rhs(&self, omega_hat: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = self.n;
        let (u, v) = self.velocity(omega_hat);
        let mut dwdx_hat = vec![Complex::new(0.0, 0.0); n * n];
        let mut dwdy_hat = vec![Complex::new(0.0, 0.0); n * n];
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                let i = Complex::new(0.0, 1.0);
                dwdx_hat[r * n + q] = i * kx * omega_hat[r * n + q];
                dwdy_hat[r * n + q] = i * ky * omega_hat[r * n + q];
            }
        }
        let dwdx = self.to_real(dwdx_hat);
        let dwdy = self.to_real(dwdy_hat);
        let advect: Vec<f64> = (0..n * n).map(|i| u[i] * dwdx[i] + v[i] * dwdy[i]).collect();
        let advect_hat = self.to_hat(&advect);
        let mut out = vec![Complex::new(0.0, 0.0); n * n];
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                let k2 = kx * kx + ky * ky;
                let idx = r * n + q;
                if self.dealias[idx] {
                    out[idx] = -advect_hat[idx] - self.nu * k2 * omega_hat[idx];
                }
            }
        }
        out
    }

    /// SSP-RK3 step.
    fn step(&mut self, dt: f64) {
        let n2 = self.n * self.n;
        let w0 = self.omega_hat.clone();
        let k1 = self.rhs(&w0);
        let w1: Vec<Complex<f64>> = (0..n2).map(|i| w0[i] + dt * k1[i]).collect();
        let k2 = self.rhs(&w1);
        let w2: Vec<Complex<f64>> = (0..n2)
            .map(|i| 0.75 * w0[i] + 0.25 * (w1[i] + dt * k2[i]))
            .collect();
        let k3 = self.rhs(&w2);
        self.omega_hat = (0..n2)
            .map(|i| (w0[i] + 2.0 * (w2[i] + dt * k3[i])) / 3.0)
            .collect();
    }

    fn max_speed(&self) -> f64 {
        let (u, v) = self.velocity(&self.omega_hat);
        u.iter()
            .zip(&v)
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }

    fn vorticity_field(&self) -> Vec<f64> {
        self.to_real(self.omega_hat.clone())
    }

    /// Kinetic energy `sum |omega_hat|^2 / k^2 / n^2` (spectral form).
    #[cfg_attr(not(test), allow(dead_code))]
    fn energy(&self) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                let k2 = kx * kx + ky * ky;
                if k2 > 0.0 {
                    e += self.omega_hat[r * n + q].norm_sqr() / k2;
                }
            }
        }
        e / (n * n) as f64
    }

    #[cfg_attr(not(test), allow(dead_code))]
    fn enstrophy(&self) -> f64 {
        self.omega_hat.iter().map(|c| c.norm_sqr()).sum::<f64>() / (self.n * self.n) as f64
    }

    /// Max spectral-norm divergence of the reconstructed velocity.
    #[cfg_attr(not(test), allow(dead_code))]
    fn max_divergence(&self) -> f64 {
        let n = self.n;
        let psi = self.streamfunction(&self.omega_hat);
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for q in 0..n {
                let (ky, kx) = (wavenumber(r, n), wavenumber(q, n));
                let i = Complex::new(0.0, 1.0);
                let u_hat = i * ky * psi[r * n + q];
                let v_hat = -(i * kx * psi[r * n + q]);
                let div = i * kx * u_hat + i * ky * v_hat;
                worst = worst.max(div.norm());
            }
        }
        worst
    }
}

fn ring_initial_condition(n: usize, k0: f64, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeff = vec![Complex::new(0.0f64, 0.0); n * n];
    let sigma = 1.0;
    for r in 0..n {
        for q in 0..n {
            let (rc, qc) = ((n - r) % n, (n - q) % n);
            if (rc, qc) < (r, q) {
                continue;
            }
            let k = (wavenumber(r, n).powi(2) + wavenumber(q, n).powi(2)).sqrt();
            if k == 0.0 || k > n as f64 / 3.0 {
                continue;
            }
            let amp = (-(k - k0) * (k - k0) / (2.0 * sigma * sigma)).exp();
            if amp < 1e-12 {
                continue;
            }
            if (rc, qc) == (r, q) {
                let g: f64 = StandardNormal.sample(&mut rng);
                coeff[r * n + q] = Complex::new(amp * g, 0.0);
            } else {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let c = Complex::new(amp * re, amp * im);
                coeff[r * n + q] = c;
                coeff[rc * n + qc] = c.conj();
            }
        }
    }
    // normalize to unit rms vorticity
    let n2 = (n * n) as f64;
    let rms = (coeff.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n2 * n2)).sqrt();
    if rms > 0.0 {
        for c in coeff.iter_mut() {
            *c /= rms;
        }
    }
    coeff
}

/// Run the solver and return `records` vorticity snapshots, strided evenly
/// over `spec.steps`. Errors if the CFL-style bound `dt * n * u_max < 0.5`
/// is violated, naming the offending step.
pub fn simulate_turbulence(spec: &TurbSpec, records: usize) -> Result<Vec<GridField<f64>>> {
    if !spec.extent.is_power_of_two() || spec.extent > 256 {
        return Err(FsrError::invalid(
            "simulate-turbulence",
            format!("extent must be a power of two <= 256, got {}", spec.extent),
        ));
    }
    if records == 0 || spec.steps < records {
        return Err(FsrError::invalid(
            "simulate-turbulence",
            "need steps >= records >= 1",
        ));
    }
    let n = spec.extent;
    let mut state = TurbState::new(n, spec.viscosity);
    state.omega_hat = ring_initial_condition(n, spec.k0, spec.seed);

    let stride = spec.steps / records;
    let mut snapshots = Vec::with_capacity(records);
    for step in 0..spec.steps {
        let u_max = state.max_speed();
        if spec.dt * n as f64 * u_max >= 0.5 {
            return Err(FsrError::Cfl {
                step,
                msg: format!("dt*n*u_max = {:.4}", spec.dt * n as f64 * u_max),
            });
        }
        state.step(spec.dt);
        if (step + 1) % stride == 0 && snapshots.len() < records {
            snapshots.push(GridField::new(
                Tensor::new(vec![1, n, n], state.vorticity_field())?,
                DomainBox::unit(),
            )?);
        }
    }
    Ok(snapshots)
}

// ---------------------------------------------------------------------------
// Dataset builds
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Grf,
    Turb,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatagenConfig {
    pub source: DataSource,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
    pub grf: GrfTemplate,
    pub turb: TurbTemplate,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct GrfTemplate {
    pub extent: usize,
    pub gamma: f64,
    pub k_min: f64,
    pub k_max: f64,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TurbTemplate {
    pub extent: usize,
    pub viscosity: f64,
    pub dt: f64,
    pub steps_per_record: usize,
    pub k0: f64,
}

#[derive(Clone, Debug)]
pub struct DatasetSummary {
    pub files: Vec<(String, usize)>,
}

/// Write `train.sfb`, `valid.sfb`, `test.sfb` under `out_dir` with disjoint
/// seeds per split. Identical configs produce bitwise-identical files.
pub fn build_dataset(cfg: &DatagenConfig, out_dir: &Path) -> Result<DatasetSummary> {
    std::fs::create_dir_all(out_dir)?;
    let splits = [("train", cfg.train), ("valid", cfg.valid), ("test", cfg.test)];
    let mut files = Vec::new();
    for (lane, (name, count)) in splits.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let fields: Vec<GridField<f64>> = match cfg.source {
            DataSource::Grf => (0..*count)
                .map(|i| {
                    generate_grf(&GrfSpec {
                        extent: cfg.grf.extent,
                        gamma: cfg.grf.gamma,
                        k_min: cfg.grf.k_min,
                        k_max: cfg.grf.k_max,
                        seed: derive_seed(cfg.seed, lane as u64, i as u64),
                    })
                })
                .collect::<Result<_>>()?,
            DataSource::Turb => simulate_turbulence(
                &TurbSpec {
                    extent: cfg.turb.extent,
                    viscosity: cfg.turb.viscosity,
                    dt: cfg.turb.dt,
                    steps: cfg.turb.steps_per_record * count,
                    seed: derive_seed(cfg.seed, lane as u64, 0),
                    k0: cfg.turb.k0,
                },
                *count,
            )?,
        };
        let path = out_dir.join(format!("{}.sfb", name));
        write_sfb(&path, &fields)?;
        files.push((path.display().to_string(), *count));
    }
    Ok(DatasetSummary { files })
}
