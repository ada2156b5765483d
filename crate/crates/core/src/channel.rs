//! Network geometry on a hexagonal cell layout, multipath ray channels, and
//! Monte Carlo estimation of per-beam average powers.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{C64, DftBasis};

/// Keep-out radius around every base station, in km.
pub const MIN_BS_DISTANCE_KM: f64 = 0.035;

/// Parameters for [`generate_network`].
#[derive(Debug, Clone)]
pub struct GeometryParams {
    pub n_cells: usize,
    pub users_per_cell: usize,
    /// Hexagon circumradius (center to vertex), km.
    pub cell_radius_km: f64,
    pub pathloss_exp: f64,
    /// Distance at which the link gain is one; gains follow
    /// `μ² = (d / ref)^(-pathloss_exp)`.
    pub pathloss_ref_km: f64,
    pub min_bs_distance_km: f64,
}

impl GeometryParams {
    /// Defaults: path-loss reference at the cell radius (edge gain one) and
    /// a 35 m keep-out around each base station.
    pub fn new(n_cells: usize, users_per_cell: usize, cell_radius_km: f64, pathloss_exp: f64) -> Self {
        Self {
            n_cells,
            users_per_cell,
            cell_radius_km,
            pathloss_exp,
            pathloss_ref_km: cell_radius_km,
            min_bs_distance_km: MIN_BS_DISTANCE_KM,
        }
    }
}

/// User drop on a hexagonal layout: positions plus, for every
/// (cell, user, base station) link, the mean direction of arrival and the
/// average link gain μ².
#[derive(Debug, Clone)]
pub struct NetworkGeometry {
    pub n_cells: usize,
    pub users_per_cell: usize,
    pub bs_positions: Vec<(f64, f64)>,
    /// `[cell][user]`.
    pub user_positions: Vec<Vec<(f64, f64)>>,
    /// `[cell][user][bs]`, radians in `(-π, π]`.
    pub mean_doa: Vec<Vec<Vec<f64>>>,
    /// `[cell][user][bs]`, linear power gain μ².
    pub link_gain: Vec<Vec<Vec<f64>>>,
}

fn axial_to_xy(q: i64, r: i64, radius: f64) -> (f64, f64) {
    (3f64.sqrt() * radius * (q as f64 + r as f64 / 2.0), 1.5 * radius * r as f64)
}

/// Centers of `n` hexagons walked ring by ring around the origin; adjacent
/// centers are `√3 · radius` apart.
fn hex_centers(n: usize, radius: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    let dirs = [(1i64, 0i64), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut ring = 1i64;
    while out.len() < n {
        let (mut q, mut r) = (-ring, ring);
        for dir in dirs {
            for _ in 0..ring {
                if out.len() < n {
                    out.push(axial_to_xy(q, r, radius));
                }
                q += dir.0;
                r += dir.1;
            }
        }
        ring += 1;
    }
    out
}

/// Point-in-hexagon test for a pointy-top hexagon centered at the origin.
fn in_hexagon(x: f64, y: f64, radius: f64) -> bool {
    x.abs() <= 3f64.sqrt() / 2.0 * radius && y.abs() <= radius - x.abs() / 3f64.sqrt()
}

/// Drop users uniformly in each hexagonal cell (outside the base-station
/// keep-out) and derive per-link mean DOAs and gains.
pub fn generate_network(params: &GeometryParams, rng: &mut impl Rng) -> Result<NetworkGeometry> {
    if params.n_cells == 0 || params.users_per_cell == 0 {
        return Err(Error::InvalidParameter("cell and user counts must be positive".into()));
    }
    if params.cell_radius_km <= 2.0 * params.min_bs_distance_km {
        return Err(Error::InvalidParameter(format!(
            "cell radius {} km must exceed twice the base-station keep-out {} km",
            params.cell_radius_km, params.min_bs_distance_km
        )));
    }
    if params.pathloss_ref_km <= 0.0 || params.pathloss_exp < 0.0 {
        return Err(Error::InvalidParameter("path-loss reference and exponent must be positive".into()));
    }

    let radius = params.cell_radius_km;
    let bs_positions = hex_centers(params.n_cells, radius);
    let half_w = 3f64.sqrt() / 2.0 * radius;

    let mut user_positions = Vec::with_capacity(params.n_cells);
    for center in &bs_positions {
        let mut users = Vec::with_capacity(params.users_per_cell);
        for _ in 0..params.users_per_cell {
            let mut attempts = 0;
            let (x, y) = loop {
                let x = rng.gen_range(-half_w..=half_w);
                let y = rng.gen_range(-radius..=radius);
                if in_hexagon(x, y, radius) && x.hypot(y) >= params.min_bs_distance_km {
                    break (x, y);
                }
                attempts += 1;
                if attempts > 100_000 {
                    return Err(Error::Invariant("user placement rejection sampling stalled".into()));
                }
            };
            users.push((center.0 + x, center.1 + y));
        }
        user_positions.push(users);
    }

    let mut mean_doa = Vec::with_capacity(params.n_cells);
    let mut link_gain = Vec::with_capacity(params.n_cells);
    for cell in 0..params.n_cells {
        let mut doa_cell = Vec::with_capacity(params.users_per_cell);
        let mut gain_cell = Vec::with_capacity(params.users_per_cell);
        for &(ux, uy) in &user_positions[cell] {
            let mut doa_user = Vec::with_capacity(params.n_cells);
            let mut gain_user = Vec::with_capacity(params.n_cells);
            for &(bx, by) in &bs_positions {
                let (dx, dy) = (ux - bx, uy - by);
                let dist = dx.hypot(dy);
                doa_user.push(dy.atan2(dx));
                gain_user.push((dist / params.pathloss_ref_km).powf(-params.pathloss_exp));
            }
            doa_cell.push(doa_user);
            gain_cell.push(gain_user);
        }
        mean_doa.push(doa_cell);
        link_gain.push(gain_cell);
    }

    Ok(NetworkGeometry {
        n_cells: params.n_cells,
        users_per_cell: params.users_per_cell,
        bs_positions,
        user_positions,
        mean_doa,
        link_gain,
    })
}

/// Ray-channel model parameters.
#[derive(Debug, Clone, Copy)]
pub struct RayParams {
    /// Number of rays P averaged per realization.
    pub n_rays: usize,
    /// Angular spread Δ in radians; ray angles are uniform in
    /// `[θ̄ - Δ, θ̄ + Δ]`.
    pub angular_spread: f64,
    /// Antenna spacing in wavelengths.
    pub d_over_lambda: f64,
}

impl RayParams {
    pub fn new(n_rays: usize, angular_spread: f64) -> Self {
        Self { n_rays, angular_spread, d_over_lambda: 0.5 }
    }

    fn validate(&self) -> Result<()> {
        if self.n_rays == 0 {
            return Err(Error::InvalidParameter("ray count must be positive".into()));
        }
        if self.angular_spread < 0.0 {
            return Err(Error::InvalidParameter("angular spread must be nonnegative".into()));
        }
        if !(self.d_over_lambda > 0.0 && self.d_over_lambda <= 0.5) {
            return Err(Error::InvalidParameter("antenna spacing must lie in (0, 0.5] wavelengths".into()));
        }
        Ok(())
    }
}

/// Reusable sampler; `draw_into` evaluates
/// `g = (1/√P) Σ_p a(θ_p) γ_p` with `γ_p ~ CN(0, μ²)` and
/// `θ_p ~ U[θ̄ - Δ, θ̄ + Δ]`.
pub struct ChannelSampler {
    m: usize,
    ray: RayParams,
    cur_re: Vec<f64>,
    cur_im: Vec<f64>,
    step_re: Vec<f64>,
    step_im: Vec<f64>,
}

impl ChannelSampler {
    pub fn new(m: usize, ray: RayParams) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("antenna count must be positive".into()));
        }
        ray.validate()?;
        let p = ray.n_rays;
        Ok(Self {
            m,
            ray,
            cur_re: vec![0.0; p],
            cur_im: vec![0.0; p],
            step_re: vec![0.0; p],
            step_im: vec![0.0; p],
        })
    }

    pub fn antenna_count(&self) -> usize {
        self.m
    }

    pub fn draw_into(&mut self, out: &mut [C64], mean_doa: f64, gain: f64, rng: &mut impl Rng) {
        debug_assert_eq!(out.len(), self.m);
        let p = self.ray.n_rays;
        // Fold both the 1/√P averaging and the per-ray amplitude μ into the
        // initial ray states so the sweep below is pure rotate-and-sum.
        let amp = (gain / p as f64).sqrt();
        for i in 0..p {
            let theta = mean_doa + self.ray.angular_spread * (2.0 * rng.gen::<f64>() - 1.0);
            let z = crate::rng::complex_normal(rng);
            let (s, c) = (2.0 * PI * self.ray.d_over_lambda * theta.sin()).sin_cos();
            self.cur_re[i] = amp * z.re;
            self.cur_im[i] = amp * z.im;
            self.step_re[i] = c;
            self.step_im[i] = s;
        }
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for i in 0..p {
                acc_re += self.cur_re[i];
                acc_im += self.cur_im[i];
            }
            *slot = C64::new(acc_re, acc_im);
            if idx + 1 == self.m {
                break;
            }
            for i in 0..p {
                let (re, im) = (self.cur_re[i], self.cur_im[i]);
                self.cur_re[i] = re * self.step_re[i] - im * self.step_im[i];
                self.cur_im[i] = re * self.step_im[i] + im * self.step_re[i];
            }
        }
    }
}

/// One ray-channel realization toward an `m`-antenna array.
pub fn draw_channel(
    m: usize,
    mean_doa: f64,
    gain: f64,
    ray: &RayParams,
    rng: &mut impl Rng,
) -> Result<Vec<C64>> {
    let mut sampler = ChannelSampler::new(m, *ray)?;
    let mut out = vec![C64::default(); m];
    sampler.draw_into(&mut out, mean_doa, gain, rng);
    Ok(out)
}

/// Average per-beam powers `ζ[s] = E |⟨f_s, g⟩|²` of one link, estimated
/// over `n_draws` Monte Carlo realizations.
#[derive(Debug, Clone)]
pub struct BeamPowerProfile {
    pub zeta: Vec<f64>,
    /// Average antenna-domain energy `E ‖g‖²` over the same draws.
    pub mean_energy: f64,
}

impl BeamPowerProfile {
    /// Total beam-domain power; equals `mean_energy` up to rounding because
    /// the basis is unitary.
    pub fn trace(&self) -> f64 {
        self.zeta.iter().sum()
    }
}

pub fn estimate_beam_powers(
    basis: &DftBasis,
    mean_doa: f64,
    gain: f64,
    ray: &RayParams,
    n_draws: usize,
    rng: &mut impl Rng,
) -> Result<BeamPowerProfile> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("draw count must be positive".into()));
    }
    let m = basis.size();
    let mut sampler = ChannelSampler::new(m, *ray)?;
    let mut buf = vec![C64::default(); m];
    let mut scratch = vec![C64::default(); basis.scratch_len()];
    let mut zeta = vec![0.0; m];
    let mut energy = 0.0;
    for _ in 0..n_draws {
        sampler.draw_into(&mut buf, mean_doa, gain, rng);
        energy += buf.iter().map(|x| x.norm_sqr()).sum::<f64>();
        basis.spectrum_in_place(&mut buf, &mut scratch);
        for (z, x) in zeta.iter_mut().zip(&buf) {
            *z += x.norm_sqr();
        }
    }
    let inv = 1.0 / n_draws as f64;
    for z in zeta.iter_mut() {
        *z *= inv;
    }
    Ok(BeamPowerProfile { zeta, mean_energy: energy * inv })
}
