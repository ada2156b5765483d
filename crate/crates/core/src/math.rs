//! Unitary DFT beam basis for a uniform linear array, array manifold vectors,
//! subspace projections onto beam index sets, and the chordal distance
//! between the subspaces such sets span.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Unitary DFT basis of size `m`; column `s` has entries
/// `exp(-j 2π m s / M) / sqrt(M)`, so `F† F = I`.
#[derive(Clone)]
pub struct DftBasis {
    m: usize,
    scale: f64,
    columns: Vec<Vec<C64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl DftBasis {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("basis size must be positive".into()));
        }
        let scale = 1.0 / (m as f64).sqrt();
        let columns = (0..m)
            .map(|s| {
                (0..m)
                    .map(|row| {
                        let phase = -2.0 * PI * (row as f64) * (s as f64) / (m as f64);
                        C64::from_polar(scale, phase)
                    })
                    .collect()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            m,
            scale,
            columns,
            forward: planner.plan_fft(m, FftDirection::Forward),
            inverse: planner.plan_fft(m, FftDirection::Inverse),
        })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Basis column `s`.
    pub fn column(&self, s: usize) -> &[C64] {
        &self.columns[s]
    }

    /// `F_S† v`: coefficients of `v` against the columns listed in `beams`.
    pub fn project(&self, beams: &[usize], v: &[C64]) -> Result<Vec<C64>> {
        self.check_vector(v)?;
        self.check_beams(beams)?;
        Ok(beams
            .iter()
            .map(|&s| {
                let col = &self.columns[s];
                v.iter().zip(col).map(|(x, f)| f.conj() * x).sum()
            })
            .collect())
    }

    /// Full beam-domain transform `F† v` of an antenna-domain vector.
    pub fn spectrum(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.check_vector(v)?;
        let mut buf = v.to_vec();
        let mut scratch = vec![C64::default(); self.inverse.get_inplace_scratch_len()];
        self.spectrum_in_place(&mut buf, &mut scratch);
        Ok(buf)
    }

    /// In-place variant of [`spectrum`](Self::spectrum) for hot loops; `buf`
    /// holds the antenna-domain vector on entry and the beam-domain
    /// coefficients on exit.
    pub fn spectrum_in_place(&self, buf: &mut [C64], scratch: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.m);
        self.inverse.process_with_scratch(buf, scratch);
        for x in buf.iter_mut() {
            *x *= self.scale;
        }
    }

    /// Scratch length required by [`spectrum_in_place`](Self::spectrum_in_place).
    pub fn scratch_len(&self) -> usize {
        self.inverse.get_inplace_scratch_len()
    }

    /// `F_S c`: antenna-domain vector with coefficients `c` on the columns in
    /// `beams` and zero elsewhere.
    pub fn synthesize(&self, beams: &[usize], coeffs: &[C64]) -> Result<Vec<C64>> {
        self.check_beams(beams)?;
        if beams.len() != coeffs.len() {
            return Err(Error::DimensionMismatch { expected: beams.len(), got: coeffs.len() });
        }
        if beams.len() == self.m {
            // Full-support synthesis via FFT.
            let mut full = vec![C64::default(); self.m];
            for (&s, &c) in beams.iter().zip(coeffs) {
                full[s] = c;
            }
            let mut scratch = vec![C64::default(); self.forward.get_inplace_scratch_len()];
            self.forward.process_with_scratch(&mut full, &mut scratch);
            for x in full.iter_mut() {
                *x *= self.scale;
            }
            return Ok(full);
        }
        let mut out = vec![C64::default(); self.m];
        for (&s, &c) in beams.iter().zip(coeffs) {
            let col = &self.columns[s];
            for (o, f) in out.iter_mut().zip(col) {
                *o += c * f;
            }
        }
        Ok(out)
    }

    fn check_vector(&self, v: &[C64]) -> Result<()> {
        if v.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: v.len() });
        }
        Ok(())
    }

    fn check_beams(&self, beams: &[usize]) -> Result<()> {
        if beams.is_empty() {
            return Err(Error::InvalidParameter("beam index set must be nonempty".into()));
        }
        if let Some(&bad) = beams.iter().find(|&&s| s >= self.m) {
            return Err(Error::InvalidParameter(format!(
                "beam index {bad} out of range for basis size {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Array manifold `a(θ)` of an `m`-antenna uniform linear array with element
/// spacing `d_over_lambda` wavelengths: entry `n` is
/// `exp(j 2π (d/λ) sin(θ) n)`.
pub fn array_manifold(m: usize, d_over_lambda: f64, theta: f64) -> Result<Vec<C64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("antenna count must be positive".into()));
    }
    if !(d_over_lambda > 0.0 && d_over_lambda <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "element spacing must lie in (0, 0.5] wavelengths to avoid grating lobes, got {d_over_lambda}"
        )));
    }
    let phase = 2.0 * PI * d_over_lambda * theta.sin();
    let step = C64::from_polar(1.0, phase);
    let mut out = Vec::with_capacity(m);
    let mut cur = C64::new(1.0, 0.0);
    for _ in 0..m {
        out.push(cur);
        cur *= step;
    }
    Ok(out)
}

/// Chordal distance between the column spans of two beam index sets:
/// `‖P_A − P_B‖_F²`, which for orthonormal columns equals the symmetric
/// difference cardinality `|A\B| + |B\A|`.
pub fn chordal_distance(sig_a: &[usize], sig_b: &[usize]) -> f64 {
    let count_missing = |from: &[usize], other: &[usize]| {
        from.iter().filter(|s| !other.contains(s)).count()
    };
    (count_missing(sig_a, sig_b) + count_missing(sig_b, sig_a)) as f64
}

/// Overlap between two beam index sets: `‖F_A† F_B‖_F²`, which for
/// orthonormal columns equals the intersection cardinality `|A ∩ B|` — the
/// number of beams on which the two spans interfere.
pub fn beam_overlap(sig_a: &[usize], sig_b: &[usize]) -> f64 {
    sig_a.iter().filter(|s| sig_b.contains(s)).count() as f64
}
