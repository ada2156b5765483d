//! Uplink training and data detection for one coherence block: received
//! pilot matrices, projected least-squares channel estimates, the four-term
//! detection decomposition (desired signal, copilot interference, noise,
//! non-coherent interference), and per-user MSE/SINR/SE metrics, including
//! the conventional orthogonal-pilot baseline.

use std::collections::HashMap;

use rand::Rng;

use crate::channel::{ChannelSampler, NetworkGeometry, RayParams};
use crate::error::{Error, Result};
use crate::grouping::CellGrouping;
use crate::math::{C64, DftBasis};
use crate::pilot_graph::PilotAssignment;
use crate::rng::complex_normal;
use crate::signature::SignatureTable;

/// Hard ceiling on instantaneous SINR so noise-off runs stay finite.
pub const SINR_CAP: f64 = 1e12;

/// One scheduled transmitter: which pilot it sends and which beams its
/// receiving base station estimates for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedUser {
    pub cell: usize,
    pub user: usize,
    pub pilot: usize,
    pub beams: Vec<usize>,
}

/// Everything the training phase needs to know about one coherence block.
#[derive(Debug, Clone)]
pub struct TrainingSetup {
    pub m: usize,
    pub n_cells: usize,
    /// Number of orthogonal pilot sequences spent (the training overhead).
    pub tau_pilots: usize,
    pub users: Vec<SchedUser>,
    pub warnings: Vec<String>,
}

impl TrainingSetup {
    /// Proposed-scheme setup: group members transmit the pilot their group
    /// was assigned and are estimated on their serving-signature beams.
    /// Members whose group has no pilot (malformed assignment) are excluded
    /// with a warning.
    pub fn from_groups(
        m: usize,
        groupings: &[CellGrouping],
        assignment: &PilotAssignment,
        signatures: &SignatureTable,
    ) -> Result<Self> {
        let n_cells = groupings.len();
        let mut users = Vec::new();
        let mut warnings = Vec::new();
        for grouping in groupings {
            for group in &grouping.groups {
                let pilot = assignment
                    .pilots
                    .get(group.cell)
                    .and_then(|row| row.get(group.slot))
                    .copied();
                let Some(pilot) = pilot.filter(|&p| p < assignment.tau) else {
                    if !group.members.is_empty() {
                        warnings.push(format!(
                            "group cell {} slot {} has no pilot; its {} member(s) are excluded",
                            group.cell,
                            group.slot,
                            group.members.len()
                        ));
                    }
                    continue;
                };
                for &member in &group.members {
                    let sig = signatures.get(group.cell, member, group.cell).ok_or_else(|| {
                        Error::Invariant(format!(
                            "missing serving signature for cell {} user {member}",
                            group.cell
                        ))
                    })?;
                    users.push(SchedUser {
                        cell: group.cell,
                        user: member,
                        pilot,
                        beams: sig.beams.clone(),
                    });
                }
            }
        }
        let setup = Self { m, n_cells, tau_pilots: assignment.tau, users, warnings };
        setup.validate()?;
        Ok(setup)
    }

    /// Conventional baseline: within each cell the scheduled users get
    /// mutually orthogonal pilots in scheduling order (indices reused across
    /// cells), and estimation spans all `m` beams.
    pub fn conventional(m: usize, schedule: &[Vec<usize>], pilot_budget: usize) -> Result<Self> {
        let n_cells = schedule.len();
        let mut users = Vec::new();
        for (cell, scheduled) in schedule.iter().enumerate() {
            if scheduled.len() > pilot_budget {
                return Err(Error::InvalidParameter(format!(
                    "cell {cell} schedules {} users but only {pilot_budget} orthogonal pilots exist",
                    scheduled.len()
                )));
            }
            for (order, &user) in scheduled.iter().enumerate() {
                users.push(SchedUser { cell, user, pilot: order, beams: (0..m).collect() });
            }
        }
        let setup =
            Self { m, n_cells, tau_pilots: pilot_budget, users, warnings: Vec::new() };
        setup.validate()?;
        Ok(setup)
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_cells == 0 || self.tau_pilots == 0 {
            return Err(Error::InvalidParameter("setup dimensions must be positive".into()));
        }
        let mut seen = HashMap::new();
        for u in &self.users {
            if u.cell >= self.n_cells {
                return Err(Error::InvalidParameter(format!("user cell {} out of range", u.cell)));
            }
            if u.pilot >= self.tau_pilots {
                return Err(Error::InvalidParameter(format!(
                    "pilot {} out of range for {} pilots",
                    u.pilot, self.tau_pilots
                )));
            }
            if u.beams.is_empty() || u.beams.iter().any(|&b| b >= self.m) {
                return Err(Error::InvalidParameter(format!(
                    "cell {} user {} has an invalid beam list",
                    u.cell, u.user
                )));
            }
            if let Some(prev) = seen.insert((u.cell, u.user), u.pilot) {
                return Err(Error::InvalidParameter(format!(
                    "cell {} user {} scheduled twice (pilots {prev} and {})",
                    u.cell, u.user, u.pilot
                )));
            }
        }
        Ok(())
    }
}

/// True channels of the scheduled users toward every base station.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub m: usize,
    pub n_cells: usize,
    channels: HashMap<(usize, usize), Vec<Vec<C64>>>,
}

impl ChannelSet {
    /// An empty set to be filled via [`ChannelSet::insert`] (used by tests
    /// that need hand-crafted channels).
    pub fn empty(m: usize, n_cells: usize) -> Self {
        Self { m, n_cells, channels: HashMap::new() }
    }

    /// Draw fresh ray channels for the listed (cell, user) pairs toward all
    /// base stations, in listing order.
    pub fn draw(
        geometry: &NetworkGeometry,
        m: usize,
        ray: &RayParams,
        users: &[(usize, usize)],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut sampler = ChannelSampler::new(m, *ray)?;
        let mut set = Self::empty(m, geometry.n_cells);
        for &(cell, user) in users {
            if cell >= geometry.n_cells || user >= geometry.users_per_cell {
                return Err(Error::InvalidParameter(format!("no such user: cell {cell} user {user}")));
            }
            let mut toward = Vec::with_capacity(geometry.n_cells);
            for bs in 0..geometry.n_cells {
                let mut g = vec![C64::default(); m];
                sampler.draw_into(
                    &mut g,
                    geometry.mean_doa[cell][user][bs],
                    geometry.link_gain[cell][user][bs],
                    rng,
                );
                toward.push(g);
            }
            set.insert(cell, user, toward)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, cell: usize, user: usize, toward: Vec<Vec<C64>>) -> Result<()> {
        if toward.len() != self.n_cells || toward.iter().any(|g| g.len() != self.m) {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells * self.m,
                got: toward.iter().map(Vec::len).sum(),
            });
        }
        self.channels.insert((cell, user), toward);
        Ok(())
    }

    pub fn get(&self, cell: usize, user: usize, bs: usize) -> Option<&[C64]> {
        self.channels.get(&(cell, user)).map(|toward| toward[bs].as_slice())
    }
}

/// One user's projected least-squares estimate.
#[derive(Debug, Clone)]
pub struct UserEstimate {
    pub cell: usize,
    pub user: usize,
    pub pilot: usize,
    pub beams: Vec<usize>,
    /// Beam-domain estimate, aligned with `beams`.
    pub g_hat: Vec<C64>,
    /// Normalized estimation error ‖g − F ĝ‖² / ‖g‖² against the true
    /// serving channel.
    pub mse: f64,
}

/// Received pilot signal and estimates for every base station.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub tau_pilots: usize,
    pub rho_p: f64,
    pub noise: bool,
    /// `y_p[bs][pilot]` — received column for that pilot (noise included).
    pub y_p: Vec<Vec<Vec<C64>>>,
    /// `w_p[bs][pilot]` — the noise component alone (zeros when noise off).
    pub w_p: Vec<Vec<Vec<C64>>>,
    /// Aligned with the setup's user list.
    pub estimates: Vec<UserEstimate>,
}

/// Simulate the training phase: with canonical orthonormal pilots, the
/// received column for pilot l at base station b is
/// `√ρ_p Σ_{users sending l} g^[b] + w`, and each user's estimate is its
/// signature slice of `F† y[:, pilot] / √ρ_p`.
pub fn simulate_training(
    basis: &DftBasis,
    channels: &ChannelSet,
    setup: &TrainingSetup,
    rho_p: f64,
    noise: bool,
    rng: &mut impl Rng,
) -> Result<TrainingOutcome> {
    if rho_p <= 0.0 {
        return Err(Error::InvalidParameter("pilot power must be positive".into()));
    }
    if basis.size() != setup.m || channels.m != setup.m || channels.n_cells != setup.n_cells {
        return Err(Error::DimensionMismatch { expected: setup.m, got: basis.size() });
    }
    let m = setup.m;
    let sqrt_rho = rho_p.sqrt();

    let mut y_p = vec![vec![vec![C64::default(); m]; setup.tau_pilots]; setup.n_cells];
    let mut w_p = vec![vec![vec![C64::default(); m]; setup.tau_pilots]; setup.n_cells];
    for bs in 0..setup.n_cells {
        for u in &setup.users {
            let g = channels.get(u.cell, u.user, bs).ok_or_else(|| {
                Error::Invariant(format!("missing channel: cell {} user {} toward bs {bs}", u.cell, u.user))
            })?;
            let col = &mut y_p[bs][u.pilot];
            for (acc, &x) in col.iter_mut().zip(g) {
                *acc += sqrt_rho * x;
            }
        }
        if noise {
            for pilot in 0..setup.tau_pilots {
                for entry in w_p[bs][pilot].iter_mut() {
                    *entry = complex_normal(rng);
                }
            }
            for pilot in 0..setup.tau_pilots {
                for (acc, &w) in y_p[bs][pilot].iter_mut().zip(&w_p[bs][pilot]) {
                    *acc += w;
                }
            }
        }
    }

    let mut scratch = vec![C64::default(); basis.scratch_len()];
    let mut buf = vec![C64::default(); m];
    let mut estimates = Vec::with_capacity(setup.users.len());
    for u in &setup.users {
        buf.copy_from_slice(&y_p[u.cell][u.pilot]);
        for x in buf.iter_mut() {
            *x /= sqrt_rho;
        }
        basis.spectrum_in_place(&mut buf, &mut scratch);
        let g_hat: Vec<C64> = u.beams.iter().map(|&s| buf[s]).collect();

        let g_true = channels.get(u.cell, u.user, u.cell).unwrap();
        buf.copy_from_slice(g_true);
        basis.spectrum_in_place(&mut buf, &mut scratch);
        let total: f64 = buf.iter().map(|x| x.norm_sqr()).sum();
        let mut err = 0.0;
        let mut inside = vec![false; m];
        for (&s, &est) in u.beams.iter().zip(&g_hat) {
            err += (buf[s] - est).norm_sqr();
            inside[s] = true;
        }
        for (s, &covered) in inside.iter().enumerate() {
            if !covered {
                err += buf[s].norm_sqr();
            }
        }
        let mse = if total > 0.0 { err / total } else { 0.0 };
        estimates.push(UserEstimate {
            cell: u.cell,
            user: u.user,
            pilot: u.pilot,
            beams: u.beams.clone(),
            g_hat,
            mse,
        });
    }

    Ok(TrainingOutcome { tau_pilots: setup.tau_pilots, rho_p, noise, y_p, w_p, estimates })
}

/// One user's detection terms. The four complex amplitudes decompose the
/// matched-filter output exactly: their sum equals the filter applied to the
/// raw received data signal (`reassembly_rel_err` tracks the identity).
#[derive(Debug, Clone)]
pub struct UserDetection {
    pub cell: usize,
    pub user: usize,
    pub pilot: usize,
    /// Desired signal: `(ĝ†ĝ) d`.
    pub ds: C64,
    /// Copilot interference through true projected channels.
    pub ic: C64,
    /// Self estimation error plus all other-pilot users.
    pub inc: C64,
    /// Receiver noise through the filter (zero when noise is off).
    pub nn: C64,
    pub data_symbol: C64,
    pub sinr: f64,
    pub reassembly_rel_err: f64,
    /// Estimate had zero norm; the user contributes zero SE but is counted.
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub rho_u: f64,
    pub users: Vec<UserDetection>,
}

/// Simulate the data phase and decompose each user's matched-filter output.
pub fn detect_uplink(
    basis: &DftBasis,
    channels: &ChannelSet,
    setup: &TrainingSetup,
    training: &TrainingOutcome,
    rho_u: f64,
    noise: bool,
    rng: &mut impl Rng,
) -> Result<DetectionOutcome> {
    if rho_u <= 0.0 {
        return Err(Error::InvalidParameter("data power must be positive".into()));
    }
    if training.estimates.len() != setup.users.len() {
        return Err(Error::DimensionMismatch {
            expected: setup.users.len(),
            got: training.estimates.len(),
        });
    }
    let m = setup.m;
    let sqrt_rho = rho_u.sqrt();

    let symbols: Vec<C64> = setup.users.iter().map(|_| complex_normal(rng)).collect();
    let mut w_u = vec![vec![C64::default(); m]; setup.n_cells];
    if noise {
        for col in w_u.iter_mut() {
            for entry in col.iter_mut() {
                *entry = complex_normal(rng);
            }
        }
    }

    // Per base station: beam-domain spectra of every scheduled channel, of
    // the receive noise, and of the assembled raw data signal.
    let mut scratch = vec![C64::default(); basis.scratch_len()];
    let mut buf = vec![C64::default(); m];
    let mut spectra: HashMap<(usize, usize, usize), Vec<C64>> = HashMap::new();
    let mut w_spec = Vec::with_capacity(setup.n_cells);
    let mut y_spec = Vec::with_capacity(setup.n_cells);
    for bs in 0..setup.n_cells {
        let mut y = vec![C64::default(); m];
        for (u, &d) in setup.users.iter().zip(&symbols) {
            let g = channels.get(u.cell, u.user, bs).ok_or_else(|| {
                Error::Invariant(format!("missing channel: cell {} user {} toward bs {bs}", u.cell, u.user))
            })?;
            for (acc, &x) in y.iter_mut().zip(g) {
                *acc += sqrt_rho * d * x;
            }
            buf.copy_from_slice(g);
            basis.spectrum_in_place(&mut buf, &mut scratch);
            spectra.insert((u.cell, u.user, bs), buf.clone());
        }
        for (acc, &w) in y.iter_mut().zip(&w_u[bs]) {
            *acc += w;
        }
        buf.copy_from_slice(&w_u[bs]);
        basis.spectrum_in_place(&mut buf, &mut scratch);
        w_spec.push(buf.clone());
        buf.copy_from_slice(&y);
        basis.spectrum_in_place(&mut buf, &mut scratch);
        y_spec.push(buf.clone());
    }

    let mut users = Vec::with_capacity(setup.users.len());
    for (idx, u) in setup.users.iter().enumerate() {
        let est = &training.estimates[idx];
        let d_own = symbols[idx];
        let norm_sqr: f64 = est.g_hat.iter().map(|x| x.norm_sqr()).sum();
        if norm_sqr <= 0.0 {
            users.push(UserDetection {
                cell: u.cell,
                user: u.user,
                pilot: u.pilot,
                ds: C64::default(),
                ic: C64::default(),
                inc: C64::default(),
                nn: C64::default(),
                data_symbol: d_own,
                sinr: 0.0,
                reassembly_rel_err: 0.0,
                skipped: true,
            });
            continue;
        }
        let slice = |spec: &[C64]| -> C64 {
            est.beams
                .iter()
                .zip(&est.g_hat)
                .map(|(&s, &h)| h.conj() * spec[s])
                .sum()
        };

        let ds = norm_sqr * d_own;
        let mut ic = C64::default();
        let mut inc = C64::default();
        for (other_idx, o) in setup.users.iter().enumerate() {
            if other_idx == idx {
                continue;
            }
            let through = slice(&spectra[&(o.cell, o.user, u.cell)]) * symbols[other_idx];
            if o.pilot == u.pilot {
                ic += through;
            } else {
                inc += through;
            }
        }
        let self_proj = slice(&spectra[&(u.cell, u.user, u.cell)]);
        inc += (self_proj - C64::from(norm_sqr)) * d_own;
        let nn = slice(&w_spec[u.cell]) / sqrt_rho;

        let target = slice(&y_spec[u.cell]) / sqrt_rho;
        let total = ds + ic + inc + nn;
        let reassembly_rel_err = if target.norm() > 0.0 {
            (total - target).norm() / target.norm()
        } else {
            total.norm()
        };

        let denom = ic.norm_sqr() + inc.norm_sqr() + nn.norm_sqr();
        let sinr = if denom > 0.0 { (ds.norm_sqr() / denom).min(SINR_CAP) } else { SINR_CAP };

        users.push(UserDetection {
            cell: u.cell,
            user: u.user,
            pilot: u.pilot,
            ds,
            ic,
            inc,
            nn,
            data_symbol: d_own,
            sinr,
            reassembly_rel_err,
            skipped: false,
        });
    }

    Ok(DetectionOutcome { rho_u, users })
}

/// Final per-user figures for one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub cell: usize,
    pub user: usize,
    pub mse: f64,
    pub sinr: f64,
    pub se: f64,
    pub skipped: bool,
}

/// Combine training and detection into per-user records. `tau_used` is the
/// scheme's training overhead in symbols; SE carries the prelog
/// `1 − tau_used / t_sym`.
pub fn compute_metrics(
    training: &TrainingOutcome,
    detection: &DetectionOutcome,
    t_sym: usize,
    tau_used: usize,
) -> Result<Vec<MetricsRecord>> {
    if tau_used == 0 || tau_used >= t_sym {
        return Err(Error::InvalidParameter(format!(
            "training overhead {tau_used} must lie in [1, {t_sym}) symbols"
        )));
    }
    if training.estimates.len() != detection.users.len() {
        return Err(Error::DimensionMismatch {
            expected: training.estimates.len(),
            got: detection.users.len(),
        });
    }
    let prelog = 1.0 - tau_used as f64 / t_sym as f64;
    Ok(training
        .estimates
        .iter()
        .zip(&detection.users)
        .map(|(est, det)| MetricsRecord {
            cell: est.cell,
            user: est.user,
            mse: est.mse,
            sinr: det.sinr,
            se: prelog * (1.0 + det.sinr).log2(),
            skipped: det.skipped,
        })
        .collect())
}

/// Run the conventional baseline end to end on an existing channel draw:
/// per-cell orthogonal pilots (`pilot_budget` of them), full-dimension LS,
/// matched-filter detection, metrics with the `pilot_budget` overhead.
#[allow(clippy::too_many_arguments)]
pub fn run_conventional_baseline(
    basis: &DftBasis,
    channels: &ChannelSet,
    schedule: &[Vec<usize>],
    pilot_budget: usize,
    rho_p: f64,
    rho_u: f64,
    noise: bool,
    t_sym: usize,
    rng: &mut impl Rng,
) -> Result<(TrainingOutcome, DetectionOutcome, Vec<MetricsRecord>)> {
    if pilot_budget >= t_sym {
        return Err(Error::InvalidParameter(format!(
            "conventional training needs {pilot_budget} symbols, the whole block has {t_sym}"
        )));
    }
    let setup = TrainingSetup::conventional(basis.size(), schedule, pilot_budget)?;
    let training = simulate_training(basis, channels, &setup, rho_p, noise, rng)?;
    let detection = detect_uplink(basis, channels, &setup, &training, rho_u, noise, rng)?;
    let metrics = compute_metrics(&training, &detection, t_sym, pilot_budget)?;
    Ok((training, detection, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_network, GeometryParams};
    use crate::grouping::{group_power_agnostic, GroupingInstance};
    use crate::pilot_graph::identity_assign;
    use crate::rng::stream;
    use crate::signature::extract_all_signatures;

    /// A channel exactly supported on the given beams.
    fn supported_channel(basis: &DftBasis, beams: &[usize], coeffs: &[C64]) -> Vec<C64> {
        basis.synthesize(beams, coeffs).unwrap()
    }

    fn lone_setup(m: usize, beams: &[usize]) -> TrainingSetup {
        TrainingSetup {
            m,
            n_cells: 1,
            tau_pilots: 1,
            users: vec![SchedUser { cell: 0, user: 0, pilot: 0, beams: beams.to_vec() }],
            warnings: Vec::new(),
        }
    }

    #[test]
    fn lone_user_noise_off_estimate_is_exact() {
        let m = 8;
        let basis = DftBasis::new(m).unwrap();
        let beams = [1usize, 3];
        let coeffs = [C64::new(1.0, -0.5), C64::new(0.25, 2.0)];
        let mut channels = ChannelSet::empty(m, 1);
        channels.insert(0, 0, vec![supported_channel(&basis, &beams, &coeffs)]).unwrap();
        let setup = lone_setup(m, &beams);
        let training =
            simulate_training(&basis, &channels, &setup, 4.0, false, &mut stream(1, &[0])).unwrap();
        let est = &training.estimates[0];
        for (got, want) in est.g_hat.iter().zip(&coeffs) {
            assert!((got - want).norm() < 1e-12);
        }
        assert!(est.mse < 1e-24, "mse {}", est.mse);

        let detection =
            detect_uplink(&basis, &channels, &setup, &training, 2.0, false, &mut stream(1, &[1]))
                .unwrap();
        let det = &detection.users[0];
        assert_eq!(det.sinr, SINR_CAP);
        let norm_sqr: f64 = est.g_hat.iter().map(|x| x.norm_sqr()).sum();
        assert!((det.ds.norm() - norm_sqr * det.data_symbol.norm()).abs() < 1e-12);
        assert!(det.reassembly_rel_err < 1e-12);
    }

    #[test]
    fn disjoint_copilot_pair_stays_uncontaminated() {
        let m = 16;
        let basis = DftBasis::new(m).unwrap();
        let beams_a = [0usize, 1];
        let beams_b = [4usize, 5, 6];
        let coeffs_a = [C64::new(2.0, 0.0), C64::new(0.0, -1.0)];
        let coeffs_b = [C64::new(1.0, 1.0), C64::new(-0.5, 0.25), C64::new(0.1, 0.0)];
        let mut channels = ChannelSet::empty(m, 1);
        channels.insert(0, 0, vec![supported_channel(&basis, &beams_a, &coeffs_a)]).unwrap();
        channels.insert(0, 1, vec![supported_channel(&basis, &beams_b, &coeffs_b)]).unwrap();
        let setup = TrainingSetup {
            m,
            n_cells: 1,
            tau_pilots: 1,
            users: vec![
                SchedUser { cell: 0, user: 0, pilot: 0, beams: beams_a.to_vec() },
                SchedUser { cell: 0, user: 1, pilot: 0, beams: beams_b.to_vec() },
            ],
            warnings: Vec::new(),
        };
        let training =
            simulate_training(&basis, &channels, &setup, 1.0, false, &mut stream(2, &[0])).unwrap();
        for (got, want) in training.estimates[0].g_hat.iter().zip(&coeffs_a) {
            assert!((got - want).norm() < 1e-12, "copilot leakage contaminated the estimate");
        }
        let detection =
            detect_uplink(&basis, &channels, &setup, &training, 1.0, false, &mut stream(2, &[1]))
                .unwrap();
        for det in &detection.users {
            assert!(det.ic.norm_sqr() < 1e-18, "|I^C|² = {}", det.ic.norm_sqr());
            assert_eq!(det.sinr, SINR_CAP);
        }
    }

    #[test]
    fn identical_copilot_pair_follows_the_exact_term_ratios() {
        // Both users share one channel g, so ĝ = 2 F†g for each: the desired
        // term is 4‖F†g‖² d_own while the copilot term is 2‖F†g‖² d_other —
        // amplitude ratio exactly two after unscaling the data symbols. The
        // self estimation error contributes the same magnitude as the
        // copilot term.
        let m = 8;
        let basis = DftBasis::new(m).unwrap();
        let beams = [2usize, 5];
        let coeffs = [C64::new(1.5, 0.5), C64::new(-0.75, 1.0)];
        let g = supported_channel(&basis, &beams, &coeffs);
        let mut channels = ChannelSet::empty(m, 1);
        channels.insert(0, 0, vec![g.clone()]).unwrap();
        channels.insert(0, 1, vec![g]).unwrap();
        let setup = TrainingSetup {
            m,
            n_cells: 1,
            tau_pilots: 1,
            users: vec![
                SchedUser { cell: 0, user: 0, pilot: 0, beams: beams.to_vec() },
                SchedUser { cell: 0, user: 1, pilot: 0, beams: beams.to_vec() },
            ],
            warnings: Vec::new(),
        };
        let training =
            simulate_training(&basis, &channels, &setup, 1.0, false, &mut stream(3, &[0])).unwrap();
        let detection =
            detect_uplink(&basis, &channels, &setup, &training, 1.0, false, &mut stream(3, &[1]))
                .unwrap();
        let (a, b) = (&detection.users[0], &detection.users[1]);
        let rel = |x: f64, y: f64| (x - y).abs() / y.max(1e-300);
        assert!(rel(a.ds.norm() * b.data_symbol.norm(), 2.0 * a.ic.norm() * a.data_symbol.norm()) < 1e-9);
        assert!(rel(a.inc.norm() * b.data_symbol.norm(), a.ic.norm() * a.data_symbol.norm()) < 1e-9);
        assert!(rel(b.ds.norm() * a.data_symbol.norm(), 2.0 * b.ic.norm() * b.data_symbol.norm()) < 1e-9);
        assert!(a.reassembly_rel_err < 1e-12 && b.reassembly_rel_err < 1e-12);
    }

    /// Full two-cell pipeline up to detection, shared by several tests.
    fn two_cell_pipeline(
        seed: u64,
        noise: bool,
    ) -> (DftBasis, ChannelSet, TrainingSetup, TrainingOutcome, DetectionOutcome) {
        let m = 16;
        let basis = DftBasis::new(m).unwrap();
        let geometry =
            generate_network(&GeometryParams::new(2, 4, 0.5, 3.5), &mut stream(seed, &[0])).unwrap();
        let ray = RayParams::new(20, 4f64.to_radians());
        let signatures =
            extract_all_signatures(&geometry, &basis, 0.05, &ray, 200, &mut stream(seed, &[1]))
                .unwrap();
        let mut instances = Vec::new();
        for cell in 0..2 {
            let sigs: Vec<_> =
                (0..4).map(|u| signatures.get(cell, u, cell).unwrap().clone()).collect();
            let (inst, _) = GroupingInstance::from_serving_signatures(m, &sigs).unwrap();
            instances.push(inst);
        }
        let groupings =
            group_power_agnostic(&instances, &crate::grouping::uniform_caps(2, 2, 2)).unwrap();
        let assignment = identity_assign(2, 2).unwrap();
        let setup = TrainingSetup::from_groups(m, &groupings, &assignment, &signatures).unwrap();
        let channel_users: Vec<(usize, usize)> =
            setup.users.iter().map(|u| (u.cell, u.user)).collect();
        let channels =
            ChannelSet::draw(&geometry, m, &ray, &channel_users, &mut stream(seed, &[2])).unwrap();
        let training =
            simulate_training(&basis, &channels, &setup, 3.0, noise, &mut stream(seed, &[3]))
                .unwrap();
        let detection =
            detect_uplink(&basis, &channels, &setup, &training, 2.0, noise, &mut stream(seed, &[4]))
                .unwrap();
        (basis, channels, setup, training, detection)
    }

    #[test]
    fn received_pilot_matrix_matches_direct_resummation() {
        let (_, channels, setup, training, _) = two_cell_pipeline(11, true);
        let sqrt_rho = training.rho_p.sqrt();
        for bs in 0..setup.n_cells {
            for pilot in 0..setup.tau_pilots {
                let mut expected = training.w_p[bs][pilot].clone();
                for u in setup.users.iter().filter(|u| u.pilot == pilot) {
                    let g = channels.get(u.cell, u.user, bs).unwrap();
                    for (acc, &x) in expected.iter_mut().zip(g) {
                        *acc += sqrt_rho * x;
                    }
                }
                for (got, want) in training.y_p[bs][pilot].iter().zip(&expected) {
                    assert!((got - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn detection_terms_reassemble_the_filtered_signal() {
        for seed in [11, 23, 37] {
            let (_, _, _, _, detection) = two_cell_pipeline(seed, true);
            assert!(!detection.users.is_empty());
            for det in &detection.users {
                assert!(
                    det.reassembly_rel_err < 1e-9,
                    "seed {seed}: reassembly error {}",
                    det.reassembly_rel_err
                );
            }
        }
    }

    #[test]
    fn zero_norm_estimate_is_skipped_and_counted() {
        let m = 8;
        let basis = DftBasis::new(m).unwrap();
        let mut channels = ChannelSet::empty(m, 1);
        channels.insert(0, 0, vec![vec![C64::default(); m]]).unwrap();
        let setup = lone_setup(m, &[2]);
        let training =
            simulate_training(&basis, &channels, &setup, 1.0, false, &mut stream(4, &[0])).unwrap();
        let detection =
            detect_uplink(&basis, &channels, &setup, &training, 1.0, false, &mut stream(4, &[1]))
                .unwrap();
        let det = &detection.users[0];
        assert!(det.skipped);
        assert_eq!(det.sinr, 0.0);
        let metrics = compute_metrics(&training, &detection, 128, 8).unwrap();
        assert_eq!(metrics.len(), 1);
        assert_eq!(metrics[0].se, 0.0);
        assert!(metrics[0].skipped);
    }

    #[test]
    fn metrics_apply_the_exact_prelog() {
        let (_, _, _, training, detection) = two_cell_pipeline(11, true);
        let metrics = compute_metrics(&training, &detection, 128, 8).unwrap();
        for (rec, det) in metrics.iter().zip(&detection.users) {
            let log_term = (1.0 + det.sinr).log2();
            if log_term > 0.0 {
                assert!((rec.se / log_term - 0.9375).abs() < 1e-12);
            }
        }
        assert!(compute_metrics(&training, &detection, 128, 128).is_err());
        assert!(compute_metrics(&training, &detection, 128, 0).is_err());
    }

    #[test]
    fn conventional_single_cell_noise_off_is_contamination_free() {
        let m = 16;
        let basis = DftBasis::new(m).unwrap();
        let geometry =
            generate_network(&GeometryParams::new(1, 3, 0.5, 3.5), &mut stream(6, &[0])).unwrap();
        let ray = RayParams::new(20, 4f64.to_radians());
        let users: Vec<(usize, usize)> = (0..3).map(|u| (0, u)).collect();
        let channels =
            ChannelSet::draw(&geometry, m, &ray, &users, &mut stream(6, &[1])).unwrap();
        let (training, detection, metrics) = run_conventional_baseline(
            &basis,
            &channels,
            &[vec![0, 1, 2]],
            3,
            2.0,
            2.0,
            false,
            128,
            &mut stream(6, &[2]),
        )
        .unwrap();
        for est in &training.estimates {
            assert!(est.mse < 1e-18, "mse {}", est.mse);
        }
        // Orthogonal pilots leave no copilot interference; cross-user data
        // interference remains (the matched filter does not null it).
        for det in &detection.users {
            assert!(det.ic.norm_sqr() < 1e-20);
            assert!(det.reassembly_rel_err < 1e-9);
        }
        // Prelog with pilot budget 3: 1 − 3/128.
        for rec in &metrics {
            let log_term = (1.0 + rec.sinr).log2();
            assert!((rec.se / log_term - (1.0 - 3.0 / 128.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn conventional_prelog_matches_budget_of_twenty_four() {
        // τ = 8 slots at U = 3 users each costs 24 orthogonal pilots:
        // prelog 1 − 24/128 = 0.8125.
        assert_eq!(1.0 - 24.0 / 128.0, 0.8125);
        let m = 8;
        let basis = DftBasis::new(m).unwrap();
        let mut channels = ChannelSet::empty(m, 1);
        let coeffs = [C64::new(1.0, 0.0)];
        channels.insert(0, 0, vec![supported_channel(&basis, &[1], &coeffs)]).unwrap();
        let (training, detection, metrics) = run_conventional_baseline(
            &basis,
            &channels,
            &[vec![0]],
            24,
            1.0,
            1.0,
            false,
            128,
            &mut stream(7, &[0]),
        )
        .unwrap();
        assert_eq!(training.tau_pilots, 24);
        assert_eq!(detection.users.len(), 1);
        let log_term = (1.0 + metrics[0].sinr).log2();
        assert!((metrics[0].se / log_term - 0.8125).abs() < 1e-12);
    }

    #[test]
    fn conventional_rejects_infeasible_budgets() {
        let m = 8;
        let basis = DftBasis::new(m).unwrap();
        let channels = ChannelSet::empty(m, 1);
        let mut rng = stream(8, &[0]);
        assert!(run_conventional_baseline(
            &basis, &channels, &[vec![0]], 128, 1.0, 1.0, true, 128, &mut rng
        )
        .is_err());
        assert!(run_conventional_baseline(
            &basis, &channels, &[vec![0, 1, 2]], 2, 1.0, 1.0, true, 128, &mut rng
        )
        .is_err());
    }

    #[test]
    fn setup_validation_catches_malformed_schedules() {
        assert!(TrainingSetup {
            m: 8,
            n_cells: 1,
            tau_pilots: 2,
            users: vec![SchedUser { cell: 0, user: 0, pilot: 2, beams: vec![0] }],
            warnings: Vec::new(),
        }
        .validate()
        .is_err());
        assert!(TrainingSetup {
            m: 8,
            n_cells: 1,
            tau_pilots: 2,
            users: vec![SchedUser { cell: 0, user: 0, pilot: 0, beams: vec![9] }],
            warnings: Vec::new(),
        }
        .validate()
        .is_err());
        assert!(TrainingSetup {
            m: 8,
            n_cells: 1,
            tau_pilots: 2,
            users: vec![
                SchedUser { cell: 0, user: 0, pilot: 0, beams: vec![1] },
                SchedUser { cell: 0, user: 0, pilot: 1, beams: vec![1] },
            ],
            warnings: Vec::new(),
        }
        .validate()
        .is_err());
    }

    #[test]
    fn groups_without_pilots_are_excluded_with_a_warning() {
        let m = 8;
        let basis = DftBasis::new(m).unwrap();
        let geometry =
            generate_network(&GeometryParams::new(2, 2, 0.5, 3.5), &mut stream(9, &[0])).unwrap();
        let ray = RayParams::new(10, 4f64.to_radians());
        let signatures =
            extract_all_signatures(&geometry, &basis, 0.05, &ray, 100, &mut stream(9, &[1])).unwrap();
        let mut instances = Vec::new();
        for cell in 0..2 {
            let sigs: Vec<_> =
                (0..2).map(|u| signatures.get(cell, u, cell).unwrap().clone()).collect();
            let (inst, _) = GroupingInstance::from_serving_signatures(m, &sigs).unwrap();
            instances.push(inst);
        }
        let groupings =
            group_power_agnostic(&instances, &crate::grouping::uniform_caps(2, 2, 1)).unwrap();
        // Assignment covers only the first cell: cell 1's groups lose their
        // pilots and must be excluded with one warning per nonempty group.
        let assignment = identity_assign(1, 2).unwrap();
        let setup = TrainingSetup::from_groups(m, &groupings, &assignment, &signatures).unwrap();
        assert!(setup.users.iter().all(|u| u.cell == 0));
        assert_eq!(setup.warnings.len(), 2);
    }
}
