//! Spatial signatures: the set of beams that each carry at least a fraction
//! α of a link's total average beam power.

use std::collections::HashMap;

use rand::RngCore;

use crate::channel::{estimate_beam_powers, BeamPowerProfile, NetworkGeometry, RayParams};
use crate::error::{Error, Result};
use crate::math::DftBasis;
use crate::rng;
use crate::textio::{fmt_f64, parse_f64, parse_usize};

/// One (user, cell, base station) link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId {
    pub cell: usize,
    pub user: usize,
    pub bs: usize,
}

/// Beams retaining at least a fraction α of a link's beam-power trace,
/// together with their estimated powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSignature {
    pub link: LinkId,
    /// Retained beam indices, ascending.
    pub beams: Vec<usize>,
    /// `ζ[s]` for each retained beam, aligned with `beams`.
    pub beam_power: Vec<f64>,
    /// Total beam power of the link (all beams, not just retained ones).
    pub trace: f64,
}

impl SpatialSignature {
    /// An empty signature marks the link as unschedulable.
    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Power summed over the retained beams only.
    pub fn captured_power(&self) -> f64 {
        self.beam_power.iter().sum()
    }

    pub fn power_of(&self, beam: usize) -> Option<f64> {
        self.beams.iter().position(|&b| b == beam).map(|i| self.beam_power[i])
    }
}

/// Threshold a beam-power profile into a signature. Beams qualify when
/// `ζ[s] / trace >= alpha`; a link whose estimated trace is zero carries no
/// usable spatial information and is rejected.
pub fn extract_signature(link: LinkId, profile: &BeamPowerProfile, alpha: f64) -> Result<SpatialSignature> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold alpha must lie in (0, 1), got {alpha}")));
    }
    let trace: f64 = profile.zeta.iter().sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateLink(format!(
            "link cell {} user {} bs {} has zero beam-power trace",
            link.cell, link.user, link.bs
        )));
    }
    let mut beams = Vec::new();
    let mut beam_power = Vec::new();
    for (s, &z) in profile.zeta.iter().enumerate() {
        if z / trace >= alpha {
            beams.push(s);
            beam_power.push(z);
        }
    }
    Ok(SpatialSignature { link, beams, beam_power, trace })
}

/// Signatures indexed by (cell, user, base station).
#[derive(Debug, Clone, Default)]
pub struct SignatureTable {
    map: HashMap<LinkId, SpatialSignature>,
}

impl SignatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sig: SpatialSignature) {
        self.map.insert(sig.link, sig);
    }

    pub fn get(&self, cell: usize, user: usize, bs: usize) -> Option<&SpatialSignature> {
        self.map.get(&LinkId { cell, user, bs })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Signatures in (cell, user, bs) order.
    pub fn iter_sorted(&self) -> impl Iterator<Item = &SpatialSignature> {
        let mut keys: Vec<&LinkId> = self.map.keys().collect();
        keys.sort();
        keys.into_iter().map(move |k| &self.map[k])
    }
}

/// Estimate beam powers and extract signatures for every
/// (cell, user, base station) link of the drop. Each link consumes an
/// independent random substream derived from `rng`, so the result does not
/// depend on evaluation order.
pub fn extract_all_signatures(
    geometry: &NetworkGeometry,
    basis: &DftBasis,
    alpha: f64,
    ray: &RayParams,
    n_draws: usize,
    rng: &mut impl RngCore,
) -> Result<SignatureTable> {
    let base = rng.next_u64();
    let mut links = Vec::with_capacity(geometry.n_cells * geometry.users_per_cell * geometry.n_cells);
    for cell in 0..geometry.n_cells {
        for user in 0..geometry.users_per_cell {
            for bs in 0..geometry.n_cells {
                links.push(LinkId { cell, user, bs });
            }
        }
    }
    extract_signatures_for(geometry, basis, alpha, ray, n_draws, base, &links)
}

/// Extract signatures for an explicit set of links only. Each link's random
/// substream is derived from `base` and the link triple, so a subset
/// extraction yields exactly the signatures the full extraction would for
/// those links.
pub fn extract_signatures_for(
    geometry: &NetworkGeometry,
    basis: &DftBasis,
    alpha: f64,
    ray: &RayParams,
    n_draws: usize,
    base: u64,
    links: &[LinkId],
) -> Result<SignatureTable> {
    let mut table = SignatureTable::new();
    for &link in links {
        if link.cell >= geometry.n_cells
            || link.user >= geometry.users_per_cell
            || link.bs >= geometry.n_cells
        {
            return Err(Error::InvalidParameter(format!(
                "link (cell {}, user {}, bs {}) is outside the drop",
                link.cell, link.user, link.bs
            )));
        }
        let mut link_rng = rng::stream(base, &[link.cell as u64, link.user as u64, link.bs as u64]);
        let profile = estimate_beam_powers(
            basis,
            geometry.mean_doa[link.cell][link.user][link.bs],
            geometry.link_gain[link.cell][link.user][link.bs],
            ray,
            n_draws,
            &mut link_rng,
        )?;
        table.insert(extract_signature(link, &profile, alpha)?);
    }
    Ok(table)
}

/// Render signatures as one line per link:
/// `cell user bs trace | beam,beam,... | power,power,...`
/// with `-` standing for an empty list.
pub fn signatures_to_text<'a>(sigs: impl IntoIterator<Item = &'a SpatialSignature>) -> String {
    let mut out = String::new();
    for sig in sigs {
        let beams = if sig.beams.is_empty() {
            "-".to_string()
        } else {
            sig.beams.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
        };
        let powers = if sig.beam_power.is_empty() {
            "-".to_string()
        } else {
            sig.beam_power.iter().map(|&p| fmt_f64(p)).collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!(
            "{} {} {} {} | {} | {}\n",
            sig.link.cell,
            sig.link.user,
            sig.link.bs,
            fmt_f64(sig.trace),
            beams,
            powers
        ));
    }
    out
}

pub fn signatures_from_text(text: &str) -> Result<Vec<SpatialSignature>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let context = format!("signature line {}", idx + 1);
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(format!("{context}: expected 3 '|'-separated fields")));
        }
        let head: Vec<&str> = parts[0].split_whitespace().collect();
        if head.len() != 4 {
            return Err(Error::InvalidParameter(format!("{context}: expected cell, user, bs, trace")));
        }
        let link = LinkId {
            cell: parse_usize(head[0], &context)?,
            user: parse_usize(head[1], &context)?,
            bs: parse_usize(head[2], &context)?,
        };
        let trace = parse_f64(head[3], &context)?;
        let beams = if parts[1] == "-" {
            Vec::new()
        } else {
            parts[1]
                .split(',')
                .map(|f| parse_usize(f.trim(), &context))
                .collect::<Result<Vec<_>>>()?
        };
        let beam_power = if parts[2] == "-" {
            Vec::new()
        } else {
            parts[2]
                .split(',')
                .map(|f| parse_f64(f.trim(), &context))
                .collect::<Result<Vec<_>>>()?
        };
        if beams.len() != beam_power.len() {
            return Err(Error::InvalidParameter(format!("{context}: beam and power lists differ in length")));
        }
        out.push(SpatialSignature { link, beams, beam_power, trace });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_network, GeometryParams};
    use crate::rng::stream;

    fn profile(zeta: Vec<f64>) -> BeamPowerProfile {
        let mean_energy = zeta.iter().sum();
        BeamPowerProfile { zeta, mean_energy }
    }

    fn link() -> LinkId {
        LinkId { cell: 0, user: 0, bs: 0 }
    }

    #[test]
    fn threshold_is_inclusive() {
        // Beam 1 sits exactly at the threshold: 0.05 of the trace.
        let p = profile(vec![9.5, 0.5, 0.0, 0.0]);
        let sig = extract_signature(link(), &p, 0.05).unwrap();
        assert_eq!(sig.beams, vec![0, 1]);
        assert_eq!(sig.beam_power, vec![9.5, 0.5]);
        assert!((sig.trace - 10.0).abs() < 1e-12);
        assert!((sig.captured_power() - 10.0).abs() < 1e-12);
        assert_eq!(sig.power_of(1), Some(0.5));
        assert_eq!(sig.power_of(2), None);
    }

    #[test]
    fn high_threshold_yields_the_empty_marker() {
        let p = profile(vec![0.3, 0.3, 0.4]);
        let sig = extract_signature(link(), &p, 0.5).unwrap();
        assert!(sig.is_empty());
        assert_eq!(sig.captured_power(), 0.0);
    }

    #[test]
    fn zero_trace_is_a_degenerate_link() {
        let p = profile(vec![0.0; 8]);
        match extract_signature(link(), &p, 0.05) {
            Err(Error::DegenerateLink(_)) => {}
            other => panic!("expected degenerate-link error, got {other:?}"),
        }
    }

    #[test]
    fn alpha_outside_unit_interval_is_rejected() {
        let p = profile(vec![1.0, 2.0]);
        assert!(extract_signature(link(), &p, 0.0).is_err());
        assert!(extract_signature(link(), &p, 1.0).is_err());
        assert!(extract_signature(link(), &p, -0.3).is_err());
    }

    #[test]
    fn all_links_are_extracted_and_reproducible() {
        let geometry = generate_network(&GeometryParams::new(2, 3, 0.5, 3.5), &mut stream(4, &[0])).unwrap();
        let basis = DftBasis::new(16).unwrap();
        let ray = RayParams::new(20, 4f64.to_radians());
        let a = extract_all_signatures(&geometry, &basis, 0.05, &ray, 100, &mut stream(4, &[1])).unwrap();
        let b = extract_all_signatures(&geometry, &basis, 0.05, &ray, 100, &mut stream(4, &[1])).unwrap();
        assert_eq!(a.len(), 2 * 3 * 2);
        for sig in a.iter_sorted() {
            let other = b.get(sig.link.cell, sig.link.user, sig.link.bs).unwrap();
            assert_eq!(sig, other);
            assert!(!sig.is_empty(), "serving and cross links at α=0.05 should retain beams");
        }
    }

    #[test]
    fn text_round_trip_preserves_signatures_exactly() {
        let sigs = vec![
            SpatialSignature {
                link: LinkId { cell: 0, user: 3, bs: 1 },
                beams: vec![2, 5, 9],
                beam_power: vec![1.25, 0.31, 1.0 / 3.0],
                trace: 3.1,
            },
            SpatialSignature {
                link: LinkId { cell: 1, user: 0, bs: 0 },
                beams: vec![],
                beam_power: vec![],
                trace: 0.7,
            },
        ];
        let text = signatures_to_text(&sigs);
        let back = signatures_from_text(&text).unwrap();
        assert_eq!(back, sigs);
    }

    #[test]
    fn malformed_signature_text_is_rejected() {
        assert!(signatures_from_text("0 0 0 1.0 | 1,2\n").is_err());
        assert!(signatures_from_text("0 0 1.0 | 1 | 2.0\n").is_err());
        assert!(signatures_from_text("0 0 0 1.0 | 1,2 | 3.0\n").is_err());
        assert!(signatures_from_text("0 0 0 x | - | -\n").is_err());
    }
}
