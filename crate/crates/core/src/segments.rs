//! Body segment parameters: mass, centre of mass and principal inertia of
//! each of the 24 SMPL segments.
//!
//! Values come from the adjusted Zatsiorsky-Seluyanov tables of de Leva
//! (1996), male column. The tables describe 16 classic segments; the
//! mapping onto SMPL joints is:
//!
//! * pelvis carries the lower trunk, plus any residual left after mapping;
//! * spine1/2/3 share the middle trunk and what remains of the upper trunk
//!   in proportion to their bone lengths;
//! * each collar takes `COLLAR_SHARE` of the upper trunk (shoulder girdle);
//! * hips, knees, shoulders and elbows carry thigh, shank, upper arm and
//!   forearm; the leaf joints (head, hands, feet) carry head, hand and foot;
//! * neck, wrists and ankles carry no mass.
//!
//! A segment hangs off its joint and points at its principal child (leaves
//! point along their incoming bone for `LEAF_LENGTHS` metres). Inertia is
//! diagonal in the joint frame, built from radii of gyration expressed as
//! fractions of segment length.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotations::{Mat3, Vec3};
use crate::skeleton::{Skeleton, NUM_JOINTS, TEMPLATE_HEIGHT};

/// Fraction of the upper-trunk mass assigned to each collar joint.
pub const COLLAR_SHARE: f64 = 0.0627;

/// Template lengths (m, for a 1.75 m body) of the segments hanging off leaf
/// joints: head, hand, foot.
pub const LEAF_LENGTHS: [(&str, f64); 5] = [
    ("head", 0.20),
    ("left_hand", 0.10),
    ("right_hand", 0.10),
    ("left_foot", 0.10),
    ("right_foot", 0.10),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BspRow {
    pub mass_fraction: f64,
    /// CoM distance from the proximal end, as a fraction of segment length.
    pub com_fraction: f64,
    pub r_gyr_sagittal: f64,
    pub r_gyr_transverse: f64,
    pub r_gyr_longitudinal: f64,
}

/// Anthropometric table keyed by segment name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BspTable {
    pub segments: BTreeMap<String, BspRow>,
}

const BILATERAL: [&str; 6] = ["upper_arm", "forearm", "hand", "thigh", "shank", "foot"];
const AXIAL: [&str; 4] = ["head", "upper_trunk", "middle_trunk", "lower_trunk"];

fn row(m: f64, c: f64, s: f64, t: f64, l: f64) -> BspRow {
    BspRow {
        mass_fraction: m,
        com_fraction: c,
        r_gyr_sagittal: s,
        r_gyr_transverse: t,
        r_gyr_longitudinal: l,
    }
}

impl Default for BspTable {
    /// de Leva (1996), male. Head CoM is measured from the neck end, as
    /// our head segment points upward from the head joint.
    fn default() -> Self {
        let rows = [
            ("head", row(0.0694, 1.0 - 0.5976, 0.362, 0.376, 0.312)),
            ("upper_trunk", row(0.1596, 0.2999, 0.716, 0.454, 0.659)),
            ("middle_trunk", row(0.1633, 0.4502, 0.482, 0.383, 0.468)),
            ("lower_trunk", row(0.1117, 0.6115, 0.615, 0.551, 0.587)),
            ("upper_arm", row(0.0271, 0.5772, 0.285, 0.269, 0.158)),
            ("forearm", row(0.0162, 0.4574, 0.276, 0.265, 0.121)),
            ("hand", row(0.0061, 0.7900, 0.628, 0.513, 0.401)),
            ("thigh", row(0.1416, 0.4095, 0.329, 0.329, 0.149)),
            ("shank", row(0.0433, 0.4459, 0.255, 0.249, 0.103)),
            ("foot", row(0.0137, 0.4415, 0.257, 0.245, 0.124)),
        ];
        BspTable {
            segments: rows.iter().map(|(k, r)| (k.to_string(), *r)).collect(),
        }
    }
}

impl BspTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("segment table: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    fn get(&self, name: &str) -> Result<BspRow> {
        self.segments
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("segment table is missing '{name}'")))
    }

    /// Whole-body mass fraction described by the table (bilateral
    /// segments counted twice).
    pub fn total_fraction(&self) -> Result<f64> {
        let mut total = 0.0;
        for s in AXIAL {
            total += self.get(s)?.mass_fraction;
        }
        for s in BILATERAL {
            total += 2.0 * self.get(s)?.mass_fraction;
        }
        Ok(total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentParams {
    pub mass: f64,
    /// CoM in the joint's local frame (m).
    pub com_offset: Vec3,
    /// Principal moments about the CoM in the joint's local frame (kg·m²).
    pub inertia_diag: Vec3,
}

impl SegmentParams {
    pub const ZERO: SegmentParams = SegmentParams {
        mass: 0.0,
        com_offset: Vec3 { x: 0.0, y: 0.0, z: 0.0 },
        inertia_diag: Vec3 { x: 0.0, y: 0.0, z: 0.0 },
    };

    pub fn inertia_local(&self) -> Mat3 {
        Mat3::diag(self.inertia_diag)
    }
}

/// Per-joint segment parameters plus the mass moved to the pelvis to close
/// the table to exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentModel {
    pub params: Vec<SegmentParams>,
    pub residual_fraction: f64,
}

impl SegmentModel {
    pub fn total_mass(&self) -> f64 {
        self.params.iter().map(|p| p.mass).sum()
    }

    pub fn scaled_mass(&self, factor: f64) -> SegmentModel {
        SegmentModel {
            params: self
                .params
                .iter()
                .map(|p| SegmentParams {
                    mass: p.mass * factor,
                    com_offset: p.com_offset,
                    inertia_diag: p.inertia_diag.scale_f(factor),
                })
                .collect(),
            residual_fraction: self.residual_fraction,
        }
    }
}

/// World-frame inertia about the CoM, `R · I_local · Rᵀ`.
pub fn world_inertia(params: &SegmentParams, r: &Mat3) -> Mat3 {
    r.matmul(&params.inertia_local()).matmul(&r.transpose())
}

/// Which table segment (and what share of it) each SMPL joint carries.
enum Source {
    None,
    Segment(&'static str),
    Trunk,
    Collar,
}

fn joint_source(name: &str) -> Source {
    match name {
        "pelvis" => Source::Segment("lower_trunk"),
        "left_hip" | "right_hip" => Source::Segment("thigh"),
        "left_knee" | "right_knee" => Source::Segment("shank"),
        "left_foot" | "right_foot" => Source::Segment("foot"),
        "spine1" | "spine2" | "spine3" => Source::Trunk,
        "head" => Source::Segment("head"),
        "left_collar" | "right_collar" => Source::Collar,
        "left_shoulder" | "right_shoulder" => Source::Segment("upper_arm"),
        "left_elbow" | "right_elbow" => Source::Segment("forearm"),
        "left_hand" | "right_hand" => Source::Segment("hand"),
        _ => Source::None,
    }
}

/// Segment axis of each joint in its local frame.
pub fn segment_vectors(skel: &Skeleton) -> Vec<Vec3> {
    let scale = skel.total_height / TEMPLATE_HEIGHT;
    (0..skel.len())
        .map(|i| {
            let name = skel.joint_names[i].as_str();
            let principal = match name {
                "pelvis" => Some("spine1"),
                "spine3" => Some("neck"),
                _ => None,
            };
            let child = match principal {
                Some(c) => skel.children(i).find(|&j| skel.joint_names[j] == c),
                None => skel.children(i).next(),
            };
            match child {
                Some(c) => skel.offset[c],
                None => {
                    let len = LEAF_LENGTHS
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map_or(0.0, |(_, l)| l * scale);
                    let o = skel.offset[i];
                    let n = o.norm();
                    if n > 0.0 {
                        o.scale_f(len / n)
                    } else {
                        Vec3::zero()
                    }
                }
            }
        })
        .collect()
}

fn principal_inertia(mass: f64, seg: Vec3, r: &BspRow) -> Vec3 {
    let len = seg.norm();
    let i = |rg: f64| mass * (rg * len) * (rg * len);
    let (long, sag, trans) = (i(r.r_gyr_longitudinal), i(r.r_gyr_sagittal), i(r.r_gyr_transverse));
    let a = [seg.x.abs(), seg.y.abs(), seg.z.abs()];
    if a[1] >= a[0] && a[1] >= a[2] {
        Vec3::new(sag, long, trans)
    } else if a[0] >= a[2] {
        Vec3::new(long, sag, trans)
    } else {
        Vec3::new(sag, trans, long)
    }
}

/// Assigns mass, CoM and inertia to every joint of an SMPL-topology skeleton.
pub fn build_segment_params(skel: &Skeleton, table: &BspTable) -> Result<SegmentModel> {
    skel.validate()?;
    if skel.len() != NUM_JOINTS {
        return Err(Error::Config(format!(
            "segment mapping needs the {NUM_JOINTS}-joint SMPL tree, got {} joints",
            skel.len()
        )));
    }
    let total = table.total_fraction()?;
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::Config(format!(
            "segment mass fractions sum to {total:.6}, expected 1 within 1e-3"
        )));
    }
    for (name, r) in &table.segments {
        let vals = [r.mass_fraction, r.com_fraction, r.r_gyr_sagittal, r.r_gyr_transverse, r.r_gyr_longitudinal];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("segment '{name}' has negative or non-finite entries")));
        }
    }

    let segs = segment_vectors(skel);
    let upper = table.get("upper_trunk")?;
    let middle = table.get("middle_trunk")?;
    let spine_idx: Vec<usize> = ["spine1", "spine2", "spine3"]
        .iter()
        .filter_map(|n| skel.joint_names.iter().position(|j| j == n))
        .collect();
    if spine_idx.len() != 3 {
        return Err(Error::Config("skeleton lacks spine1/spine2/spine3".into()));
    }
    let spine_len: f64 = spine_idx.iter().map(|&i| segs[i].norm()).sum();
    let trunk_fraction = middle.mass_fraction + upper.mass_fraction * (1.0 - 2.0 * COLLAR_SHARE);

    let mut fractions = vec![0.0; skel.len()];
    let mut rows = vec![None; skel.len()];
    for i in 0..skel.len() {
        let name = skel.joint_names[i].as_str();
        let (frac, r) = match joint_source(name) {
            Source::None => (0.0, None),
            Source::Segment(s) => {
                let r = table.get(s)?;
                (r.mass_fraction, Some(r))
            }
            Source::Trunk => {
                let r = if name == "spine3" { upper } else { middle };
                (trunk_fraction * segs[i].norm() / spine_len, Some(r))
            }
            Source::Collar => (upper.mass_fraction * COLLAR_SHARE, Some(upper)),
        };
        fractions[i] = frac;
        rows[i] = r;
    }
    let residual = 1.0 - fractions.iter().sum::<f64>();
    fractions[0] += residual;

    let params = (0..skel.len())
        .map(|i| match rows[i] {
            None => SegmentParams::ZERO,
            Some(r) => {
                let mass = fractions[i] * skel.total_mass;
                SegmentParams {
                    mass,
                    com_offset: segs[i].scale_f(r.com_fraction),
                    inertia_diag: principal_inertia(mass, segs[i], &r),
                }
            }
        })
        .collect();
    Ok(SegmentModel {
        params,
        residual_fraction: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::axis_rotation;
    use crate::skeleton::{default_skeleton, joint_index};

    fn model() -> SegmentModel {
        build_segment_params(&Skeleton::default(), &BspTable::default()).unwrap()
    }

    #[test]
    fn masses_sum_to_body_mass() {
        let m = model();
        assert!((m.total_mass() - 75.0).abs() < 1e-9);
        assert!(m.residual_fraction.abs() < 1e-3);
    }

    #[test]
    fn thigh_matches_table_row() {
        // de Leva (1996) male thigh: 14.16 % of body mass
        let m = model();
        let hip = joint_index("left_hip").unwrap();
        assert!((m.params[hip].mass - 10.62).abs() < 1e-9);
    }

    #[test]
    fn leg_mass_fraction() {
        let m = model();
        let leg: f64 = ["left_hip", "left_knee", "left_ankle", "left_foot"]
            .iter()
            .map(|n| m.params[joint_index(n).unwrap()].mass)
            .sum::<f64>()
            / 75.0;
        // thigh + shank + foot of the table
        assert!((leg - 0.1986).abs() < 1e-9);
    }

    #[test]
    fn bad_table_is_a_config_error() {
        let mut t = BspTable::default();
        t.segments.get_mut("thigh").unwrap().mass_fraction = 0.15;
        assert!(matches!(
            build_segment_params(&Skeleton::default(), &t),
            Err(Error::Config(_))
        ));
        let mut t = BspTable::default();
        t.segments.remove("hand");
        assert!(build_segment_params(&Skeleton::default(), &t).is_err());
    }

    #[test]
    fn small_table_drift_goes_to_pelvis() {
        let mut t = BspTable::default();
        t.segments.get_mut("head").unwrap().mass_fraction += 0.0005;
        let m = build_segment_params(&Skeleton::default(), &t).unwrap();
        assert!((m.total_mass() - 75.0).abs() < 1e-9);
        assert!((m.residual_fraction + 0.0005).abs() < 1e-12);
    }

    #[test]
    fn doubling_mass_doubles_everything() {
        let a = model();
        let b = build_segment_params(&default_skeleton(150.0, 1.75).unwrap(), &BspTable::default()).unwrap();
        for (p, q) in a.params.iter().zip(&b.params) {
            assert!((q.mass - 2.0 * p.mass).abs() < 1e-12);
            assert!((q.inertia_diag - p.inertia_diag.scale_f(2.0)).norm() < 1e-12);
            assert_eq!(q.com_offset, p.com_offset);
        }
    }

    #[test]
    fn com_lies_on_segment() {
        let skel = Skeleton::default();
        let segs = segment_vectors(&skel);
        for (p, s) in model().params.iter().zip(segs) {
            if p.mass == 0.0 {
                continue;
            }
            let t = p.com_offset.dot(s) / s.norm_sq();
            assert!((0.0..=1.0).contains(&t));
            assert!((p.com_offset - s.scale_f(t)).norm() < 1e-12);
            assert!(p.inertia_diag.x >= 0.0 && p.inertia_diag.y >= 0.0 && p.inertia_diag.z >= 0.0);
        }
    }

    #[test]
    fn world_inertia_examples() {
        let p = SegmentParams {
            mass: 1.0,
            com_offset: Vec3::zero(),
            inertia_diag: Vec3::new(1.0, 2.0, 3.0),
        };
        assert_eq!(world_inertia(&p, &Mat3::identity()), p.inertia_local());
        let rz = axis_rotation(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let w = world_inertia(&p, &rz);
        assert!(w.max_abs_diff(&Mat3::diag(Vec3::new(2.0, 1.0, 3.0))) < 1e-12);

        let r = axis_rotation(Vec3::new(0.3, -0.5, 0.8), 1.1);
        let w = world_inertia(&p, &r);
        assert!(w.max_abs_diff(&w.transpose()) < 1e-14);
        // similarity transform keeps trace and determinant (eigenvalue invariants)
        assert!((w.trace() - 6.0).abs() < 1e-12);
        assert!((w.determinant() - 6.0).abs() < 1e-12);
        let sum_minors = |m: &Mat3| {
            let a = &m.m;
            a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] + a[1][1] * a[2][2]
                - a[1][2] * a[2][1]
        };
        assert!((sum_minors(&w) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn table_json_round_trip() {
        let t = BspTable::default();
        let back: BspTable = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }
}
