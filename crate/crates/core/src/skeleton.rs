//! Skeleton topology, pose frames and joint-angle extraction.
//!
//! Coordinates are meters with `+y` up. In the canonical body frame the pelvis
//! sits at the origin, the left-hip to right-hip line points along `+x`, and
//! the body faces `-z`.
//!
//! A joint's angle is the shortest-arc rotation taking its rest bone direction
//! (parent to joint) onto the current bone direction of the yaw-normalized
//! pose. Only directions are used, so angles do not depend on body size.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quat::{Quat, Vec3};

/// Bones shorter than this have no usable direction.
pub const MIN_BONE_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkeletonError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("joint `{0}` missing from frame")]
    MissingJoint(String),
    #[error("frame has {found} joints, topology has {expected}")]
    JointCountMismatch { expected: usize, found: usize },
    #[error("frame contains non-finite coordinates")]
    NonFinite,
    #[error("hip line has no ground-plane extent")]
    DegeneratePose,
    #[error("bone ending at `{0}` is too short to define a direction")]
    DegenerateBone(String),
    #[error("height {0} m outside (0.5, 2.5)")]
    InvalidHeight(f64),
}

/// Serializable description of one joint, used to build a [`SkeletonTopology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDef {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// Parent-to-joint direction in the rest pose; ignored for the root.
    #[serde(default)]
    pub rest_direction: Option<Vec3>,
    /// Rest bone length in meters, used only to synthesize rest poses.
    #[serde(default = "default_bone_length")]
    pub rest_length: f64,
}

fn default_bone_length() -> f64 {
    0.2
}

/// Serializable topology description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDef {
    pub name: String,
    pub joints: Vec<JointDef>,
    pub end_joints: Vec<String>,
    pub left_hip: String,
    pub right_hip: String,
}

/// A validated joint tree.
///
/// Joints are stored parents-first, so a forward pass over indices visits every
/// parent before its children.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    name: String,
    joints: Vec<String>,
    parents: Vec<Option<usize>>,
    rest_directions: Vec<Vec3>,
    rest_lengths: Vec<f64>,
    fallback_axes: Vec<Vec3>,
    end_joints: Vec<usize>,
    comparison: Vec<usize>,
    root: usize,
    left_hip: usize,
    right_hip: usize,
    def: TopologyDef,
}

/// First of {up, right} not collinear with `rest`, made perpendicular to it.
fn fallback_axis(rest: Vec3) -> Vec3 {
    for cand in [Vec3::Y, Vec3::X] {
        let perp = cand - rest.scale(cand.dot(rest));
        if let Some(axis) = perp.normalized(1e-6) {
            return axis;
        }
    }
    Vec3::Z
}

impl SkeletonTopology {
    pub fn from_def(def: TopologyDef) -> Result<Self, SkeletonError> {
        let bad = |m: String| Err(SkeletonError::InvalidTopology(m));
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, j) in def.joints.iter().enumerate() {
            if index.insert(j.name.as_str(), i).is_some() {
                return bad(format!("duplicate joint `{}`", j.name));
            }
        }
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| SkeletonError::InvalidTopology(format!("unknown joint `{n}`")))
        };

        let mut parents = Vec::with_capacity(def.joints.len());
        let mut rest_directions = Vec::with_capacity(def.joints.len());
        let mut rest_lengths = Vec::with_capacity(def.joints.len());
        let mut root = None;
        for (i, j) in def.joints.iter().enumerate() {
            match &j.parent {
                None => {
                    if root.replace(i).is_some() {
                        return bad("more than one root".to_string());
                    }
                    parents.push(None);
                    rest_directions.push(Vec3::ZERO);
                }
                Some(p) => {
                    let pi = lookup(p)?;
                    // parents-first ordering rules out cycles
                    if pi >= i {
                        return bad(format!("parent of `{}` must be listed before it", j.name));
                    }
                    parents.push(Some(pi));
                    let dir = j.rest_direction.ok_or_else(|| {
                        SkeletonError::InvalidTopology(format!("`{}` has no rest direction", j.name))
                    })?;
                    if !dir.is_finite() || libm::fabs(dir.norm() - 1.0) > 1e-6 {
                        return bad(format!("rest direction of `{}` is not unit length", j.name));
                    }
                    rest_directions.push(dir);
                }
            }
            if !(j.rest_length > 0.0 && j.rest_length.is_finite()) {
                return bad(format!("rest length of `{}` must be positive", j.name));
            }
            rest_lengths.push(j.rest_length);
        }
        let root = match root {
            Some(r) => r,
            None => return bad("no root joint".to_string()),
        };

        let mut end_joints = def
            .end_joints
            .iter()
            .map(|n| lookup(n))
            .collect::<Result<Vec<_>, _>>()?;
        end_joints.sort_unstable();
        end_joints.dedup();
        if end_joints.contains(&root) {
            return bad("root cannot be an end joint".to_string());
        }
        let left_hip = lookup(&def.left_hip)?;
        let right_hip = lookup(&def.right_hip)?;
        if left_hip == right_hip {
            return bad("left and right hip must differ".to_string());
        }

        let comparison = (0..def.joints.len())
            .filter(|i| *i != root && end_joints.binary_search(i).is_err())
            .collect();
        let fallback_axes = rest_directions.iter().map(|d| fallback_axis(*d)).collect();

        Ok(Self {
            name: def.name.clone(),
            joints: def.joints.iter().map(|j| j.name.clone()).collect(),
            parents,
            rest_directions,
            rest_lengths,
            fallback_axes,
            end_joints,
            comparison,
            root,
            left_hip,
            right_hip,
            def,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn def(&self) -> &TopologyDef {
        &self.def
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joints
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn end_joints(&self) -> &[usize] {
        &self.end_joints
    }

    pub fn rest_direction(&self, joint: usize) -> Vec3 {
        self.rest_directions[joint]
    }

    /// Joint indices compared by the aligner: everything except the root and
    /// the end joints, in topology order.
    pub fn comparison_joints(&self) -> &[usize] {
        &self.comparison
    }

    pub fn comparison_names(&self) -> impl Iterator<Item = &str> {
        self.comparison.iter().map(|&i| self.joints[i].as_str())
    }

    /// Position of `joint` within [`comparison_joints`](Self::comparison_joints).
    pub fn comparison_slot(&self, joint: usize) -> Option<usize> {
        self.comparison.iter().position(|&j| j == joint)
    }

    /// Places joints by walking the tree, rotating each rest direction by the
    /// joint's entry in `rotations` (indexed by joint) and scaling by the rest
    /// length times `scale`.
    pub fn forward_kinematics(
        &self,
        timestamp: f64,
        root_position: Vec3,
        rotations: &[Quat],
        scale: f64,
    ) -> PoseFrame {
        let mut positions = alloc::vec![Vec3::ZERO; self.joints.len()];
        for j in 0..self.joints.len() {
            positions[j] = match self.parents[j] {
                None => root_position,
                Some(p) => {
                    let dir = rotations
                        .get(j)
                        .copied()
                        .unwrap_or(Quat::IDENTITY)
                        .rotate(self.rest_directions[j]);
                    positions[p] + dir.scale(self.rest_lengths[j] * scale)
                }
            };
        }
        PoseFrame {
            timestamp,
            positions,
        }
    }

    /// The canonical rest pose with the pelvis at the origin.
    pub fn rest_pose(&self, timestamp: f64) -> PoseFrame {
        self.forward_kinematics(timestamp, Vec3::ZERO, &[], 1.0)
    }

    /// Builds a frame from named joint positions. `aliases` maps input names
    /// to topology names; unknown input joints are ignored.
    pub fn pose_from_named<'a, I>(
        &self,
        timestamp: f64,
        joints: I,
        aliases: &BTreeMap<String, String>,
    ) -> Result<PoseFrame, SkeletonError>
    where
        I: IntoIterator<Item = (&'a str, Vec3)>,
    {
        let mut slots: Vec<Option<Vec3>> = alloc::vec![None; self.joints.len()];
        for (name, pos) in joints {
            let name = aliases.get(name).map(String::as_str).unwrap_or(name);
            if let Some(i) = self.joint_index(name) {
                slots[i] = Some(pos);
            }
        }
        let positions = slots
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| SkeletonError::MissingJoint(self.joints[i].clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let frame = PoseFrame {
            timestamp,
            positions,
        };
        frame.validate(self)?;
        Ok(frame)
    }
}

/// The 17-joint body used when no other topology is configured.
///
/// `pelvis`, `chest`, `head` and seven joints per side (shoulder, elbow,
/// wrist, hip, knee, ankle, toe). End joints are the head, toes and wrists,
/// leaving 11 comparison joints.
pub fn default_topology() -> SkeletonTopology {
    let up = Vec3::Y;
    let down = -Vec3::Y;
    let right = Vec3::X;
    let left = -Vec3::X;
    let forward = -Vec3::Z;
    let j = |name: &str, parent: Option<&str>, dir: Vec3, len: f64| JointDef {
        name: name.to_string(),
        parent: parent.map(str::to_string),
        rest_direction: parent.map(|_| dir),
        rest_length: len,
    };
    let joints = alloc::vec![
        j("pelvis", None, Vec3::ZERO, 1.0),
        j("chest", Some("pelvis"), up, 0.45),
        j("head", Some("chest"), up, 0.25),
        j("L_shoulder", Some("chest"), left, 0.18),
        j("L_elbow", Some("L_shoulder"), down, 0.28),
        j("L_wrist", Some("L_elbow"), down, 0.25),
        j("R_shoulder", Some("chest"), right, 0.18),
        j("R_elbow", Some("R_shoulder"), down, 0.28),
        j("R_wrist", Some("R_elbow"), down, 0.25),
        j("L_hip", Some("pelvis"), left, 0.10),
        j("L_knee", Some("L_hip"), down, 0.42),
        j("L_ankle", Some("L_knee"), down, 0.40),
        j("L_toe", Some("L_ankle"), forward, 0.12),
        j("R_hip", Some("pelvis"), right, 0.10),
        j("R_knee", Some("R_hip"), down, 0.42),
        j("R_ankle", Some("R_knee"), down, 0.40),
        j("R_toe", Some("R_ankle"), forward, 0.12),
    ];
    let def = TopologyDef {
        name: "default".to_string(),
        joints,
        end_joints: ["head", "L_toe", "R_toe", "L_wrist", "R_wrist"]
            .map(str::to_string)
            .to_vec(),
        left_hip: "L_hip".to_string(),
        right_hip: "R_hip".to_string(),
    };
    SkeletonTopology::from_def(def).expect("default topology is valid")
}

/// Joint positions at one instant, indexed by topology joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    /// Milliseconds.
    pub timestamp: f64,
    pub positions: Vec<Vec3>,
}

impl PoseFrame {
    pub fn validate(&self, topo: &SkeletonTopology) -> Result<(), SkeletonError> {
        if self.positions.len() != topo.joint_count() {
            return Err(SkeletonError::JointCountMismatch {
                expected: topo.joint_count(),
                found: self.positions.len(),
            });
        }
        if !self.timestamp.is_finite() || !self.positions.iter().all(|p| p.is_finite()) {
            return Err(SkeletonError::NonFinite);
        }
        Ok(())
    }

    pub fn position(&self, joint: usize) -> Vec3 {
        self.positions[joint]
    }
}

/// Per comparison-joint rotations at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAngleFrame {
    /// Milliseconds.
    pub timestamp: f64,
    /// Indexed like [`SkeletonTopology::comparison_joints`].
    pub angles: Vec<Quat>,
}

/// Paddle orientation at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaddleFrame {
    /// Milliseconds.
    pub timestamp: f64,
    pub orientation: Quat,
}

/// Moves the pelvis to the origin and turns the body about the vertical so
/// the ground projection of the left-to-right hip line points along `+x`.
pub fn normalize_pose(
    frame: &PoseFrame,
    topo: &SkeletonTopology,
) -> Result<PoseFrame, SkeletonError> {
    frame.validate(topo)?;
    let origin = frame.positions[topo.root];
    let hips = frame.positions[topo.right_hip] - frame.positions[topo.left_hip];
    let ground = libm::sqrt(hips.x * hips.x + hips.z * hips.z);
    if ground < 1e-6 {
        return Err(SkeletonError::DegeneratePose);
    }
    let yaw = Quat::from_axis_angle(Vec3::Y, libm::atan2(hips.z, hips.x));
    Ok(PoseFrame {
        timestamp: frame.timestamp,
        positions: frame
            .positions
            .iter()
            .map(|p| yaw.rotate(*p - origin))
            .collect(),
    })
}

/// Joint rotations of a frame relative to the topology's rest pose.
pub fn joint_angles(
    frame: &PoseFrame,
    topo: &SkeletonTopology,
) -> Result<JointAngleFrame, SkeletonError> {
    let pose = normalize_pose(frame, topo)?;
    let angles = topo
        .comparison
        .iter()
        .map(|&j| {
            let parent = topo.parents[j].expect("comparison joints have parents");
            let dir = (pose.positions[j] - pose.positions[parent])
                .normalized(MIN_BONE_LENGTH)
                .ok_or_else(|| SkeletonError::DegenerateBone(topo.joints[j].clone()))?;
            Ok(Quat::from_to(topo.rest_directions[j], dir, topo.fallback_axes[j]).canonical())
        })
        .collect::<Result<Vec<_>, SkeletonError>>()?;
    Ok(JointAngleFrame {
        timestamp: frame.timestamp,
        angles,
    })
}

/// Ratio of user to expert height; both must lie in `(0.5, 2.5)` meters.
pub fn height_scale(user_height: f64, expert_height: f64) -> Result<f64, SkeletonError> {
    for h in [user_height, expert_height] {
        if !(h > 0.5 && h < 2.5) {
            return Err(SkeletonError::InvalidHeight(h));
        }
    }
    Ok(user_height / expert_height)
}
