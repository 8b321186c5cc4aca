//! Body graphs at three scales.
//!
//! Scale `s1` is the joint graph. Scale `s2` groups joints into components
//! and scale `s3` groups components into limbs. Each grouping is a
//! partition: every source node belongs to exactly one target node.
//!
//! Skeletons are stored as TOML:
//!
//! ```toml
//! schema_version = 1
//! name = "stick6"
//! dims_per_joint = 3
//! joint_names = ["hip", "knee", "shoulder", "elbow", "neck", "head"]
//!
//! [[scale2]]
//! name = "leg"
//! members = ["hip", "knee"]        # joint names
//!
//! [[scale3]]
//! name = "lower"
//! members = ["leg"]                # scale2 names
//! ```

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SKELETON_SCHEMA_VERSION: u32 = 1;

const BUILTIN_H36M20: &str = include_str!("../skeletons/h36m20.toml");
const BUILTIN_STICK6: &str = include_str!("../skeletons/stick6.toml");

pub const BUILTIN_NAMES: &[&str] = &["h36m20", "stick6"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleId {
    S1,
    S2,
    S3,
}

impl fmt::Display for ScaleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleId::S1 => "s1",
            ScaleId::S2 => "s2",
            ScaleId::S3 => "s3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct GroupFile {
    name: String,
    members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SkeletonFile {
    schema_version: u32,
    name: String,
    dims_per_joint: usize,
    joint_names: Vec<String>,
    scale2: Vec<GroupFile>,
    scale3: Vec<GroupFile>,
}

/// A named node at a coarser scale and the indices of its source nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub members: Vec<usize>,
}

/// Validated three-scale skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonConfig {
    pub name: String,
    pub dims_per_joint: usize,
    pub joint_names: Vec<String>,
    /// Joint indices per scale-2 component.
    pub s1_to_s2: Vec<Group>,
    /// Component indices per scale-3 limb.
    pub s2_to_s3: Vec<Group>,
}

/// Source nodes of one target node, and the pose-dimension columns they span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSlice {
    pub target: usize,
    pub members: Vec<usize>,
    pub columns: Vec<Range<usize>>,
}

impl GroupSlice {
    pub fn n_columns(&self) -> usize {
        self.columns.iter().map(|r| r.len()).sum()
    }
}

impl SkeletonConfig {
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "h36m20" => BUILTIN_H36M20,
            "stick6" => BUILTIN_STICK6,
            _ => return None,
        };
        Some(Self::from_toml(text).expect("built-in skeleton is valid"))
    }

    pub fn h36m20() -> Self {
        Self::builtin("h36m20").unwrap()
    }

    pub fn stick6() -> Self {
        Self::builtin("stick6").unwrap()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SkeletonFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("skeleton: {e}")))?;
        Self::from_file(file)
    }

    fn from_file(file: SkeletonFile) -> Result<Self> {
        if file.schema_version != SKELETON_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported skeleton schema_version {} (expected {SKELETON_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.dims_per_joint == 0 {
            return Err(Error::Validation("dims_per_joint must be positive".into()));
        }
        let joint_index = index_names(&file.joint_names, "joint")?;
        let s2_names: Vec<String> = file.scale2.iter().map(|g| g.name.clone()).collect();
        let s2_index = index_names(&s2_names, "scale2 component")?;
        let s3_names: Vec<String> = file.scale3.iter().map(|g| g.name.clone()).collect();
        index_names(&s3_names, "scale3 limb")?;

        let s1_to_s2 = resolve_groups(&file.scale2, &joint_index, "joint")?;
        let s2_to_s3 = resolve_groups(&file.scale3, &s2_index, "scale2 component")?;

        let cfg = SkeletonConfig {
            name: file.name,
            dims_per_joint: file.dims_per_joint,
            joint_names: file.joint_names,
            s1_to_s2,
            s2_to_s3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks both partitions and the strictly decreasing node counts.
    pub fn validate(&self) -> Result<()> {
        check_partition(&self.s1_to_s2, self.joint_names.len(), "s1->s2")?;
        check_partition(&self.s2_to_s3, self.s1_to_s2.len(), "s2->s3")?;
        let (a, b, c) = (
            self.n_nodes(ScaleId::S1),
            self.n_nodes(ScaleId::S2),
            self.n_nodes(ScaleId::S3),
        );
        if !(a > b && b > c && c > 0) {
            return Err(Error::Validation(format!(
                "node counts must strictly decrease across scales, got {a}/{b}/{c}"
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let file = SkeletonFile {
            schema_version: SKELETON_SCHEMA_VERSION,
            name: self.name.clone(),
            dims_per_joint: self.dims_per_joint,
            joint_names: self.joint_names.clone(),
            scale2: self
                .s1_to_s2
                .iter()
                .map(|g| GroupFile {
                    name: g.name.clone(),
                    members: g
                        .members
                        .iter()
                        .map(|&j| self.joint_names[j].clone())
                        .collect(),
                })
                .collect(),
            scale3: self
                .s2_to_s3
                .iter()
                .map(|g| GroupFile {
                    name: g.name.clone(),
                    members: g
                        .members
                        .iter()
                        .map(|&c| self.s1_to_s2[c].name.clone())
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("skeleton serializes")
    }

    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn n_nodes(&self, scale: ScaleId) -> usize {
        match scale {
            ScaleId::S1 => self.joint_names.len(),
            ScaleId::S2 => self.s1_to_s2.len(),
            ScaleId::S3 => self.s2_to_s3.len(),
        }
    }

    /// Total pose dimensionality `K`.
    pub fn pose_dims(&self) -> usize {
        self.joint_names.len() * self.dims_per_joint
    }

    /// Groups mapping `from` onto the next coarser scale.
    pub fn groups(&self, from: ScaleId) -> &[Group] {
        match from {
            ScaleId::S1 => &self.s1_to_s2,
            ScaleId::S2 => &self.s2_to_s3,
            ScaleId::S3 => &[],
        }
    }

    /// Joints covered by each scale-3 limb, through its scale-2 components.
    pub fn s3_joint_groups(&self) -> Vec<Vec<usize>> {
        self.s2_to_s3
            .iter()
            .map(|limb| {
                limb.members
                    .iter()
                    .flat_map(|&c| self.s1_to_s2[c].members.iter().copied())
                    .collect()
            })
            .collect()
    }

    /// Joint membership of every node at `scale`.
    pub fn joint_groups(&self, scale: ScaleId) -> Vec<Vec<usize>> {
        match scale {
            ScaleId::S1 => (0..self.n_joints()).map(|j| vec![j]).collect(),
            ScaleId::S2 => self.s1_to_s2.iter().map(|g| g.members.clone()).collect(),
            ScaleId::S3 => self.s3_joint_groups(),
        }
    }

    /// For each node one scale above `from`, the source node indices and the
    /// pose-dimension columns they cover, in member order.
    pub fn group_slices(&self, from: ScaleId) -> Result<Vec<GroupSlice>> {
        let source_joints = match from {
            ScaleId::S1 | ScaleId::S2 => self.joint_groups(from),
            ScaleId::S3 => {
                return Err(Error::Input("s3 is the coarsest scale".into()));
            }
        };
        let d = self.dims_per_joint;
        Ok(self
            .groups(from)
            .iter()
            .enumerate()
            .map(|(target, g)| {
                let mut columns: Vec<Range<usize>> = Vec::new();
                for &m in &g.members {
                    for &j in &source_joints[m] {
                        let r = j * d..(j + 1) * d;
                        match columns.last_mut() {
                            Some(last) if last.end == r.start => last.end = r.end,
                            _ => columns.push(r),
                        }
                    }
                }
                GroupSlice {
                    target,
                    members: g.members.clone(),
                    columns,
                }
            })
            .collect())
    }
}

pub fn load_skeleton(path: &Path) -> Result<SkeletonConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SkeletonConfig::from_toml(&text)
}

/// A built-in name, or else a path to a skeleton file.
pub fn resolve_skeleton(spec: &str) -> Result<SkeletonConfig> {
    if let Some(s) = SkeletonConfig::builtin(spec) {
        return Ok(s);
    }
    load_skeleton(Path::new(spec))
}

fn index_names(names: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if let Some(prev) = map.insert(n.clone(), i) {
            return Err(Error::Validation(format!(
                "duplicate {what} name `{n}` at indices {prev} and {i}"
            )));
        }
    }
    Ok(map)
}

fn resolve_groups(
    groups: &[GroupFile],
    index: &HashMap<String, usize>,
    what: &str,
) -> Result<Vec<Group>> {
    groups
        .iter()
        .map(|g| {
            let members = g
                .members
                .iter()
                .map(|m| {
                    index.get(m).copied().ok_or_else(|| {
                        Error::Reference(format!("group `{}` names unknown {what} `{m}`", g.name))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Group {
                name: g.name.clone(),
                members,
            })
        })
        .collect()
}

fn check_partition(groups: &[Group], n_source: usize, label: &str) -> Result<()> {
    let mut owner: Vec<Option<usize>> = vec![None; n_source];
    for (gi, g) in groups.iter().enumerate() {
        if g.members.is_empty() {
            return Err(Error::Validation(format!(
                "{label}: group `{}` is empty",
                g.name
            )));
        }
        for &m in &g.members {
            if m >= n_source {
                return Err(Error::Validation(format!(
                    "{label}: group `{}` member {m} out of range (source has {n_source} nodes)",
                    g.name
                )));
            }
            if let Some(prev) = owner[m] {
                return Err(Error::Validation(format!(
                    "{label}: source node {m} appears in groups {prev} and {gi}"
                )));
            }
            owner[m] = Some(gi);
        }
    }
    let missing: Vec<usize> = (0..n_source).filter(|&i| owner[i].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "{label}: source nodes {missing:?} are not covered by any group"
        )));
    }
    Ok(())
}
