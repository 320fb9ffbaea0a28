//! Precomputed hierarchy of rank nets.
//!
//! The root net covers every item; every ball of nonzero radius owns a
//! child node holding the net of that ball. Searching then reduces to
//! walking down the tree.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{build_rank_net, BoundCheck, RankNet};
use crate::oracle::RankTable;
use crate::ItemId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeBall {
    pub center: ItemId,
    pub radius_class: u32,
    pub members: Vec<ItemId>,
    pub mass: f64,
    /// Node index of the net built over `members`.
    pub child: Option<usize>,
}

impl TreeBall {
    pub fn is_leaf(&self) -> bool {
        self.child.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub root: ItemId,
    /// 1 at the root, incremented per level.
    pub level: u32,
    pub domain: Vec<ItemId>,
    pub domain_mass: f64,
    pub rho: f64,
    pub members: Vec<ItemId>,
    pub balls: Vec<TreeBall>,
}

impl TreeNode {
    fn from_net(net: RankNet, level: u32) -> Self {
        TreeNode {
            root: net.root,
            level,
            domain: net.domain,
            domain_mass: net.domain_mass,
            rho: net.rho,
            members: net.members,
            balls: net
                .balls
                .into_iter()
                .map(|b| TreeBall {
                    center: b.center,
                    radius_class: b.radius_class,
                    members: b.members,
                    mass: b.mass,
                    child: None,
                })
                .collect(),
        }
    }

    pub fn max_ball_mass(&self) -> Option<f64> {
        self.balls
            .iter()
            .filter(|b| b.radius_class > 1)
            .map(|b| b.mass)
            .reduce(f64::max)
    }

    pub fn check_bounds(&self, c: f64) -> BoundCheck {
        BoundCheck::evaluate(
            self.members.len(),
            self.rho,
            self.domain_mass,
            self.max_ball_mass(),
            c,
        )
    }
}

/// Arena of nets; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RankNetTree {
    nodes: Vec<TreeNode>,
}

impl RankNetTree {
    /// Builds the hierarchy breadth-first over the prior's support,
    /// scanning each domain in ascending id order and rooting the top net
    /// at the first supported item. Balls of zero radius are leaves.
    pub fn build(table: &RankTable) -> Result<Self> {
        let support: Vec<ItemId> = (0..table.len()).filter(|&z| table.mass(z) > 0.0).collect();
        let root = build_rank_net(table, support[0], &support)?;
        let mut nodes = vec![TreeNode::from_net(root, 1)];
        let mut queue = VecDeque::from([0usize]);
        while let Some(ix) = queue.pop_front() {
            let level = nodes[ix].level + 1;
            for b in 0..nodes[ix].balls.len() {
                let ball = &nodes[ix].balls[b];
                if ball.radius_class == 1 {
                    continue;
                }
                let net = build_rank_net(table, ball.center, &ball.members)?;
                let child = nodes.len();
                nodes.push(TreeNode::from_net(net, level));
                nodes[ix].balls[b].child = Some(child);
                queue.push_back(child);
            }
        }
        Ok(RankNetTree { nodes })
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, ix: usize) -> &TreeNode {
        &self.nodes[ix]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Number of nets (internal nodes).
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| &n.balls)
            .filter(|b| b.is_leaf())
            .count()
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// Every ordered pair of distinct members of a common net, sorted.
    pub fn same_net_pairs(&self) -> Vec<(ItemId, ItemId)> {
        let mut set = BTreeSet::new();
        for n in &self.nodes {
            for &x in &n.members {
                for &y in &n.members {
                    if x != y {
                        set.insert((x, y));
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    /// Leaf balls, each with the node that holds it.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &TreeBall)> {
        self.nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| n.balls.iter().filter(|b| b.is_leaf()).map(move |b| (i, b)))
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            format: TREE_FORMAT.into(),
            version: TREE_VERSION,
            node: self.node_file(0),
        }
    }

    fn node_file(&self, ix: usize) -> NodeFile {
        let n = &self.nodes[ix];
        let full = n.domain.iter().copied().eq(0..n.domain.len());
        NodeFile {
            root: n.root,
            domain_size: n.domain.len(),
            domain_ids: (ix == 0 && !full).then(|| n.domain.clone()),
            domain_mass: n.domain_mass,
            rho: n.rho,
            members: n.members.clone(),
            balls: n
                .balls
                .iter()
                .map(|b| BallFile {
                    center: b.center,
                    radius_class: b.radius_class,
                    mass: b.mass,
                    member_ids: b.members.clone(),
                    child: b.child.map(|c| Box::new(self.node_file(c))),
                })
                .collect(),
        }
    }

    /// Rebuilds the arena from its nested file form. Node order is
    /// breadth-first, matching [`RankNetTree::build`].
    pub fn from_file(file: TreeFile) -> Result<Self> {
        if file.format != TREE_FORMAT || file.version != TREE_VERSION {
            return Err(Error::Mismatch(format!(
                "unsupported tree file {} v{}",
                file.format, file.version
            )));
        }
        let root_domain: Vec<ItemId> = match &file.node.domain_ids {
            Some(ids) => ids.clone(),
            None => (0..file.node.domain_size).collect(),
        };
        let mut nodes = Vec::new();
        type Pending = (NodeFile, Vec<ItemId>, u32, Option<(usize, usize)>);
        let mut queue: VecDeque<Pending> = VecDeque::from([(file.node, root_domain, 1, None)]);
        while let Some((nf, domain, level, parent)) = queue.pop_front() {
            if nf.domain_size != domain.len() || nf.members.len() != nf.balls.len() {
                return Err(Error::Mismatch("inconsistent tree node".into()));
            }
            let ix = nodes.len();
            if let Some((p, b)) = parent {
                let pn: &mut TreeNode = &mut nodes[p];
                pn.balls[b].child = Some(ix);
            }
            let mut balls = Vec::with_capacity(nf.balls.len());
            for (b, bf) in nf.balls.into_iter().enumerate() {
                if let Some(child) = bf.child {
                    queue.push_back((*child, bf.member_ids.clone(), level + 1, Some((ix, b))));
                }
                balls.push(TreeBall {
                    center: bf.center,
                    radius_class: bf.radius_class,
                    members: bf.member_ids,
                    mass: bf.mass,
                    child: None,
                });
            }
            nodes.push(TreeNode {
                root: nf.root,
                level,
                domain,
                domain_mass: nf.domain_mass,
                rho: nf.rho,
                members: nf.members,
                balls,
            });
        }
        Ok(RankNetTree { nodes })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

pub const TREE_FORMAT: &str = "ranknet-tree";
pub const TREE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub format: String,
    pub version: u32,
    pub node: NodeFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFile {
    pub root: ItemId,
    pub domain_size: usize,
    /// Root only, when the domain is not every item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_ids: Option<Vec<ItemId>>,
    pub domain_mass: f64,
    pub rho: f64,
    pub members: Vec<ItemId>,
    pub balls: Vec<BallFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFile {
    pub center: ItemId,
    pub radius_class: u32,
    pub mass: f64,
    pub member_ids: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<Box<NodeFile>>,
}
