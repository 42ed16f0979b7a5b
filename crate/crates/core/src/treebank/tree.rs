use crate::error::{Error, Result};

pub type NodeId = usize;

/// One node of a binary sentiment tree. Leaves carry a token, internal nodes
/// carry exactly two children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub label: Option<usize>,
    pub token: Option<String>,
    /// Vocabulary id of the token, assigned when the tree joins a corpus.
    pub word_id: Option<usize>,
    children: Option<[NodeId; 2]>,
    parent: Option<NodeId>,
    depth: usize,
    span: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn children(&self) -> Option<[NodeId; 2]> {
        self.children
    }

    pub fn left(&self) -> Option<NodeId> {
        self.children.map(|c| c[0])
    }

    pub fn right(&self) -> Option<NodeId> {
        self.children.map(|c| c[1])
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    /// Longest distance to a descendant leaf; 0 for leaves.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of leaves spanned.
    pub fn span_length(&self) -> usize {
        self.span
    }
}

/// Which child of its parent a node is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A binary tree stored as an arena in which children always precede their
/// parent, so index order is a valid bottom-up evaluation order and the root
/// is the last node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_id(&self) -> NodeId {
        self.nodes.len() - 1
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[self.root_id()]
    }

    /// Side of `id` under its parent, `None` for the root.
    pub fn side_of(&self, id: NodeId) -> Option<Side> {
        let parent = self.nodes[id].parent?;
        let [l, _] = self.nodes[parent].children.expect("parent has children");
        Some(if l == id { Side::Left } else { Side::Right })
    }

    /// Leaf ids in left-to-right order.
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.root().span);
        let mut stack = vec![self.root_id()];
        while let Some(id) = stack.pop() {
            match self.nodes[id].children {
                None => out.push(id),
                Some([l, r]) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.leaf_ids()
            .into_iter()
            .map(|id| self.nodes[id].token.as_deref().unwrap_or(""))
            .collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.root().span
    }

    pub fn labeled_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.label.is_some()).count()
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [TreeNode] {
        &mut self.nodes
    }
}

/// Builds a [`Tree`] bottom-up. Children must be added before their parent.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<TreeNode>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, label: Option<usize>, token: impl Into<String>) -> NodeId {
        self.nodes.push(TreeNode {
            label,
            token: Some(token.into()),
            word_id: None,
            children: None,
            parent: None,
            depth: 0,
            span: 1,
        });
        self.nodes.len() - 1
    }

    pub fn leaf_with_id(
        &mut self,
        label: Option<usize>,
        token: impl Into<String>,
        word_id: Option<usize>,
    ) -> NodeId {
        let id = self.leaf(label, token);
        self.nodes[id].word_id = word_id;
        id
    }

    pub fn internal(&mut self, label: Option<usize>, left: NodeId, right: NodeId) -> NodeId {
        assert!(
            left < self.nodes.len() && right < self.nodes.len() && left != right,
            "children must exist before their parent"
        );
        let depth = 1 + self.nodes[left].depth.max(self.nodes[right].depth);
        let span = self.nodes[left].span + self.nodes[right].span;
        self.nodes.push(TreeNode {
            label,
            token: None,
            word_id: None,
            children: Some([left, right]),
            parent: None,
            depth,
            span,
        });
        self.nodes.len() - 1
    }

    /// Validates that the last node is the unique root and that every other
    /// node has exactly one parent.
    pub fn finish(mut self) -> Result<Tree> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        let n = self.nodes.len();
        for id in 0..n {
            if let Some([l, r]) = self.nodes[id].children {
                for c in [l, r] {
                    if self.nodes[c].parent.is_some() {
                        return Err(Error::InvalidTree(format!("node {c} has two parents")));
                    }
                    self.nodes[c].parent = Some(id);
                }
            }
        }
        if let Some(orphan) = (0..n - 1).find(|&id| self.nodes[id].parent.is_none()) {
            return Err(Error::InvalidTree(format!(
                "node {orphan} is not connected to the root"
            )));
        }
        for node in &self.nodes {
            if node.is_leaf() && node.token.as_deref().is_none_or(str::is_empty) {
                return Err(Error::InvalidTree("leaf without a token".into()));
            }
        }
        Ok(Tree { nodes: self.nodes })
    }
}
