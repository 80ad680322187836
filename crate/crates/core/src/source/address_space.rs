use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query_model::{NodeRef, RefKind};
use crate::value::DataType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Object,
    Variable,
}

/// One node of a device address space.
///
/// `displayName` and `engineeringUnit` are optional attributes harvested into
/// the metadata store at registration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AddressSpaceNode {
    pub node_ref: NodeRef,
    pub browse_name: String,
    pub node_class: NodeClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_type: Option<DataType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engineering_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<AddressSpaceNode>,
}

impl AddressSpaceNode {
    pub fn object(node_ref: NodeRef, browse_name: impl Into<String>) -> Self {
        Self {
            node_ref,
            browse_name: browse_name.into(),
            node_class: NodeClass::Object,
            data_type: None,
            display_name: None,
            engineering_unit: None,
            children: Vec::new(),
        }
    }

    pub fn variable(node_ref: NodeRef, browse_name: impl Into<String>, data_type: DataType) -> Self {
        Self {
            node_ref,
            browse_name: browse_name.into(),
            node_class: NodeClass::Variable,
            data_type: Some(data_type),
            display_name: None,
            engineering_unit: None,
            children: Vec::new(),
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.engineering_unit = Some(unit.into());
        self
    }

    pub fn with_child(mut self, child: AddressSpaceNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn is_variable(&self) -> bool {
        self.node_class == NodeClass::Variable
    }

    /// Check that node refs are unique in the tree, sibling browse names are
    /// unique and variables carry a type.
    pub fn validate(&self) -> Result<()> {
        let mut refs = BTreeSet::new();
        for n in self.iter() {
            if !refs.insert(&n.node_ref) {
                return Err(Error::invalid(
                    n.node_ref.canonical(),
                    "node reference appears more than once",
                ));
            }
        }
        self.validate_node()
    }

    fn validate_node(&self) -> Result<()> {
        if self.is_variable() && self.data_type.is_none() {
            return Err(Error::invalid(
                format!("{}.dataType", self.node_ref),
                "variables must declare a dataType",
            ));
        }
        let mut names = BTreeSet::new();
        for child in &self.children {
            if !names.insert(child.browse_name.as_str()) {
                return Err(Error::invalid(
                    format!("{}.children", self.node_ref),
                    format!("duplicate browseName `{}`", child.browse_name),
                ));
            }
            child.validate_node()?;
        }
        Ok(())
    }

    /// Children in browse order.
    pub fn sorted_children(&self) -> Vec<&AddressSpaceNode> {
        let mut out: Vec<_> = self.children.iter().collect();
        out.sort_by(|a, b| a.browse_name.cmp(&b.browse_name));
        out
    }

    /// Locate a node. A node id matches on equality anywhere in the tree; a
    /// browse path may also be resolved by walking browse names from this root.
    pub fn find(&self, target: &NodeRef) -> Option<&AddressSpaceNode> {
        if let Some(n) = self.find_by_ref(target) {
            return Some(n);
        }
        if target.kind == RefKind::BrowsePath {
            return self.find_by_path(&target.identifier);
        }
        None
    }

    fn find_by_ref(&self, target: &NodeRef) -> Option<&AddressSpaceNode> {
        if &self.node_ref == target {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find_by_ref(target))
    }

    fn find_by_path(&self, path: &str) -> Option<&AddressSpaceNode> {
        let mut segments = path.split('/').filter(|s| !s.is_empty());
        if segments.next()? != self.browse_name {
            return None;
        }
        let mut node = self;
        for seg in segments {
            node = node.children.iter().find(|c| c.browse_name == seg)?;
        }
        Some(node)
    }

    /// Browse-name path from this root to `target`, joined with `/`.
    pub fn path_to(&self, target: &NodeRef) -> Option<String> {
        fn walk<'a>(n: &'a AddressSpaceNode, t: &NodeRef, acc: &mut Vec<&'a str>) -> bool {
            acc.push(&n.browse_name);
            if &n.node_ref == t {
                return true;
            }
            for c in &n.children {
                if walk(c, t, acc) {
                    return true;
                }
            }
            acc.pop();
            false
        }
        let node = self.find(target)?;
        let mut acc = Vec::new();
        walk(self, &node.node_ref, &mut acc).then(|| acc.join("/"))
    }

    /// Copy of the subtree rooted at `root`, cut `depth` levels down, with
    /// children in browse order.
    pub fn browse(&self, root: &NodeRef, depth: u32) -> Result<AddressSpaceNode> {
        fn cut(n: &AddressSpaceNode, depth: u32) -> AddressSpaceNode {
            let mut out = n.clone();
            out.children = if depth == 0 {
                Vec::new()
            } else {
                n.sorted_children().into_iter().map(|c| cut(c, depth - 1)).collect()
            };
            out
        }
        let node = self.find(root).ok_or_else(|| Error::unresolvable(root))?;
        Ok(cut(node, depth))
    }

    /// Pre-order walk over every node of the tree.
    pub fn iter(&self) -> impl Iterator<Item = &AddressSpaceNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let n = stack.pop()?;
            stack.extend(n.children.iter().rev());
            Some(n)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> AddressSpaceNode {
        AddressSpaceNode::object(NodeRef::node_id(1, "Plant"), "Plant")
            .with_child(
                AddressSpaceNode::object(NodeRef::node_id(1, "Pump"), "Pump")
                    .with_child(AddressSpaceNode::variable(
                        NodeRef::node_id(1, "Pump.Flow"),
                        "Flow",
                        DataType::Float64,
                    )),
            )
            .with_child(AddressSpaceNode::variable(
                NodeRef::node_id(1, "Alarm"),
                "Alarm",
                DataType::Boolean,
            ))
    }

    #[test]
    fn browse_path_resolves_by_names() {
        let t = fixture();
        let n = t.find(&NodeRef::browse_path(1, "Plant/Pump/Flow")).unwrap();
        assert_eq!(n.node_ref, NodeRef::node_id(1, "Pump.Flow"));
        assert!(t.find(&NodeRef::browse_path(1, "Plant/Nope")).is_none());
    }

    #[test]
    fn path_to_joins_browse_names() {
        let t = fixture();
        assert_eq!(
            t.path_to(&NodeRef::node_id(1, "Pump.Flow")).as_deref(),
            Some("Plant/Pump/Flow")
        );
    }

    #[test]
    fn duplicate_sibling_names_rejected() {
        let t = fixture().with_child(AddressSpaceNode::object(NodeRef::node_id(1, "X"), "Pump"));
        assert!(matches!(t.validate(), Err(Error::InvalidValue { .. })));
    }

    #[test]
    fn duplicate_node_refs_rejected() {
        let t = fixture().with_child(AddressSpaceNode::object(NodeRef::node_id(1, "Plant"), "Copy"));
        assert!(matches!(t.validate(), Err(Error::InvalidValue { .. })));
    }

    #[test]
    fn browse_cuts_at_depth() {
        let t = fixture();
        let b = t.browse(&NodeRef::node_id(1, "Plant"), 1).unwrap();
        assert_eq!(b.iter().count(), 3);
        assert!(b.children.iter().all(|c| c.children.is_empty()));
        assert_eq!(b.children[0].browse_name, "Alarm");
    }
}
