//! Immutable DOM snapshots with geometry.
//!
//! A [`DomSnapshot`] is the page half of an agent state: a validated tree of
//! [`DomElement`]s keyed by stable integer ids. Snapshots are never mutated
//! in place; transitions build new snapshots with [`DomSnapshot::with_element`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ElementId = u32;

/// Default radius used by spatial neighbor queries and the `Near` selector.
pub const NEAR_RADIUS: f64 = 30.0;

/// Slack allowed when checking that a child box lies inside its parent.
pub const CONTAINMENT_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomError {
    #[error("duplicate element id {0}")]
    DuplicateId(ElementId),
    #[error("unknown element id {0}")]
    UnknownElement(ElementId),
    #[error("element {child} is listed as a child more than once")]
    MultipleParents { child: ElementId },
    #[error("root {0} must not appear as a child")]
    RootIsChild(ElementId),
    #[error("element {0} is not reachable from the root")]
    Unreachable(ElementId),
    #[error("element {0} has negative width or height")]
    NegativeSize(ElementId),
    #[error("element {0} has non-finite geometry")]
    NonFiniteGeometry(ElementId),
    #[error("element {child} lies outside its parent {parent}")]
    Containment { child: ElementId, parent: ElementId },
}

/// Axis-aligned bounding box in page pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub const fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self { left, top, width, height }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    /// Euclidean gap between two boxes; zero when they touch or overlap.
    pub fn distance(&self, other: &Rect) -> f64 {
        let dx = (self.left - other.right()).max(other.left - self.right()).max(0.0);
        let dy = (self.top - other.bottom()).max(other.top - self.bottom()).max(0.0);
        libm::sqrt(dx * dx + dy * dy)
    }

    /// Closed overlap of the vertical extents.
    pub fn same_row(&self, other: &Rect) -> bool {
        self.top <= other.bottom() && other.top <= self.bottom()
    }

    /// Closed overlap of the horizontal extents.
    pub fn same_col(&self, other: &Rect) -> bool {
        self.left <= other.right() && other.left <= self.right()
    }

    fn contains_within(&self, inner: &Rect, tol: f64) -> bool {
        inner.left >= self.left - tol
            && inner.top >= self.top - tol
            && inner.right() <= self.right() + tol
            && inner.bottom() <= self.bottom() + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomElement {
    pub id: ElementId,
    pub tag: String,
    pub classes: Vec<String>,
    pub text: String,
    pub value: String,
    pub checked: bool,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub children: Vec<ElementId>,
    pub focused: bool,
}

impl DomElement {
    pub fn new(id: ElementId, tag: &str, rect: Rect) -> Self {
        Self {
            id,
            tag: tag.into(),
            classes: Vec::new(),
            text: String::new(),
            value: String::new(),
            checked: false,
            left: rect.left,
            top: rect.top,
            width: rect.width,
            height: rect.height,
            children: Vec::new(),
            focused: false,
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.left, self.top, self.width, self.height)
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    /// Text inputs accept `Type` actions.
    pub fn is_text_input(&self) -> bool {
        matches!(self.tag.as_str(), "input_text" | "input_password" | "textarea")
    }

    fn normalize(&mut self) {
        self.tag.make_ascii_lowercase();
        for c in &mut self.classes {
            c.make_ascii_lowercase();
        }
        self.classes.sort();
        self.classes.dedup();
        self.left = quantize(self.left);
        self.top = quantize(self.top);
        self.width = quantize(self.width);
        self.height = quantize(self.height);
    }
}

/// Geometry is stored at hundredth-of-a-pixel resolution so that the
/// canonical two-decimal serialization is lossless.
pub fn quantize(x: f64) -> f64 {
    let q = libm::round(x * 100.0) / 100.0;
    // normalize -0.0
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// A validated, immutable DOM tree.
#[derive(Debug, Clone)]
pub struct DomSnapshot {
    root: ElementId,
    elements: BTreeMap<ElementId, DomElement>,
    parent: BTreeMap<ElementId, ElementId>,
    depth: BTreeMap<ElementId, u32>,
    preorder: Vec<ElementId>,
}

impl PartialEq for DomSnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.elements == other.elements
    }
}

impl DomSnapshot {
    /// Validates and indexes a tree. Tags and classes are lowercased, class
    /// lists are sorted and deduplicated, and geometry is quantized.
    pub fn new(root: ElementId, elements: impl IntoIterator<Item = DomElement>) -> Result<Self, DomError> {
        let mut map = BTreeMap::new();
        for mut e in elements {
            e.normalize();
            let id = e.id;
            if map.insert(id, e).is_some() {
                return Err(DomError::DuplicateId(id));
            }
        }
        if !map.contains_key(&root) {
            return Err(DomError::UnknownElement(root));
        }

        let mut parent = BTreeMap::new();
        for e in map.values() {
            if !(e.left.is_finite() && e.top.is_finite() && e.width.is_finite() && e.height.is_finite()) {
                return Err(DomError::NonFiniteGeometry(e.id));
            }
            if e.width < 0.0 || e.height < 0.0 {
                return Err(DomError::NegativeSize(e.id));
            }
            for &c in &e.children {
                if !map.contains_key(&c) {
                    return Err(DomError::UnknownElement(c));
                }
                if c == root {
                    return Err(DomError::RootIsChild(root));
                }
                if parent.insert(c, e.id).is_some() {
                    return Err(DomError::MultipleParents { child: c });
                }
            }
        }

        // Every non-root element has exactly one parent; a pre-order walk from
        // the root that reaches all of them proves the structure is a tree.
        let mut depth = BTreeMap::new();
        let mut preorder = Vec::with_capacity(map.len());
        let mut stack = vec![(root, 0u32)];
        while let Some((id, d)) = stack.pop() {
            if depth.insert(id, d).is_some() {
                // only possible through a cycle
                return Err(DomError::MultipleParents { child: id });
            }
            preorder.push(id);
            let e = &map[&id];
            for &c in e.children.iter().rev() {
                stack.push((c, d + 1));
            }
        }
        if let Some(id) = map.keys().find(|id| !depth.contains_key(id)) {
            return Err(DomError::Unreachable(*id));
        }

        for (&child, &p) in &parent {
            let (c, pe) = (&map[&child], &map[&p]);
            if !pe.rect().contains_within(&c.rect(), CONTAINMENT_TOLERANCE) {
                return Err(DomError::Containment { child, parent: p });
            }
        }

        Ok(Self { root, elements: map, parent, depth, preorder })
    }

    pub fn root(&self) -> ElementId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn get(&self, id: ElementId) -> Option<&DomElement> {
        self.elements.get(&id)
    }

    pub fn element(&self, id: ElementId) -> Result<&DomElement, DomError> {
        self.elements.get(&id).ok_or(DomError::UnknownElement(id))
    }

    /// Elements in ascending id order.
    pub fn elements(&self) -> impl Iterator<Item = &DomElement> + '_ {
        self.elements.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.elements.keys().copied()
    }

    /// Element ids in document (pre-order) order.
    pub fn preorder(&self) -> &[ElementId] {
        &self.preorder
    }

    pub fn parent(&self, id: ElementId) -> Option<ElementId> {
        self.parent.get(&id).copied()
    }

    pub fn depth(&self, id: ElementId) -> Result<u32, DomError> {
        self.depth.get(&id).copied().ok_or(DomError::UnknownElement(id))
    }

    /// Height of the tree (maximum depth).
    pub fn height(&self) -> u32 {
        self.depth.values().copied().max().unwrap_or(0)
    }

    /// Leaf elements in document order.
    pub fn leaves(&self) -> Vec<ElementId> {
        self.preorder.iter().copied().filter(|id| self.elements[id].is_leaf()).collect()
    }

    /// Least common ancestor of two elements.
    pub fn lca(&self, a: ElementId, b: ElementId) -> Result<ElementId, DomError> {
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth(a)?, self.depth(b)?);
        while da > db {
            a = self.parent[&a];
            da -= 1;
        }
        while db > da {
            b = self.parent[&b];
            db -= 1;
        }
        while a != b {
            a = self.parent[&a];
            b = self.parent[&b];
        }
        Ok(a)
    }

    /// All other elements whose box lies within `radius` pixels of `id`'s box.
    pub fn spatial_neighbors(&self, id: ElementId, radius: f64) -> Result<Vec<ElementId>, DomError> {
        let r = self.element(id)?.rect();
        Ok(self.elements.values().filter(|o| o.id != id && r.distance(&o.rect()) <= radius).map(|o| o.id).collect())
    }

    /// All other elements whose least common ancestor with `id` has depth at
    /// most `k` (the root has depth 0).
    pub fn tree_neighbors(&self, id: ElementId, k: u32) -> Result<Vec<ElementId>, DomError> {
        self.element(id)?;
        let mut out = Vec::new();
        for &o in self.elements.keys() {
            if o != id && self.depth[&self.lca(id, o)?] <= k {
                out.push(o);
            }
        }
        Ok(out)
    }

    /// Returns a copy with one element's non-structural fields edited.
    /// Panics if `id` is unknown or the edit changes the child list.
    pub fn with_element(&self, id: ElementId, edit: impl FnOnce(&mut DomElement)) -> Self {
        let mut next = self.clone();
        let e = next.elements.get_mut(&id).expect("unknown element");
        let children = e.children.clone();
        edit(e);
        assert_eq!(e.children, children, "with_element cannot restructure the tree");
        e.normalize();
        next
    }

    /// Clears the focus flag everywhere except on `id`.
    pub fn with_focus(&self, id: Option<ElementId>) -> Self {
        let mut next = self.clone();
        for e in next.elements.values_mut() {
            e.focused = Some(e.id) == id;
        }
        next
    }
}

/// Incremental construction of snapshots in document order.
#[derive(Debug, Clone)]
pub struct PageBuilder {
    elements: Vec<DomElement>,
}

impl PageBuilder {
    /// Starts a page whose root is a `body` covering `rect`.
    pub fn new(rect: Rect) -> Self {
        Self { elements: vec![DomElement::new(0, "body", rect)] }
    }

    pub const ROOT: ElementId = 0;

    /// Appends a child and returns its id.
    pub fn add(&mut self, parent: ElementId, tag: &str, rect: Rect) -> ElementId {
        let id = self.elements.len() as ElementId;
        self.elements.push(DomElement::new(id, tag, rect));
        self.elements[parent as usize].children.push(id);
        id
    }

    /// Appends a child with text and classes.
    pub fn add_with(&mut self, parent: ElementId, tag: &str, rect: Rect, text: &str, classes: &[&str]) -> ElementId {
        let id = self.add(parent, tag, rect);
        let e = &mut self.elements[id as usize];
        e.text = text.into();
        e.classes = classes.iter().map(|c| String::from(*c)).collect();
        id
    }

    pub fn get_mut(&mut self, id: ElementId) -> &mut DomElement {
        &mut self.elements[id as usize]
    }

    pub fn build(self) -> Result<DomSnapshot, DomError> {
        DomSnapshot::new(Self::ROOT, self.elements)
    }
}
