//! In-memory catalog of live views with coverage-region indexes: a 2-d
//! kd-tree over rectangle coverage (stored by center with extent) and a ball
//! tree over hypersphere coverage. Probing a point returns every view whose
//! region contains it — never fewer.

use std::collections::HashMap;

use crate::value::KeyValue;
use crate::vector::l2;
use crate::views::view::{CoverageRegion, MaterializedView, ViewId};

struct RectEntry {
    rect: [f64; 4],
    id: ViewId,
}

enum KdNode {
    Leaf(Vec<usize>),
    Split {
        bbox: [f64; 4],
        left: Box<KdNode>,
        right: Box<KdNode>,
    },
}

struct KdTree2 {
    entries: Vec<RectEntry>,
    root: Option<KdNode>,
}

const KD_LEAF: usize = 8;

impl KdTree2 {
    fn build(entries: Vec<RectEntry>) -> Self {
        let idx: Vec<usize> = (0..entries.len()).collect();
        let root = if entries.is_empty() {
            None
        } else {
            Some(Self::build_node(&entries, idx, 0))
        };
        KdTree2 { entries, root }
    }

    fn bbox_of(entries: &[RectEntry], idx: &[usize]) -> [f64; 4] {
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &i in idx {
            let r = entries[i].rect;
            bbox[0] = bbox[0].min(r[0]);
            bbox[1] = bbox[1].min(r[1]);
            bbox[2] = bbox[2].max(r[2]);
            bbox[3] = bbox[3].max(r[3]);
        }
        bbox
    }

    fn build_node(entries: &[RectEntry], mut idx: Vec<usize>, depth: usize) -> KdNode {
        if idx.len() <= KD_LEAF {
            return KdNode::Leaf(idx);
        }
        let axis = depth % 2;
        let center = |i: usize| {
            let r = entries[i].rect;
            if axis == 0 {
                (r[0] + r[2]) / 2.0
            } else {
                (r[1] + r[3]) / 2.0
            }
        };
        idx.sort_by(|&a, &b| center(a).total_cmp(&center(b)));
        let mid = idx.len() / 2;
        let right_idx = idx.split_off(mid);
        let bbox = Self::bbox_of(entries, &[idx.as_slice(), right_idx.as_slice()].concat());
        KdNode::Split {
            bbox,
            left: Box::new(Self::build_node(entries, idx, depth + 1)),
            right: Box::new(Self::build_node(entries, right_idx, depth + 1)),
        }
    }

    fn probe(&self, x: f64, y: f64, out: &mut Vec<ViewId>) {
        let Some(root) = &self.root else { return };
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            match node {
                KdNode::Leaf(idx) => {
                    for &i in idx {
                        let r = self.entries[i].rect;
                        if x >= r[0] && x <= r[2] && y >= r[1] && y <= r[3] {
                            out.push(self.entries[i].id);
                        }
                    }
                }
                KdNode::Split { bbox, left, right, .. } => {
                    if x >= bbox[0] && x <= bbox[2] && y >= bbox[1] && y <= bbox[3] {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
    }
}

struct SphereEntry {
    center: Vec<f32>,
    radius: f64,
    id: ViewId,
}

enum BallNode {
    Leaf(Vec<usize>),
    Split {
        center: Vec<f32>,
        radius: f64,
        left: Box<BallNode>,
        right: Box<BallNode>,
    },
}

struct BallTree {
    entries: Vec<SphereEntry>,
    root: Option<BallNode>,
}

impl BallTree {
    fn build(entries: Vec<SphereEntry>) -> Self {
        let idx: Vec<usize> = (0..entries.len()).collect();
        let root = if entries.is_empty() {
            None
        } else {
            Some(Self::build_node(&entries, idx))
        };
        BallTree { entries, root }
    }

    fn bounding_ball(entries: &[SphereEntry], idx: &[usize]) -> (Vec<f32>, f64) {
        let dim = entries[idx[0]].center.len();
        let mut mean = vec![0f64; dim];
        for &i in idx {
            for (m, c) in mean.iter_mut().zip(&entries[i].center) {
                *m += *c as f64;
            }
        }
        let center: Vec<f32> = mean.iter().map(|m| (*m / idx.len() as f64) as f32).collect();
        let radius = idx
            .iter()
            .map(|&i| {
                let e = &entries[i];
                if e.center.len() == dim {
                    l2(&center, &e.center) + e.radius
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0f64, f64::max);
        (center, radius)
    }

    fn build_node(entries: &[SphereEntry], mut idx: Vec<usize>) -> BallNode {
        if idx.len() <= KD_LEAF {
            return BallNode::Leaf(idx);
        }
        let (center, radius) = Self::bounding_ball(entries, &idx);
        // split on the axis with widest center spread
        let dim = center.len();
        let mut best_axis = 0usize;
        let mut best_spread = -1.0f32;
        for axis in 0..dim {
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for &i in &idx {
                let v = entries[i].center.get(axis).copied().unwrap_or(0.0);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        idx.sort_by(|&a, &b| {
            let va = entries[a].center.get(best_axis).copied().unwrap_or(0.0);
            let vb = entries[b].center.get(best_axis).copied().unwrap_or(0.0);
            va.total_cmp(&vb)
        });
        let mid = idx.len() / 2;
        let right_idx = idx.split_off(mid);
        BallNode::Split {
            center,
            radius,
            left: Box::new(Self::build_node(entries, idx)),
            right: Box::new(Self::build_node(entries, right_idx)),
        }
    }

    fn probe(&self, point: &[f32], out: &mut Vec<ViewId>) {
        let Some(root) = &self.root else { return };
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            match node {
                BallNode::Leaf(idx) => {
                    for &i in idx {
                        let e = &self.entries[i];
                        let inside = e.radius.is_infinite()
                            || (e.center.len() == point.len() && l2(&e.center, point) <= e.radius);
                        if inside {
                            out.push(e.id);
                        }
                    }
                }
                BallNode::Split { center, radius, left, right } => {
                    let reachable = radius.is_infinite()
                        || (center.len() == point.len() && l2(center, point) <= *radius);
                    if reachable {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
    }
}

#[derive(Default)]
pub struct ViewCatalog {
    views: HashMap<ViewId, MaterializedView>,
    rect_tree: Option<KdTree2>,
    ball_tree: Option<BallTree>,
}

impl ViewCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_bytes(&self) -> u64 {
        self.views.values().map(|v| v.storage_bytes as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn get(&self, id: ViewId) -> Option<&MaterializedView> {
        self.views.get(&id)
    }

    pub fn get_mut(&mut self, id: ViewId) -> Option<&mut MaterializedView> {
        self.views.get_mut(&id)
    }

    pub fn ids(&self) -> Vec<ViewId> {
        let mut ids: Vec<ViewId> = self.views.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn iter(&self) -> impl Iterator<Item = &MaterializedView> {
        self.views.values()
    }

    pub fn insert(&mut self, view: MaterializedView) {
        self.views.insert(view.id, view);
        self.rebuild();
    }

    pub fn remove(&mut self, id: ViewId) -> Option<MaterializedView> {
        let out = self.views.remove(&id);
        if out.is_some() {
            self.rebuild();
        }
        out
    }

    /// Rebuild both coverage trees. Called after pool mutations shift
    /// vector maintenance radii.
    pub fn rebuild(&mut self) {
        let mut rects = Vec::new();
        let mut spheres = Vec::new();
        for view in self.views.values() {
            match view.coverage() {
                CoverageRegion::Rect(rect) => rects.push(RectEntry { rect, id: view.id }),
                CoverageRegion::Sphere { center, radius } => {
                    spheres.push(SphereEntry { center, radius, id: view.id })
                }
            }
        }
        self.rect_tree = Some(KdTree2::build(rects));
        self.ball_tree = Some(BallTree::build(spheres));
    }

    /// Views whose rect coverage contains the point.
    pub fn probe_point(&self, table: &str, x: f64, y: f64) -> Vec<ViewId> {
        let mut out = Vec::new();
        if let Some(tree) = &self.rect_tree {
            tree.probe(x, y, &mut out);
        }
        out.retain(|id| self.views.get(id).map(|v| v.table == table).unwrap_or(false));
        out.sort_unstable();
        out
    }

    /// Views whose sphere coverage contains the embedding.
    pub fn probe_vector(&self, table: &str, v: &[f32]) -> Vec<ViewId> {
        let mut out = Vec::new();
        if let Some(tree) = &self.ball_tree {
            tree.probe(v, &mut out);
        }
        out.retain(|id| self.views.get(id).map(|view| view.table == table).unwrap_or(false));
        out.sort_unstable();
        out
    }

    /// Does any view still reference this key in its rows? Used by delete
    /// handling when the pre-image is gone.
    pub fn views_holding_key(&self, table: &str, key: &KeyValue) -> Vec<ViewId> {
        let mut out: Vec<ViewId> = self
            .views
            .values()
            .filter(|v| v.table == table && v.rows.iter().any(|r| &r.key == key))
            .map(|v| v.id)
            .collect();
        out.sort_unstable();
        out
    }
}
