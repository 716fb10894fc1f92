use crate::geometry::{ControlInput, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct TreeVertex {
    pub state: RobotState,
    /// Selection cost `z`.
    pub cost: f64,
    pub timestamp: f64,
    pub parent: Option<VertexId>,
}

/// Steered segment leading into a vertex. `states[0]` is the parent state.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEdge {
    pub from: VertexId,
    pub to: VertexId,
    pub controls: Vec<ControlInput>,
    pub states: Vec<RobotState>,
}

/// Vertices in insertion order; vertex 0 is the root, and every parent has a
/// lower index than its children.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTree {
    vertices: Vec<TreeVertex>,
    /// `edges[i]` leads into vertex `i`; `None` only for the root.
    edges: Vec<Option<TreeEdge>>,
}

impl PlanTree {
    pub fn new(root: RobotState, timestamp: f64, cost: f64) -> Self {
        Self {
            vertices: vec![TreeVertex {
                state: root,
                cost,
                timestamp,
                parent: None,
            }],
            edges: vec![None],
        }
    }

    pub const ROOT: VertexId = VertexId(0);

    pub fn root(&self) -> &TreeVertex {
        &self.vertices[0]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: VertexId) -> &TreeVertex {
        &self.vertices[id.0]
    }

    pub fn vertices(&self) -> &[TreeVertex] {
        &self.vertices
    }

    pub fn edge_into(&self, id: VertexId) -> Option<&TreeEdge> {
        self.edges[id.0].as_ref()
    }

    pub fn edges(&self) -> impl Iterator<Item = &TreeEdge> {
        self.edges.iter().flatten()
    }

    pub fn set_cost(&mut self, id: VertexId, cost: f64) {
        self.vertices[id.0].cost = cost;
    }

    pub fn add_child(
        &mut self,
        parent: VertexId,
        controls: Vec<ControlInput>,
        states: Vec<RobotState>,
        timestamp: f64,
        cost: f64,
    ) -> VertexId {
        assert!(parent.0 < self.vertices.len(), "parent {parent:?} not in tree");
        assert_eq!(states.len(), controls.len() + 1);
        let id = VertexId(self.vertices.len());
        let state = *states.last().expect("edge has states");
        self.vertices.push(TreeVertex {
            state,
            cost,
            timestamp,
            parent: Some(parent),
        });
        self.edges.push(Some(TreeEdge {
            from: parent,
            to: id,
            controls,
            states,
        }));
        id
    }

    /// Child of the root on the path to `id`, or `None` for the root itself.
    pub fn first_step_toward(&self, id: VertexId) -> Option<VertexId> {
        let mut cur = id;
        loop {
            match self.vertices[cur.0].parent {
                None => return None,
                Some(p) if p == Self::ROOT => return Some(cur),
                Some(p) => cur = p,
            }
        }
    }

    /// Keeps the vertices for which `keep` holds and whose parent is kept,
    /// preserving insertion order. `keep` sees vertices parents-first and is
    /// never asked about the root, which is always kept.
    pub fn retain(&mut self, mut keep: impl FnMut(&Self, VertexId) -> bool) {
        let n = self.vertices.len();
        let mut new_index: Vec<Option<usize>> = vec![None; n];
        new_index[0] = Some(0);
        let mut next = 1;
        for i in 1..n {
            let parent = self.vertices[i].parent.expect("non-root has parent").0;
            if new_index[parent].is_some() && keep(self, VertexId(i)) {
                new_index[i] = Some(next);
                next += 1;
            }
        }
        let vertices = std::mem::take(&mut self.vertices);
        let edges = std::mem::take(&mut self.edges);
        for (i, (mut v, mut e)) in vertices.into_iter().zip(edges).enumerate() {
            let Some(ni) = new_index[i] else { continue };
            if let Some(p) = v.parent {
                let np = VertexId(new_index[p.0].expect("parent kept"));
                v.parent = Some(np);
                if let Some(edge) = e.as_mut() {
                    edge.from = np;
                    edge.to = VertexId(ni);
                }
            }
            self.vertices.push(v);
            self.edges.push(e);
        }
    }

    /// Moves the root `steps` controls along the edge into `child` (a child
    /// of the root). The remainder of that edge stays attached to `child`;
    /// all other branches are dropped. When `steps` covers the whole edge,
    /// `child` becomes the root. The new root is stamped `new_root_time`.
    pub fn advance_root(&mut self, child: VertexId, steps: usize, new_root_time: f64) {
        let edge = self.edges[child.0].as_ref().expect("child has an edge");
        assert_eq!(edge.from, Self::ROOT, "advance_root expects a child of the root");
        let len = edge.controls.len();
        assert!(steps >= 1 && steps <= len);
        let new_root_state = edge.states[steps];

        // mark the kept subtree
        let n = self.vertices.len();
        let mut in_subtree = vec![false; n];
        in_subtree[child.0] = true;
        for i in (child.0 + 1)..n {
            if let Some(p) = self.vertices[i].parent {
                in_subtree[i] = in_subtree[p.0];
            }
        }

        let root_cost = self.vertices[0].cost;
        let mut out = PlanTree::new(new_root_state, new_root_time, root_cost);
        let mut new_index: Vec<Option<usize>> = vec![None; n];
        if steps == len {
            out.vertices[0] = TreeVertex {
                parent: None,
                timestamp: new_root_time,
                ..self.vertices[child.0].clone()
            };
            new_index[child.0] = Some(0);
        }
        for i in child.0..n {
            if !in_subtree[i] || new_index[i].is_some() {
                continue;
            }
            let v = &self.vertices[i];
            let e = self.edges[i].as_ref().expect("non-root has edge");
            let (parent, controls, states) = if i == child.0 {
                (0, e.controls[steps..].to_vec(), e.states[steps..].to_vec())
            } else {
                let p = new_index[v.parent.expect("non-root").0].expect("parent kept");
                (p, e.controls.clone(), e.states.clone())
            };
            let id = out.add_child(VertexId(parent), controls, states, v.timestamp, v.cost);
            new_index[i] = Some(id.0);
        }
        *self = out;
    }
}
