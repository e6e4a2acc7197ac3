//! Space-partitioning tree (quadtree for 2-D, octree for 3-D) used for the
//! Barnes-Hut approximation of the t-SNE repulsive forces.

const MAX_DEPTH: usize = 48;
const NO_CHILD: u32 = u32::MAX;

struct Node<const D: usize> {
    center: [f64; D],
    half: f64,
    com: [f64; D],
    count: usize,
    first_child: u32,
    points: Vec<u32>,
}

pub(crate) struct BhTree<'a, const D: usize> {
    nodes: Vec<Node<D>>,
    y: &'a [f64],
}

impl<'a, const D: usize> BhTree<'a, D> {
    /// Builds the tree over the rows of `y` (`[n, D]`, row-major).
    pub fn build(y: &'a [f64]) -> Self {
        let n = y.len() / D;
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for i in 0..n {
            for c in 0..D {
                lo[c] = lo[c].min(y[i * D + c]);
                hi[c] = hi[c].max(y[i * D + c]);
            }
        }
        let mut center = [0.0; D];
        let mut half: f64 = 0.0;
        for c in 0..D {
            center[c] = 0.5 * (lo[c] + hi[c]);
            half = half.max(0.5 * (hi[c] - lo[c]));
        }
        let half = if half > 0.0 { half * (1.0 + 1e-9) + 1e-12 } else { 1.0 };
        let mut tree = BhTree {
            nodes: vec![Node {
                center,
                half,
                com: [0.0; D],
                count: 0,
                first_child: NO_CHILD,
                points: Vec::new(),
            }],
            y,
        };
        for i in 0..n {
            tree.insert(i);
        }
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.y[i * D..(i + 1) * D]
    }

    fn child_index(&self, node: usize, p: &[f64]) -> usize {
        let c = &self.nodes[node].center;
        (0..D).fold(0, |acc, k| acc | (((p[k] >= c[k]) as usize) << k))
    }

    fn subdivide(&mut self, node: usize) {
        let first = self.nodes.len() as u32;
        let (center, half) = (self.nodes[node].center, self.nodes[node].half);
        for q in 0..(1usize << D) {
            let mut cc = center;
            for (k, v) in cc.iter_mut().enumerate() {
                *v += if (q >> k) & 1 == 1 { 0.5 * half } else { -0.5 * half };
            }
            self.nodes.push(Node {
                center: cc,
                half: 0.5 * half,
                com: [0.0; D],
                count: 0,
                first_child: NO_CHILD,
                points: Vec::new(),
            });
        }
        self.nodes[node].first_child = first;
    }

    fn insert(&mut self, i: usize) {
        let p: [f64; D] = std::array::from_fn(|k| self.y[i * D + k]);
        let mut node = 0;
        let mut depth = 0;
        loop {
            {
                let nd = &mut self.nodes[node];
                let c = nd.count as f64;
                for k in 0..D {
                    nd.com[k] = (nd.com[k] * c + p[k]) / (c + 1.0);
                }
                nd.count += 1;
            }
            if self.nodes[node].first_child == NO_CHILD {
                let duplicate = self.nodes[node]
                    .points
                    .first()
                    .is_some_and(|&j| self.point(j as usize) == p);
                if self.nodes[node].points.is_empty() || duplicate || depth >= MAX_DEPTH {
                    self.nodes[node].points.push(i as u32);
                    return;
                }
                let moved = std::mem::take(&mut self.nodes[node].points);
                self.subdivide(node);
                for j in moved {
                    let q = self.child_index(node, self.point(j as usize));
                    let child = self.nodes[node].first_child as usize + q;
                    let jp: [f64; D] = std::array::from_fn(|k| self.y[j as usize * D + k]);
                    let nd = &mut self.nodes[child];
                    let c = nd.count as f64;
                    for k in 0..D {
                        nd.com[k] = (nd.com[k] * c + jp[k]) / (c + 1.0);
                    }
                    nd.count += 1;
                    nd.points.push(j);
                }
            }
            let q = self.child_index(node, &p);
            node = self.nodes[node].first_child as usize + q;
            depth += 1;
        }
    }

    /// Unnormalized repulsion on point `i`: returns
    /// `(sum_j w_ij^2 (y_i - y_j), sum_j w_ij)` with `w = 1 / (1 + |y_i - y_j|^2)`,
    /// where cells with `width / distance < theta` are summarized by their
    /// center of mass.
    pub fn repulsion(&self, i: usize, theta: f64, force: &mut [f64; D]) -> f64 {
        let yi: [f64; D] = std::array::from_fn(|k| self.y[i * D + k]);
        *force = [0.0; D];
        let mut z = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let nd = &self.nodes[node];
            if nd.count == 0 {
                continue;
            }
            if nd.first_child == NO_CHILD {
                for &j in &nd.points {
                    let j = j as usize;
                    if j == i {
                        continue;
                    }
                    let yj = self.point(j);
                    let mut diff = [0.0; D];
                    let mut d2 = 0.0;
                    for k in 0..D {
                        diff[k] = yi[k] - yj[k];
                        d2 += diff[k] * diff[k];
                    }
                    let w = 1.0 / (1.0 + d2);
                    z += w;
                    for k in 0..D {
                        force[k] += w * w * diff[k];
                    }
                }
                continue;
            }
            let mut diff = [0.0; D];
            let mut d2 = 0.0;
            for k in 0..D {
                diff[k] = yi[k] - nd.com[k];
                d2 += diff[k] * diff[k];
            }
            let width = 2.0 * nd.half;
            if width * width < theta * theta * d2 {
                let w = 1.0 / (1.0 + d2);
                let c = nd.count as f64;
                z += c * w;
                for k in 0..D {
                    force[k] += c * w * w * diff[k];
                }
            } else {
                let first = nd.first_child as usize;
                stack.extend(first..first + (1 << D));
            }
        }
        z
    }
}
