use super::{Params, Slot};
use crate::env::Stage;
use crate::error::{Error, Result};
use crate::geometry::PlanarGraph;
use crate::state::{FeatureSet, EDGE_FEATURES, FACE_FEATURES, NODE_FEATURES};

/// `y[r] = W x[r] + b` for every row `r` of `x` (rows x k); `W` is m x k.
fn affine(x: &[f64], k: usize, w: &[f64], b: Option<&[f64]>, m: usize) -> Vec<f64> {
    let rows = x.len() / k.max(1);
    let mut y = vec![0.0; rows * m];
    for r in 0..rows {
        let xr = &x[r * k..(r + 1) * k];
        let yr = &mut y[r * m..(r + 1) * m];
        for (o, y) in yr.iter_mut().enumerate() {
            let wo = &w[o * k..(o + 1) * k];
            let mut acc = b.map_or(0.0, |b| b[o]);
            for i in 0..k {
                acc += wo[i] * xr[i];
            }
            *y = acc;
        }
    }
    y
}

/// Accumulates `dW += dy^T x` and `db += sum(dy)`; returns `dx = dy W`
/// when `want_dx`.
fn affine_back(x: &[f64], k: usize, w: &[f64], m: usize, dy: &[f64], dw: &mut [f64], db: Option<&mut [f64]>, want_dx: bool) -> Vec<f64> {
    let rows = dy.len() / m;
    let mut dx = if want_dx { vec![0.0; rows * k] } else { Vec::new() };
    for r in 0..rows {
        let xr = &x[r * k..(r + 1) * k];
        let dyr = &dy[r * m..(r + 1) * m];
        for o in 0..m {
            let g = dyr[o];
            if g == 0.0 {
                continue;
            }
            let dwo = &mut dw[o * k..(o + 1) * k];
            for i in 0..k {
                dwo[i] += g * xr[i];
            }
            if want_dx {
                let wo = &w[o * k..(o + 1) * k];
                let dxr = &mut dx[r * k..(r + 1) * k];
                for i in 0..k {
                    dxr[i] += g * wo[i];
                }
            }
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            for o in 0..m {
                db[o] += dy[r * m + o];
            }
        }
    }
    dx
}

fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// Multiplies an upstream gradient by the derivative of tanh at its output.
fn tanh_back(y: &[f64], dy: &mut [f64]) {
    for (g, &t) in dy.iter_mut().zip(y) {
        *g *= 1.0 - t * t;
    }
}

struct LayerCache {
    ne_in: Vec<f64>,
    ne_out: Vec<f64>,
    z: Vec<f64>,
    e_out: Vec<f64>,
}

/// One forward evaluation with the intermediates needed by
/// [`Forward::backward`].
pub struct Forward {
    pub scores: Vec<f64>,
    pub value: f64,
    /// Final node embeddings, |N| x d.
    pub nodes: Vec<f64>,
    /// Final edge embeddings, |E| x d.
    pub edges: Vec<f64>,
    layers: Vec<LayerCache>,
    m_f: Vec<f64>,
    m_ee: Vec<f64>,
    p_h1: Vec<f64>,
    v_in: Vec<f64>,
    v_h1: Vec<f64>,
    v_h2: Vec<f64>,
    n_faces: usize,
}

fn check_shapes(g: &PlanarGraph, f: &FeatureSet) -> Result<()> {
    let (n, e, nf) = (g.nodes.len(), g.edges.len(), g.faces.len());
    if f.node.len() != n * NODE_FEATURES || f.edge.len() != e * EDGE_FEATURES || f.face.len() != nf * FACE_FEATURES {
        return Err(Error::Shape(format!(
            "features ({}, {}, {}) do not fit a graph with {n} nodes, {e} edges, {nf} faces",
            f.node.len(),
            f.edge.len(),
            f.face.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| g.node_edges[i].is_empty()) {
        return Err(Error::IsolatedNode(i));
    }
    if e == 0 {
        return Err(Error::Shape("graph has no edges".into()));
    }
    Ok(())
}

/// Runs the encoder, the policy head on every edge, and the value head.
pub fn forward(g: &PlanarGraph, feats: &FeatureSet, stage: Stage, p: &Params) -> Result<Forward> {
    check_shapes(g, feats)?;
    let cfg = &p.config;
    let lay = &p.layout;
    let d = cfg.dim;
    let n = g.nodes.len();
    let m = g.edges.len();

    let n0 = affine(&feats.node, NODE_FEATURES, p.slice(lay.w_n), None, d);
    let e0 = affine(&feats.edge, EDGE_FEATURES, p.slice(lay.w_e), None, d);
    let f0 = affine(&feats.face, FACE_FEATURES, p.slice(lay.w_f), None, d);

    // face-to-edge and edge-to-edge messages read layer-0 embeddings only,
    // so they are shared by every layer
    let mut m_f = vec![0.0; m * d];
    if cfg.f2e {
        for e in 0..m {
            let faces = &g.edge_faces[e];
            if faces.is_empty() {
                continue;
            }
            let row = &mut m_f[e * d..(e + 1) * d];
            for &k in faces {
                for (r, v) in row.iter_mut().zip(&f0[k * d..(k + 1) * d]) {
                    *r += v;
                }
            }
            let inv = 1.0 / faces.len() as f64;
            row.iter_mut().for_each(|r| *r = (*r * inv).tanh());
        }
    }
    let mut m_ee = if cfg.e2e { e0 } else { vec![0.0; m * d] };
    tanh_in_place(&mut m_ee);

    let mut n_layers = vec![n0];
    let mut layers = Vec::with_capacity(cfg.layers);
    for ls in &lay.layers {
        let nl = n_layers.last().unwrap();
        let mut ne_in = vec![0.0; m * 2 * d];
        let ne_out = if cfg.n2e {
            for (e, edge) in g.edges.iter().enumerate() {
                let (a, b) = edge.ends;
                ne_in[e * 2 * d..e * 2 * d + d].copy_from_slice(&nl[a * d..(a + 1) * d]);
                ne_in[e * 2 * d + d..(e + 1) * 2 * d].copy_from_slice(&nl[b * d..(b + 1) * d]);
            }
            let mut out = affine(&ne_in, 2 * d, p.slice(ls.w_ne), Some(p.slice(ls.b_ne)), d);
            tanh_in_place(&mut out);
            out
        } else {
            vec![0.0; m * d]
        };
        let mut z = vec![0.0; m * 3 * d];
        for e in 0..m {
            let zr = &mut z[e * 3 * d..(e + 1) * 3 * d];
            zr[..d].copy_from_slice(&ne_out[e * d..(e + 1) * d]);
            zr[d..2 * d].copy_from_slice(&m_f[e * d..(e + 1) * d]);
            zr[2 * d..].copy_from_slice(&m_ee[e * d..(e + 1) * d]);
        }
        let mut e_out = affine(&z, 3 * d, p.slice(ls.w_int), Some(p.slice(ls.b_int)), d);
        tanh_in_place(&mut e_out);
        let mut next = nl.clone();
        for i in 0..n {
            let inc = &g.node_edges[i];
            let inv = 1.0 / inc.len() as f64;
            let row = &mut next[i * d..(i + 1) * d];
            for &e in inc {
                for (r, v) in row.iter_mut().zip(&e_out[e * d..(e + 1) * d]) {
                    *r += v * inv;
                }
            }
        }
        n_layers.push(next);
        layers.push(LayerCache { ne_in, ne_out, z, e_out });
    }

    let nodes = n_layers.pop().unwrap();
    let edges = match layers.last() {
        Some(l) => l.e_out.clone(),
        None => vec![0.0; m * d],
    };

    let ph = cfg.policy_hidden;
    let mut p_h1 = affine(&edges, d, p.slice(lay.p_w1), lay.p_b1.map(|s| p.slice(s)), ph);
    tanh_in_place(&mut p_h1);
    let scores = affine(&p_h1, ph, p.slice(lay.p_w2), lay.p_b2.map(|s| p.slice(s)), 1);

    let mut v_in = vec![0.0; cfg.value_input()];
    for i in 0..n {
        for c in 0..d {
            v_in[c] += nodes[i * d + c] / n as f64;
        }
    }
    for e in 0..m {
        for c in 0..d {
            v_in[d + c] += edges[e * d + c] / m as f64;
        }
    }
    v_in[2 * d..].copy_from_slice(&stage.one_hot());
    let vh = cfg.value_hidden;
    let mut v_h1 = affine(&v_in, v_in.len(), p.slice(lay.v_w1), lay.v_b1.map(|s| p.slice(s)), vh);
    tanh_in_place(&mut v_h1);
    let mut v_h2 = affine(&v_h1, vh, p.slice(lay.v_w2), lay.v_b2.map(|s| p.slice(s)), vh);
    tanh_in_place(&mut v_h2);
    let value = affine(&v_h2, vh, p.slice(lay.v_w3), lay.v_b3.map(|s| p.slice(s)), 1)[0];

    if !value.is_finite() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite network output".into()));
    }
    Ok(Forward { scores, value, nodes, edges, layers, m_f, m_ee, p_h1, v_in, v_h1, v_h2, n_faces: g.faces.len() })
}

fn grad_slot(grad: &mut [f64], s: Slot) -> &mut [f64] {
    &mut grad[s.range()]
}

impl Forward {
    /// Adds to `grad` the gradient of `sum(dscores . scores) + dvalue * value`
    /// with respect to every parameter.
    pub fn backward(&self, g: &PlanarGraph, feats: &FeatureSet, p: &Params, dscores: &[f64], dvalue: f64, grad: &mut [f64]) {
        assert_eq!(grad.len(), p.len());
        assert_eq!(dscores.len(), self.scores.len());
        assert_eq!(self.n_faces, g.faces.len());
        let cfg = &p.config;
        let lay = &p.layout;
        let d = cfg.dim;
        let n = g.nodes.len();
        let m = g.edges.len();
        let (ph, vh) = (cfg.policy_hidden, cfg.value_hidden);

        // value head
        let mut dn = vec![0.0; n * d];
        let mut de = vec![0.0; m * d];
        if dvalue != 0.0 {
            let dy = [dvalue];
            let mut dh2 = {
                let (w, b) = (lay.v_w3, lay.v_b3);
                let wv = p.slice(w).to_vec();
                let dx = affine_back(&self.v_h2, vh, &wv, 1, &dy, grad_slot(grad, w), None, true);
                if let Some(b) = b {
                    grad[b.range()][0] += dvalue;
                }
                dx
            };
            tanh_back(&self.v_h2, &mut dh2);
            let mut dh1 = self.head_layer_back(&self.v_h1, vh, lay.v_w2, lay.v_b2, vh, &dh2, p, grad, true);
            tanh_back(&self.v_h1, &mut dh1);
            let din = self.head_layer_back(&self.v_in, self.v_in.len(), lay.v_w1, lay.v_b1, vh, &dh1, p, grad, true);
            for i in 0..n {
                for c in 0..d {
                    dn[i * d + c] += din[c] / n as f64;
                }
            }
            for e in 0..m {
                for c in 0..d {
                    de[e * d + c] += din[d + c] / m as f64;
                }
            }
        }

        // policy head
        if dscores.iter().any(|&s| s != 0.0) {
            let mut dh = self.head_layer_back(&self.p_h1, ph, lay.p_w2, lay.p_b2, 1, dscores, p, grad, true);
            tanh_back(&self.p_h1, &mut dh);
            let dedge = self.head_layer_back(&self.edges, d, lay.p_w1, lay.p_b1, ph, &dh, p, grad, true);
            de.iter_mut().zip(&dedge).for_each(|(a, b)| *a += b);
        }

        let mut dmf = vec![0.0; m * d];
        let mut dmee = vec![0.0; m * d];
        for (l, (ls, cache)) in lay.layers.iter().zip(&self.layers).enumerate().rev() {
            // n_{l+1} = n_l + mean of incident e_{l+1}
            let mut de_out = if l + 1 == self.layers.len() { std::mem::take(&mut de) } else { vec![0.0; m * d] };
            for i in 0..n {
                let inc = &g.node_edges[i];
                let inv = 1.0 / inc.len() as f64;
                for &e in inc {
                    for c in 0..d {
                        de_out[e * d + c] += dn[i * d + c] * inv;
                    }
                }
            }
            tanh_back(&cache.e_out, &mut de_out);
            let w_int = p.slice(ls.w_int).to_vec();
            let dz = {
                let (dw, rest) = split_two(grad, ls.w_int, ls.b_int);
                affine_back(&cache.z, 3 * d, &w_int, d, &de_out, dw, Some(rest), true)
            };
            let mut dne = vec![0.0; m * d];
            for e in 0..m {
                let dzr = &dz[e * 3 * d..(e + 1) * 3 * d];
                dne[e * d..(e + 1) * d].copy_from_slice(&dzr[..d]);
                for c in 0..d {
                    dmf[e * d + c] += dzr[d + c];
                    dmee[e * d + c] += dzr[2 * d + c];
                }
            }
            if cfg.n2e {
                tanh_back(&cache.ne_out, &mut dne);
                let w_ne = p.slice(ls.w_ne).to_vec();
                let dx = {
                    let (dw, db) = split_two(grad, ls.w_ne, ls.b_ne);
                    affine_back(&cache.ne_in, 2 * d, &w_ne, d, &dne, dw, Some(db), true)
                };
                for (e, edge) in g.edges.iter().enumerate() {
                    let (a, b) = edge.ends;
                    for c in 0..d {
                        dn[a * d + c] += dx[e * 2 * d + c];
                        dn[b * d + c] += dx[e * 2 * d + d + c];
                    }
                }
            }
        }

        affine_back(&feats.node, NODE_FEATURES, &[], d, &dn, grad_slot(grad, lay.w_n), None, false);
        if cfg.e2e {
            tanh_back(&self.m_ee, &mut dmee);
            affine_back(&feats.edge, EDGE_FEATURES, &[], d, &dmee, grad_slot(grad, lay.w_e), None, false);
        }
        if cfg.f2e {
            tanh_back(&self.m_f, &mut dmf);
            let nf = g.faces.len();
            let mut df = vec![0.0; nf * d];
            for e in 0..m {
                let faces = &g.edge_faces[e];
                if faces.is_empty() {
                    continue;
                }
                let inv = 1.0 / faces.len() as f64;
                for &k in faces {
                    for c in 0..d {
                        df[k * d + c] += dmf[e * d + c] * inv;
                    }
                }
            }
            affine_back(&feats.face, FACE_FEATURES, &[], d, &df, grad_slot(grad, lay.w_f), None, false);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn head_layer_back(
        &self,
        x: &[f64],
        k: usize,
        w: Slot,
        b: Option<Slot>,
        m: usize,
        dy: &[f64],
        p: &Params,
        grad: &mut [f64],
        want_dx: bool,
    ) -> Vec<f64> {
        let wv = p.slice(w).to_vec();
        let dx = affine_back(x, k, &wv, m, dy, grad_slot(grad, w), None, want_dx);
        if let Some(b) = b {
            let db = &mut grad[b.range()];
            for r in 0..dy.len() / m {
                for o in 0..m {
                    db[o] += dy[r * m + o];
                }
            }
        }
        dx
    }
}

/// Disjoint mutable views of two slots (weight first, bias second).
fn split_two(grad: &mut [f64], w: Slot, b: Slot) -> (&mut [f64], &mut [f64]) {
    assert!(w.offset + w.len() <= b.offset);
    let (head, tail) = grad.split_at_mut(b.offset);
    (&mut head[w.range()], &mut tail[..b.len()])
}
