//! Two-dimensional Feynman diagrams: labeled graphs of propagators
//! [z − w]^{−α}, numeric evaluation by plane quadrature and the chain,
//! star–triangle and cross rewrite rules with exact prefactors.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planequad::{
    fourier_power, integrate_plane_estimate, IntegralEstimate, PlanePoint, QuadPlan, Singularity,
};
use crate::rational::Q;
use crate::specfun::{a_factor, i_pow, power_bi, BiIndex, SeparatedPoint, Spin};
use crate::symalg::{AFactorProduct, AffineExpr, Assignment, ParamValue};

/// Propagator [to − from]^{−index}, drawn as a line from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub index: AffineExpr,
}

impl Edge {
    pub fn new(from: &str, to: &str, index: AffineExpr) -> Self {
        Edge {
            from: from.to_string(),
            to: to.to_string(),
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub external_points: BTreeMap<String, C64>,
    pub internal_vertices: Vec<String>,
    pub edges: Vec<Edge>,
    pub prefactor: AFactorProduct,
    pub params: Assignment,
}

impl Diagram {
    pub fn new() -> Self {
        Diagram {
            external_points: BTreeMap::new(),
            internal_vertices: vec![],
            edges: vec![],
            prefactor: AFactorProduct::one(),
            params: Assignment::new(),
        }
    }

    pub fn point(mut self, name: &str, z: C64) -> Self {
        self.external_points.insert(name.to_string(), z);
        self
    }

    pub fn vertex(mut self, name: &str) -> Self {
        self.internal_vertices.push(name.to_string());
        self
    }

    pub fn edge(mut self, from: &str, to: &str, index: AffineExpr) -> Self {
        self.edges.push(Edge::new(from, to, index));
        self
    }

    pub fn param(mut self, name: &str, v: ParamValue) -> Self {
        self.params.set(name, v);
        self
    }

    pub fn is_vertex(&self, n: &str) -> bool {
        self.internal_vertices.iter().any(|v| v == n)
    }

    fn check_nodes(&self) -> Result<()> {
        for e in &self.edges {
            for n in [&e.from, &e.to] {
                if !self.is_vertex(n) && !self.external_points.contains_key(n) {
                    return Err(Error::Invalid(format!(
                        "edge endpoint `{n}` is neither a vertex nor a point"
                    )));
                }
            }
            if e.from == e.to {
                return Err(Error::Invalid(format!("self-loop at `{}`", e.from)));
            }
        }
        let mut seen = BTreeSet::new();
        for v in &self.internal_vertices {
            if self.external_points.contains_key(v) || !seen.insert(v) {
                return Err(Error::Invalid(format!("vertex name `{v}` clashes")));
            }
        }
        Ok(())
    }

    fn node_key<'a>(&self, n: &'a str) -> (bool, &'a str) {
        (self.is_vertex(n), n)
    }

    /// Edges oriented by endpoint order (points before vertices, then by
    /// name), parallel lines merged, zero lines dropped, edges sorted.
    pub fn normalize(&self) -> Diagram {
        let mut d = self.clone();
        let mut merged: BTreeMap<(String, String), AffineExpr> = BTreeMap::new();
        for e in &self.edges {
            let (from, to, idx) = if self.node_key(&e.from) > self.node_key(&e.to) {
                d.prefactor.sign_power = d.prefactor.sign_power.clone() + e.index.clone();
                (e.to.clone(), e.from.clone(), e.index.clone())
            } else {
                (e.from.clone(), e.to.clone(), e.index.clone())
            };
            let slot = merged.entry((from, to)).or_insert_with(AffineExpr::zero);
            *slot = slot.clone() + idx;
        }
        d.edges = merged
            .into_iter()
            .filter(|(_, idx)| *idx != AffineExpr::zero())
            .map(|((from, to), index)| Edge { from, to, index })
            .collect();
        d
    }

    /// Reverses one edge, compensating with (−1)^{[index]}.
    pub fn flip_edge(&self, k: usize) -> Result<Diagram> {
        let mut d = self.clone();
        let e = d
            .edges
            .get_mut(k)
            .ok_or_else(|| Error::Invalid(format!("no edge {k}")))?;
        std::mem::swap(&mut e.from, &mut e.to);
        d.prefactor.sign_power = d.prefactor.sign_power.clone() + e.index.clone();
        Ok(d)
    }

    pub fn incident(&self, v: &str) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&k| self.edges[k].from == v || self.edges[k].to == v)
            .collect()
    }

    fn assignment(&self) -> Assignment {
        let mut a = self.params.clone();
        for (n, z) in &self.external_points {
            a.set_base(n, *z);
        }
        a
    }

    fn numeric_edges(&self) -> Result<Vec<(String, String, BiIndex)>> {
        let a = self.assignment();
        self.edges
            .iter()
            .map(|e| Ok((e.from.clone(), e.to.clone(), e.index.eval(&a)?)))
            .collect()
    }

    /// Canonical prefactor, with sign and phase exponents reduced for
    /// parameters carrying integer gaps.
    pub fn canonical_prefactor(&self) -> AFactorProduct {
        self.prefactor
            .canonicalize_integral(&self.params.integral_params())
    }

    pub fn prefactor_value(&self) -> Result<C64> {
        self.prefactor.eval(&self.assignment())
    }
}

impl Default for Diagram {
    fn default() -> Self {
        Self::new()
    }
}

fn without_vertex(d: &Diagram, v: &str) -> Diagram {
    let mut out = d.clone();
    out.internal_vertices.retain(|x| x != v);
    out.edges.retain(|e| e.from != v && e.to != v);
    out
}

/// Edge k written as pointing away from `v`: (other end, index, flipped).
fn outward(d: &Diagram, k: usize, v: &str) -> (String, AffineExpr, bool) {
    let e = &d.edges[k];
    if e.from == v {
        (e.to.clone(), e.index.clone(), false)
    } else {
        (e.from.clone(), e.index.clone(), true)
    }
}

fn pi_a(es: &[AffineExpr]) -> AFactorProduct {
    es.iter()
        .fold(AFactorProduct::scalar(Q::from_integer(1), 1), |p, e| {
            p.times(&AFactorProduct::a(e.clone()))
        })
}

/// ∫d²w [z1−w]^{−α}[w−z2]^{−β} = π(−1)^{[γ]} a(α,β,γ) [z1−z2]^{1−α−β}, γ = 2−α−β.
pub fn rewrite_chain(d: &Diagram, vertex: &str) -> Result<Diagram> {
    d.check_nodes()?;
    let d = d.normalize();
    if !d.is_vertex(vertex) {
        return Err(Error::Pattern(format!(
            "`{vertex}` is not an internal vertex"
        )));
    }
    let inc = d.incident(vertex);
    if inc.len() != 2 {
        return Err(Error::Pattern(format!(
            "chain needs degree 2 at `{vertex}`, found {}",
            inc.len()
        )));
    }
    let mut out = without_vertex(&d, vertex);
    // first edge as w → z1, second as z2 → w
    let (z1, alpha, f1) = outward(&d, inc[0], vertex);
    let (z2, beta, f2) = outward(&d, inc[1], vertex);
    let mut sign = AffineExpr::zero();
    if f1 {
        sign = sign + alpha.clone();
    }
    if !f2 {
        sign = sign + beta.clone();
    }
    let gamma = AffineExpr::int(2) - alpha.clone() - beta.clone();
    out.prefactor = out
        .prefactor
        .times(&AFactorProduct::sign(sign + gamma.clone()))
        .times(&pi_a(&[alpha.clone(), beta.clone(), gamma]));
    out.edges.push(Edge {
        from: z2,
        to: z1,
        index: alpha + beta - AffineExpr::int(1),
    });
    Ok(out.normalize())
}

/// ∫d²w Π_k [z_k − w]^{−α_k} with Σα_k = 2 becomes
/// π a(α₁,α₂,α₃) [z₂−z₁]^{α₃−1}[z₁−z₃]^{α₂−1}[z₃−z₂]^{α₁−1}.
pub fn rewrite_star_triangle(d: &Diagram, vertex: &str) -> Result<Diagram> {
    d.check_nodes()?;
    let d = d.normalize();
    if !d.is_vertex(vertex) {
        return Err(Error::Pattern(format!(
            "`{vertex}` is not an internal vertex"
        )));
    }
    let inc = d.incident(vertex);
    if inc.len() != 3 {
        return Err(Error::Pattern(format!(
            "star needs degree 3 at `{vertex}`, found {}",
            inc.len()
        )));
    }
    let legs: Vec<(String, AffineExpr, bool)> =
        inc.iter().map(|&k| outward(&d, k, vertex)).collect();
    let total = legs.iter().fold(AffineExpr::zero(), |s, l| s + l.1.clone());
    if total != AffineExpr::int(2) {
        return Err(Error::Constraint(format!(
            "star–triangle needs α+β+γ = 2 in both slots, got {total}"
        )));
    }
    let mut out = without_vertex(&d, vertex);
    let mut sign = AffineExpr::zero();
    for l in &legs {
        if l.2 {
            sign = sign + l.1.clone();
        }
    }
    let one = AffineExpr::int(1);
    let (z1, a) = (&legs[0].0, &legs[0].1);
    let (z2, b) = (&legs[1].0, &legs[1].1);
    let (z3, c) = (&legs[2].0, &legs[2].1);
    out.prefactor = out
        .prefactor
        .times(&AFactorProduct::sign(sign))
        .times(&pi_a(&[a.clone(), b.clone(), c.clone()]));
    out.edges.push(Edge::new(z1, z2, one.clone() - c.clone()));
    out.edges.push(Edge::new(z3, z1, one.clone() - b.clone()));
    out.edges.push(Edge::new(z2, z3, one - a.clone()));
    Ok(out.normalize())
}

/// Cross relation at a degree-4 vertex whose lines, taken as pointing into
/// the vertex from `points` z₁..z₄, carry (α, 1−α′, β, 1−β′).
pub fn rewrite_cross(
    d: &Diagram,
    vertex: &str,
    points: [&str; 4],
    alpha_p: &AffineExpr,
    beta_p: &AffineExpr,
) -> Result<Diagram> {
    d.check_nodes()?;
    let d = d.normalize();
    if !d.is_vertex(vertex) {
        return Err(Error::Pattern(format!(
            "`{vertex}` is not an internal vertex"
        )));
    }
    let inc = d.incident(vertex);
    if inc.len() != 4 {
        return Err(Error::Pattern(format!(
            "cross needs degree 4 at `{vertex}`, found {}",
            inc.len()
        )));
    }
    let mut idx: Vec<AffineExpr> = vec![];
    let mut sign = AffineExpr::zero();
    for z in points {
        let k = inc
            .iter()
            .copied()
            .find(|&k| d.edges[k].from == z || d.edges[k].to == z)
            .ok_or_else(|| Error::Pattern(format!("no line between `{z}` and `{vertex}`")))?;
        let (_, i, flipped) = outward(&d, k, vertex);
        // into the vertex: z → w, i.e. not outward
        if !flipped {
            sign = sign + i.clone();
        }
        idx.push(i);
    }
    let one = AffineExpr::int(1);
    let alpha = idx[0].clone();
    let beta = idx[2].clone();
    if idx[1] != one.clone() - alpha_p.clone() || idx[3] != one.clone() - beta_p.clone() {
        return Err(Error::Constraint(format!(
            "cross pattern needs lines (α, 1−α′, β, 1−β′); got {} and {} for α′ = {alpha_p}, β′ = {beta_p}",
            idx[1], idx[3]
        )));
    }
    if alpha.clone() + beta.clone() != alpha_p.clone() + beta_p.clone() {
        return Err(Error::Constraint(format!(
            "cross relation needs α+β = α′+β′: {} ≠ {}",
            alpha.clone() + beta.clone(),
            alpha_p.clone() + beta_p.clone()
        )));
    }
    let mut out = without_vertex(&d, vertex);
    out.internal_vertices.push(vertex.to_string());
    let new_idx = [
        alpha_p.clone(),
        one.clone() - alpha.clone(),
        beta_p.clone(),
        one - beta.clone(),
    ];
    for (z, i) in points.iter().zip(new_idx) {
        out.edges.push(Edge::new(z, vertex, i));
    }
    out.edges.push(Edge::new(
        points[1],
        points[0],
        alpha.clone() - alpha_p.clone(),
    ));
    out.edges.push(Edge::new(
        points[3],
        points[2],
        beta.clone() - beta_p.clone(),
    ));
    out.prefactor = out
        .prefactor
        .times(&AFactorProduct::sign(sign))
        .times(&AFactorProduct::a(alpha))
        .times(&AFactorProduct::a(beta.swap()))
        .times(&AFactorProduct::inv_a(alpha_p.clone()))
        .times(&AFactorProduct::inv_a(beta_p.swap()));
    Ok(out.normalize())
}

// ---------------------------------------------------------------------------
// numeric evaluation

#[derive(Debug, Clone)]
struct NEdge {
    from: Node,
    to: Node,
    neg: BiIndex,
    sum: C64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Pt(C64),
    Hub,
    Leaf(usize),
}

fn window_error(v: &str, msg: String) -> Error {
    Error::Plan(format!("vertex `{v}`: {msg}"))
}

fn check_vertex_window(v: &str, sums: &[C64]) -> Result<()> {
    for s in sums {
        if s.re >= 2.0 {
            return Err(window_error(
                v,
                format!("line with Re(α+ᾱ) = {} ≥ 2 is not integrable", s.re),
            ));
        }
    }
    let tot: f64 = sums.iter().map(|s| s.re).sum();
    if tot <= 2.0 {
        return Err(window_error(
            v,
            format!("Σ Re(α+ᾱ) = {tot} ≤ 2, no decay at infinity"),
        ));
    }
    Ok(())
}

/// Π [to − from]^{−α} over lines with one end at the point `at` standing for `who`.
fn leg_product(
    edges: &[NEdge],
    who: Node,
    at: &PlanePoint,
    pos: &dyn Fn(Node) -> C64,
) -> Result<C64> {
    let mut v = C64::new(1.0, 0.0);
    for e in edges {
        let diff = if e.to == who {
            at.minus(pos(e.from))
        } else if e.from == who {
            -at.minus(pos(e.to))
        } else {
            continue;
        };
        v *= power_bi(diff, &e.neg)?;
    }
    Ok(v)
}

/// Value of the diagram: prefactor × ∫ Π d²w Π propagators.
pub fn eval_diagram(d: &Diagram, target_rel_error: f64) -> Result<IntegralEstimate> {
    d.check_nodes()?;
    let d = d.normalize();
    let pref = d.prefactor_value()?;
    let raw = d.numeric_edges()?;
    let nv = d.internal_vertices.len();
    let node = |n: &str, hub: Option<&str>, leaves: &[String]| -> Node {
        if Some(n) == hub {
            Node::Hub
        } else if let Some(i) = leaves.iter().position(|l| l == n) {
            Node::Leaf(i)
        } else {
            Node::Pt(d.external_points[n])
        }
    };
    let hub_name: Option<String> = match nv {
        0 => None,
        1 => Some(d.internal_vertices[0].clone()),
        _ => {
            let h = d.internal_vertices.iter().find(|h| {
                d.edges.iter().all(|e| {
                    !(d.is_vertex(&e.from) && d.is_vertex(&e.to)) || e.from == **h || e.to == **h
                })
            });
            Some(
                h.ok_or_else(|| {
                    Error::Plan(
                        "diagram has lines between non-hub vertices; rewrite it to at most one hub with independent leaves first"
                            .into(),
                    )
                })?
                .clone(),
            )
        }
    };
    let leaves: Vec<String> = d
        .internal_vertices
        .iter()
        .filter(|v| Some(*v) != hub_name.as_ref())
        .cloned()
        .collect();
    let edges: Vec<NEdge> = raw
        .iter()
        .map(|(f, t, i)| NEdge {
            from: node(f, hub_name.as_deref(), &leaves),
            to: node(t, hub_name.as_deref(), &leaves),
            neg: i.neg(),
            sum: i.sum(),
        })
        .collect();

    let mut pref = pref;
    for e in &edges {
        if let (Node::Pt(a), Node::Pt(b)) = (e.from, e.to) {
            pref *= power_bi(b - a, &e.neg)?;
        }
    }
    let Some(hub) = hub_name else {
        return Ok(IntegralEstimate {
            value: pref,
            abs_error_estimate: 0.0,
            evaluations: 0,
            converged: true,
        });
    };

    // windows: leaves are ordinary vertices; the hub sees each leaf through
    // its integrated line
    for (i, l) in leaves.iter().enumerate() {
        let sums: Vec<C64> = edges
            .iter()
            .filter(|e| e.from == Node::Leaf(i) || e.to == Node::Leaf(i))
            .map(|e| e.sum)
            .collect();
        check_vertex_window(l, &sums)?;
    }
    let mut hub_sings: Vec<Singularity> = vec![];
    let mut hub_decay = C64::new(0.0, 0.0);
    for e in &edges {
        let other = match (e.from, e.to) {
            (Node::Hub, o) | (o, Node::Hub) => o,
            _ => continue,
        };
        match other {
            Node::Pt(z) => {
                if e.sum.re >= 2.0 {
                    return Err(window_error(
                        &hub,
                        format!("line with Re(α+ᾱ) = {} ≥ 2", e.sum.re),
                    ));
                }
                hub_sings.push(Singularity {
                    location: z,
                    strength: e.neg.neg(),
                });
                hub_decay += e.sum;
            }
            Node::Leaf(i) => {
                let rest: C64 = edges
                    .iter()
                    .filter(|f| {
                        (f.from == Node::Leaf(i) || f.to == Node::Leaf(i))
                            && f.from != Node::Hub
                            && f.to != Node::Hub
                    })
                    .map(|f| f.sum)
                    .sum();
                for f in &edges {
                    let p = match (f.from, f.to) {
                        (Node::Leaf(j), Node::Pt(p)) | (Node::Pt(p), Node::Leaf(j)) if j == i => p,
                        _ => continue,
                    };
                    let eff = BiIndex::with_gap(
                        e.neg.neg().alpha() + f.neg.neg().alpha() - 1.0,
                        e.neg.neg().gap() + f.neg.neg().gap(),
                    );
                    hub_sings.push(Singularity {
                        location: p,
                        strength: eff,
                    });
                }
                let lead = if rest.re > 2.0 {
                    e.sum
                } else {
                    e.sum + rest - 2.0
                };
                hub_decay += lead;
            }
            Node::Hub => {}
        }
    }
    if hub_decay.re <= 2.0 {
        return Err(window_error(
            &hub,
            format!("effective decay Re D = {} ≤ 2", hub_decay.re),
        ));
    }
    let mut plan = QuadPlan::new(hub_sings, hub_decay).map_err(|e| match e {
        Error::Plan(m) => window_error(&hub, m),
        o => o,
    })?;
    plan = plan.with_tol(target_rel_error);
    let inner_tol = target_rel_error * 0.1;
    let inner_evals = AtomicU64::new(0);
    let inner_err = AtomicU64::new(0f64.to_bits());
    let hub_node = Node::Hub;
    let direct: Vec<NEdge> = edges
        .iter()
        .filter(|e| !matches!(e.from, Node::Leaf(_)) && !matches!(e.to, Node::Leaf(_)))
        .cloned()
        .collect();
    // a leaf joined only to the hub and one point p is, after u = p + (w−p)t,
    // K [w−p]^{1−Σα}: one plane integral in t gives it for every w
    let mut scaled: Vec<Option<(C64, BiIndex)>> = vec![None; leaves.len()];
    for (i, lname) in leaves.iter().enumerate() {
        let me = Node::Leaf(i);
        let mine: Vec<NEdge> = edges
            .iter()
            .filter(|e| e.from == me || e.to == me)
            .cloned()
            .collect();
        let pts: Vec<C64> = mine
            .iter()
            .filter_map(|e| match (e.from, e.to) {
                (Node::Pt(p), _) | (_, Node::Pt(p)) => Some(p),
                _ => None,
            })
            .collect();
        if mine.len() != 2 || pts.len() != 1 {
            continue;
        }
        let unit = |n: Node| match n {
            Node::Pt(_) => C64::new(0.0, 0.0),
            _ => C64::new(1.0, 0.0),
        };
        let sings: Vec<Singularity> = mine
            .iter()
            .map(|e| {
                let other = if e.from == me { e.to } else { e.from };
                Singularity {
                    location: unit(other),
                    strength: e.neg.neg(),
                }
            })
            .collect();
        let decay: C64 = mine.iter().map(|e| e.sum).sum();
        let lp = QuadPlan::new(sings, decay)
            .map_err(|e| window_error(lname, e.to_string()))?
            .with_tol(inner_tol);
        let k = integrate_plane_estimate(|u: &PlanePoint| leg_product(&mine, me, u, &unit), &lp)?;
        inner_evals.fetch_add(k.evaluations, Ordering::Relaxed);
        let rel = k.abs_error_estimate / k.value.norm().max(1e-300);
        let _ = inner_err.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |old| {
            Some(f64::from_bits(old).max(rel).to_bits())
        });
        let sa: C64 = mine.iter().map(|e| e.neg.neg().alpha()).sum();
        let sg: i64 = mine.iter().map(|e| e.neg.neg().gap()).sum();
        let expo = BiIndex::with_gap(C64::new(1.0, 0.0) - sa, -sg);
        scaled[i] = Some((k.value, expo));
    }
    let scaled_pt: Vec<Option<C64>> = leaves
        .iter()
        .enumerate()
        .map(|(i, _)| {
            scaled[i].as_ref()?;
            edges.iter().find_map(|e| match (e.from, e.to) {
                (Node::Leaf(j), Node::Pt(p)) | (Node::Pt(p), Node::Leaf(j)) if j == i => Some(p),
                _ => None,
            })
        })
        .collect();
    let est = integrate_plane_estimate(
        |w: &PlanePoint| {
            let wz = w.z();
            let pos = |n: Node| match n {
                Node::Pt(z) => z,
                Node::Hub => wz,
                Node::Leaf(_) => unreachable!(),
            };
            let mut v = leg_product(&direct, hub_node, w, &pos)?;
            for (i, lname) in leaves.iter().enumerate() {
                if let (Some((k, expo)), Some(p)) = (&scaled[i], scaled_pt[i]) {
                    v *= k * power_bi(w.minus(p), expo)?;
                    continue;
                }
                let me = Node::Leaf(i);
                let mine: Vec<NEdge> = edges
                    .iter()
                    .filter(|e| e.from == me || e.to == me)
                    .cloned()
                    .collect();
                let sings: Vec<Singularity> = mine
                    .iter()
                    .map(|e| {
                        let other = if e.from == me { e.to } else { e.from };
                        Singularity {
                            location: pos(other),
                            strength: e.neg.neg(),
                        }
                    })
                    .collect();
                let decay: C64 = mine.iter().map(|e| e.sum).sum();
                let lp = QuadPlan::new(sings, decay)
                    .map_err(|e| window_error(lname, e.to_string()))?
                    .with_tol(inner_tol);
                let inner =
                    integrate_plane_estimate(|u: &PlanePoint| leg_product(&mine, me, u, &pos), &lp)
                        .map_err(|e| match e {
                            Error::NonConvergence { what, estimate } => Error::NonConvergence {
                                what: format!("{what} at vertex `{lname}`"),
                                estimate,
                            },
                            o => o,
                        })?;
                inner_evals.fetch_add(inner.evaluations, Ordering::Relaxed);
                let rel = inner.abs_error_estimate / inner.value.norm().max(1e-300);
                let _ = inner_err.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |old| {
                    Some(f64::from_bits(old).max(rel).to_bits())
                });
                v *= inner.value;
            }
            Ok(v)
        },
        &plan,
    )
    .map_err(|e| match e {
        Error::NonConvergence { what, estimate } => Error::NonConvergence {
            what: format!("{what} at vertex `{hub}`"),
            estimate,
        },
        o => o,
    })?;
    let inner_rel = f64::from_bits(inner_err.load(Ordering::Relaxed));
    let err = est.abs_error_estimate + inner_rel * est.value.norm();
    let converged = est.converged && inner_rel <= inner_tol.max(target_rel_error);
    Ok(IntegralEstimate {
        value: est.value * pref,
        abs_error_estimate: err * pref.norm(),
        evaluations: est.evaluations + inner_evals.load(Ordering::Relaxed),
        converged,
    })
}

// ---------------------------------------------------------------------------
// verification drivers

/// Outcome of comparing a quadrature side with a closed form or a second
/// quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub relation: String,
    pub lhs: C64,
    pub rhs: C64,
    pub lhs_error: f64,
    pub rhs_error: f64,
    pub rel_deviation: f64,
    pub target: f64,
    pub pass: bool,
    pub evaluations: u64,
}

impl RelationCheck {
    pub fn new(
        relation: &str,
        lhs: &IntegralEstimate,
        rhs: &IntegralEstimate,
        target: f64,
    ) -> Self {
        let dev = (lhs.value - rhs.value).norm() / rhs.value.norm().max(1e-300);
        RelationCheck {
            relation: relation.to_string(),
            lhs: lhs.value,
            rhs: rhs.value,
            lhs_error: lhs.abs_error_estimate,
            rhs_error: rhs.abs_error_estimate,
            rel_deviation: dev,
            target,
            pass: dev <= target && dev.is_finite(),
            evaluations: lhs.evaluations + rhs.evaluations,
        }
    }
}

fn idx_param(name: &str) -> AffineExpr {
    AffineExpr::param(name)
}

/// ∫d²w [z1−w]^{−α}[w−z2]^{−β}.
pub fn chain_diagram(z1: C64, z2: C64, alpha: &BiIndex, beta: &BiIndex) -> Diagram {
    Diagram::new()
        .point("z1", z1)
        .point("z2", z2)
        .vertex("w")
        .edge("w", "z1", idx_param("a"))
        .edge("z2", "w", idx_param("b"))
        .param("a", ParamValue::index(alpha))
        .param("b", ParamValue::index(beta))
}

/// ∫d²w Π_k [z_k − w]^{−α_k} with α₃ = 2 − α₁ − α₂.
pub fn star_diagram(z: [C64; 3], alpha: &BiIndex, beta: &BiIndex) -> Diagram {
    let gamma = AffineExpr::int(2) - idx_param("a") - idx_param("b");
    Diagram::new()
        .point("z1", z[0])
        .point("z2", z[1])
        .point("z3", z[2])
        .vertex("w")
        .edge("w", "z1", idx_param("a"))
        .edge("w", "z2", idx_param("b"))
        .edge("w", "z3", gamma)
        .param("a", ParamValue::index(alpha))
        .param("b", ParamValue::index(beta))
}

/// Left side of the cross relation with β′ = α + β − α′.
pub fn cross_diagram(z: [C64; 4], alpha: &BiIndex, beta: &BiIndex, alpha_p: &BiIndex) -> Diagram {
    let one = AffineExpr::int(1);
    let bp = idx_param("a") + idx_param("b") - idx_param("ap");
    Diagram::new()
        .point("z1", z[0])
        .point("z2", z[1])
        .point("z3", z[2])
        .point("z4", z[3])
        .vertex("w")
        .edge("z1", "w", idx_param("a"))
        .edge("z2", "w", one.clone() - idx_param("ap"))
        .edge("z3", "w", idx_param("b"))
        .edge("z4", "w", one - bp.clone())
        .edge("z2", "z1", idx_param("ap") - idx_param("a"))
        .param("a", ParamValue::index(alpha))
        .param("b", ParamValue::index(beta))
        .param("ap", ParamValue::index(alpha_p))
}

fn cross_rewrite(d: &Diagram) -> Result<Diagram> {
    let bp = idx_param("a") + idx_param("b") - idx_param("ap");
    // the left side also carries a(α′)a(β̄′) in front
    let mut lhs = d.clone();
    lhs.prefactor = lhs
        .prefactor
        .times(&AFactorProduct::a(idx_param("ap")))
        .times(&AFactorProduct::a(bp.swap()));
    let rhs = rewrite_cross(&lhs, "w", ["z1", "z2", "z3", "z4"], &idx_param("ap"), &bp)?;
    Ok(rhs)
}

pub fn verify_chain(
    z1: C64,
    z2: C64,
    alpha: &BiIndex,
    beta: &BiIndex,
    target: f64,
) -> Result<RelationCheck> {
    let d = chain_diagram(z1, z2, alpha, beta);
    let lhs = eval_diagram(&d, target * 0.01)?;
    let rhs = eval_diagram(&rewrite_chain(&d, "w")?, target)?;
    Ok(RelationCheck::new("chain", &lhs, &rhs, target))
}

pub fn verify_star(
    z: [C64; 3],
    alpha: &BiIndex,
    beta: &BiIndex,
    target: f64,
) -> Result<RelationCheck> {
    let d = star_diagram(z, alpha, beta);
    let rhs = eval_diagram(&rewrite_star_triangle(&d, "w")?, target)?;
    let lhs = eval_diagram(&d, target * 0.01)?;
    Ok(RelationCheck::new("star", &lhs, &rhs, target))
}

/// Both sides of the cross relation by quadrature.
pub fn verify_cross(
    z: [C64; 4],
    alpha: &BiIndex,
    beta: &BiIndex,
    alpha_p: &BiIndex,
    target: f64,
) -> Result<RelationCheck> {
    let d = cross_diagram(z, alpha, beta, alpha_p);
    let rhs_d = cross_rewrite(&d)?;
    let mut lhs_d = d.clone();
    let bp = idx_param("a") + idx_param("b") - idx_param("ap");
    lhs_d.prefactor = lhs_d
        .prefactor
        .times(&AFactorProduct::a(idx_param("ap")))
        .times(&AFactorProduct::a(bp.swap()));
    let lhs = eval_diagram(&lhs_d, target * 0.01)?;
    let rhs = eval_diagram(&rhs_d, target * 0.01)?;
    Ok(RelationCheck::new("cross", &lhs, &rhs, target))
}

/// ∫d²z e^{i(pz+p̄z̄)}[z]^{−α} against π i^{[α]} a(α) [p]^{α−1}.
pub fn verify_fourier(alpha: &BiIndex, p: C64, target: f64) -> Result<RelationCheck> {
    let plan = QuadPlan::oscillatory(vec![], p)?.with_tol(target * 0.01);
    let lhs = fourier_power(alpha, p, &plan)?;
    let rhs = PI
        * i_pow(alpha.gap())
        * a_factor(alpha)?
        * power_bi(p, &alpha.shift(C64::new(-1.0, 0.0)))?;
    let rhs = IntegralEstimate {
        value: rhs,
        abs_error_estimate: 0.0,
        evaluations: 0,
        converged: true,
    };
    Ok(RelationCheck::new("fourier", &lhs, &rhs, target))
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSpec {
    BiIndex(BiIndex),
    Spin { n_s: i64, nu_s: f64 },
    Point { n: i64, nu: C64 },
    Mellin { n2: i64, nu: C64 },
}

impl ParamSpec {
    pub fn value(&self) -> Result<ParamValue> {
        let check = |x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::Parse("non-finite parameter".into()))
            }
        };
        Ok(match self {
            ParamSpec::BiIndex(b) => {
                check(b.alpha().re + b.alpha().im)?;
                ParamValue::index(b)
            }
            ParamSpec::Spin { n_s, nu_s } => {
                check(*nu_s)?;
                ParamValue::spin(&Spin::new(*n_s, *nu_s))
            }
            ParamSpec::Point { n, nu } => {
                check(nu.re + nu.im)?;
                ParamValue::point(&SeparatedPoint::new(*n, *nu))
            }
            ParamSpec::Mellin { n2, nu } => {
                check(nu.re + nu.im)?;
                ParamValue::mellin(*n2, *nu)
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramRepr {
    pub external_points: BTreeMap<String, C64>,
    #[serde(default)]
    pub internal_vertices: Vec<String>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub prefactor: Option<AFactorProduct>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamSpec>,
}

impl Diagram {
    pub fn from_json(s: &str) -> Result<Diagram> {
        let r: DiagramRepr = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Diagram::try_from(r)
    }

    /// JSON with parameter values as given; spin and point parameters are
    /// written back as bi-indices of their slots.
    pub fn to_json(&self, params: &BTreeMap<String, ParamSpec>) -> String {
        let r = DiagramRepr {
            external_points: self.external_points.clone(),
            internal_vertices: self.internal_vertices.clone(),
            edges: self.edges.clone(),
            prefactor: Some(self.prefactor.clone()),
            params: params.clone(),
        };
        serde_json::to_string(&r).expect("serializable")
    }
}

impl TryFrom<DiagramRepr> for Diagram {
    type Error = Error;
    fn try_from(r: DiagramRepr) -> Result<Diagram> {
        let mut d = Diagram::new();
        for (n, z) in r.external_points {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Parse(format!("point `{n}` is not finite")));
            }
            d.external_points.insert(n, z);
        }
        d.internal_vertices = r.internal_vertices;
        d.edges = r.edges;
        if let Some(p) = r.prefactor {
            d.prefactor = p;
        }
        for (n, spec) in r.params {
            d.params.set(&n, spec.value()?);
        }
        d.check_nodes()?;
        Ok(d)
    }
}

/// Exact (−1)^{[E]} as applied by orientation changes; exposed for tests.
pub fn orientation_sign(idx: &AffineExpr, a: &Assignment) -> Result<i64> {
    let (_, _, g) = idx.eval_slots(a)?;
    let n = g
        .as_integer()
        .ok_or_else(|| Error::Invalid(format!("gap {g} not integral")))?;
    Ok(if n.rem_euclid(2) == 0 { 1 } else { -1 })
}
