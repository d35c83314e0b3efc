//! Globally adaptive 21-point Gauss–Kronrod quadrature over panels whose
//! abscissae are stored relative to an anchor point.
//!
//! Integrands that peak with width ~γ at a frequency ~ω_m lose all precision
//! if ω − ω_m is formed from absolute values; evaluating at `Anchored` points
//! keeps the distance to the anchor exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// A real abscissa `anchor + offset` with the offset kept separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchored {
    pub anchor: f64,
    pub offset: f64,
}

impl Anchored {
    pub fn new(anchor: f64, offset: f64) -> Self {
        Anchored { anchor, offset }
    }

    pub fn value(self) -> f64 {
        self.anchor + self.offset
    }

    /// `self − c` with the anchor difference taken first.
    pub fn minus(self, c: f64) -> f64 {
        (self.anchor - c) + self.offset
    }

    /// `self + c` with the anchor sum taken first.
    pub fn plus(self, c: f64) -> f64 {
        (self.anchor + c) + self.offset
    }

    pub fn neg(self) -> Self {
        Anchored::new(-self.anchor, -self.offset)
    }
}

impl From<f64> for Anchored {
    fn from(v: f64) -> Self {
        Anchored::new(v, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PanelKind {
    /// Offsets `a..b` from the anchor.
    Finite,
    /// `[l, ∞)` through x = l/t, t in `a..b` ⊂ (0, 1].
    UpperTail { l: f64 },
    /// `(−∞, −l]` through x = −l/t.
    LowerTail { l: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub anchor: f64,
    pub a: f64,
    pub b: f64,
    pub kind: PanelKind,
}

impl Panel {
    pub fn finite(anchor: f64, a: f64, b: f64) -> Self {
        Panel {
            anchor,
            a,
            b,
            kind: PanelKind::Finite,
        }
    }

    pub fn upper_tail(l: f64) -> Self {
        Panel {
            anchor: 0.0,
            a: 0.0,
            b: 1.0,
            kind: PanelKind::UpperTail { l },
        }
    }

    pub fn lower_tail(l: f64) -> Self {
        Panel {
            anchor: 0.0,
            a: 0.0,
            b: 1.0,
            kind: PanelKind::LowerTail { l },
        }
    }

    fn halves(&self) -> (Panel, Panel) {
        let m = 0.5 * (self.a + self.b);
        (Panel { b: m, ..*self }, Panel { a: m, ..*self })
    }

    fn splittable(&self) -> bool {
        let m = 0.5 * (self.a + self.b);
        let scale = self.a.abs().max(self.b.abs());
        m > self.a && m < self.b && (self.b - self.a) > 64.0 * f64::EPSILON * scale
    }

    /// Abscissa and Jacobian for the local variable `u`.
    fn map(&self, u: f64) -> (Anchored, f64) {
        match self.kind {
            PanelKind::Finite => (Anchored::new(self.anchor, u), 1.0),
            PanelKind::UpperTail { l } => (Anchored::new(l / u, 0.0), l / (u * u)),
            PanelKind::LowerTail { l } => (Anchored::new(-l / u, 0.0), l / (u * u)),
        }
    }
}

/// Breakpoints around resonances.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub center: f64,
    /// Smallest structure width near the centre.
    pub width: f64,
    /// Extra breakpoints as offsets from the centre.
    pub extra: Vec<f64>,
}

impl Feature {
    pub fn new(center: f64, width: f64) -> Self {
        Feature {
            center,
            width,
            extra: Vec::new(),
        }
    }

    pub fn with_extra(mut self, extra: impl IntoIterator<Item = f64>) -> Self {
        self.extra.extend(extra);
        self
    }
}

const GEOMETRIC_RATIO: f64 = 4.0;

/// Panels covering the whole real line. Each feature owns the zone up to the
/// midpoints with its neighbours and gets geometrically growing panels from
/// its width outwards; beyond ±`outer` the line is covered by mapped tails.
pub fn resonant_layout(features: &[Feature], outer: f64) -> Vec<Panel> {
    let mut feats: Vec<Feature> = Vec::new();
    for f in features {
        if !(f.center.abs() < outer) || !(f.width > 0.0) {
            continue;
        }
        if let Some(existing) = feats
            .iter_mut()
            .find(|e| (e.center - f.center).abs() < GEOMETRIC_RATIO * e.width.min(f.width))
        {
            existing.width = existing.width.min(f.width);
            existing.extra.extend(f.extra.iter().cloned());
        } else {
            feats.push(f.clone());
        }
    }
    feats.sort_by(|x, y| x.center.total_cmp(&y.center));

    let mut panels = Vec::new();
    for (i, f) in feats.iter().enumerate() {
        let lo = if i == 0 {
            -outer
        } else {
            0.5 * (feats[i - 1].center + f.center)
        };
        let hi = if i + 1 == feats.len() {
            outer
        } else {
            0.5 * (f.center + feats[i + 1].center)
        };
        let (left, right) = (lo - f.center, hi - f.center);
        let mut pts = vec![0.0, left, right];
        let mut w = f.width;
        while w < right {
            pts.push(w);
            w *= GEOMETRIC_RATIO;
        }
        let mut w = f.width;
        while -w > left {
            pts.push(-w);
            w *= GEOMETRIC_RATIO;
        }
        pts.extend(f.extra.iter().cloned().filter(|&e| e > left && e < right));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        for w in pts.windows(2) {
            panels.push(Panel::finite(f.center, w[0], w[1]));
        }
    }
    if feats.is_empty() {
        panels.push(Panel::finite(0.0, -outer, 0.0));
        panels.push(Panel::finite(0.0, 0.0, outer));
    }
    panels.push(Panel::upper_tail(outer));
    panels.push(Panel::lower_tail(outer));
    panels
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-11,
            rel: 1e-12,
            max_panels: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525452038,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

/// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

struct Evaluated<const N: usize> {
    panel: Panel,
    value: [f64; N],
    error: [f64; N],
    priority: f64,
}

impl<const N: usize> PartialEq for Evaluated<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl<const N: usize> Eq for Evaluated<N> {}
impl<const N: usize> PartialOrd for Evaluated<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Evaluated<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn gk21<const N: usize, F>(f: &F, panel: Panel) -> Evaluated<N>
where
    F: Fn(Anchored) -> [f64; N],
{
    let c = 0.5 * (panel.a + panel.b);
    let h = 0.5 * (panel.b - panel.a);
    let mut fv = [[0.0; N]; 21];
    let eval = |u: f64| {
        let (x, jac) = panel.map(u);
        let mut y = f(x);
        for v in y.iter_mut() {
            *v *= jac;
        }
        y
    };
    fv[10] = eval(c);
    for j in 0..10 {
        fv[j] = eval(c - h * XGK[j]);
        fv[20 - j] = eval(c + h * XGK[j]);
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for k in 0..N {
        let mut resk = WGK[10] * fv[10][k];
        let mut resabs = WGK[10] * fv[10][k].abs();
        let mut resg = 0.0;
        for j in 0..10 {
            let s = fv[j][k] + fv[20 - j][k];
            resk += WGK[j] * s;
            resabs += WGK[j] * (fv[j][k].abs() + fv[20 - j][k].abs());
            if j % 2 == 1 {
                resg += WG[j / 2] * s;
            }
        }
        let mean = 0.5 * resk;
        let mut resasc = WGK[10] * (fv[10][k] - mean).abs();
        for j in 0..10 {
            resasc += WGK[j] * ((fv[j][k] - mean).abs() + (fv[20 - j][k] - mean).abs());
        }
        let (resk, resabs, resasc) = (resk * h, resabs * h.abs(), resasc * h.abs());
        let mut err = ((resk - resg * h).abs()).max(0.0);
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        if !resk.is_finite() {
            err = f64::INFINITY;
        }
        value[k] = resk;
        error[k] = err;
    }
    let priority = error.iter().cloned().fold(0.0, f64::max);
    Evaluated {
        panel,
        value,
        error,
        priority,
    }
}

/// Integrates `f` over the union of `panels`.
pub fn integrate<const N: usize, F>(
    what: &str,
    f: F,
    panels: &[Panel],
    tol: Tolerance,
) -> Result<Estimate<N>>
where
    F: Fn(Anchored) -> [f64; N],
{
    let mut heap = BinaryHeap::new();
    let mut frozen_value = [0.0; N];
    let mut frozen_error = [0.0; N];
    let mut evaluations = 0;
    for &p in panels {
        heap.push(gk21(&f, p));
        evaluations += 21;
    }
    let totals = |heap: &BinaryHeap<Evaluated<N>>, fv: &[f64; N], fe: &[f64; N]| {
        let mut v = *fv;
        let mut e = *fe;
        for item in heap.iter() {
            for k in 0..N {
                v[k] += item.value[k];
                e[k] += item.error[k];
            }
        }
        (v, e)
    };
    // Components share one scale: the largest magnitude among them.
    let converged = |v: &[f64; N], e: &[f64; N]| {
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (0..N).all(|k| v[k].is_finite() && e[k] <= tol.abs.max(tol.rel * scale))
    };
    let mut count = heap.len();
    loop {
        let (v, e) = totals(&heap, &frozen_value, &frozen_error);
        if converged(&v, &e) {
            return Ok(Estimate {
                value: v,
                error: e,
                evaluations,
            });
        }
        let exhausted = count >= tol.max_panels || heap.is_empty();
        if exhausted {
            return Err(Error::NonConvergence {
                what: what.to_string(),
                estimate: v[0],
                error: e.iter().cloned().fold(0.0, f64::max),
            });
        }
        // Refine a batch of the worst panels before re-summing.
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let Some(worst) = heap.pop() else { break };
            if !worst.panel.splittable() {
                for k in 0..N {
                    frozen_value[k] += worst.value[k];
                    frozen_error[k] += worst.error[k];
                }
                continue;
            }
            let (l, r) = worst.panel.halves();
            heap.push(gk21(&f, l));
            heap.push(gk21(&f, r));
            evaluations += 42;
            count += 1;
        }
    }
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<F>(what: &str, f: F, panels: &[Panel], tol: Tolerance) -> Result<(f64, f64)>
where
    F: Fn(Anchored) -> f64,
{
    let est = integrate(what, |x| [f(x)], panels, tol)?;
    Ok((est.value[0], est.error[0]))
}
