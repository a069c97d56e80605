//! Expected Improvement and its maximisation over the unit box.

use rand::Rng;

use super::gp::GpSurrogate;
use super::lowdisc::{random_shift, shifted_halton};
use super::transform::OrderedTransform;
use crate::design::DesignPoint;
use crate::error::Result;
use crate::rng::StreamRng;
use crate::special::{norm_cdf, norm_pdf};

pub const DEFAULT_XI: f64 = 0.01;

/// Expected improvement over `best` for a normal predictive `N(mean, variance)`.
pub fn expected_improvement(mean: f64, variance: f64, best: f64, xi: f64) -> f64 {
    let sd = variance.max(0.0).sqrt();
    let gap = mean - best - xi;
    if sd <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    (gap * norm_cdf(z) + sd * norm_pdf(z)).max(0.0)
}

pub fn ei_at(gp: &GpSurrogate, x: &[f64], best: f64, xi: f64) -> f64 {
    let (m, v) = gp.predict(x);
    expected_improvement(m, v, best, xi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionSettings {
    pub xi: f64,
    pub candidates: usize,
    pub polish_starts: usize,
    pub polish_sweeps: usize,
    pub golden_iterations: usize,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        Self { xi: DEFAULT_XI, candidates: 1024, polish_starts: 4, polish_sweeps: 2, golden_iterations: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub design: DesignPoint,
    pub unit: Vec<f64>,
    pub ei: f64,
    /// The EI surface was flat zero and the point was drawn uniformly.
    pub exploratory: bool,
}

/// Golden-section maximisation of `f` on `[0, 1]`.
fn golden_max(mut f: impl FnMut(f64) -> f64, iterations: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iterations {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd { (c, fc) } else { (d, fd) }
}

/// Coordinate-wise golden-section polish; never returns a worse point.
fn polish(gp: &GpSurrogate, start: Vec<f64>, value: f64, best: f64, s: &AcquisitionSettings) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = value;
    for _ in 0..s.polish_sweeps {
        for j in 0..x.len() {
            let mut probe = x.clone();
            let (t, ft) = golden_max(
                |t| {
                    probe[j] = t;
                    ei_at(gp, &probe, best, s.xi)
                },
                s.golden_iterations,
            );
            if ft > fx {
                x[j] = t;
                fx = ft;
            }
        }
    }
    (x, fx)
}

/// Maximises EI over quasi-random candidates plus local polish and maps the
/// winner to an ordered design.
pub fn propose_next(
    gp: &GpSurrogate,
    transform: &OrderedTransform,
    best: f64,
    settings: &AcquisitionSettings,
    rng: &mut StreamRng,
) -> Result<Proposal> {
    let dim = transform.dim();
    let shift = random_shift(dim, rng);
    let mut scored: Vec<(Vec<f64>, f64)> = shifted_halton(settings.candidates, dim, &shift)
        .into_iter()
        .map(|x| {
            let e = ei_at(gp, &x, best, settings.xi);
            (x, e)
        })
        .collect();
    // stable sort keeps the candidate order on ties
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut winner: Option<(Vec<f64>, f64)> = None;
    for (x, e) in scored.into_iter().take(settings.polish_starts.max(1)) {
        let (px, pe) = polish(gp, x, e, best, settings);
        if winner.as_ref().is_none_or(|w| pe > w.1) {
            winner = Some((px, pe));
        }
    }
    let (unit, ei) = winner.expect("at least one candidate");
    if ei > 0.0 {
        return Ok(Proposal { design: transform.to_design(&unit)?, unit, ei, exploratory: false });
    }
    let unit: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    Ok(Proposal { design: transform.to_design(&unit)?, unit, ei: 0.0, exploratory: true })
}
