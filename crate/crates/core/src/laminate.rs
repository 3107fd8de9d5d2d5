//! Random laminates: stationary renewal layer processes along e3.

use crate::phase::{Phase, PhaseTable, Quantity};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-phase layer-width distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WidthLaw {
    /// Deterministic width per phase.
    Fixed { widths: Vec<f64> },
    /// Exponential width with the given mean per phase.
    Exponential { means: Vec<f64> },
}

impl WidthLaw {
    pub fn mean_widths(&self) -> &[f64] {
        match self {
            WidthLaw::Fixed { widths } => widths,
            WidthLaw::Exponential { means } => means,
        }
    }

    pub fn min_mean(&self) -> f64 {
        self.mean_widths().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateSpec {
    pub table: PhaseTable,
    pub width_law: WidthLaw,
}

impl LaminateSpec {
    pub fn fixed_equal_widths(table: PhaseTable, width: f64) -> Result<Self> {
        let n = table.len();
        let spec = LaminateSpec {
            table,
            width_law: WidthLaw::Fixed {
                widths: vec![width; n],
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.table.validate()?;
        let widths = self.width_law.mean_widths();
        if widths.len() != self.table.len() {
            return Err(Error::InvalidSpec(format!(
                "{} widths for {} phases",
                widths.len(),
                self.table.len()
            )));
        }
        if widths.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidSpec("widths must be positive and finite".into()));
        }
        Ok(())
    }
}

/// One sampled trajectory of the layer process, covering a window [0, L].
///
/// The layer containing the origin is drawn from the equilibrium (length
/// biased) law and the origin is placed uniformly inside it, which makes the
/// process stationary in law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateRealization {
    /// Strictly increasing; breakpoints[0] <= 0 < L <= breakpoints[last].
    pub breakpoints: Vec<f64>,
    /// Phase index of the interval [breakpoints[j], breakpoints[j+1]).
    pub phase_index: Vec<usize>,
    pub table: PhaseTable,
    pub seed: u64,
    /// Uniform shift of the origin inside the first layer.
    pub offset: f64,
    /// Window length the realization covers.
    pub window: f64,
}

fn draw_phase(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn draw_width(rng: &mut ChaCha8Rng, law: &WidthLaw, phase: usize) -> f64 {
    match law {
        WidthLaw::Fixed { widths } => widths[phase],
        WidthLaw::Exponential { means } => {
            let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            -means[phase] * u.ln()
        }
    }
}

/// Length-biased draw of the layer straddling the origin.
fn draw_equilibrium_layer(rng: &mut ChaCha8Rng, spec: &LaminateSpec) -> (usize, f64) {
    let means = spec.width_law.mean_widths();
    let z: f64 = spec
        .table
        .probabilities
        .iter()
        .zip(means)
        .map(|(&p, &w)| p * w)
        .sum();
    let u: f64 = rng.gen::<f64>() * z;
    let mut acc = 0.0;
    let mut phase = spec.table.len() - 1;
    for (i, (&p, &w)) in spec.table.probabilities.iter().zip(means).enumerate() {
        acc += p * w;
        if u < acc {
            phase = i;
            break;
        }
    }
    let width = match &spec.width_law {
        WidthLaw::Fixed { widths } => widths[phase],
        WidthLaw::Exponential { means } => {
            // length-biased exponential = Gamma(2, mean): sum of two exponentials
            let e1 = -f64::ln(rng.gen::<f64>().max(f64::MIN_POSITIVE));
            let e2 = -f64::ln(rng.gen::<f64>().max(f64::MIN_POSITIVE));
            means[phase] * (e1 + e2)
        }
    };
    (phase, width)
}

/// Sample an equilibrium renewal laminate covering [0, L].
pub fn sample_laminate(spec: &LaminateSpec, seed: u64, window: f64) -> Result<LaminateRealization> {
    spec.validate()?;
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::InvalidSpec(format!("window L = {} must be positive", window)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (phase0, width0) = draw_equilibrium_layer(&mut rng, spec);
    let offset: f64 = rng.gen::<f64>() * width0;

    let mut breakpoints = vec![-offset];
    let mut phase_index = Vec::new();
    let mut cursor = -offset + width0;
    breakpoints.push(cursor);
    phase_index.push(phase0);
    while cursor < window {
        let phase = draw_phase(&mut rng, &spec.table.probabilities);
        let width = draw_width(&mut rng, &spec.width_law, phase);
        cursor += width;
        breakpoints.push(cursor);
        phase_index.push(phase);
    }
    Ok(LaminateRealization {
        breakpoints,
        phase_index,
        table: spec.table.clone(),
        seed,
        offset,
        window,
    })
}

impl LaminateRealization {
    pub fn covered(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn n_layers(&self) -> usize {
        self.phase_index.len()
    }

    pub fn min_layer_width(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the layer containing y; left-closed right-open intervals.
    pub fn layer_at(&self, y: f64) -> Result<usize> {
        let (lo, hi) = self.covered();
        if y < lo || y >= hi {
            return Err(Error::WindowExceeded {
                lo: y,
                hi: y,
                cov_lo: lo,
                cov_hi: hi,
            });
        }
        let j = self.breakpoints.partition_point(|&b| b <= y);
        Ok(j - 1)
    }

    /// Phase at the microscale point y = x3 / eps.
    pub fn phase_at(&self, y: f64) -> Result<&Phase> {
        let j = self.layer_at(y)?;
        Ok(&self.table.phases[self.phase_index[j]])
    }

    /// Coefficients of the eps-oscillating field at the physical point x3.
    pub fn eval(&self, x3: f64, eps: f64) -> Result<&Phase> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Invalid(format!("eps = {} must be positive", eps)));
        }
        self.phase_at(x3 / eps)
    }

    /// Exact spatial average (1/t) * integral_0^t q(y) dy over the
    /// piecewise-constant structure.
    pub fn birkhoff_average(&self, q: Quantity, t: f64) -> Result<f64> {
        let (lo, hi) = self.covered();
        if !(t.is_finite() && t > 0.0) || t > hi || lo > 0.0 {
            return Err(Error::WindowExceeded {
                lo: 0.0,
                hi: t,
                cov_lo: lo,
                cov_hi: hi,
            });
        }
        let mut acc = 0.0;
        for (j, w) in self.breakpoints.windows(2).enumerate() {
            let a = w[0].max(0.0);
            let b = w[1].min(t);
            if b > a {
                acc += (b - a) * q.eval(&self.table.phases[self.phase_index[j]]);
            }
        }
        Ok(acc / t)
    }
}

/// Deterministic alternating laminate (periodic anchor case): layers cycle
/// through the table phases in order, each with its mean width, no random
/// offset.
pub fn periodic_laminate(spec: &LaminateSpec, window: f64) -> Result<LaminateRealization> {
    spec.validate()?;
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::InvalidSpec(format!("window L = {} must be positive", window)));
    }
    let widths = spec.width_law.mean_widths();
    let mut breakpoints = vec![0.0];
    let mut phase_index = Vec::new();
    let mut cursor = 0.0;
    let mut k = 0usize;
    while cursor < window {
        let phase = k % spec.table.len();
        cursor += widths[phase];
        breakpoints.push(cursor);
        phase_index.push(phase);
        k += 1;
    }
    Ok(LaminateRealization {
        breakpoints,
        phase_index,
        table: spec.table.clone(),
        seed: 0,
        offset: 0.0,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{variance, Phase, PhaseTable};

    fn two_phase_table() -> PhaseTable {
        PhaseTable::new(
            vec![
                Phase {
                    a: 1.0,
                    kappa: 1.0,
                    m_sat: 0.0,
                    k1: 0.0,
                    easy_axis: [0.0, 0.0, 1.0],
                },
                Phase {
                    a: 2.0,
                    kappa: -1.0,
                    m_sat: 0.0,
                    k1: 0.0,
                    easy_axis: [0.0, 0.0, 1.0],
                },
            ],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    fn two_phase_spec() -> LaminateSpec {
        LaminateSpec::fixed_equal_widths(two_phase_table(), 1.0).unwrap()
    }

    #[test]
    fn single_phase_fixed_width_covers_window() {
        let table = PhaseTable::new(
            vec![Phase {
                a: 1.0,
                kappa: 0.0,
                m_sat: 0.0,
                k1: 0.0,
                easy_axis: [0.0, 0.0, 1.0],
            }],
            vec![1.0],
        )
        .unwrap();
        let spec = LaminateSpec::fixed_equal_widths(table, 1.0).unwrap();
        let r = sample_laminate(&spec, 7, 10.0).unwrap();
        let (lo, hi) = r.covered();
        assert!(lo <= 0.0 && hi >= 10.0);
        assert!(r.phase_index.iter().all(|&i| i == 0));
        for y in [0.0, 3.7, 9.999] {
            assert_eq!(r.phase_at(y).unwrap().a, 1.0);
        }
    }

    #[test]
    fn empirical_phase_fraction_binomial_oracle() {
        // layers after the first are iid draws from the table
        let spec = two_phase_spec();
        let r = sample_laminate(&spec, 42, 10_000.0).unwrap();
        let n = r.n_layers() as f64;
        let frac = r.phase_index.iter().filter(|&&i| i == 0).count() as f64 / n;
        let tol = 3.0 * (0.25 / n).sqrt();
        assert!((frac - 0.5).abs() < tol, "frac {} tol {}", frac, tol);
    }

    #[test]
    fn seed_contract() {
        let spec = two_phase_spec();
        let r1 = sample_laminate(&spec, 1, 8.0).unwrap();
        let r2 = sample_laminate(&spec, 1, 8.0).unwrap();
        let r3 = sample_laminate(&spec, 2, 8.0).unwrap();
        assert_eq!(r1, r2);
        assert_ne!(r1.breakpoints, r3.breakpoints);
        assert_eq!(r1.table, r3.table);
    }

    #[test]
    fn boundary_tie_belongs_to_right_interval() {
        let spec = two_phase_spec();
        let r = sample_laminate(&spec, 3, 8.0).unwrap();
        // pick an interior breakpoint and check the tie rule
        let j = 2;
        let b = r.breakpoints[j];
        let p = r.phase_at(b).unwrap();
        assert_eq!(p.a, r.table.phases[r.phase_index[j]].a);
    }

    #[test]
    fn eval_scaling_identity() {
        let spec = two_phase_spec();
        let r = sample_laminate(&spec, 5, 64.0).unwrap();
        for &x in &[0.1, 1.3, 7.9, 15.5] {
            let p1 = r.eval(x, 0.5).unwrap().clone();
            let p2 = r.eval(2.0 * x, 1.0).unwrap().clone();
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn birkhoff_single_phase_exact() {
        let table = PhaseTable::new(
            vec![Phase {
                a: 2.5,
                kappa: -0.3,
                m_sat: 1.0,
                k1: 0.0,
                easy_axis: [0.0, 0.0, 1.0],
            }],
            vec![1.0],
        )
        .unwrap();
        let spec = LaminateSpec::fixed_equal_widths(table, 2.0).unwrap();
        let r = sample_laminate(&spec, 11, 50.0).unwrap();
        assert_eq!(r.birkhoff_average(Quantity::A, 37.5).unwrap(), 2.5);
        assert_eq!(r.birkhoff_average(Quantity::Kappa, 1.0).unwrap(), -0.3);
    }

    #[test]
    fn birkhoff_periodic_full_period_exact() {
        let spec = two_phase_spec();
        let r = periodic_laminate(&spec, 10.0).unwrap();
        // one exact period (width 2) averages to the cell average
        let avg = r.birkhoff_average(Quantity::A, 2.0).unwrap();
        assert!((avg - 1.5).abs() < 1e-15);
        let avg_k = r.birkhoff_average(Quantity::Kappa, 2.0).unwrap();
        assert!(avg_k.abs() < 1e-15);
    }

    #[test]
    fn birkhoff_clt_envelope() {
        // |average - E[q]| at t = 1e4 layer-widths stays below 5x the CLT
        // prediction sqrt(Var/(t/w)) over 20 seeds
        let spec = two_phase_spec();
        let t = 1.0e4;
        for q in [Quantity::A, Quantity::Kappa2OverA] {
            let target = spec.table.moments().get(q);
            let var = variance(&spec.table, q);
            let envelope = 5.0 * (var / t).sqrt();
            let mut worst: f64 = 0.0;
            for seed in 0..20 {
                let r = sample_laminate(&spec, seed, t).unwrap();
                let avg = r.birkhoff_average(q, t).unwrap();
                worst = worst.max((avg - target).abs());
            }
            assert!(worst < envelope, "{}: worst {} envelope {}", q.name(), worst, envelope);
        }
    }

    #[test]
    fn stationarity_length_biased_point_law() {
        // pooled over many seeds, the phase at a fixed point follows
        // w_i p_i / sum w_j p_j
        let table = two_phase_table();
        let spec = LaminateSpec {
            table: table.clone(),
            width_law: WidthLaw::Fixed {
                widths: vec![1.0, 3.0],
            },
        };
        let n_seeds = 2000;
        let mut hits = 0usize;
        for seed in 0..n_seeds {
            let r = sample_laminate(&spec, seed, 10.0).unwrap();
            if r.phase_at(5.0).unwrap().a == 1.0 {
                hits += 1;
            }
        }
        let frac = hits as f64 / n_seeds as f64;
        let target = 0.25; // 1*0.5 / (1*0.5 + 3*0.5)
        let tol = 3.0 * (target * (1.0 - target) / n_seeds as f64).sqrt();
        assert!((frac - target).abs() < tol, "frac {} target {} tol {}", frac, target, tol);
    }

    #[test]
    fn window_errors() {
        let spec = two_phase_spec();
        assert!(sample_laminate(&spec, 1, -1.0).is_err());
        let r = sample_laminate(&spec, 1, 8.0).unwrap();
        assert!(r.phase_at(1.0e9).is_err());
        assert!(r.birkhoff_average(Quantity::A, 1.0e9).is_err());
    }
}
