//! Material phases and the discrete law of the random coefficients.

use crate::{Error, Mat3, Result, Vec3};
use serde::{Deserialize, Serialize};

/// One material phase: the coefficient tuple attached to a layer or cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// Exchange coefficient, strictly positive.
    pub a: f64,
    /// DMI constant, signed.
    pub kappa: f64,
    /// Saturation magnetization, nonnegative.
    pub m_sat: f64,
    /// Uniaxial anisotropy strength, nonnegative.
    pub k1: f64,
    /// Unit easy axis for the uniaxial anisotropy density.
    pub easy_axis: [f64; 3],
}

impl Phase {
    pub fn easy_axis(&self) -> Vec3 {
        Vec3::new(self.easy_axis[0], self.easy_axis[1], self.easy_axis[2])
    }

    /// Uniaxial anisotropy density k1 * (1 - (s.e)^2).
    pub fn anisotropy_density(&self, s: &Vec3) -> f64 {
        let c = s.dot(&self.easy_axis());
        self.k1 * (1.0 - c * c)
    }

    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidPhase(format!("a = {} must be positive", self.a)));
        }
        if self.a < bounds.c_ex || self.a > bounds.big_c_ex {
            return Err(Error::InvalidPhase(format!(
                "a = {} outside [{}, {}]",
                self.a, bounds.c_ex, bounds.big_c_ex
            )));
        }
        if !self.kappa.is_finite() || self.kappa.abs() > bounds.c_dmi {
            return Err(Error::InvalidPhase(format!(
                "|kappa| = {} exceeds {}",
                self.kappa.abs(),
                bounds.c_dmi
            )));
        }
        if !self.m_sat.is_finite() || self.m_sat < 0.0 || self.m_sat > bounds.c_sat {
            return Err(Error::InvalidPhase(format!(
                "m_sat = {} outside [0, {}]",
                self.m_sat, bounds.c_sat
            )));
        }
        if !self.k1.is_finite() || self.k1 < 0.0 {
            return Err(Error::InvalidPhase(format!("k1 = {} must be nonnegative", self.k1)));
        }
        let norm = self.easy_axis().norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPhase(format!(
                "easy_axis norm {} differs from 1 by more than 1e-12",
                norm
            )));
        }
        Ok(())
    }
}

/// Uniform bounds on the coefficients, stored alongside the phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub c_ex: f64,
    pub big_c_ex: f64,
    pub c_dmi: f64,
    pub c_sat: f64,
}

impl Bounds {
    /// Tight bounds computed from a list of phases.
    pub fn enclosing(phases: &[Phase]) -> Bounds {
        let mut b = Bounds {
            c_ex: f64::INFINITY,
            big_c_ex: 0.0,
            c_dmi: 0.0,
            c_sat: 0.0,
        };
        for p in phases {
            b.c_ex = b.c_ex.min(p.a);
            b.big_c_ex = b.big_c_ex.max(p.a);
            b.c_dmi = b.c_dmi.max(p.kappa.abs());
            b.c_sat = b.c_sat.max(p.m_sat);
        }
        b
    }
}

/// Discrete phase law: phases with probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub phases: Vec<Phase>,
    pub probabilities: Vec<f64>,
    #[serde(default)]
    pub bounds: Option<Bounds>,
}

impl PhaseTable {
    pub fn new(phases: Vec<Phase>, probabilities: Vec<f64>) -> Result<Self> {
        let t = PhaseTable {
            phases,
            probabilities,
            bounds: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidTable("at least one phase required".into()));
        }
        if self.phases.len() != self.probabilities.len() {
            return Err(Error::InvalidTable(format!(
                "{} phases but {} probabilities",
                self.phases.len(),
                self.probabilities.len()
            )));
        }
        if self.probabilities.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return Err(Error::InvalidTable("probabilities must be nonnegative".into()));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTable(format!(
                "probabilities sum to {} (must be 1 within 1e-12)",
                sum
            )));
        }
        let bounds = self.effective_bounds();
        for p in &self.phases {
            p.validate(&bounds)?;
        }
        Ok(())
    }

    pub fn effective_bounds(&self) -> Bounds {
        self.bounds
            .clone()
            .unwrap_or_else(|| Bounds::enclosing(&self.phases))
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Expectation of an arbitrary per-phase observable under the table law.
    pub fn expect(&self, f: impl Fn(&Phase) -> f64) -> f64 {
        self.phases
            .iter()
            .zip(&self.probabilities)
            .map(|(ph, &p)| p * f(ph))
            .sum()
    }

    /// Exact moments of the phase law.
    pub fn moments(&self) -> Moments {
        Moments::of_table(self)
    }

    /// The table reweighted by fixed layer widths (length-biased / spatial law).
    ///
    /// The phase observed AT a point of a laminate with phase-dependent layer
    /// widths follows w_i p_i / sum_j w_j p_j, not p_i. For equal widths the
    /// two laws coincide.
    pub fn length_biased(&self, mean_widths: &[f64]) -> Result<PhaseTable> {
        if mean_widths.len() != self.phases.len() {
            return Err(Error::InvalidTable(
                "width list length must match phase count".into(),
            ));
        }
        let z: f64 = self
            .probabilities
            .iter()
            .zip(mean_widths)
            .map(|(&p, &w)| p * w)
            .sum();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidTable("length-biased normalization is zero".into()));
        }
        let probs = self
            .probabilities
            .iter()
            .zip(mean_widths)
            .map(|(&p, &w)| p * w / z)
            .collect();
        PhaseTable::new(self.phases.clone(), probs)
    }
}

/// Tracked scalar observables of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    A,
    InvA,
    Kappa,
    KappaOverA,
    Kappa2OverA,
    MSat,
    MSat2,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Quantity::A,
        Quantity::InvA,
        Quantity::Kappa,
        Quantity::KappaOverA,
        Quantity::Kappa2OverA,
        Quantity::MSat,
        Quantity::MSat2,
    ];

    pub fn eval(&self, p: &Phase) -> f64 {
        match self {
            Quantity::A => p.a,
            Quantity::InvA => 1.0 / p.a,
            Quantity::Kappa => p.kappa,
            Quantity::KappaOverA => p.kappa / p.a,
            Quantity::Kappa2OverA => p.kappa * p.kappa / p.a,
            Quantity::MSat => p.m_sat,
            Quantity::MSat2 => p.m_sat * p.m_sat,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::A => "a",
            Quantity::InvA => "1/a",
            Quantity::Kappa => "kappa",
            Quantity::KappaOverA => "kappa/a",
            Quantity::Kappa2OverA => "kappa^2/a",
            Quantity::MSat => "m_sat",
            Quantity::MSat2 => "m_sat^2",
        }
    }
}

/// Exact moments of the phase law needed by the effective formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub e_a: f64,
    pub e_inv_a: f64,
    pub e_kappa: f64,
    pub e_kappa_over_a: f64,
    pub e_kappa2_over_a: f64,
    pub e_m: f64,
    pub e_m2: f64,
    pub e_k1: f64,
    /// E[k1 * e (x) e], so E[phi](s) = e_k1 - s . e_k1_axis s.
    pub e_k1_axis: Mat3,
}

impl Moments {
    pub fn of_table(table: &PhaseTable) -> Moments {
        let mut axis = Mat3::zeros();
        for (ph, &p) in table.phases.iter().zip(&table.probabilities) {
            let e = ph.easy_axis();
            axis += p * ph.k1 * e * e.transpose();
        }
        Moments {
            e_a: table.expect(|p| p.a),
            e_inv_a: table.expect(|p| 1.0 / p.a),
            e_kappa: table.expect(|p| p.kappa),
            e_kappa_over_a: table.expect(|p| p.kappa / p.a),
            e_kappa2_over_a: table.expect(|p| p.kappa * p.kappa / p.a),
            e_m: table.expect(|p| p.m_sat),
            e_m2: table.expect(|p| p.m_sat * p.m_sat),
            e_k1: table.expect(|p| p.k1),
            e_k1_axis: axis,
        }
    }

    /// Harmonic mean E[1/a]^{-1}.
    pub fn harmonic_a(&self) -> f64 {
        1.0 / self.e_inv_a
    }

    pub fn get(&self, q: Quantity) -> f64 {
        match q {
            Quantity::A => self.e_a,
            Quantity::InvA => self.e_inv_a,
            Quantity::Kappa => self.e_kappa,
            Quantity::KappaOverA => self.e_kappa_over_a,
            Quantity::Kappa2OverA => self.e_kappa2_over_a,
            Quantity::MSat => self.e_m,
            Quantity::MSat2 => self.e_m2,
        }
    }

    /// Expected anisotropy density E[phi](s) = E[k1] - s . E[k1 e(x)e] s.
    pub fn expected_anisotropy(&self, s: &Vec3) -> f64 {
        self.e_k1 - s.dot(&(self.e_k1_axis * s))
    }
}

/// Variance of a quantity under the table law (for CLT envelopes).
pub fn variance(table: &PhaseTable, q: Quantity) -> f64 {
    let mean = table.expect(|p| q.eval(p));
    table.expect(|p| {
        let d = q.eval(p) - mean;
        d * d
    })
}
