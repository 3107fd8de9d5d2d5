//! Heterogeneous and homogenized micromagnetic energies on unit-sphere
//! valued grids.
//!
//! Gradients use forward differences per cell, falling back to the backward
//! difference on the far boundary face (so a direction with a single cell
//! contributes no derivative). The chirality term is evaluated as
//! kappa m . curl m; the identity m . curl m = -chi(m) : grad m holds
//! cellwise for any common difference operator and is cross-checked in
//! debug builds through the completed-square form of exchange + chirality.

use crate::corrector::{check_tangent, EffectiveModel};
use crate::grid::GridField;
use crate::laminate::LaminateRealization;
use crate::phase::Phase;
use crate::stray::stray_field;
use crate::{Error, Mat3, Result, Vec3};
use serde::{Deserialize, Serialize};

/// chi(s): row i is e_i x s, so chi(s) : G = sum_d (e_d x s) . (row d of G).
pub fn chi(s: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -s.z, s.y, //
        s.z, 0.0, -s.x, //
        -s.y, s.x, 0.0,
    )
}

/// Unit-sphere-valued field on a uniform grid of spacing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnetization {
    pub dims: [usize; 3],
    pub h: f64,
    /// One unit vector per cell, layout (i*ny + j)*nz + k.
    pub data: Vec<Vec3>,
}

impl Magnetization {
    pub fn new(dims: [usize; 3], h: f64, data: Vec<Vec3>) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::Invalid("magnetization dims must be >= 1".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Invalid("grid spacing must be positive".into()));
        }
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::DomainMismatch(
                "magnetization length does not match dims".into(),
            ));
        }
        for (c, v) in data.iter().enumerate() {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(c));
            }
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "cell {} is not unit length (|m| = {})",
                    c,
                    v.norm()
                )));
            }
        }
        Ok(Magnetization { dims, h, data })
    }

    /// Build from a director field, normalizing each cell-center value.
    pub fn from_director(
        dims: [usize; 3],
        h: f64,
        f: impl Fn([f64; 3]) -> Vec3,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let x = [
                        (i as f64 + 0.5) * h,
                        (j as f64 + 0.5) * h,
                        (k as f64 + 0.5) * h,
                    ];
                    let v = f(x);
                    let n = v.norm();
                    if !(n.is_finite() && n > 0.0) {
                        return Err(Error::NonFinite(data.len()));
                    }
                    data.push(v / n);
                }
            }
        }
        Magnetization::new(dims, h, data)
    }

    /// In-plane helix m(x) = (cos(q x3 + theta0), sin(q x3 + theta0), 0).
    pub fn helix(dims: [usize; 3], h: f64, q: f64, theta0: f64) -> Result<Self> {
        Magnetization::from_director(dims, h, |x| {
            let t = q * x[2] + theta0;
            Vec3::new(t.cos(), t.sin(), 0.0)
        })
    }

    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Difference gradient at cell (i,j,k): row d is D_d m (forward, backward
    /// on the far boundary, zero when the direction has a single cell).
    pub fn gradient(&self, i: usize, j: usize, k: usize) -> Mat3 {
        let mut g = Mat3::zeros();
        let id = [i, j, k];
        for d in 0..3 {
            if self.dims[d] < 2 {
                continue;
            }
            let (lo, hi) = if id[d] + 1 < self.dims[d] {
                (id, {
                    let mut u = id;
                    u[d] += 1;
                    u
                })
            } else {
                (
                    {
                        let mut u = id;
                        u[d] -= 1;
                        u
                    },
                    id,
                )
            };
            let dm = (self.data[self.idx(hi[0], hi[1], hi[2])]
                - self.data[self.idx(lo[0], lo[1], lo[2])])
                / self.h;
            for c in 0..3 {
                g[(d, c)] = dm[c];
            }
        }
        g
    }
}

/// Per-cell material coefficients of one heterogeneous sample.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub dims: [usize; 3],
    pub h: f64,
    pub a: Vec<f64>,
    pub kappa: Vec<f64>,
    pub m_sat: Vec<f64>,
    pub k1: Vec<f64>,
    pub axis: Vec<Vec3>,
}

impl CoefficientField {
    fn with_capacity(dims: [usize; 3], h: f64) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        CoefficientField {
            dims,
            h,
            a: Vec::with_capacity(n),
            kappa: Vec::with_capacity(n),
            m_sat: Vec::with_capacity(n),
            k1: Vec::with_capacity(n),
            axis: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, p: &Phase) {
        self.a.push(p.a);
        self.kappa.push(p.kappa);
        self.m_sat.push(p.m_sat);
        self.k1.push(p.k1);
        self.axis.push(p.easy_axis());
    }

    /// Uniform coefficients.
    pub fn constant(phase: &Phase, dims: [usize; 3], h: f64) -> Result<Self> {
        phase.validate(&crate::phase::Bounds::enclosing(std::slice::from_ref(phase)))?;
        let mut cf = CoefficientField::with_capacity(dims, h);
        for _ in 0..dims[0] * dims[1] * dims[2] {
            cf.push(phase);
        }
        Ok(cf)
    }

    /// Sample y -> phase(x3 / eps) at cell centers. Fails unless the grid
    /// resolves the oscillation: h <= eps * w_min / 4 with w_min the thinnest
    /// layer of the realization.
    pub fn from_laminate(
        real: &LaminateRealization,
        eps: f64,
        dims: [usize; 3],
        h: f64,
    ) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Invalid("eps must be positive".into()));
        }
        let limit = eps * real.min_layer_width() / 4.0;
        // small slack so h == limit survives breakpoint rounding
        if h > limit * (1.0 + 1e-9) {
            return Err(Error::ResolutionTooCoarse { h, eps, limit });
        }
        let mut cf = CoefficientField::with_capacity(dims, h);
        for _i in 0..dims[0] {
            for _j in 0..dims[1] {
                for k in 0..dims[2] {
                    let x3 = (k as f64 + 0.5) * h;
                    cf.push(real.eval(x3, eps)?);
                }
            }
        }
        Ok(cf)
    }

    /// Coefficients of a grid sample rescaled to spacing eps * cell_size.
    pub fn from_grid(field: &GridField, eps: f64) -> Result<Self> {
        field.validate()?;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Invalid("eps must be positive".into()));
        }
        let mut cf = CoefficientField::with_capacity(field.dims, eps * field.cell_size);
        for cell in 0..field.n_cells() {
            cf.push(field.phase(cell));
        }
        Ok(cf)
    }

    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }
}

/// Energy split by physical term; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub dmi: f64,
    pub stray: f64,
    pub anisotropy: f64,
    pub zeeman: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.exchange + self.dmi + self.stray + self.anisotropy + self.zeeman
    }
}

/// Heterogeneous energy of `m` against the sampled coefficients:
/// exchange 1/2 a |grad m|^2, chirality kappa m . curl m, stray
/// -mu0/2 h_d . (M m), anisotropy k1 (1 - (m.e)^2), Zeeman -mu0 M H . m.
pub fn energy_eps(
    m: &Magnetization,
    coeffs: &CoefficientField,
    mu0: f64,
    h_applied: &Vec3,
    pad_factor: usize,
) -> Result<EnergyBreakdown> {
    if m.dims != coeffs.dims {
        return Err(Error::DomainMismatch(
            "magnetization and coefficients use different grids".into(),
        ));
    }
    let vol = m.h * m.h * m.h;
    let mut out = EnergyBreakdown::default();
    #[cfg(debug_assertions)]
    let mut square_form = 0.0;
    for i in 0..m.dims[0] {
        for j in 0..m.dims[1] {
            for k in 0..m.dims[2] {
                let c = m.idx(i, j, k);
                let g = m.gradient(i, j, k);
                let mv = m.data[c];
                let a = coeffs.a[c];
                let kap = coeffs.kappa[c];
                out.exchange += 0.5 * a * g.iter().map(|v| v * v).sum::<f64>() * vol;
                let curl = Vec3::new(
                    g[(1, 2)] - g[(2, 1)],
                    g[(2, 0)] - g[(0, 2)],
                    g[(0, 1)] - g[(1, 0)],
                );
                out.dmi += kap * mv.dot(&curl) * vol;
                out.anisotropy +=
                    coeffs.k1[c] * (1.0 - mv.dot(&coeffs.axis[c]).powi(2)) * vol;
                out.zeeman += -mu0 * coeffs.m_sat[c] * h_applied.dot(&mv) * vol;
                #[cfg(debug_assertions)]
                {
                    let dev = g - (kap / a) * chi(&mv);
                    square_form +=
                        (0.5 * a * dev.iter().map(|v| v * v).sum::<f64>() - kap * kap / a) * vol;
                }
            }
        }
    }
    #[cfg(debug_assertions)]
    {
        let lhs = out.exchange + out.dmi;
        let scale = lhs.abs().max(square_form.abs()).max(1.0);
        debug_assert!(
            (lhs - square_form).abs() <= 1e-10 * scale,
            "completed-square mismatch: {} vs {}",
            lhs,
            square_form
        );
    }

    if coeffs.m_sat.iter().any(|&ms| ms != 0.0) {
        let g: Vec<Vec3> = m
            .data
            .iter()
            .zip(&coeffs.m_sat)
            .map(|(mv, &ms)| ms * mv)
            .collect();
        let hd = stray_field(&g, m.dims, pad_factor)?;
        out.stray = -0.5
            * mu0
            * g.iter()
                .zip(&hd)
                .map(|(gi, hi)| gi.dot(hi))
                .sum::<f64>()
            * vol;
    }
    Ok(out)
}

/// Homogenized energy of `m` under an effective model. Groupings: the
/// chirality-fluctuation term -1/2 chi^T d_kappa chi is reported under
/// `dmi`, and the local magnetostatic fluctuation +mu0/2 m . d_m m under
/// `stray` alongside the demag energy of the mean density E[M] m.
pub fn energy_hom(
    m: &Magnetization,
    model: &EffectiveModel,
    pad_factor: usize,
) -> Result<EnergyBreakdown> {
    let vol = m.h * m.h * m.h;
    let mut out = EnergyBreakdown::default();
    for i in 0..m.dims[0] {
        for j in 0..m.dims[1] {
            for k in 0..m.dims[2] {
                let c = m.idx(i, j, k);
                let g = m.gradient(i, j, k);
                let mv = m.data[c];
                let chi_m = chi(&mv);
                out.exchange += 0.5 * (g.transpose() * model.a_ex * g).trace() * vol;
                out.dmi += (-(g.transpose() * model.k_dmi * chi_m).trace()
                    - 0.5 * (chi_m.transpose() * model.d_kappa * chi_m).trace())
                    * vol;
                out.stray += 0.5 * model.mu0 * mv.dot(&(model.d_m * mv)) * vol;
                out.anisotropy += model.expected_anisotropy(&mv) * vol;
                out.zeeman += -model.mu0 * model.m_mean * model.h_applied.dot(&mv) * vol;
            }
        }
    }
    if model.m_mean != 0.0 {
        let g: Vec<Vec3> = m.data.iter().map(|mv| model.m_mean * mv).collect();
        let hd = stray_field(&g, m.dims, pad_factor)?;
        out.stray += -0.5
            * model.mu0
            * g.iter()
                .zip(&hd)
                .map(|(gi, hi)| gi.dot(hi))
                .sum::<f64>()
            * vol;
    }
    Ok(out)
}

/// Tangentially homogenized bulk density at direction `s` and tangent
/// gradient `A` (rows of A must be orthogonal to s):
/// 1/2 tr(A^T a_ex A) - tr(A^T k_dmi chi(s)) - 1/2 tr(chi^T d_kappa chi).
pub fn thom_density(s: &Vec3, a: &Mat3, model: &EffectiveModel) -> Result<f64> {
    check_tangent(s, a)?;
    let chi_s = chi(s);
    Ok(0.5 * (a.transpose() * model.a_ex * a).trace()
        - (a.transpose() * model.k_dmi * chi_s).trace()
        - 0.5 * (chi_s.transpose() * model.d_kappa * chi_s).trace())
}

/// Optimal corrector perturbation for one phase with closed-form laminate
/// correctors theta_a, theta_kappa: Xi = Theta_a A - Theta_kappa chi(s).
pub fn thom_xi(s: &Vec3, a: &Mat3, theta_a: &Mat3, theta_kappa: &Mat3) -> Mat3 {
    theta_a * a - theta_kappa * chi(s)
}
