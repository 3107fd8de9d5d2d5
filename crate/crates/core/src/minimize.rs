//! Sphere-constrained minimization of the heterogeneous and homogenized
//! energies: analytic Euclidean gradients (adjoints of the forward/backward
//! difference stencils), tangent projection, projected gradient descent
//! with Armijo backtracking and normalization retraction, and helix fitting
//! of minimizers.

use crate::corrector::EffectiveModel;
use crate::energy::{energy_eps, energy_hom, CoefficientField, Magnetization};
use crate::stray::stray_field;
use crate::{Error, Result, Vec3};
use serde::{Deserialize, Serialize};

/// An energy with a Euclidean gradient on the cell grid. Gradients include
/// the cell volume factor, so they are plain partial derivatives of the
/// total energy with respect to each cell vector.
pub trait Functional {
    fn energy(&self, m: &Magnetization) -> Result<f64>;
    fn gradient(&self, m: &Magnetization) -> Result<Vec<Vec3>>;
}

/// Heterogeneous energy of one coefficient sample.
pub struct HeteroEnergy<'a> {
    pub coeffs: &'a CoefficientField,
    pub mu0: f64,
    pub h_applied: Vec3,
    pub pad_factor: usize,
}

/// Homogenized energy under an effective model.
pub struct HomEnergy<'a> {
    pub model: &'a EffectiveModel,
    pub pad_factor: usize,
}

/// For each cell and direction, the (lo, hi) cells of the difference used
/// there (same convention as `Magnetization::gradient`), or None when the
/// direction has a single cell.
fn stencil(dims: [usize; 3], id: [usize; 3], d: usize) -> Option<([usize; 3], [usize; 3])> {
    if dims[d] < 2 {
        return None;
    }
    if id[d] + 1 < dims[d] {
        let mut hi = id;
        hi[d] += 1;
        Some((id, hi))
    } else {
        let mut lo = id;
        lo[d] -= 1;
        Some((lo, id))
    }
}

impl Functional for HeteroEnergy<'_> {
    fn energy(&self, m: &Magnetization) -> Result<f64> {
        Ok(energy_eps(m, self.coeffs, self.mu0, &self.h_applied, self.pad_factor)?.total())
    }

    fn gradient(&self, m: &Magnetization) -> Result<Vec<Vec3>> {
        if m.dims != self.coeffs.dims {
            return Err(Error::DomainMismatch(
                "magnetization and coefficients use different grids".into(),
            ));
        }
        let vol = m.h * m.h * m.h;
        let mut grad = vec![Vec3::zeros(); m.n_cells()];
        for i in 0..m.dims[0] {
            for j in 0..m.dims[1] {
                for k in 0..m.dims[2] {
                    let id = [i, j, k];
                    let c = m.idx(i, j, k);
                    let mv = m.data[c];
                    let a = self.coeffs.a[c];
                    let kap = self.coeffs.kappa[c];
                    for d in 0..3 {
                        let Some((lo, hi)) = stencil(m.dims, id, d) else {
                            continue;
                        };
                        let ilo = m.idx(lo[0], lo[1], lo[2]);
                        let ihi = m.idx(hi[0], hi[1], hi[2]);
                        let dm = (m.data[ihi] - m.data[ilo]) / m.h;
                        let e_d = Vec3::ith(d, 1.0);
                        // exchange: 1/2 a |D_d m|^2
                        let w = (vol * a / m.h) * dm;
                        grad[ihi] += w;
                        grad[ilo] -= w;
                        // chirality: -kappa (e_d x m) . D_d m
                        let v = (vol * kap / m.h) * e_d.cross(&mv);
                        grad[ihi] -= v;
                        grad[ilo] += v;
                        grad[c] -= vol * kap * dm.cross(&e_d);
                    }
                    // anisotropy k1 (1 - (m.e)^2)
                    let e = self.coeffs.axis[c];
                    grad[c] += vol * (-2.0 * self.coeffs.k1[c] * mv.dot(&e)) * e;
                    // Zeeman
                    grad[c] -= vol * self.mu0 * self.coeffs.m_sat[c] * self.h_applied;
                }
            }
        }
        if self.coeffs.m_sat.iter().any(|&ms| ms != 0.0) {
            let g: Vec<Vec3> = m
                .data
                .iter()
                .zip(&self.coeffs.m_sat)
                .map(|(mv, &ms)| ms * mv)
                .collect();
            let hd = stray_field(&g, m.dims, self.pad_factor)?;
            for c in 0..m.n_cells() {
                // the demag operator is self-adjoint
                grad[c] -= vol * self.mu0 * self.coeffs.m_sat[c] * hd[c];
            }
        }
        Ok(grad)
    }
}

impl Functional for HomEnergy<'_> {
    fn energy(&self, m: &Magnetization) -> Result<f64> {
        Ok(energy_hom(m, self.model, self.pad_factor)?.total())
    }

    fn gradient(&self, m: &Magnetization) -> Result<Vec<Vec3>> {
        let model = self.model;
        let vol = m.h * m.h * m.h;
        let mut grad = vec![Vec3::zeros(); m.n_cells()];
        for i in 0..m.dims[0] {
            for j in 0..m.dims[1] {
                for k in 0..m.dims[2] {
                    let id = [i, j, k];
                    let c = m.idx(i, j, k);
                    let mv = m.data[c];
                    let g = m.gradient(i, j, k);
                    let chi_m = crate::chi(&mv);
                    let ag = model.a_ex * g;
                    let kchi = model.k_dmi * chi_m;
                    let ktg = model.k_dmi.transpose() * g;
                    for d in 0..3 {
                        let Some((lo, hi)) = stencil(m.dims, id, d) else {
                            continue;
                        };
                        let ilo = m.idx(lo[0], lo[1], lo[2]);
                        let ihi = m.idx(hi[0], hi[1], hi[2]);
                        // exchange row d of a_ex G, chirality row d of K chi(m)
                        let w = (vol / m.h) * (ag.row(d) - kchi.row(d)).transpose();
                        grad[ihi] += w;
                        grad[ilo] -= w;
                        // chirality dependence through chi(m)
                        let e_d = Vec3::ith(d, 1.0);
                        grad[c] -= vol * ktg.row(d).transpose().cross(&e_d);
                        // chi-quadratic term -1/2 chi^T d_kappa chi
                        let mut u = Vec3::zeros();
                        for dp in 0..3 {
                            let e_dp = Vec3::ith(dp, 1.0);
                            u += model.d_kappa[(d, dp)] * e_dp.cross(&mv);
                        }
                        grad[c] -= vol * u.cross(&e_d);
                    }
                    // local magnetostatic fluctuation +mu0/2 m . d_m m
                    grad[c] += vol * model.mu0 * (model.d_m * mv);
                    // expected anisotropy e_k1 - m . E[k1 e(x)e] m
                    grad[c] -= vol * 2.0 * (model.e_k1_axis * mv);
                    // Zeeman
                    grad[c] -= vol * model.mu0 * model.m_mean * model.h_applied;
                }
            }
        }
        if model.m_mean != 0.0 {
            let g: Vec<Vec3> = m.data.iter().map(|mv| model.m_mean * mv).collect();
            let hd = stray_field(&g, m.dims, self.pad_factor)?;
            for c in 0..m.n_cells() {
                grad[c] -= vol * model.mu0 * model.m_mean * hd[c];
            }
        }
        Ok(grad)
    }
}

/// Tangent projection g - (g.m) m at a unit vector m.
pub fn project_tangent(g: &Vec3, m: &Vec3) -> Vec3 {
    g - g.dot(m) * m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the sup norm of the projected gradient drops below this.
    pub grad_tol: f64,
    /// Initial trial step; grows by `grow` after each accepted step.
    pub step0: f64,
    pub armijo_c1: f64,
    pub grow: f64,
    pub max_halvings: usize,
    /// Record every iterate in the trace (otherwise only accepted energies).
    pub record_trace: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 2000,
            grad_tol: 1e-8,
            step0: 1.0,
            armijo_c1: 1e-4,
            grow: 1.5,
            max_halvings: 60,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceStep {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeTrace {
    pub steps: Vec<TraceStep>,
    pub converged: bool,
    pub final_energy: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
}

/// Projected gradient descent with normalization retraction. The energy is
/// non-increasing along the returned trace; stops at the projected-gradient
/// tolerance, the iteration cap, or when backtracking stalls.
pub fn minimize_sphere(
    f: &impl Functional,
    m0: &Magnetization,
    opts: &MinimizeOptions,
) -> Result<(Magnetization, MinimizeTrace)> {
    let mut m = m0.clone();
    let mut energy = f.energy(&m)?;
    let mut step = opts.step0;
    let mut trace = MinimizeTrace {
        steps: Vec::new(),
        converged: false,
        final_energy: energy,
        final_grad_norm: f64::NAN,
        iterations: 0,
    };
    for iter in 0..opts.max_iter {
        let grad = f.gradient(&m)?;
        let pg: Vec<Vec3> = grad
            .iter()
            .zip(&m.data)
            .map(|(g, mv)| project_tangent(g, mv))
            .collect();
        let sup = pg.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let decrease: f64 = pg.iter().map(|v| v.norm_squared()).sum();
        if opts.record_trace {
            trace.steps.push(TraceStep {
                iter,
                energy,
                grad_norm: sup,
                step,
            });
        }
        trace.final_grad_norm = sup;
        trace.iterations = iter;
        if sup <= opts.grad_tol {
            trace.converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial_data: Vec<Vec3> = m
                .data
                .iter()
                .zip(&pg)
                .map(|(mv, g)| (mv - step * g).normalize())
                .collect();
            let trial = Magnetization {
                dims: m.dims,
                h: m.h,
                data: trial_data,
            };
            let trial_energy = f.energy(&trial)?;
            if trial_energy <= energy - opts.armijo_c1 * step * decrease {
                m = trial;
                energy = trial_energy;
                step *= opts.grow;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // at numerical stationarity
        }
    }
    trace.final_energy = energy;
    Ok((m, trace))
}

/// Least-squares helix fit of a magnetization along e3 (sampled at i=j=0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HelixFit {
    /// Fitted pitch of the in-plane phase theta(x3) = q x3 + theta0.
    pub q: f64,
    /// Phase intercept reduced to [0, 2 pi).
    pub theta0: f64,
    /// Root-mean-square phase residual of the affine fit.
    pub rms: f64,
    /// Largest out-of-plane component over the whole field.
    pub max_m3: f64,
}

pub fn fit_helix(m: &Magnetization) -> Result<HelixFit> {
    let nz = m.dims[2];
    if nz < 2 {
        return Err(Error::FitFailed("need at least two cells along e3".into()));
    }
    let mut max_m3: f64 = 0.0;
    for v in &m.data {
        max_m3 = max_m3.max(v.z.abs());
    }
    let mut theta = Vec::with_capacity(nz);
    let mut prev = 0.0;
    for k in 0..nz {
        let v = m.data[m.idx(0, 0, k)];
        let in_plane = (v.x * v.x + v.y * v.y).sqrt();
        if in_plane < 0.5 {
            return Err(Error::FitFailed(format!(
                "in-plane magnitude {} at cell {} is too small for a phase fit",
                in_plane, k
            )));
        }
        let mut t = v.y.atan2(v.x);
        if k > 0 {
            // unwrap to the branch nearest the previous sample
            let two_pi = std::f64::consts::TAU;
            t += ((prev - t) / two_pi).round() * two_pi;
        }
        prev = t;
        theta.push(t);
    }
    // affine least squares theta ~ q z + theta0 at z_k = (k + 1/2) h
    let n = nz as f64;
    let zs: Vec<f64> = (0..nz).map(|k| (k as f64 + 0.5) * m.h).collect();
    let zm = zs.iter().sum::<f64>() / n;
    let tm = theta.iter().sum::<f64>() / n;
    let szz: f64 = zs.iter().map(|z| (z - zm) * (z - zm)).sum();
    let szt: f64 = zs
        .iter()
        .zip(&theta)
        .map(|(z, t)| (z - zm) * (t - tm))
        .sum();
    if szz == 0.0 {
        return Err(Error::FitFailed("degenerate abscissae".into()));
    }
    let q = szt / szz;
    let theta0 = (tm - q * zm).rem_euclid(std::f64::consts::TAU);
    let rms = (zs
        .iter()
        .zip(&theta)
        .map(|(z, t)| {
            let r = t - tm - q * (z - zm);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(HelixFit {
        q,
        theta0,
        rms,
        max_m3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{Phase, PhaseTable};

    fn rich_coeffs(dims: [usize; 3], h: f64) -> CoefficientField {
        let phase = Phase {
            a: 1.5,
            kappa: 0.7,
            m_sat: 1.2,
            k1: 0.4,
            easy_axis: [0.0, 0.6, 0.8],
        };
        CoefficientField::constant(&phase, dims, h).unwrap()
    }

    fn pseudo_unit(seed: &mut u64) -> Vec3 {
        let mut next = || {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Vec3::new(next(), next(), next()).normalize()
    }

    fn fd_check(f: &impl Functional, m: &Magnetization, tol: f64) {
        let grad = f.gradient(m).unwrap();
        let mut seed = 7u64;
        for trial in 0..10 {
            let c = (trial * 13) % m.n_cells();
            let mv = m.data[c];
            let v = project_tangent(&pseudo_unit(&mut seed), &mv);
            if v.norm() < 1e-3 {
                continue;
            }
            let v = v.normalize();
            let t = 1e-5;
            let eval = |s: f64| {
                let mut data = m.data.clone();
                data[c] = (mv + s * v).normalize();
                let pert = Magnetization {
                    dims: m.dims,
                    h: m.h,
                    data,
                };
                f.energy(&pert).unwrap()
            };
            let fd = (eval(t) - eval(-t)) / (2.0 * t);
            let an = project_tangent(&grad[c], &mv).dot(&v);
            assert!(
                (fd - an).abs() <= tol * (1.0 + an.abs()),
                "cell {}: fd {} vs analytic {}",
                c,
                fd,
                an
            );
        }
    }

    #[test]
    fn hetero_gradient_matches_finite_differences() {
        let dims = [4, 4, 4];
        let h = 0.3;
        let coeffs = rich_coeffs(dims, h);
        let mut seed = 3u64;
        let data: Vec<Vec3> = (0..64).map(|_| pseudo_unit(&mut seed)).collect();
        let m = Magnetization::new(dims, h, data).unwrap();
        let f = HeteroEnergy {
            coeffs: &coeffs,
            mu0: 1.1,
            h_applied: Vec3::new(0.2, -0.1, 0.3),
            pad_factor: 2,
        };
        fd_check(&f, &m, 1e-6);
    }

    #[test]
    fn hom_gradient_matches_finite_differences() {
        let table = PhaseTable::new(
            vec![
                Phase {
                    a: 1.0,
                    kappa: 1.0,
                    m_sat: 0.5,
                    k1: 0.3,
                    easy_axis: [0.0, 0.0, 1.0],
                },
                Phase {
                    a: 2.0,
                    kappa: -1.0,
                    m_sat: 1.5,
                    k1: 0.1,
                    easy_axis: [1.0, 0.0, 0.0],
                },
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let model = crate::corrector::EffectiveModel::from_laminate_table(
            &table,
            1.25,
            Vec3::new(0.1, 0.0, -0.2),
        )
        .unwrap();
        let dims = [4, 4, 4];
        let h = 0.25;
        let mut seed = 11u64;
        let data: Vec<Vec3> = (0..64).map(|_| pseudo_unit(&mut seed)).collect();
        let m = Magnetization::new(dims, h, data).unwrap();
        let f = HomEnergy {
            model: &model,
            pad_factor: 2,
        };
        fd_check(&f, &m, 1e-6);
    }

    #[test]
    fn tangent_projection_is_orthogonal_and_idempotent() {
        let m = Vec3::new(0.6, 0.0, 0.8);
        let g = Vec3::new(1.0, -2.0, 0.5);
        let p = project_tangent(&g, &m);
        assert!(p.dot(&m).abs() < 1e-15);
        assert!((project_tangent(&p, &m) - p).norm() < 1e-15);
    }

    #[test]
    fn easy_axis_minimizer_aligns_with_axis() {
        // pure uniaxial anisotropy: the exact minimizers are +-e3, and the
        // start lies in the basin of +e3
        let phase = Phase {
            a: 1.0,
            kappa: 0.0,
            m_sat: 0.0,
            k1: 0.5,
            easy_axis: [0.0, 0.0, 1.0],
        };
        let coeffs = CoefficientField::constant(&phase, [1, 1, 1], 1.0).unwrap();
        let f = HeteroEnergy {
            coeffs: &coeffs,
            mu0: 1.0,
            h_applied: Vec3::zeros(),
            pad_factor: 2,
        };
        let m0 = Magnetization::new([1, 1, 1], 1.0, vec![Vec3::new(0.8, 0.0, 0.6)]).unwrap();
        let opts = MinimizeOptions::default();
        let (m, trace) = minimize_sphere(&f, &m0, &opts).unwrap();
        assert!(trace.converged);
        assert!((m.data[0] - Vec3::z()).norm() < 1e-6, "m = {:?}", m.data[0]);
        // trace energies never increase
        for w in trace.steps.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-14);
        }
    }

    #[test]
    fn helix_fit_recovers_parameters() {
        let q = 0.8;
        let theta0 = 1.1;
        let m = Magnetization::helix([1, 1, 64], 0.1, q, theta0).unwrap();
        let fit = fit_helix(&m).unwrap();
        assert!((fit.q - q).abs() < 1e-12);
        assert!((fit.theta0 - theta0).abs() < 1e-12);
        assert!(fit.rms < 1e-12);
        assert_eq!(fit.max_m3, 0.0);
    }

    #[test]
    fn helix_fit_unwraps_many_turns() {
        let q = 5.0; // several full turns across the domain
        let m = Magnetization::helix([1, 1, 256], 0.05, q, 0.3).unwrap();
        let fit = fit_helix(&m).unwrap();
        assert!((fit.q - q).abs() < 1e-10, "fitted q {}", fit.q);
    }

    #[test]
    fn helix_fit_rejects_out_of_plane_field() {
        let m = Magnetization::from_director([1, 1, 8], 0.1, |_| Vec3::z()).unwrap();
        assert!(fit_helix(&m).is_err());
    }

    #[test]
    fn hom_gradient_zero_at_optimal_helix() {
        // for the two-phase laminate model the helix with pitch E[kappa/a]
        // is a critical point in the interior (up to boundary-cell effects)
        let table = PhaseTable::new(
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
        .unwrap();
        let model =
            crate::corrector::EffectiveModel::from_laminate_table(&table, 1.0, Vec3::zeros())
                .unwrap();
        assert!((model.k_dmi[(2, 2)] - 1.0 / 3.0).abs() < 1e-14);
        let n = 128;
        let h = 4.0 / n as f64;
        let q = 0.25;
        let m = Magnetization::helix([1, 1, n], h, q, 0.0).unwrap();
        let f = HomEnergy {
            model: &model,
            pad_factor: 2,
        };
        let grad = f.gradient(&m).unwrap();
        let vol = h * h * h;
        for k in 2..n - 2 {
            let c = m.idx(0, 0, k);
            let pg = project_tangent(&grad[c], &m.data[c]);
            assert!(
                pg.norm() / vol < 5e-2 * q,
                "cell {}: projected gradient {}",
                k,
                pg.norm() / vol
            );
        }
    }
}
