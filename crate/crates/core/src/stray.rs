//! Spectral stray (demagnetizing) field.
//!
//! The magnetization density g = M_sat * m, supported on the sample box, is
//! embedded in a zero-padded periodic box (padding factor >= 2 so periodic
//! images are well separated) and the field is obtained mode by mode as
//! h(k) = -k_hat (k_hat . g(k)). The k = 0 mode carries the shape-independent
//! bulk contribution h(0) = -g(0)/3, the free-space average obtained by
//! exhausting space with concentric cubes; dropping it would misstate the
//! average field of a uniformly magnetized sample by over 10%.

use crate::{Error, Result, Vec3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Demag field of the density `g` (one vector per cell, layout
/// (i*ny + j)*nz + k) on the `dims` grid, returned on the same grid.
pub fn stray_field(g: &[Vec3], dims: [usize; 3], pad_factor: usize) -> Result<Vec<Vec3>> {
    if g.len() != dims[0] * dims[1] * dims[2] {
        return Err(Error::DomainMismatch(
            "density length does not match grid dims".into(),
        ));
    }
    if pad_factor < 2 {
        return Err(Error::BadPadding(pad_factor));
    }
    if g.iter().all(|v| v.norm_squared() == 0.0) {
        return Ok(vec![Vec3::zeros(); g.len()]);
    }

    let pd = [
        dims[0] * pad_factor,
        dims[1] * pad_factor,
        dims[2] * pad_factor,
    ];
    let np = pd[0] * pd[1] * pd[2];
    let pidx = |i: usize, j: usize, k: usize| (i * pd[1] + j) * pd[2] + k;

    // embed each component in the padded box and transform
    let mut comp: [Vec<Complex<f64>>; 3] = [
        vec![Complex::new(0.0, 0.0); np],
        vec![Complex::new(0.0, 0.0); np],
        vec![Complex::new(0.0, 0.0); np],
    ];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let v = g[(i * dims[1] + j) * dims[2] + k];
                let p = pidx(i, j, k);
                comp[0][p].re = v.x;
                comp[1][p].re = v.y;
                comp[2][p].re = v.z;
            }
        }
    }
    let mut planner = FftPlanner::new();
    for c in comp.iter_mut() {
        fft3(c, pd, &mut planner, false);
    }

    // h(k) = -k_hat (k_hat . g(k)); special bulk value at k = 0
    for i in 0..pd[0] {
        let ki = freq(i, pd[0]);
        for j in 0..pd[1] {
            let kj = freq(j, pd[1]);
            for k in 0..pd[2] {
                let kk = freq(k, pd[2]);
                let p = pidx(i, j, k);
                let k2 = ki * ki + kj * kj + kk * kk;
                if k2 == 0.0 {
                    for c in comp.iter_mut() {
                        c[p] = -c[p] / 3.0;
                    }
                } else {
                    let dot = (comp[0][p] * ki + comp[1][p] * kj + comp[2][p] * kk) / k2;
                    comp[0][p] = -dot * ki;
                    comp[1][p] = -dot * kj;
                    comp[2][p] = -dot * kk;
                }
            }
        }
    }

    for c in comp.iter_mut() {
        fft3(c, pd, &mut planner, true);
    }
    let scale = 1.0 / np as f64;
    let mut out = Vec::with_capacity(g.len());
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let p = pidx(i, j, k);
                out.push(Vec3::new(
                    comp[0][p].re * scale,
                    comp[1][p].re * scale,
                    comp[2][p].re * scale,
                ));
            }
        }
    }
    Ok(out)
}

#[inline]
fn freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// In-place 3D FFT by sweeping 1D transforms along each axis.
fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], planner: &mut FftPlanner<f64>, inverse: bool) {
    let plan = |planner: &mut FftPlanner<f64>, n: usize| -> Arc<dyn Fft<f64>> {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);

    // axis 2 (contiguous lines)
    let fft_z = plan(planner, nz);
    for line in data.chunks_exact_mut(nz) {
        fft_z.process(line);
    }
    // axis 1
    let fft_y = plan(planner, ny);
    let mut buf = vec![Complex::new(0.0, 0.0); ny.max(nx)];
    for i in 0..nx {
        for k in 0..nz {
            for j in 0..ny {
                buf[j] = data[(i * ny + j) * nz + k];
            }
            fft_y.process(&mut buf[..ny]);
            for j in 0..ny {
                data[(i * ny + j) * nz + k] = buf[j];
            }
        }
    }
    // axis 0
    let fft_x = plan(planner, nx);
    for j in 0..ny {
        for k in 0..nz {
            for i in 0..nx {
                buf[i] = data[(i * ny + j) * nz + k];
            }
            fft_x.process(&mut buf[..nx]);
            for i in 0..nx {
                data[(i * ny + j) * nz + k] = buf[i];
            }
        }
    }
}
