//! Finite-N GUE and GOE correlation kernels in the spectral variable `lambda`
//! (semicircle on [-2, 2]), built from the orthonormal functions
//! `psi_k(u)`, `u = sqrt(N) lambda`.
//!
//! With `eps f(u) = 1/2 (int_{-inf}^u f - int_u^inf f)` and, for odd `N`,
//! `I = int psi_{N-1}`, the GOE kernels in `u` are
//!
//! ```text
//! S(x, y) = sum_{k<N} psi_k(x) psi_k(y) + sqrt(N)/2 psi_{N-1}(x) eps psi_N(y) [+ psi_{N-1}(x) / I]
//! D(x, y) = -d/dy S(x, y)
//! J(x, y) = eps S(., y)(x) - eps(x - y)                                     [- eps psi_{N-1}(y) / I]
//! ```
//!
//! and the truncated two-point function is
//! `T = S(x,y) S(y,x) + (D(x,y) J(y,x) + D(y,x) J(x,y)) / 2`, with `R_N = 2 T`.
//! For the GUE `T = K^2`. In both cases `int T(x, y) dy = rho(x)` and
//! `Cov(sum f, sum g) = int f g rho - int int f(x) g(y) T(x, y)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::hermite::HermiteEvaluator;
use super::integrals::psi_integral_closed_form;
use crate::error::{Error, Result};
use crate::spectra::rho_sc;
use crate::testfn::TestFunction;

pub const BULK_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Gue,
    Goe,
}

impl Symmetry {
    pub fn beta(self) -> u8 {
        match self {
            Symmetry::Goe => 1,
            Symmetry::Gue => 2,
        }
    }
}

/// `psi_k(u)` and `eps psi_k(u)` for `k = 0..=N` at one point.
#[derive(Debug, Clone)]
pub struct PointBasis {
    pub u: f64,
    pub psi: Vec<f64>,
    pub eps: Vec<f64>,
}

impl PointBasis {
    /// `psi_k'(u) = sqrt(k) psi_{k-1}(u) - (u/2) psi_k(u)`
    pub fn dpsi(&self, k: usize) -> f64 {
        let lower = if k == 0 { 0.0 } else { (k as f64).sqrt() * self.psi[k - 1] };
        lower - 0.5 * self.u * self.psi[k]
    }
}

#[derive(Debug, Clone)]
pub struct ClusterKernel {
    n: usize,
    symmetry: Symmetry,
    hermite: HermiteEvaluator<f64>,
    /// `int psi_k` over the line, `k = 0..=N`.
    psi_total: Vec<f64>,
    /// `int psi_{N-1}` for odd `N`.
    odd_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoeComponents {
    pub s_xy: f64,
    pub s_yx: f64,
    pub d_xy: f64,
    pub d_yx: f64,
    pub j_xy: f64,
    pub j_yx: f64,
    /// `E_{N,1}(x, y)`, including the `1/I` term for odd `N`.
    pub e_n1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoeCluster {
    pub r_n: f64,
    pub components: GoeComponents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOfStates {
    pub rho: f64,
    pub correction_predicted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCovariance {
    pub value: f64,
    /// Difference between the results at step `h` and `2h`.
    pub error_estimate: f64,
    pub step: f64,
}

impl ClusterKernel {
    pub fn new(n: usize, symmetry: Symmetry) -> Result<Self> {
        let min = match symmetry {
            Symmetry::Gue => 2,
            Symmetry::Goe => 3,
        };
        if n < min {
            return Err(Error::InvalidInput(format!("{symmetry:?} kernel needs n >= {min}, got {n}")));
        }
        let mut psi_total = vec![0.0; n + 1];
        psi_total[0] = (2.0 * std::f64::consts::PI).powf(-0.25) * 2.0 * std::f64::consts::PI.sqrt();
        for k in 1..n {
            psi_total[k + 1] = (k as f64 / (k as f64 + 1.0)).sqrt() * psi_total[k - 1];
        }
        let odd_norm = (symmetry == Symmetry::Goe && n % 2 == 1).then(|| psi_integral_closed_form((n - 1) / 2));
        Ok(Self { n, symmetry, hermite: HermiteEvaluator::new(n), psi_total, odd_norm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn odd_norm(&self) -> Option<f64> {
        self.odd_norm
    }

    fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    pub fn basis(&self, u: f64) -> PointBasis {
        let psi = self.hermite.psi_upto(self.n, u).expect("degree within range");
        let eps = self.eps_basis(u, &psi);
        PointBasis { u, psi, eps }
    }

    /// `Psi_k(u) = int_{-inf}^u psi_k` from
    /// `Psi_{k+1} = (sqrt(k) Psi_{k-1} - 2 psi_k) / sqrt(k + 1)`, then centred.
    fn eps_basis(&self, u: f64, psi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut cum = vec![0.0; n + 1];
        cum[0] = (2.0 * std::f64::consts::PI).powf(-0.25) * std::f64::consts::PI.sqrt() * erfc(-0.5 * u);
        if n >= 1 {
            cum[1] = -2.0 * psi[0];
        }
        for k in 1..n {
            cum[k + 1] = ((k as f64).sqrt() * cum[k - 1] - 2.0 * psi[k]) / (k as f64 + 1.0).sqrt();
        }
        cum.iter().zip(&self.psi_total).map(|(c, t)| c - 0.5 * t).collect()
    }

    /// Christoffel-Darboux kernel `K_N(x, y)` in `lambda` units, so that
    /// `K_N(x, x) / N -> rho_sc(x)`.
    pub fn cd_kernel(&self, x: f64, y: f64) -> f64 {
        let s = self.sqrt_n();
        let n = self.n;
        if (x - y).abs() < 1e-6 {
            let b = self.basis(0.5 * (x + y) * s);
            return s * s * (b.dpsi(n) * b.psi[n - 1] - b.dpsi(n - 1) * b.psi[n]);
        }
        let (bx, by) = (self.basis(x * s), self.basis(y * s));
        s * (bx.psi[n] * by.psi[n - 1] - by.psi[n] * bx.psi[n - 1]) / (x - y)
    }

    /// `sum_{k<N} Phi_k(x) Phi_k(y)` with `Phi_k(lambda) = N^{1/4} psi_k(sqrt(N) lambda)`.
    pub fn cd_kernel_sum(&self, x: f64, y: f64) -> f64 {
        let s = self.sqrt_n();
        let (bx, by) = (self.basis(x * s), self.basis(y * s));
        s * bx.psi[..self.n].iter().zip(&by.psi[..self.n]).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn gue_cluster(&self, x: f64, y: f64) -> f64 {
        let k = self.cd_kernel(x, y);
        k * k
    }

    fn s_u(&self, bx: &PointBasis, by: &PointBasis) -> f64 {
        let n = self.n;
        let k: f64 = bx.psi[..n].iter().zip(&by.psi[..n]).map(|(a, b)| a * b).sum();
        k + self.e_u(bx, by)
    }

    fn e_u(&self, bx: &PointBasis, by: &PointBasis) -> f64 {
        let n = self.n;
        let mut e = 0.5 * self.sqrt_n() * bx.psi[n - 1] * by.eps[n];
        if let Some(i) = self.odd_norm {
            e += bx.psi[n - 1] / i;
        }
        e
    }

    fn d_u(&self, bx: &PointBasis, by: &PointBasis) -> f64 {
        let n = self.n;
        let dk: f64 = (0..n).map(|k| bx.psi[k] * by.dpsi(k)).sum();
        -(dk + 0.5 * self.sqrt_n() * bx.psi[n - 1] * by.psi[n])
    }

    fn j_u(&self, bx: &PointBasis, by: &PointBasis) -> f64 {
        let n = self.n;
        let mut j: f64 = (0..n).map(|k| bx.eps[k] * by.psi[k]).sum();
        j += 0.5 * self.sqrt_n() * bx.eps[n - 1] * by.eps[n];
        if let Some(i) = self.odd_norm {
            j += (bx.eps[n - 1] - by.eps[n - 1]) / i;
        }
        j - 0.5 * (bx.u - by.u).signum() * ((bx.u != by.u) as u8 as f64)
    }

    fn check_bulk(&self, x: f64, y: f64) -> Result<()> {
        let edge = 2.0 - BULK_DELTA;
        if x.abs() >= edge || y.abs() >= edge {
            return Err(Error::OutOfBulk { x, y, delta: BULK_DELTA });
        }
        Ok(())
    }

    /// GOE components and `R_N = 2 S S^T + D J^T + D^T J` in `lambda` units.
    pub fn goe_cluster(&self, x: f64, y: f64) -> Result<GoeCluster> {
        if self.symmetry != Symmetry::Goe {
            return Err(Error::InvalidInput("goe_cluster needs a GOE kernel".into()));
        }
        self.check_bulk(x, y)?;
        Ok(self.goe_cluster_unchecked(x, y))
    }

    pub(crate) fn goe_cluster_unchecked(&self, x: f64, y: f64) -> GoeCluster {
        let s = self.sqrt_n();
        let nn = self.n as f64;
        let (bx, by) = (self.basis(x * s), self.basis(y * s));
        let c = GoeComponents {
            s_xy: s * self.s_u(&bx, &by),
            s_yx: s * self.s_u(&by, &bx),
            d_xy: nn * self.d_u(&bx, &by),
            d_yx: nn * self.d_u(&by, &bx),
            j_xy: self.j_u(&bx, &by),
            j_yx: self.j_u(&by, &bx),
            e_n1: s * self.e_u(&bx, &by),
        };
        GoeCluster { r_n: 2.0 * c.s_xy * c.s_yx + c.d_xy * c.j_yx + c.d_yx * c.j_xy, components: c }
    }

    /// `int sg(x - t) S(t, y) dt` in `lambda` units, the `I_N(x, y)` of the GOE kernel.
    pub fn goe_i(&self, x: f64, y: f64) -> f64 {
        let s = self.sqrt_n();
        let (bx, by) = (self.basis(x * s), self.basis(y * s));
        self.j_u(&bx, &by)
            + 0.5 * (x - y).signum() * ((x != y) as u8 as f64)
            + self.odd_norm.map_or(0.0, |i| by.eps[self.n - 1] / i)
    }

    /// `S_N(x, y)` in `lambda` units.
    pub fn goe_s(&self, x: f64, y: f64) -> f64 {
        let s = self.sqrt_n();
        s * self.s_u(&self.basis(x * s), &self.basis(y * s))
    }

    /// One-point density normalized to integrate to one.
    pub fn density(&self, e: f64) -> f64 {
        match self.symmetry {
            Symmetry::Gue => self.cd_kernel(e, e) / self.n as f64,
            Symmetry::Goe => self.goe_s(e, e) / self.n as f64,
        }
    }

    pub fn density_of_states(&self, e: f64) -> Result<DensityOfStates> {
        if e.abs() > 1.5 {
            return Err(Error::InvalidInput(format!("density corrections are stated for |E| <= 1.5, got {e}")));
        }
        Ok(DensityOfStates { rho: self.density(e), correction_predicted: density_correction(self.n, self.symmetry, e) })
    }

    /// `Cov(sum f(lambda_i), sum g(lambda_i))` for `f`, `g` supported in the
    /// bulk window `(-2 + delta, 2 - delta)`.
    pub fn kernel_covariance<F, G>(&self, f: &F, g: &G) -> Result<KernelCovariance>
    where
        F: TestFunction<f64> + ?Sized,
        G: TestFunction<f64> + ?Sized,
    {
        let edge = 2.0 - BULK_DELTA;
        let (fs, gs) = match (f.support(), g.support()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidInput("kernel covariance needs compactly supported test functions".into())),
        };
        for (a, b) in [fs, gs] {
            if a <= -edge || b >= edge {
                return Err(Error::OutOfBulk { x: a, y: b, delta: BULK_DELTA });
            }
        }
        let lo = fs.0.min(gs.0);
        let hi = fs.1.max(gs.1);
        self.covariance_on(f, g, lo, hi, None)
    }

    /// Covariance with both functions integrated over `[lo, hi]` (in `lambda`).
    /// No bulk restriction: the kernel formulas are exact on the whole line.
    pub fn covariance_on<F, G>(&self, f: &F, g: &G, lo: f64, hi: f64, step: Option<f64>) -> Result<KernelCovariance>
    where
        F: TestFunction<f64> + ?Sized,
        G: TestFunction<f64> + ?Sized,
    {
        if !(hi > lo) {
            return Err(Error::InvalidInput("empty integration range".into()));
        }
        let s = self.sqrt_n();
        let scale = f.scale().min(g.scale());
        let h = step.unwrap_or_else(|| (s * scale / 12.0).min(0.02));
        let points = (((hi - lo) * s / h).ceil() as usize).max(8);
        let points = points + points % 2;
        let fine = self.covariance_grid(f, g, lo * s, hi * s, points)?;
        let coarse = self.covariance_grid(f, g, lo * s, hi * s, points / 2)?;
        Ok(KernelCovariance { value: fine, error_estimate: (fine - coarse).abs(), step: (hi - lo) / points as f64 })
    }

    /// Trapezoid on `intervals + 1` points in `u`. Rank-structured: every
    /// double integral is either a trace of moment matrices or a 1D integral
    /// against a running `eps` transform.
    fn covariance_grid<F, G>(&self, f: &F, g: &G, u_lo: f64, u_hi: f64, intervals: usize) -> Result<f64>
    where
        F: TestFunction<f64> + ?Sized,
        G: TestFunction<f64> + ?Sized,
    {
        let n = self.n;
        let s = self.sqrt_n();
        let h = (u_hi - u_lo) / intervals as f64;
        let goe = self.symmetry == Symmetry::Goe;
        // Columns of the rank decomposition S = sum a_k(x) b_k(y).
        let rank = if goe { n + 1 + self.odd_norm.is_some() as usize } else { n };
        // J(y, x) = sum_l c_l(y) e_l(x) - eps(y - x); one extra pair for odd N.
        let jrank = rank + self.odd_norm.is_some() as usize;

        let mut af = DMatrix::<f64>::zeros(rank, rank);
        let mut ag = DMatrix::<f64>::zeros(rank, rank);
        let mut pf = DMatrix::<f64>::zeros(rank, jrank);
        let mut pg = DMatrix::<f64>::zeros(rank, jrank);
        let mut qf = DMatrix::<f64>::zeros(rank, jrank);
        let mut qg = DMatrix::<f64>::zeros(rank, jrank);
        let mut mean_field = 0.0;
        // Running eps-transform accumulators for f a_k and g a_k.
        let mut cum_f = vec![0.0; rank];
        let mut cum_g = vec![0.0; rank];
        let mut last_f = vec![0.0; rank];
        let mut last_g = vec![0.0; rank];
        let mut first_df = vec![0.0; rank];
        let mut first_dg = vec![0.0; rank];
        let mut end_f = vec![0.0; rank];
        let mut end_g = vec![0.0; rank];
        // sum_k int g b_k' C_k^f and int g b_k', likewise with f and g swapped.
        let mut cross_fg = 0.0;
        let mut cross_gf = 0.0;
        let mut gb_int = vec![0.0; rank];
        let mut fb_int = vec![0.0; rank];

        let chunk = 1024;
        let total = intervals + 1;
        let mut a = DMatrix::<f64>::zeros(chunk, rank);
        let mut b = DMatrix::<f64>::zeros(chunk, rank);
        let mut bp = DMatrix::<f64>::zeros(chunk, rank);
        let mut cc = DMatrix::<f64>::zeros(chunk, jrank);
        let mut ee = DMatrix::<f64>::zeros(chunk, jrank);
        let mut wf = vec![0.0; chunk];
        let mut wg = vec![0.0; chunk];

        let half_sqrt_n = 0.5 * s;
        let inv_i = self.odd_norm.map(|i| 1.0 / i);
        let mut start = 0;
        while start < total {
            let len = chunk.min(total - start);
            for r in 0..len {
                let idx = start + r;
                let u = u_lo + h * idx as f64;
                let lam = u / s;
                let w = if idx == 0 || idx == total - 1 { 0.5 * h } else { h };
                let (fv, gv) = (f.value(lam), g.value(lam));
                let (fd, gd) = (f.derivative(lam) / s, g.derivative(lam) / s);
                wf[r] = w * fv;
                wg[r] = w * gv;
                let pb = self.basis(u);
                let mut av = vec![0.0; rank];
                let mut adv = vec![0.0; rank];
                for k in 0..n {
                    av[k] = pb.psi[k];
                    adv[k] = pb.dpsi(k);
                    a[(r, k)] = pb.psi[k];
                    b[(r, k)] = pb.psi[k];
                    bp[(r, k)] = pb.dpsi(k);
                }
                if goe {
                    av[n] = half_sqrt_n * pb.psi[n - 1];
                    adv[n] = half_sqrt_n * pb.dpsi(n - 1);
                    a[(r, n)] = av[n];
                    b[(r, n)] = pb.eps[n];
                    bp[(r, n)] = pb.psi[n];
                    for k in 0..n {
                        cc[(r, k)] = pb.eps[k];
                        ee[(r, k)] = pb.psi[k];
                    }
                    cc[(r, n)] = half_sqrt_n * pb.eps[n - 1];
                    ee[(r, n)] = pb.eps[n];
                    if let Some(inv) = inv_i {
                        av[n + 1] = pb.psi[n - 1] * inv;
                        adv[n + 1] = pb.dpsi(n - 1) * inv;
                        a[(r, n + 1)] = av[n + 1];
                        b[(r, n + 1)] = 1.0;
                        bp[(r, n + 1)] = 0.0;
                        cc[(r, n + 1)] = pb.eps[n - 1] * inv;
                        ee[(r, n + 1)] = 1.0;
                        cc[(r, n + 2)] = -inv;
                        ee[(r, n + 2)] = pb.eps[n - 1];
                    }
                }
                let rho: f64 = (0..rank).map(|k| a[(r, k)] * b[(r, k)]).sum();
                mean_field += w * fv * gv * rho;

                if goe {
                    // Cumulative trapezoid with the first Euler-Maclaurin correction.
                    for k in 0..rank {
                        let (hf, hg) = (fv * av[k], gv * av[k]);
                        let (dhf, dhg) = (fd * av[k] + fv * adv[k], gd * av[k] + gv * adv[k]);
                        if idx == 0 {
                            first_df[k] = dhf;
                            first_dg[k] = dhg;
                        } else {
                            cum_f[k] += 0.5 * h * (last_f[k] + hf);
                            cum_g[k] += 0.5 * h * (last_g[k] + hg);
                        }
                        last_f[k] = hf;
                        last_g[k] = hg;
                        let cf = cum_f[k] - h * h / 12.0 * (dhf - first_df[k]);
                        let cg = cum_g[k] - h * h / 12.0 * (dhg - first_dg[k]);
                        end_f[k] = cf;
                        end_g[k] = cg;
                        let bpk = bp[(r, k)];
                        cross_fg += wg[r] * bpk * cf;
                        cross_gf += wf[r] * bpk * cg;
                        gb_int[k] += wg[r] * bpk;
                        fb_int[k] += wf[r] * bpk;
                    }
                }
            }
            let rows = |m: &DMatrix<f64>, c: usize| m.rows(0, len).columns(0, c).into_owned();
            let (a_c, b_c) = (rows(&a, rank), rows(&b, rank));
            let scale_rows = |m: &DMatrix<f64>, w: &[f64]| {
                let mut out = m.clone();
                for (r, wr) in w.iter().enumerate().take(len) {
                    out.row_mut(r).scale_mut(*wr);
                }
                out
            };
            let a_f = scale_rows(&a_c, &wf);
            let a_g = scale_rows(&a_c, &wg);
            af += a_f.transpose() * &b_c;
            ag += a_g.transpose() * &b_c;
            if goe {
                let (bp_c, c_c, e_c) = (rows(&bp, rank), rows(&cc, jrank), rows(&ee, jrank));
                pf += a_f.transpose() * &e_c;
                pg += a_g.transpose() * &e_c;
                qf += scale_rows(&bp_c, &wf).transpose() * &c_c;
                qg += scale_rows(&bp_c, &wg).transpose() * &c_c;
            }
            start += len;
        }

        // tr(A_f A_g) = sum_{kl} A_f[k, l] A_g[l, k]
        let ss = af.component_mul(&ag.transpose()).sum();
        let mut two_point = ss;
        if goe {
            let eps_term = |cross: f64, cum: &[f64], b_int: &[f64]| -> f64 {
                cross - 0.5 * cum.iter().zip(b_int).map(|(c, b)| c * b).sum::<f64>()
            };
            // X(f, g) = int int f(x) g(y) D(x, y) J(y, x)
            let x_fg = -pf.component_mul(&qg).sum() + eps_term(cross_fg, &end_f, &gb_int);
            let x_gf = -pg.component_mul(&qf).sum() + eps_term(cross_gf, &end_g, &fb_int);
            two_point += 0.5 * (x_fg + x_gf);
        }
        let v = mean_field - two_point;
        if !v.is_finite() {
            return Err(Error::NonConvergence { what: "kernel covariance quadrature", achieved: f64::NAN });
        }
        Ok(v)
    }
}

/// The `1/N` term of the bulk density of states.
pub fn density_correction(n: usize, symmetry: Symmetry, e: f64) -> f64 {
    let nn = n as f64;
    let rho = rho_sc(e);
    let pi = std::f64::consts::PI;
    match symmetry {
        Symmetry::Gue => {
            // Sign fixed against the exact kernel: (-1)^{N+1}.
            let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
            let phase = nn * (0.5 * e * (4.0 - e * e).sqrt() + 2.0 * (0.5 * e).asin());
            sign * phase.cos() / (4.0 * pi.powi(3) * nn * rho * rho)
        }
        Symmetry::Goe => -1.0 / (4.0 * pi * pi * nn * rho),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::ClosedForm;

    fn full_line(k: &ClusterKernel, f: &ClosedForm, g: &ClosedForm) -> f64 {
        let reach = 2.0 + 12.0 / (k.n as f64).sqrt();
        k.covariance_on(f, g, -reach, reach, Some(0.01)).unwrap().value
    }

    // Entry-moment oracles. GUE (diagonal variance 1/N): Var tr H = 1,
    // Var tr H^2 = 2. GOE (diagonal variance 2/N): Var tr H = 2,
    // Var tr H^2 = 4 + 4/N. Odd moments are uncorrelated with even ones.
    #[test]
    fn exact_moments_from_kernels() {
        let x = ClosedForm::identity();
        let x2 = ClosedForm::square();
        for n in [6usize, 7, 20, 21] {
            let gue = ClusterKernel::new(n, Symmetry::Gue).unwrap();
            assert!((full_line(&gue, &x, &x) - 1.0).abs() < 1e-9);
            assert!((full_line(&gue, &x2, &x2) - 2.0).abs() < 1e-9);
            let goe = ClusterKernel::new(n, Symmetry::Goe).unwrap();
            let nn = n as f64;
            assert!((full_line(&goe, &x, &x) - 2.0).abs() < 1e-8, "n={n}");
            let v = full_line(&goe, &x2, &x2);
            assert!((v - (4.0 + 4.0 / nn)).abs() < 1e-8, "n={n}: {v}");
            assert!(full_line(&goe, &x, &x2).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_density_and_symmetry() {
        let k = ClusterKernel::new(200, Symmetry::Gue).unwrap();
        assert!((k.cd_kernel(0.5, 0.5) / 200.0 - rho_sc(0.5)).abs() < 0.02);
        for &(x, y) in &[(0.1, 0.37), (-1.2, 0.9), (1.5, 1.52)] {
            assert!((k.cd_kernel(x, y) - k.cd_kernel(y, x)).abs() < 1e-10);
            assert!((k.cd_kernel(x, y) - k.cd_kernel_sum(x, y)).abs() < 1e-8);
        }
        let diag = k.cd_kernel(0.3, 0.3);
        let near = k.cd_kernel(0.3, 0.3 + 2e-6);
        assert!((diag - near).abs() < 1e-6 * diag.abs().max(1.0) * 10.0);
        assert!((diag - k.cd_kernel_sum(0.3, 0.3)).abs() < 1e-8);
    }

    #[test]
    fn sine_kernel_regime() {
        let n = 400;
        let k = ClusterKernel::new(n, Symmetry::Gue).unwrap();
        let nrho = n as f64 * rho_sc(0.0);
        for r in [0.5, 1.0, 1.5, 2.5, 3.0] {
            let t = k.gue_cluster(0.0, r / nrho);
            let pr = std::f64::consts::PI * r;
            let want = nrho * nrho * (pr.sin() / pr).powi(2);
            // Near zeros of the sine kernel compare on the scale of its envelope.
            let tol = 0.1 * want.max(0.05 * nrho * nrho / (pr * pr));
            assert!((t - want).abs() <= tol, "r={r}: {t} vs {want}");
            assert!(t >= 0.0);
        }
    }

    #[test]
    fn gue_density_oscillation() {
        for (n, e) in [(60, 0.5), (61, 0.5), (60, 0.0), (61, 0.3)] {
            let d = ClusterKernel::new(n, Symmetry::Gue).unwrap().density_of_states(e).unwrap();
            let unit = 1.0 / (4.0 * std::f64::consts::PI.powi(3) * rho_sc(e).powi(2));
            let observed = n as f64 * (d.rho - rho_sc(e));
            let predicted = n as f64 * d.correction_predicted;
            assert!((observed - predicted).abs() <= 0.3 * unit, "n={n} E={e}: {observed} vs {predicted}");
        }
        // Exact N (rho - rho_sc) at N = 60, E = 0.5, from scipy Hermite polynomials.
        let d = ClusterKernel::new(60, Symmetry::Gue).unwrap().density(0.5);
        assert!((60.0 * (d - rho_sc(0.5)) - 0.080_806_634_232_47).abs() < 1e-9);
    }

    #[test]
    fn goe_density_shift() {
        let (n, e) = (60, 0.5);
        let d = ClusterKernel::new(n, Symmetry::Goe).unwrap().density_of_states(e).unwrap();
        let observed = n as f64 * (d.rho - rho_sc(e));
        let predicted = n as f64 * d.correction_predicted;
        assert!(((observed - predicted) / predicted).abs() <= 0.25, "{observed} vs {predicted}");
    }

    #[test]
    fn density_error_halves() {
        let err = |n: usize| {
            let k = ClusterKernel::new(n, Symmetry::Goe).unwrap();
            (k.density(0.3) - rho_sc(0.3)).abs()
        };
        let order = (err(50) / err(100)).log2();
        assert!(order >= 0.8, "{order}");
    }

    #[test]
    fn goe_i_derivative_is_s() {
        for n in [10usize, 11] {
            let k = ClusterKernel::new(n, Symmetry::Goe).unwrap();
            let (y, x) = (0.4, -0.3);
            let h = 1e-5;
            let d = (k.goe_i(y + h, x) - k.goe_i(y - h, x)) / (2.0 * h);
            assert!((d - k.goe_s(y, x)).abs() < 1e-5 * (1.0 + d.abs()), "n={n}");
        }
    }

    #[test]
    fn goe_components_bounded_in_bulk() {
        for n in [40usize, 41] {
            let k = ClusterKernel::new(n, Symmetry::Goe).unwrap();
            let mut e_max: f64 = 0.0;
            let mut j_max: f64 = 0.0;
            for i in 0..15 {
                for j in 0..15 {
                    let x = -1.9 + 3.8 * i as f64 / 14.0;
                    let y = -1.9 + 3.8 * j as f64 / 14.0 + 0.013;
                    let c = k.goe_cluster(x, y).unwrap().components;
                    e_max = e_max.max(c.e_n1.abs());
                    j_max = j_max.max(c.j_xy.abs());
                }
            }
            assert!(e_max <= 5.0, "n={n}: E_N1 {e_max}");
            assert!(j_max <= 5.0 * (n as f64).ln(), "n={n}: J {j_max}");
        }
        let k = ClusterKernel::new(41, Symmetry::Goe).unwrap();
        assert!(matches!(k.goe_cluster(1.97, 0.0), Err(Error::OutOfBulk { .. })));
    }

    #[test]
    fn sum_rule_for_goe_cluster() {
        // int R_N(x, y) dy = 2 rho_N(x), with rho_N = S_N(x, x).
        let n = 12;
        let k = ClusterKernel::new(n, Symmetry::Goe).unwrap();
        let x = 0.35;
        let steps = 6000;
        let (lo, hi) = (-4.5, 4.5);
        let h = (hi - lo) / steps as f64;
        let mut s = 0.0;
        for i in 0..=steps {
            let y = lo + h * i as f64;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            s += w * k.goe_cluster_unchecked(x, y).r_n;
        }
        s *= h;
        assert!((s - 2.0 * k.goe_s(x, x)).abs() < 1e-4, "{s}");
    }

    #[test]
    fn covariance_rejects_edge_support() {
        let k = ClusterKernel::new(20, Symmetry::Gue).unwrap();
        let f = ClosedForm::SmoothIndicator { left: -1.99, right: 0.0, ramp: 0.2 };
        assert!(k.kernel_covariance(&f, &f).is_err());
        let unbounded = ClosedForm::identity();
        assert!(k.kernel_covariance(&unbounded, &unbounded).is_err());
        let zero = ClosedForm::Bump { center: 0.0, radius: 1.0 }.scaled(0.0);
        assert_eq!(k.kernel_covariance(&zero, &zero).unwrap().value, 0.0);
    }
}
