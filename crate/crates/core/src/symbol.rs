//! Per-frequency linear algebra of the linearized elastic system.
//!
//! For a frequency `xi` the generator `A_xi` is a 6x6 block matrix acting on
//! `(u_hat, v_hat)`. The Riesz projections `R1 = xi xi^T / |xi|^2` and
//! `R2 = I - R1` split it into two decoupled 2x2 problems
//!
//! ```text
//!   A_j = [[0, 1], [-alpha_j^2 |xi|^2, -nu |xi|^2]],   j = 1 (pressure), 2 (shear)
//! ```
//!
//! and every function of `A_xi` used by the solvers is assembled as
//! `sum_j f(A_j) (x) R_j`. For a 2x2 matrix with eigenvalues `a = sigma_+`,
//! `b = sigma_-` the Newton form `f(A) = f(b) I + f[a, b] (A - b I)` is used,
//! where `f[a, b]` is a divided difference evaluated without cancellation at
//! or near the confluent point `a = b`.

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Roots closer than `sqrt(CONFLUENCE_REL) * nu |xi|^2` are flagged confluent.
pub const CONFLUENCE_REL: f64 = 1e-8;
/// Minimum admissible `|1 - exp(sigma T)|`.
pub const SINGULAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticParams {
    mu: f64,
    lambda: f64,
    nu: f64,
    alpha1: f64,
    alpha2: f64,
}

impl ElasticParams {
    pub fn new(mu: f64, lambda: f64, nu: f64) -> Result<Self> {
        if !(mu.is_finite() && lambda.is_finite() && nu.is_finite()) {
            return Err(Error::InvalidParams("non-finite constant".into()));
        }
        if mu <= 0.0 {
            return Err(Error::InvalidParams(format!("mu = {mu} must be positive")));
        }
        if lambda + 2.0 * mu <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "lambda + 2 mu = {} must be positive",
                lambda + 2.0 * mu
            )));
        }
        if nu <= 0.0 {
            return Err(Error::InvalidParams(format!("nu = {nu} must be positive")));
        }
        Ok(Self {
            mu,
            lambda,
            nu,
            alpha1: (lambda + 2.0 * mu).sqrt(),
            alpha2: mu.sqrt(),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    /// Pressure wave speed `sqrt(lambda + 2 mu)`.
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }
    /// Shear wave speed `sqrt(mu)`.
    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// `alpha_j^2`, taken from the Lamé constants directly.
    pub fn alpha_sq(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Pressure => self.lambda + 2.0 * self.mu,
            Branch::Shear => self.mu,
        }
    }

    pub fn alpha(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Pressure => self.alpha1,
            Branch::Shear => self.alpha2,
        }
    }

    /// `|xi| = 2 alpha_j / nu`, where the two roots of branch j coincide.
    pub fn confluence_radius(&self, branch: Branch) -> f64 {
        2.0 * self.alpha(branch) / self.nu
    }
}

/// Branch index: `Pressure` is j = 1 (curl-free part), `Shear` is j = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Pressure,
    Shear,
}

pub const BRANCHES: [Branch; 2] = [Branch::Pressure, Branch::Shear];

impl Branch {
    pub fn index(self) -> usize {
        match self {
            Branch::Pressure => 0,
            Branch::Shear => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharRoots {
    /// `sigma[j][0] = sigma_{j,+}`, `sigma[j][1] = sigma_{j,-}`.
    pub sigma: [[C64; 2]; 2],
    pub confluent: [bool; 2],
}

impl CharRoots {
    pub fn plus(&self, branch: Branch) -> C64 {
        self.sigma[branch.index()][0]
    }
    pub fn minus(&self, branch: Branch) -> C64 {
        self.sigma[branch.index()][1]
    }
}

/// Roots of `s^2 + nu r^2 s + alpha^2 r^2 = 0` with the branch convention:
/// `+` has the larger real part (real roots) or positive imaginary part.
fn branch_roots(alpha_sq: f64, nu: f64, r: f64) -> ([C64; 2], bool) {
    if r == 0.0 {
        return ([C64::new(0.0, 0.0); 2], false);
    }
    let nur2 = nu * r * r;
    let disc = nur2 * nur2 - 4.0 * alpha_sq * r * r;
    let confluent = disc.abs() < CONFLUENCE_REL * nur2 * nur2;
    // disc = r^2 (nu^2 r^2 - 4 alpha^2); the factored form avoids cancellation.
    let inner = nu * nu * r * r - 4.0 * alpha_sq;
    if inner < 0.0 {
        let w = 0.5 * r * (-inner).sqrt();
        let re = -0.5 * nur2;
        ([C64::new(re, w), C64::new(re, -w)], confluent)
    } else {
        let s = r * inner.sqrt();
        let minus = -0.5 * (nur2 + s);
        let plus = alpha_sq * r * r / minus;
        ([C64::new(plus, 0.0), C64::new(minus, 0.0)], confluent)
    }
}

pub fn char_roots(params: &ElasticParams, xi_norm: f64) -> CharRoots {
    let mut sigma = [[C64::new(0.0, 0.0); 2]; 2];
    let mut confluent = [false; 2];
    for b in BRANCHES {
        let (s, c) = branch_roots(params.alpha_sq(b), params.nu, xi_norm);
        sigma[b.index()] = s;
        confluent[b.index()] = c;
    }
    CharRoots { sigma, confluent }
}

/// `exp(z) - 1` without cancellation for small `|z|`.
pub fn expm1c(z: C64) -> C64 {
    let (x, y) = (z.re, z.im);
    let s = (0.5 * y).sin();
    C64::new(x.exp_m1() * y.cos() - 2.0 * s * s, x.exp() * y.sin())
}

/// `(exp(a t) - exp(b t)) / (a - b)`, continuous across `a = b`.
///
/// Uses `t exp(m t) sinh(x) / x` with `m = (a + b) / 2`, `x = (a - b) t / 2`
/// summed as a series for `|x| < 1/2`, and the direct quotient otherwise.
pub fn exp_divided_difference(a: C64, b: C64, t: f64) -> C64 {
    let x = (a - b) * (0.5 * t);
    if x.norm() < 0.5 {
        let m = (a + b) * 0.5;
        t * (m * t).exp() * sinhc_series(x)
    } else {
        ((a * t).exp() - (b * t).exp()) / (a - b)
    }
}

fn sinhc_series(x: C64) -> C64 {
    let x2 = x * x;
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    let mut n = 1.0;
    loop {
        term *= x2 / ((2.0 * n) * (2.0 * n + 1.0));
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
        n += 1.0;
    }
    sum
}

/// `1 / (1 - exp(sigma T))`, rejecting values below the singular floor.
pub fn resolvent_scalar(sigma: C64, period: f64) -> Result<C64> {
    let d = -expm1c(sigma * period);
    if d.norm() < SINGULAR_FLOOR {
        return Err(Error::NearSingular { sigma, value: d.norm() });
    }
    Ok(C64::new(1.0, 0.0) / d)
}

/// 2x2 complex matrix acting on the `(u, v)` pair of one branch.
pub type Mat2C = Matrix2<C64>;

/// The scalar data of one branch at one `|xi|`, with the matrix functions of
/// `A_j` the solvers need.
#[derive(Debug, Clone, Copy)]
pub struct BranchSymbol {
    pub plus: C64,
    pub minus: C64,
    /// `alpha_j^2 |xi|^2`
    pub stiffness: f64,
    /// `nu |xi|^2`
    pub damping: f64,
    pub xi_norm: f64,
    pub confluent: bool,
}

impl BranchSymbol {
    pub fn new(params: &ElasticParams, branch: Branch, xi_norm: f64) -> Self {
        let (s, confluent) = branch_roots(params.alpha_sq(branch), params.nu, xi_norm);
        Self {
            plus: s[0],
            minus: s[1],
            stiffness: params.alpha_sq(branch) * xi_norm * xi_norm,
            damping: params.nu * xi_norm * xi_norm,
            xi_norm,
            confluent,
        }
    }

    /// The branch generator `[[0, 1], [-alpha^2 r^2, -nu r^2]]`.
    pub fn generator(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -self.stiffness, -self.damping)
    }

    /// Newton form `f(b) I + f[a,b] (A - b I)`, with `A - b I = [[-b, 1], [-ab, a]]`.
    fn newton(&self, f_minus: C64, dd: C64) -> Mat2C {
        let (a, b) = (self.plus, self.minus);
        let ab = C64::new(self.stiffness, 0.0);
        Matrix2::new(f_minus - b * dd, dd, -ab * dd, f_minus + a * dd)
    }

    /// `exp(t A_j)`: `[[K0, K1], [dK0/dt, dK1/dt]]` of the branch.
    pub fn propagator(&self, t: f64) -> Mat2C {
        if self.xi_norm == 0.0 {
            return Matrix2::new(
                C64::new(1.0, 0.0),
                C64::new(t, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
            );
        }
        let dd = exp_divided_difference(self.plus, self.minus, t);
        self.newton((self.minus * t).exp(), dd)
    }

    /// `(I - exp(T A_j))^{-1}`.
    pub fn resolvent(&self, period: f64) -> Result<Mat2C> {
        if self.xi_norm == 0.0 {
            return Err(Error::ZeroMode("resolvent factor"));
        }
        let ga = resolvent_scalar(self.plus, period)?;
        let gb = resolvent_scalar(self.minus, period)?;
        let dd = exp_divided_difference(self.plus, self.minus, period) * ga * gb;
        Ok(self.newton(gb, dd))
    }

    /// `exp((t + T) A_j) (I - exp(T A_j))^{-1}`; its (0,1) entry is the Q kernel
    /// of the branch and its (1,1) entry the time derivative of that kernel.
    pub fn q_matrix(&self, t: f64, period: f64) -> Result<Mat2C> {
        if self.xi_norm == 0.0 {
            return Err(Error::ZeroMode("Q kernel"));
        }
        let (a, b) = (self.plus, self.minus);
        let tau = t + period;
        let ga = resolvent_scalar(a, period)?;
        let gb = resolvent_scalar(b, period)?;
        let g_dd = exp_divided_difference(a, b, period) * ga * gb;
        let dd = exp_divided_difference(a, b, tau) * gb + (a * tau).exp() * g_dd;
        Ok(self.newton((b * tau).exp() * gb, dd))
    }

    /// Scalar Q kernel of the branch (coefficient of `R_j`).
    pub fn q_scalar(&self, t: f64, period: f64) -> Result<C64> {
        Ok(self.q_matrix(t, period)?[(0, 1)])
    }

    /// Second columns of `h phi_1(h A_j)` and `h phi_2(h A_j)`, i.e. the
    /// exact responses over one step to a unit velocity-equation source that
    /// is constant, respectively linear ramp `s/h`, in time.
    ///
    /// Evaluated in the scaled basis `(|xi| u, v)` where the generator has
    /// entries of comparable size: Taylor series when `||h A~||_1 <= 1`,
    /// otherwise the inverse recursion `phi_{k+1} = (hA)^{-1} (phi_k - I/k!)`.
    pub fn phi_columns(&self, h: f64) -> ([f64; 2], [f64; 2]) {
        let r = self.xi_norm;
        if r == 0.0 {
            // A = [[0,1],[0,0]] is nilpotent.
            return ([0.5 * h * h, h], [h * h / 6.0, 0.5 * h]);
        }
        let alpha_sq = self.stiffness / (r * r);
        let scaled = Matrix2::new(0.0, r, -alpha_sq * r, -self.damping) * h;
        let norm1 = (scaled[(1, 0)].abs()).max(scaled[(0, 1)].abs() + scaled[(1, 1)].abs());
        let (phi1, phi2) = if norm1 <= 1.0 {
            (phi_series(&scaled, 1), phi_series(&scaled, 2))
        } else {
            let e = self.propagator(h).map(|z| z.re);
            let d = Matrix2::new(r, 0.0, 0.0, 1.0);
            let d_inv = Matrix2::new(1.0 / r, 0.0, 0.0, 1.0);
            let e_scaled = d * e * d_inv;
            let inv = scaled.try_inverse().expect("scaled generator is invertible for xi != 0");
            let id = Matrix2::identity();
            let phi1 = inv * (e_scaled - id);
            let phi2 = inv * (phi1 - id);
            (phi1, phi2)
        };
        // Back to (u, v): first row divided by r; second column unchanged by D.
        let c1 = [h * phi1[(0, 1)] / r, h * phi1[(1, 1)]];
        let c2 = [h * phi2[(0, 1)] / r, h * phi2[(1, 1)]];
        (c1, c2)
    }
}

fn phi_series(z: &Matrix2<f64>, k: u32) -> Matrix2<f64> {
    let mut fact = 1.0;
    for i in 1..=k {
        fact *= i as f64;
    }
    let mut term = Matrix2::identity() / fact;
    let mut sum = term;
    let mut n = 1;
    loop {
        term = z * term / (n + k) as f64;
        sum += term;
        if term.camax() <= 1e-18 * sum.abs().max().max(1e-300) || n > 60 {
            break;
        }
        n += 1;
    }
    sum
}

pub fn riesz_pair(xi: &[f64; 3]) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if r2 == 0.0 {
        return Err(Error::ZeroMode("Riesz projection"));
    }
    let v = Vector3::new(xi[0], xi[1], xi[2]);
    let r1 = v * v.transpose() / r2;
    Ok((r1, Matrix3::identity() - r1))
}

fn xi_norm(xi: &[f64; 3]) -> f64 {
    (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
}

/// Kronecker-type assembly `sum_j M_j (x) R_j` into a 6x6 matrix.
fn assemble_blocks(blocks: [Mat2C; 2], riesz: [Matrix3<f64>; 2]) -> Matrix6<C64> {
    let mut out = Matrix6::<C64>::zeros();
    for j in 0..2 {
        for p in 0..2 {
            for q in 0..2 {
                let c = blocks[j][(p, q)];
                for r in 0..3 {
                    for s in 0..3 {
                        out[(3 * p + r, 3 * q + s)] += c * riesz[j][(r, s)];
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeRole {
    Symbol,
    Propagator,
    ResolventFactor,
    KernelBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrix {
    pub entries: Matrix6<C64>,
    pub role: ModeRole,
}

impl ModeMatrix {
    pub fn upper_left(&self) -> Matrix3<C64> {
        self.entries.fixed_view::<3, 3>(0, 0).into_owned()
    }
    pub fn upper_right(&self) -> Matrix3<C64> {
        self.entries.fixed_view::<3, 3>(0, 3).into_owned()
    }
    pub fn lower_left(&self) -> Matrix3<C64> {
        self.entries.fixed_view::<3, 3>(3, 0).into_owned()
    }
    pub fn lower_right(&self) -> Matrix3<C64> {
        self.entries.fixed_view::<3, 3>(3, 3).into_owned()
    }
}

/// Riesz and spectral projections at one frequency.
///
/// When branch j is flagged confluent its eigenvalue is defective and no
/// split into `P_{j,+}`, `P_{j,-}` exists. Then `P_{j,+}` holds the whole
/// branch projector `diag(R_j, R_j)`, `P_{j,-} = 0`, and `nilpotent[j]`
/// carries `(A - sigma_j) diag(R_j, R_j)` so that
/// `A = sum sigma P + sum nilpotent` still holds.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub r1: Matrix3<f64>,
    pub r2: Matrix3<f64>,
    pub rtilde: Matrix3<f64>,
    /// `p[j][0] = P_{j,+}`, `p[j][1] = P_{j,-}`.
    pub p: [[Matrix6<C64>; 2]; 2],
    pub nilpotent: [Option<Matrix6<C64>>; 2],
    pub roots: CharRoots,
}

pub fn projections(params: &ElasticParams, xi: &[f64; 3]) -> Result<ProjectionSet> {
    let (r1, r2) = riesz_pair(xi)?;
    let r = xi_norm(xi);
    let roots = char_roots(params, r);
    let riesz = [r1, r2];
    let zero2 = Mat2C::zeros();
    let mut p = [[Matrix6::<C64>::zeros(); 2]; 2];
    let mut nilpotent = [None, None];
    for b in BRANCHES {
        let j = b.index();
        let sym = BranchSymbol::new(params, b, r);
        let mut only = [zero2; 2];
        if sym.confluent {
            only[j] = Mat2C::identity();
            p[j][0] = assemble_blocks(only, riesz);
            let sigma = (sym.plus + sym.minus) * 0.5;
            only[j] = sym.generator().map(|x| C64::new(x, 0.0)) - Mat2C::identity() * sigma;
            nilpotent[j] = Some(assemble_blocks(only, riesz));
        } else {
            let (a, bm) = (sym.plus, sym.minus);
            let inv = C64::new(1.0, 0.0) / (a - bm);
            let ab = C64::new(sym.stiffness, 0.0);
            only[j] = Matrix2::new(-bm, C64::new(1.0, 0.0), -ab, a) * inv;
            p[j][0] = assemble_blocks(only, riesz);
            only[j] = Matrix2::new(a, C64::new(-1.0, 0.0), ab, -bm) * inv;
            p[j][1] = assemble_blocks(only, riesz);
        }
    }
    let rtilde = r1 / params.alpha_sq(Branch::Pressure) + r2 / params.alpha_sq(Branch::Shear);
    Ok(ProjectionSet { r1, r2, rtilde, p, nilpotent, roots })
}

/// The 6x6 generator `A_xi`; defined for every `xi` including 0.
pub fn assemble_symbol(params: &ElasticParams, xi: &[f64; 3]) -> ModeMatrix {
    let mut m = Matrix6::<C64>::zeros();
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    for i in 0..3 {
        m[(i, 3 + i)] = C64::new(1.0, 0.0);
        m[(3 + i, 3 + i)] = C64::new(-params.nu * r2, 0.0);
        for k in 0..3 {
            let mut v = -(params.lambda + params.mu) * xi[i] * xi[k];
            if i == k {
                v -= params.mu * r2;
            }
            m[(3 + i, k)] = C64::new(v, 0.0);
        }
    }
    ModeMatrix { entries: m, role: ModeRole::Symbol }
}

fn branch_assembly(
    params: &ElasticParams,
    xi: &[f64; 3],
    f: impl Fn(&BranchSymbol) -> Result<Mat2C>,
) -> Result<Matrix6<C64>> {
    let (r1, r2) = riesz_pair(xi)?;
    let r = xi_norm(xi);
    let m1 = f(&BranchSymbol::new(params, Branch::Pressure, r))?;
    let m2 = f(&BranchSymbol::new(params, Branch::Shear, r))?;
    Ok(assemble_blocks([m1, m2], [r1, r2]))
}

/// `exp(t A_xi)`; at `xi = 0` the nilpotent closed form `I + t N`.
pub fn propagator(params: &ElasticParams, xi: &[f64; 3], t: f64) -> ModeMatrix {
    let entries = if xi_norm(xi) == 0.0 {
        let mut m = Matrix6::<C64>::identity();
        for i in 0..3 {
            m[(i, 3 + i)] = C64::new(t, 0.0);
        }
        m
    } else {
        branch_assembly(params, xi, |s| Ok(s.propagator(t))).expect("xi != 0")
    };
    ModeMatrix { entries, role: ModeRole::Propagator }
}

/// `(K0_hat(t, xi), K1_hat(t, xi))`.
pub fn kernel_blocks(
    params: &ElasticParams,
    xi: &[f64; 3],
    t: f64,
) -> Result<(Matrix3<C64>, Matrix3<C64>)> {
    if xi_norm(xi) == 0.0 {
        return Err(Error::ZeroMode("kernel blocks"));
    }
    let (r1, r2) = riesz_pair(xi)?;
    let r = xi_norm(xi);
    let mut k0 = Matrix3::<C64>::zeros();
    let mut k1 = Matrix3::<C64>::zeros();
    for (b, rj) in [(Branch::Pressure, r1), (Branch::Shear, r2)] {
        let e = BranchSymbol::new(params, b, r).propagator(t);
        k0 += rj.map(|x| C64::new(x, 0.0)) * e[(0, 0)];
        k1 += rj.map(|x| C64::new(x, 0.0)) * e[(0, 1)];
    }
    Ok((k0, k1))
}

/// `(I - exp(T A_xi))^{-1}`.
pub fn resolvent_factor(params: &ElasticParams, xi: &[f64; 3], period: f64) -> Result<ModeMatrix> {
    if xi_norm(xi) == 0.0 {
        return Err(Error::ZeroMode("resolvent factor"));
    }
    let entries = branch_assembly(params, xi, |s| s.resolvent(period))?;
    Ok(ModeMatrix { entries, role: ModeRole::ResolventFactor })
}

/// Q kernel `sum_j Q^(j)(t, xi) R_j` for `t` in `[-T, T]`.
pub fn q_symbol(params: &ElasticParams, xi: &[f64; 3], t: f64, period: f64) -> Result<Matrix3<C64>> {
    if xi_norm(xi) == 0.0 {
        return Err(Error::ZeroMode("Q kernel"));
    }
    let (r1, r2) = riesz_pair(xi)?;
    let r = xi_norm(xi);
    let mut q = Matrix3::<C64>::zeros();
    for (b, rj) in [(Branch::Pressure, r1), (Branch::Shear, r2)] {
        let c = BranchSymbol::new(params, b, r).q_scalar(t, period)?;
        q += rj.map(|x| C64::new(x, 0.0)) * c;
    }
    Ok(q)
}
