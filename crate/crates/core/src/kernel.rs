//! Smoothing kernels: symmetric densities on `[-1, 1]`, their moments, and the
//! jackknife combination `2K(u) - K(u/√2)/√2`.
//!
//! Moments follow the half-line convention used throughout the crate: for even
//! `j`, `mu[j] = 2 ∫_0^R u^j K(u) du` (the full two-sided moment of a symmetric
//! kernel) and for odd `j`, `mu[j] = ∫_0^R u^j K(u) du` (one-sided half).

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Absolute tolerance used for every kernel integral.
pub const QUAD_TOL: f64 = 1e-12;

type KernelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Epanechnikov,
    Triweight,
    Custom(KernelFn),
    Jackknife(Arc<Kernel>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelId {
    Epanechnikov,
    Triweight,
    Custom,
    Jackknife,
}

/// Cached integrals of a kernel, computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstants {
    /// `mu[j]` for `j = 0..=4`, half-line convention for odd `j`.
    pub mu: [f64; 5],
    /// `∫ K(u)^2 du` over the full support.
    pub phi: f64,
    /// `∫_0^R u^j K(u)^2 du` for `j = 0..=2`.
    pub phi_half: [f64; 3],
    /// `(B_K, V_K)` left-boundary constants, when the denominator
    /// `mu2 - 4 mu1^2` is nonzero.
    pub boundary: Option<(f64, f64)>,
}

#[derive(Clone)]
pub struct Kernel {
    id: KernelId,
    shape: Shape,
    radius: f64,
    constants: KernelConstants,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("id", &self.id)
            .field("radius", &self.radius)
            .field("constants", &self.constants)
            .finish()
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::epanechnikov()
    }
}

impl Kernel {
    pub fn epanechnikov() -> Self {
        Self::build(KernelId::Epanechnikov, Shape::Epanechnikov, 1.0)
            .expect("epanechnikov constants are finite")
    }

    pub fn triweight() -> Self {
        Self::build(KernelId::Triweight, Shape::Triweight, 1.0).expect("triweight constants are finite")
    }

    /// Looks a kernel up by its configuration name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Self::epanechnikov()),
            "triweight" => Ok(Self::triweight()),
            other => Err(Error::InvalidKernel(format!("unknown kernel name '{other}'"))),
        }
    }

    /// A user-supplied kernel on `[-1, 1]`. The function must be a symmetric,
    /// nonnegative density; this is checked on a fine grid and by quadrature.
    pub fn custom<F>(f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let f: KernelFn = Arc::new(f);
        for k in 0..=2000 {
            let u = k as f64 / 2000.0;
            let (pos, neg) = (f(u), f(-u));
            if !(pos.is_finite() && neg.is_finite()) {
                return Err(Error::InvalidKernel(format!("non-finite value at u = {u}")));
            }
            if pos < 0.0 || neg < 0.0 {
                return Err(Error::InvalidKernel(format!("negative value near u = {u}")));
            }
            if (pos - neg).abs() > 1e-12 * (1.0 + pos.abs()) {
                return Err(Error::InvalidKernel(format!("not symmetric at u = {u}")));
            }
        }
        let kernel = Self::build(KernelId::Custom, Shape::Custom(f), 1.0)?;
        if (kernel.constants.mu[0] - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidKernel(format!(
                "integrates to {} instead of 1",
                kernel.constants.mu[0]
            )));
        }
        Ok(kernel)
    }

    fn build(id: KernelId, shape: Shape, radius: f64) -> Result<Self> {
        let mut kernel = Kernel {
            id,
            shape,
            radius,
            constants: KernelConstants { mu: [0.0; 5], phi: 0.0, phi_half: [0.0; 3], boundary: None },
        };
        let mut mu = [0.0; 5];
        for (j, slot) in mu.iter_mut().enumerate() {
            *slot = kernel_moment(&kernel, j as u32)?;
        }
        let mut phi_half = [0.0; 3];
        for (j, slot) in phi_half.iter_mut().enumerate() {
            *slot = kernel.half_integral(|u, k| u.powi(j as i32) * k * k)?;
        }
        kernel.constants = KernelConstants {
            mu,
            phi: kernel_phi(&kernel)?,
            phi_half,
            boundary: None,
        };
        if id != KernelId::Jackknife {
            kernel.constants.boundary = boundary_constants(&kernel).ok();
        }
        Ok(kernel)
    }

    pub fn id(&self) -> KernelId {
        self.id
    }

    pub fn name(&self) -> &'static str {
        match self.id {
            KernelId::Epanechnikov => "epanechnikov",
            KernelId::Triweight => "triweight",
            KernelId::Custom => "custom",
            KernelId::Jackknife => "jackknife",
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.constants
    }

    /// `φ_K = ∫ K²`.
    pub fn phi(&self) -> f64 {
        self.constants.phi
    }

    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        if !(u.abs() <= self.radius) {
            return 0.0;
        }
        match &self.shape {
            Shape::Epanechnikov => 0.75 * (1.0 - u * u),
            Shape::Triweight => {
                let s = 1.0 - u * u;
                35.0 / 32.0 * s * s * s
            }
            Shape::Custom(f) => f(u),
            Shape::Jackknife(base) => 2.0 * base.evaluate(u) - base.evaluate(u / SQRT_2) / SQRT_2,
        }
    }

    /// Kernel scaled to bandwidth `b`, `K(x / b)` (no `1/b` factor).
    #[inline]
    pub fn scaled(&self, x: f64, b: f64) -> f64 {
        self.evaluate(x / b)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Jackknife(base) => vec![base.radius],
            _ => Vec::new(),
        }
    }

    fn half_integral<G: Fn(f64, f64) -> f64>(&self, g: G) -> Result<f64> {
        let breaks = self.breakpoints();
        quad::integrate_pieces(|u| g(u, self.evaluate(u)), 0.0, self.radius, &breaks, QUAD_TOL)
    }
}

/// `mu_j` in the half-line convention, by adaptive quadrature.
pub fn kernel_moment(k: &Kernel, j: u32) -> Result<f64> {
    if j > 4 {
        return Err(Error::InvalidArgument(format!("moment order {j} > 4")));
    }
    let half = k.half_integral(|u, kv| u.powi(j as i32) * kv)?;
    Ok(if j % 2 == 0 { 2.0 * half } else { half })
}

/// `∫ K(u)² du` over the full support.
pub fn kernel_phi(k: &Kernel) -> Result<f64> {
    let r = k.radius;
    let mut breaks = k.breakpoints();
    breaks.extend(breaks.clone().into_iter().map(|x| -x));
    breaks.push(0.0);
    quad::integrate_pieces(|u| k.evaluate(u).powi(2), -r, r, &breaks, QUAD_TOL)
}

/// The jackknife kernel `K*(u) = 2K(u) - K(u/√2)/√2`, supported on `[-√2 R, √2 R]`.
/// It integrates to one and has zero second moment; it is negative near the
/// edge of its support.
pub fn jackknife_kernel(k: &Kernel) -> Kernel {
    Kernel::build(KernelId::Jackknife, Shape::Jackknife(Arc::new(k.clone())), SQRT_2 * k.radius)
        .expect("jackknife of a valid kernel has finite integrals")
}

/// Pointwise jackknife transform of an arbitrary weight function.
pub fn jackknife_transform<F: Fn(f64) -> f64>(f: F) -> impl Fn(f64) -> f64 {
    move |u| 2.0 * f(u) - f(u / SQRT_2) / SQRT_2
}

/// Left-boundary constants `(B_K, V_K)` of the local linear estimator:
/// `B_K = (mu2² - 4 mu1 mu3)/(mu2 - 4 mu1²)` and
/// `V_K = 4 ∫_0^1 (mu2 - 2 mu1 u)² K(u)² du / (mu2 - 4 mu1²)²`.
pub fn boundary_constants(k: &Kernel) -> Result<(f64, f64)> {
    let mu1 = kernel_moment(k, 1)?;
    let mu2 = kernel_moment(k, 2)?;
    let mu3 = kernel_moment(k, 3)?;
    let den = mu2 - 4.0 * mu1 * mu1;
    if den.abs() < 1e-12 {
        return Err(Error::DegenerateBoundary(den));
    }
    let b = (mu2 * mu2 - 4.0 * mu1 * mu3) / den;
    let v_int = k.half_integral(|u, kv| (mu2 - 2.0 * mu1 * u).powi(2) * kv * kv)?;
    Ok((b, 4.0 * v_int / (den * den)))
}
