//! Constitutive laws: gradient flux pairs `(Q, q = ∇_y Q)` and the ionic
//! energy `F(u, w)` with its derivatives and semiconvexity constant.

use thiserror::Error;

use crate::mesh::Region;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("conductivity tensor is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("invalid p-power law: {0}")]
    InvalidPPower(String),
    #[error("no conductivity tensor assigned to region {0:?}")]
    MissingTensor(Region),
    #[error("invalid ionic parameter: {0}")]
    InvalidIonic(String),
}

/// Symmetric 2×2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Tensor2 {
    /// A symmetric positive definite conductivity tensor.
    pub fn new(xx: f64, xy: f64, yy: f64) -> Result<Tensor2, PhysicsError> {
        let t = Tensor2 { xx, xy, yy };
        let min = t.eigenvalues().0;
        if !(min > 0.0) || !min.is_finite() {
            return Err(PhysicsError::NotPositiveDefinite(min));
        }
        Ok(t)
    }

    pub fn iso(s: f64) -> Result<Tensor2, PhysicsError> {
        Tensor2::new(s, 0.0, s)
    }

    pub fn diag(sx: f64, sy: f64) -> Result<Tensor2, PhysicsError> {
        Tensor2::new(sx, 0.0, sy)
    }

    /// Unchecked scalar multiple of the identity (may be zero).
    pub(crate) fn scalar(s: f64) -> Tensor2 {
        Tensor2 { xx: s, xy: 0.0, yy: s }
    }

    /// `(smallest, largest)` eigenvalue.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let rad = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - rad, mean + rad)
    }

    pub fn apply(&self, y: [f64; 2]) -> [f64; 2] {
        [self.xx * y[0] + self.xy * y[1], self.xy * y[0] + self.yy * y[1]]
    }

    pub fn quadratic(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let ma = self.apply(a);
        ma[0] * b[0] + ma[1] * b[1]
    }
}

/// `Q(y) = alpha·(|y|² + delta)^{p/2} − alpha·delta^{p/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPowerLaw {
    pub alpha: f64,
    pub p: f64,
    pub delta: f64,
}

impl PPowerLaw {
    /// Regularization used when none is given: the flux is singular at `y = 0` for `p < 2`.
    pub fn default_delta(p: f64) -> f64 {
        if p < 2.0 {
            1e-8
        } else {
            0.0
        }
    }

    pub fn new(alpha: f64, p: f64, delta: Option<f64>) -> Result<PPowerLaw, PhysicsError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PhysicsError::InvalidPPower(format!("alpha must be positive, got {alpha}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(PhysicsError::InvalidPPower(format!("p must lie in (1, ∞), got {p}")));
        }
        let delta = delta.unwrap_or_else(|| PPowerLaw::default_delta(p));
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(PhysicsError::InvalidPPower(format!("delta must be non-negative, got {delta}")));
        }
        Ok(PPowerLaw { alpha, p, delta })
    }

    pub fn potential(&self, y: [f64; 2]) -> f64 {
        let s = y[0] * y[0] + y[1] * y[1] + self.delta;
        self.alpha * s.powf(0.5 * self.p) - self.alpha * self.delta.powf(0.5 * self.p)
    }

    /// Scalar diffusivity `c(y) = alpha·p·(|y|² + delta)^{(p−2)/2}` with `q(y) = c(y)·y`.
    pub fn diffusivity(&self, y: [f64; 2]) -> f64 {
        let s = y[0] * y[0] + y[1] * y[1] + self.delta;
        if s == 0.0 {
            // p > 2 gives 0; p = 2 gives alpha·p; p < 2 without regularization is singular.
            return if self.p > 2.0 {
                0.0
            } else if self.p == 2.0 {
                self.alpha * 2.0
            } else {
                f64::INFINITY
            };
        }
        self.alpha * self.p * s.powf(0.5 * (self.p - 2.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionTensors {
    pub tissue: Option<Tensor2>,
    pub shell: Option<Tensor2>,
}

impl RegionTensors {
    pub fn get(&self, region: Region) -> Option<Tensor2> {
        match region {
            Region::Tissue => self.tissue,
            Region::Shell => self.shell,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxLaw {
    /// `Q(y) = ½ y·M y`, `M` piecewise constant per region.
    Linear(RegionTensors),
    PPower(PPowerLaw),
}

impl FluxLaw {
    /// The same tensor on every region.
    pub fn uniform(m: Tensor2) -> FluxLaw {
        FluxLaw::Linear(RegionTensors { tissue: Some(m), shell: Some(m) })
    }

    pub fn tissue_only(m: Tensor2) -> FluxLaw {
        FluxLaw::Linear(RegionTensors { tissue: Some(m), shell: None })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, FluxLaw::Linear(_))
    }

    /// Returns `(Q(y), q(y))` on `region`.
    pub fn eval(&self, region: Region, y: [f64; 2]) -> Result<(f64, [f64; 2]), PhysicsError> {
        match self {
            FluxLaw::Linear(t) => {
                let m = t.get(region).ok_or(PhysicsError::MissingTensor(region))?;
                let q = m.apply(y);
                Ok((0.5 * (q[0] * y[0] + q[1] * y[1]), q))
            }
            FluxLaw::PPower(law) => {
                let c = if y == [0.0, 0.0] { 0.0 } else { law.diffusivity(y) };
                Ok((law.potential(y), [c * y[0], c * y[1]]))
            }
        }
    }

    /// Frozen tensor for a gradient `y`: the region tensor for linear laws,
    /// the lagged scalar diffusivity for p-power laws.
    pub fn tensor_at(&self, region: Region, y: [f64; 2]) -> Result<Tensor2, PhysicsError> {
        match self {
            FluxLaw::Linear(t) => t.get(region).ok_or(PhysicsError::MissingTensor(region)),
            FluxLaw::PPower(law) => Ok(Tensor2::scalar(law.diffusivity(y))),
        }
    }

    /// Largest conductivity eigenvalue over the regions the law is assigned to
    /// (for p-power laws, the `alpha·p` scale).
    pub fn max_conductivity(&self) -> f64 {
        match self {
            FluxLaw::Linear(t) => [t.tissue, t.shell].iter().flatten().map(|m| m.eigenvalues().1).fold(0.0, f64::max),
            FluxLaw::PPower(law) => law.alpha * law.p,
        }
    }
}

/// Intracellular and extracellular flux laws. The intracellular law lives on
/// the tissue only and is extended by zero to the shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidomainLaws {
    pub intra: FluxLaw,
    pub extra: FluxLaw,
}

impl BidomainLaws {
    pub fn intra_eval(&self, region: Region, y: [f64; 2]) -> Result<(f64, [f64; 2]), PhysicsError> {
        match region {
            Region::Shell => Ok((0.0, [0.0, 0.0])),
            Region::Tissue => self.intra.eval(region, y),
        }
    }

    pub fn extra_eval(&self, region: Region, y: [f64; 2]) -> Result<(f64, [f64; 2]), PhysicsError> {
        self.extra.eval(region, y)
    }

    pub fn max_conductivity(&self) -> f64 {
        self.intra.max_conductivity().max(self.extra.max_conductivity())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonicMode {
    /// `τ ∂_t w + ∂F/∂w = 0`: the gradient system.
    PureGradient,
    /// `τ ∂_t w − u + λ + μ w = 0`: FitzHugh–Nagumo recovery with the sign-corrected coupling.
    Fhn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonicKind {
    /// `F = G(u) + u w + λ w + (μ/2) w²` with the double-well `G`.
    FitzHughNagumo,
    /// `F = u w + λ w + (μ/2) w²` (no double well).
    Bilinear,
    /// `F ≡ 0`.
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonicValues {
    pub f: f64,
    pub df_du: f64,
    pub df_dw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonicModel {
    pub a: f64,
    pub lambda: f64,
    pub mu: f64,
    pub tau: f64,
    pub mode: IonicMode,
    pub kind: IonicKind,
}

impl IonicModel {
    pub fn fitzhugh_nagumo(a: f64, lambda: f64, mu: f64, tau: f64, mode: IonicMode) -> Result<IonicModel, PhysicsError> {
        IonicModel { a, lambda, mu, tau, mode, kind: IonicKind::FitzHughNagumo }.validated()
    }

    pub fn passive(tau: f64) -> IonicModel {
        IonicModel { a: 0.0, lambda: 0.0, mu: 0.0, tau, mode: IonicMode::PureGradient, kind: IonicKind::Passive }
    }

    pub fn validated(self) -> Result<IonicModel, PhysicsError> {
        if !(0.0..=1.0).contains(&self.a) {
            return Err(PhysicsError::InvalidIonic(format!("a must lie in [0, 1], got {}", self.a)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(PhysicsError::InvalidIonic(format!("tau must be positive, got {}", self.tau)));
        }
        if !self.lambda.is_finite() || !self.mu.is_finite() {
            return Err(PhysicsError::InvalidIonic("lambda and mu must be finite".into()));
        }
        Ok(self)
    }

    /// Double-well potential `G(u) = u⁴/4 − (1+a)u³/3 + (a/2)u²`.
    pub fn g(&self, u: f64) -> f64 {
        let a = self.a;
        u * u * (0.25 * u * u - (1.0 + a) * u / 3.0 + 0.5 * a)
    }

    /// `G'(u) = u(u − a)(u − 1)`.
    pub fn g_prime(&self, u: f64) -> f64 {
        u * (u - self.a) * (u - 1.0)
    }

    /// `G''(u) = 3u² − 2(1+a)u + a`.
    pub fn g_second(&self, u: f64) -> f64 {
        3.0 * u * u - 2.0 * (1.0 + self.a) * u + self.a
    }

    fn has_double_well(&self) -> bool {
        self.kind == IonicKind::FitzHughNagumo
    }

    fn has_coupling(&self) -> bool {
        self.kind != IonicKind::Passive
    }

    /// `(F, ∂F/∂u, ∂F/∂w)` at `(u, w)`.
    pub fn eval(&self, u: f64, w: f64) -> IonicValues {
        if !self.has_coupling() {
            return IonicValues { f: 0.0, df_du: 0.0, df_dw: 0.0 };
        }
        let (g, dg) = if self.has_double_well() { (self.g(u), self.g_prime(u)) } else { (0.0, 0.0) };
        IonicValues {
            f: g + u * w + self.lambda * w + 0.5 * self.mu * w * w,
            df_du: dg + w,
            df_dw: u + self.lambda + self.mu * w,
        }
    }

    /// The u-reaction split as `(G'(u), coefficient of w)`; `∂F/∂u = G'(u) + c·w`.
    pub fn cubic_part(&self, u: f64) -> f64 {
        if self.has_double_well() {
            self.g_prime(u)
        } else {
            0.0
        }
    }

    pub fn cubic_derivative(&self, u: f64) -> f64 {
        if self.has_double_well() {
            self.g_second(u)
        } else {
            0.0
        }
    }

    /// Coefficient of the bilinear `u·w` term (1, or 0 for the passive model).
    pub fn coupling(&self) -> f64 {
        if self.has_coupling() {
            1.0
        } else {
            0.0
        }
    }

    /// Sign `s` of `u` in the w-reaction `s·u + λ + μ·w`.
    pub fn w_sign(&self) -> f64 {
        match self.mode {
            IonicMode::PureGradient => self.coupling(),
            IonicMode::Fhn => -self.coupling(),
        }
    }

    /// Right-hand side of the w-equation `τ ∂_t w = −w_reaction(u, w)`.
    /// Equals `∂F/∂w` in gradient mode and `∂F/∂w − 2u` in FHN mode.
    pub fn w_reaction(&self, u: f64, w: f64) -> f64 {
        if !self.has_coupling() {
            return 0.0;
        }
        self.w_sign() * u + self.lambda + self.mu * w
    }

    /// Hessian entries `(F_uu, F_uw, F_ww)`.
    pub fn hessian(&self, u: f64) -> (f64, f64, f64) {
        if !self.has_coupling() {
            return (0.0, 0.0, 0.0);
        }
        (self.cubic_derivative(u), 1.0, self.mu)
    }

    /// Global lower bound of `F_uu`.
    fn min_f_uu(&self) -> f64 {
        match self.kind {
            IonicKind::FitzHughNagumo => self.a - (1.0 + self.a).powi(2) / 3.0,
            IonicKind::Bilinear | IonicKind::Passive => 0.0,
        }
    }

    /// Smallest `ω ≥ 0` with `Hess F + ω·Id ⪰ 0` everywhere.
    pub fn semiconvexity_omega(&self) -> f64 {
        if !self.has_coupling() {
            return 0.0;
        }
        // F_uu ≥ c* and the smallest eigenvalue of [[c, 1], [1, μ]] increases with c.
        let c = self.min_f_uu();
        let mu = self.mu;
        let lambda_min = 0.5 * (c + mu) - (0.25 * (c - mu).powi(2) + 1.0).sqrt();
        (-lambda_min).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fhn(a: f64, mu: f64) -> IonicModel {
        IonicModel::fitzhugh_nagumo(a, 0.0, mu, 1.0, IonicMode::PureGradient).unwrap()
    }

    #[test]
    fn linear_flux_example() {
        let law = FluxLaw::uniform(Tensor2::iso(0.638).unwrap());
        let (q, flux) = law.eval(Region::Tissue, [1.0, 0.0]).unwrap();
        assert!((q - 0.319).abs() < 1e-15);
        assert_eq!(flux, [0.638, 0.0]);
    }

    #[test]
    fn zero_gradient_gives_zero() {
        let laws = [
            FluxLaw::uniform(Tensor2::diag(0.41, 0.47).unwrap()),
            FluxLaw::PPower(PPowerLaw::new(1.0, 1.5, None).unwrap()),
            FluxLaw::PPower(PPowerLaw::new(2.0, 4.0, None).unwrap()),
        ];
        for law in laws {
            assert_eq!(law.eval(Region::Tissue, [0.0, 0.0]).unwrap(), (0.0, [0.0, 0.0]));
        }
    }

    #[test]
    fn ppower_example() {
        let law = FluxLaw::PPower(PPowerLaw::new(1.0, 3.0, Some(0.0)).unwrap());
        let (q, flux) = law.eval(Region::Tissue, [0.0, 2.0]).unwrap();
        assert!((q - 8.0).abs() < 1e-13);
        assert!(flux[0] == 0.0 && (flux[1] - 12.0).abs() < 1e-13);
    }

    #[test]
    fn missing_region_tensor() {
        let law = FluxLaw::tissue_only(Tensor2::iso(1.0).unwrap());
        assert_eq!(law.eval(Region::Shell, [1.0, 0.0]), Err(PhysicsError::MissingTensor(Region::Shell)));
        let laws = BidomainLaws { intra: law, extra: law };
        assert_eq!(laws.intra_eval(Region::Shell, [1.0, 2.0]).unwrap(), (0.0, [0.0, 0.0]));
    }

    #[test]
    fn rejects_indefinite_tensor() {
        assert!(Tensor2::new(1.0, 2.0, 1.0).is_err());
        assert!(Tensor2::iso(0.0).is_err());
        assert!(PPowerLaw::new(1.0, 1.0, None).is_err());
        assert_eq!(PPowerLaw::new(1.0, 1.5, None).unwrap().delta, 1e-8);
        assert_eq!(PPowerLaw::new(1.0, 3.0, None).unwrap().delta, 0.0);
    }

    #[test]
    fn ionic_examples() {
        let m = IonicModel::fitzhugh_nagumo(0.1, 0.3, 0.5, 1.0, IonicMode::Fhn).unwrap();
        let v = m.eval(0.0, 0.0);
        assert_eq!((v.f, v.df_du, v.df_dw), (0.0, 0.0, 0.3));
        let v = fhn(0.1, 0.5).eval(0.5, 0.0);
        assert!((v.df_du - (-0.1)).abs() < 1e-15);
        for a in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(fhn(a, 0.5).eval(1.0, 0.0).df_du, 0.0);
        }
        assert!((m.w_reaction(0.5, 0.2) - (m.eval(0.5, 0.2).df_dw - 2.0 * 0.5)).abs() < 1e-15);
    }

    /// Smallest eigenvalue of Hess F over a (u, w) grid, then the smallest ω
    /// making Hess F + ω Id PSD at all samples, found by bisection.
    fn sampled_omega(m: &IonicModel) -> f64 {
        let psd = |omega: f64| {
            (-4000..=4000).all(|k| {
                let u = k as f64 * 0.001;
                let (fuu, fuw, fww) = m.hessian(u);
                let (a, b, d) = (fuu + omega, fuw, fww + omega);
                a >= -1e-15 && d >= -1e-15 && a * d - b * b >= -1e-12
            })
        };
        let (mut lo, mut hi) = (0.0, 10.0);
        if psd(0.0) {
            return 0.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if psd(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn omega_examples_match_sampling_oracle() {
        let m = fhn(1.0, 10.0);
        let omega = m.semiconvexity_omega();
        // Grid spacing 1e-3 bounds the oracle's error by about 3·(5e-4)² in F_uu.
        assert!((omega - sampled_omega(&m)).abs() < 1e-5, "{omega} vs {}", sampled_omega(&m));
        assert!((omega - 0.4292).abs() < 1e-3, "{omega}");

        let m = fhn(0.0, 0.0);
        let omega = m.semiconvexity_omega();
        assert!((omega - sampled_omega(&m)).abs() < 1e-6);
        assert!((omega - 1.1805).abs() < 1e-4, "{omega}");

        for mu in [1.0, 2.0, 5.0] {
            let m = IonicModel { kind: IonicKind::Bilinear, ..fhn(0.1, mu) };
            let omega = m.semiconvexity_omega();
            let expected = (-(0.5 * mu - (0.25 * mu * mu + 1.0).sqrt())).max(0.0);
            assert!((omega - expected).abs() < 1e-14);
            assert!((omega - sampled_omega(&m)).abs() < 1e-6);
        }
        assert_eq!(IonicModel::passive(1.0).semiconvexity_omega(), 0.0);
    }

    fn fd_check(f: impl Fn(f64) -> f64, df: f64, x: f64) -> bool {
        let h = 1e-5 * (1.0 + x.abs());
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        (fd - df).abs() <= 1e-6 * (1.0 + df.abs())
    }

    proptest! {
        #[test]
        fn flux_is_gradient_of_potential(
            y0 in -3.0f64..3.0, y1 in -3.0f64..3.0,
            alpha in 0.1f64..2.0, p in 1.2f64..5.0,
            xx in 0.1f64..2.0, yy in 0.1f64..2.0, xy in -0.05f64..0.05,
        ) {
            prop_assume!(y0.abs() + y1.abs() > 1e-3);
            let laws = [
                FluxLaw::uniform(Tensor2::new(xx, xy, yy).unwrap()),
                FluxLaw::PPower(PPowerLaw::new(alpha, p, None).unwrap()),
            ];
            for law in laws {
                let (_, q) = law.eval(Region::Tissue, [y0, y1]).unwrap();
                let h = 1e-5 * (1.0 + (y0 * y0 + y1 * y1).sqrt());
                let pot = |a: f64, b: f64| law.eval(Region::Tissue, [a, b]).unwrap().0;
                let fd = [(pot(y0 + h, y1) - pot(y0 - h, y1)) / (2.0 * h), (pot(y0, y1 + h) - pot(y0, y1 - h)) / (2.0 * h)];
                let scale = (q[0] * q[0] + q[1] * q[1]).sqrt();
                let err = ((fd[0] - q[0]).powi(2) + (fd[1] - q[1]).powi(2)).sqrt();
                prop_assert!(err <= 1e-6 * scale.max(1e-8), "err {} scale {}", err, scale);
            }
        }

        #[test]
        fn flux_potential_is_midpoint_convex(
            a0 in -3.0f64..3.0, a1 in -3.0f64..3.0, b0 in -3.0f64..3.0, b1 in -3.0f64..3.0,
            p in 2.0f64..5.0,
        ) {
            let laws = [
                FluxLaw::uniform(Tensor2::diag(0.29, 0.61).unwrap()),
                FluxLaw::PPower(PPowerLaw::new(0.7, p, None).unwrap()),
            ];
            for law in laws {
                let q = |y: [f64; 2]| law.eval(Region::Tissue, y).unwrap().0;
                let mid = q([0.5 * (a0 + b0), 0.5 * (a1 + b1)]);
                prop_assert!(mid <= 0.5 * q([a0, a1]) + 0.5 * q([b0, b1]) + 1e-12 * (1.0 + mid.abs()));
            }
        }

        #[test]
        fn ionic_derivatives_match_fd(u in -2.0f64..2.0, w in -2.0f64..2.0, a in 0.0f64..1.0, mu in -1.0f64..3.0, lambda in -1.0f64..1.0) {
            let m = IonicModel::fitzhugh_nagumo(a, lambda, mu, 1.0, IonicMode::PureGradient).unwrap();
            let v = m.eval(u, w);
            prop_assert!(fd_check(|x| m.eval(x, w).f, v.df_du, u));
            prop_assert!(fd_check(|x| m.eval(u, x).f, v.df_dw, w));
            prop_assert!(fd_check(|x| m.g(x), m.g_prime(u), u));
            prop_assert!(fd_check(|x| m.g_prime(x), m.g_second(u), u));
        }

        #[test]
        fn shifted_ionic_energy_is_convex(
            u in -3.0f64..3.0, w in -3.0f64..3.0, theta in 0.0f64..std::f64::consts::TAU,
            a in 0.0f64..1.0, mu in -1.0f64..3.0,
        ) {
            let m = IonicModel::fitzhugh_nagumo(a, 0.2, mu, 1.0, IonicMode::PureGradient).unwrap();
            let omega = m.semiconvexity_omega();
            let d = [theta.cos(), theta.sin()];
            let shifted = |s: f64| {
                let (x, y) = (u + s * d[0], w + s * d[1]);
                m.eval(x, y).f + 0.5 * omega * (x * x + y * y)
            };
            let h = 1e-3;
            let second = (shifted(h) - 2.0 * shifted(0.0) + shifted(-h)) / (h * h);
            prop_assert!(second >= -1e-8, "second difference {}", second);
        }
    }
}
