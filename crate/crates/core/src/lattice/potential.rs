use std::fmt;
use std::sync::Arc;

use crate::error::{MerwError, Result};

/// A scalar function of position, optionally with analytic derivatives.
///
/// Potentials are dimensionless (`V / mc²`); positions are in reduced
/// Compton wavelengths.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn laplacian(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Points where the field is singular.
    fn singular_points(&self, _dims: usize) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct Zero;

impl ScalarField for Zero {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; x.len()])
    }
    fn laplacian(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; x.len()])
    }
    fn laplacian(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

/// `V(x) = offset + slope · x`; missing slope components are zero.
#[derive(Debug, Clone)]
pub struct Linear {
    pub offset: f64,
    pub slope: Vec<f64>,
}

impl ScalarField for Linear {
    fn value(&self, x: &[f64]) -> f64 {
        self.offset + x.iter().zip(&self.slope).map(|(a, b)| a * b).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(
            (0..x.len())
                .map(|d| self.slope.get(d).copied().unwrap_or(0.0))
                .collect(),
        )
    }
    fn laplacian(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

/// `V(x) = ω² |x|² / 2`.
#[derive(Debug, Clone, Copy)]
pub struct Harmonic {
    pub omega: f64,
}

impl ScalarField for Harmonic {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.omega * self.omega * norm2(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w2 = self.omega * self.omega;
        Some(x.iter().map(|v| w2 * v).collect())
    }
    fn laplacian(&self, x: &[f64]) -> Option<f64> {
        Some(self.omega * self.omega * x.len() as f64)
    }
}

/// Softened Coulomb well `V(r) = -α / max(r, r_cut)`.
///
/// The kink at `r_cut` means no analytic derivatives are offered.
#[derive(Debug, Clone, Copy)]
pub struct SoftCoulomb {
    pub alpha: f64,
    pub r_cut: f64,
}

impl ScalarField for SoftCoulomb {
    fn value(&self, x: &[f64]) -> f64 {
        -self.alpha / norm2(x).sqrt().max(self.r_cut)
    }
    fn singular_points(&self, dims: usize) -> Vec<Vec<f64>> {
        if self.r_cut > 0.0 {
            Vec::new()
        } else {
            vec![vec![0.0; dims]]
        }
    }
}

/// `A exp(-|x - c|² / (2 w²))`, used as a smooth test amplitude.
#[derive(Debug, Clone)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl GaussianBump {
    fn shifted(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(d, v)| v - self.center.get(d).copied().unwrap_or(0.0))
            .collect()
    }
}

impl ScalarField for GaussianBump {
    fn value(&self, x: &[f64]) -> f64 {
        let y = self.shifted(x);
        self.amplitude * (-norm2(&y) / (2.0 * self.width * self.width)).exp()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let y = self.shifted(x);
        let f = self.value(x);
        let w2 = self.width * self.width;
        Some(y.iter().map(|v| -v / w2 * f).collect())
    }
    fn laplacian(&self, x: &[f64]) -> Option<f64> {
        let y = self.shifted(x);
        let w2 = self.width * self.width;
        let f = self.value(x);
        Some(f * (norm2(&y) / (w2 * w2) - x.len() as f64 / w2))
    }
}

/// `Π_d cos(k x_d)`.
#[derive(Debug, Clone, Copy)]
pub struct Cosine {
    pub wavenumber: f64,
}

impl ScalarField for Cosine {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| (self.wavenumber * v).cos()).product()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let k = self.wavenumber;
        Some(
            (0..x.len())
                .map(|d| {
                    x.iter()
                        .enumerate()
                        .map(|(e, v)| if e == d { -k * (k * v).sin() } else { (k * v).cos() })
                        .product()
                })
                .collect(),
        )
    }
    fn laplacian(&self, x: &[f64]) -> Option<f64> {
        let k = self.wavenumber;
        Some(-(k * k) * x.len() as f64 * self.value(x))
    }
}

struct FnField<F> {
    f: F,
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnField")
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// A potential in units of `mc²` together with a human-readable label.
#[derive(Clone)]
pub struct Potential {
    field: Arc<dyn ScalarField>,
    label: String,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("label", &self.label).finish()
    }
}

impl Potential {
    pub fn new(label: impl Into<String>, field: impl ScalarField + 'static) -> Self {
        Self {
            field: Arc::new(field),
            label: label.into(),
        }
    }

    /// Potential from a plain closure; it has no analytic derivatives.
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(label, FnField { f })
    }

    pub fn zero() -> Self {
        Self::new("zero", Zero)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant:{c}"), Constant(c))
    }

    pub fn linear(slope: Vec<f64>) -> Self {
        Self::new(
            format!("linear:{slope:?}"),
            Linear {
                offset: 0.0,
                slope,
            },
        )
    }

    pub fn harmonic(omega: f64) -> Self {
        Self::new(format!("harmonic:{omega}"), Harmonic { omega })
    }

    pub fn soft_coulomb(alpha: f64, r_cut: f64) -> Self {
        Self::new(
            format!("coulomb:{alpha}:{r_cut}"),
            SoftCoulomb { alpha, r_cut },
        )
    }

    /// Parses `zero`, `harmonic:ω`, `linear:g` (slope along the first axis),
/// `coulomb:α` or `coulomb:α:r_cut`.
    /// A missing Coulomb cutoff defaults to two lattice spacings.
    pub fn from_preset(text: &str, spacing: f64) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MerwError::Config(format!("bad number `{s}` in potential `{text}`")))
        };
        match parts.as_slice() {
            ["zero"] => Ok(Self::zero()),
            ["harmonic", w] => Ok(Self::harmonic(num(w)?)),
            ["linear", g] => Ok(Self::linear(vec![num(g)?])),
            ["coulomb", a] => Ok(Self::soft_coulomb(num(a)?, 2.0 * spacing)),
            ["coulomb", a, rc] => {
                let rc = num(rc)?;
                if rc < 0.0 {
                    return Err(MerwError::Config("coulomb cutoff must be >= 0".into()));
                }
                Ok(Self::soft_coulomb(num(a)?, rc))
            }
            _ => Err(MerwError::Config(format!("unknown potential preset `{text}`"))),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn field(&self) -> &dyn ScalarField {
        self.field.as_ref()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.field.value(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(f: &dyn ScalarField, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|d| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[d] += h;
                m[d] -= h;
                (f.value(&p) - f.value(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn fd_laplacian(f: &dyn ScalarField, x: &[f64], h: f64) -> f64 {
        (0..x.len())
            .map(|d| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[d] += h;
                m[d] -= h;
                (f.value(&p) + f.value(&m) - 2.0 * f.value(x)) / (h * h)
            })
            .sum()
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let fields: Vec<Box<dyn ScalarField>> = vec![
            Box::new(Harmonic { omega: 0.3 }),
            Box::new(Linear {
                offset: 0.1,
                slope: vec![0.2, -0.4],
            }),
            Box::new(GaussianBump {
                amplitude: 1.3,
                center: vec![0.2, -0.1],
                width: 0.8,
            }),
            Box::new(Cosine { wavenumber: 0.9 }),
        ];
        let x = [0.37, -0.52];
        for f in &fields {
            let g = f.gradient(&x).unwrap();
            let g_fd = fd_gradient(f.as_ref(), &x, 1e-5);
            for (a, b) in g.iter().zip(&g_fd) {
                assert!((a - b).abs() < 1e-8, "{f:?}: {a} vs {b}");
            }
            let l = f.laplacian(&x).unwrap();
            let l_fd = fd_laplacian(f.as_ref(), &x, 1e-4);
            assert!((l - l_fd).abs() < 1e-5, "{f:?}: {l} vs {l_fd}");
        }
    }

    #[test]
    fn presets_parse() {
        assert_eq!(Potential::from_preset("zero", 1.0).unwrap().value(&[3.0]), 0.0);
        let h = Potential::from_preset("harmonic:0.02", 1.0).unwrap();
        assert!((h.value(&[10.0]) - 0.5 * 0.0004 * 100.0).abs() < 1e-15);
        let c = Potential::from_preset("coulomb:0.2", 1.5).unwrap();
        assert_eq!(c.value(&[0.0, 0.0, 0.0]), -0.2 / 3.0);
        assert_eq!(c.value(&[4.0, 0.0, 0.0]), -0.05);
        let c2 = Potential::from_preset("coulomb:0.2:1", 1.5).unwrap();
        assert_eq!(c2.value(&[0.5]), -0.2);
        let l = Potential::from_preset("linear:0.5", 1.0).unwrap();
        assert_eq!(l.value(&[2.0, 7.0]), 1.0);
        assert!(Potential::from_preset("morse:1", 1.0).is_err());
        assert!(Potential::from_preset("harmonic:abc", 1.0).is_err());
    }

    #[test]
    fn closures_have_no_derivatives() {
        let p = Potential::from_fn("f", |x: &[f64]| x[0].abs());
        assert!(p.field().gradient(&[1.0]).is_none());
        assert!(SoftCoulomb { alpha: 1.0, r_cut: 1.0 }.laplacian(&[1.0]).is_none());
    }
}
