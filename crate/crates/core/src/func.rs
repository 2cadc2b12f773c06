use std::fmt;
use std::sync::Arc;

use crate::mesh::{Domain, Point};

/// Source terms and Dirichlet data.
#[derive(Clone)]
pub enum ScalarFn {
    Constant(f64),
    /// `c + cx·x₁ + cy·x₂`
    Affine { c: f64, cx: f64, cy: f64 },
    /// `r^exponent · sin(2θ/3)` in polar coordinates about the origin, with θ
    /// measured into the L-shaped domain.
    CornerSingular { exponent: f64 },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl ScalarFn {
    pub fn zero() -> Self {
        Self::Constant(0.0)
    }

    pub fn custom(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Affine { c, cx, cy } => c + cx * p.x + cy * p.y,
            Self::CornerSingular { exponent } => {
                let r = p.coords.norm();
                if r == 0.0 {
                    return 0.0;
                }
                r.powf(*exponent) * (2.0 * Domain::polar_angle(p) / 3.0).sin()
            }
            Self::Custom(f) => f(p),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(c) if *c == 0.0)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Affine { c, cx, cy } => write!(f, "Affine({c} + {cx} x1 + {cy} x2)"),
            Self::CornerSingular { exponent } => write!(f, "CornerSingular(r^{exponent} sin(2θ/3))"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}
