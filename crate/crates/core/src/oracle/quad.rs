//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and budget of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

/// Integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_subdivisions: 2000,
        }
    }
}

impl Quadrature {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Quadrature {
            rel_tol,
            ..Quadrature::default()
        }
    }

    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Quadrature {
            rel_tol,
            abs_tol,
            ..Quadrature::default()
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<Integral> {
        self.try_integrate(|x| Ok(f(x)), a, b)
    }

    /// Like [`Quadrature::integrate`] for integrands that can fail (nested integrals).
    pub fn try_integrate<F: FnMut(f64) -> Result<f64>>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
    ) -> Result<Integral> {
        if a == b {
            return Ok(Integral {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
            });
        }
        let mut evaluations = 0;
        let mut segments = vec![gk15(&mut f, a, b, &mut evaluations)?];
        loop {
            let value: f64 = segments.iter().map(|s| s.value).sum();
            let error: f64 = segments.iter().map(|s| s.error).sum();
            let target = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= target {
                return Ok(Integral {
                    value,
                    error,
                    evaluations,
                });
            }
            let (worst, _) = segments
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .unwrap();
            let seg = segments.swap_remove(worst);
            let mid = 0.5 * (seg.a + seg.b);
            if segments.len() + 2 > self.max_subdivisions || mid <= seg.a || mid >= seg.b {
                return Err(Error::QuadratureFailure {
                    tolerance: self.rel_tol,
                    subdivisions: segments.len() + 1,
                    error,
                });
            }
            segments.push(gk15(&mut f, seg.a, mid, &mut evaluations)?);
            segments.push(gk15(&mut f, mid, seg.b, &mut evaluations)?);
        }
    }
}

fn gk15<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    evaluations: &mut usize,
) -> Result<Segment> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx)? + f(centre + dx)?;
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    *evaluations += 15;
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    if !value.is_finite() {
        return Err(Error::QuadratureFailure {
            tolerance: f64::NAN,
            subdivisions: 0,
            error: f64::INFINITY,
        });
    }
    Ok(Segment { a, b, value, error })
}
