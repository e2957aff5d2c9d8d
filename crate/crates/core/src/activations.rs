//! Scalar activation kernels.
//!
//! Every kernel returns the forward value together with the derivative in the
//! input. Learnable families additionally add `upstream * d value / d param`
//! into a caller-provided slice laid out as one channel's parameter block:
//!
//! | family | block |
//! |--------|-------|
//! | PReLU  | `slope` |
//! | SReLU  | `t_l, a_l, t_r, a_r` |
//! | APLU   | `a_1..a_n, b_1..b_n` |
//! | MeLU   | `c_0, c_1..c_{k-1}` |
//!
//! Piecewise boundaries of the form `x >= 0` take the right-hand branch.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_melu_basis, MexicanHatBasis};
use crate::{Error, Result};

pub use crate::basis::{mexican_hat, mexican_hat_dx};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const ELU_ALPHA: f64 = 1.0;
pub const SELU_ALPHA: f64 = 1.6733;
pub const SELU_SCALE: f64 = 1.0507;

/// Default APLU hinge count.
pub const DEFAULT_APLU_HINGES: usize = 5;
/// Default MeLU parameter count per channel (slope plus seven hats).
pub const DEFAULT_MELU_K: usize = 8;
/// Upper bound on learnable values per channel.
pub const MAX_PARAMS_PER_CHANNEL: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Elu,
    Selu,
    Prelu,
    Srelu,
    Aplu,
    Melu,
}

/// The non-learnable families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixedKind {
    Relu,
    LeakyRelu,
    Elu,
    Selu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 8] = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Prelu,
        ActivationKind::Srelu,
        ActivationKind::Aplu,
        ActivationKind::Melu,
    ];

    pub fn as_fixed(self) -> Option<FixedKind> {
        match self {
            ActivationKind::Relu => Some(FixedKind::Relu),
            ActivationKind::LeakyRelu => Some(FixedKind::LeakyRelu),
            ActivationKind::Elu => Some(FixedKind::Elu),
            ActivationKind::Selu => Some(FixedKind::Selu),
            _ => None,
        }
    }

    pub fn is_learnable(self) -> bool {
        self.as_fixed().is_none()
    }

    /// Whether `max_input` changes the function or its training.
    pub fn depends_on_max_input(self) -> bool {
        matches!(self, ActivationKind::Srelu | ActivationKind::Aplu | ActivationKind::Melu)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Srelu => "srelu",
            ActivationKind::Aplu => "aplu",
            ActivationKind::Melu => "melu",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String =
            s.chars().filter(|c| !matches!(c, '_' | '-')).flat_map(char::to_lowercase).collect();
        Ok(match norm.as_str() {
            "relu" => ActivationKind::Relu,
            "leakyrelu" | "lrelu" => ActivationKind::LeakyRelu,
            "elu" => ActivationKind::Elu,
            "selu" => ActivationKind::Selu,
            "prelu" => ActivationKind::Prelu,
            "srelu" => ActivationKind::Srelu,
            "aplu" => ActivationKind::Aplu,
            "melu" => ActivationKind::Melu,
            _ => return Err(Error::config(format!("unknown activation family `{s}`"))),
        })
    }
}

/// Which parameter gradients SReLU and APLU report for their breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Exact derivatives of the forward formulas.
    #[default]
    Analytic,
    /// `dSReLU/dt = -a` and `dAPLU/db_c = -a_c`, as originally published.
    Published,
}

/// A family together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationFamily {
    pub kind: ActivationKind,
    pub max_input: f64,
    /// MeLU: learnable values per channel, counting the PReLU slope.
    pub melu_total_params: usize,
    /// APLU: hinge terms per channel.
    pub aplu_hinge_count: usize,
    #[serde(default)]
    pub gradient_mode: GradientMode,
}

impl ActivationFamily {
    pub fn new(kind: ActivationKind, max_input: f64) -> Self {
        ActivationFamily {
            kind,
            max_input,
            melu_total_params: DEFAULT_MELU_K,
            aplu_hinge_count: DEFAULT_APLU_HINGES,
            gradient_mode: GradientMode::Analytic,
        }
    }

    pub fn melu(k: usize, max_input: f64) -> Self {
        ActivationFamily { melu_total_params: k, ..Self::new(ActivationKind::Melu, max_input) }
    }

    pub fn aplu(hinges: usize, max_input: f64) -> Self {
        ActivationFamily { aplu_hinge_count: hinges, ..Self::new(ActivationKind::Aplu, max_input) }
    }

    pub fn with_gradient_mode(mut self, mode: GradientMode) -> Self {
        self.gradient_mode = mode;
        self
    }

    /// Learnable values per channel.
    pub fn param_count(&self) -> usize {
        match self.kind {
            ActivationKind::Relu
            | ActivationKind::LeakyRelu
            | ActivationKind::Elu
            | ActivationKind::Selu => 0,
            ActivationKind::Prelu => 1,
            ActivationKind::Srelu => 4,
            ActivationKind::Aplu => self.aplu_hinge_count.saturating_mul(2),
            ActivationKind::Melu => self.melu_total_params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_input.is_finite() && self.max_input > 0.0) {
            return Err(Error::config(format!(
                "max_input must be positive and finite, got {}",
                self.max_input
            )));
        }
        match self.kind {
            ActivationKind::Aplu if self.aplu_hinge_count == 0 => {
                Err(Error::config("APLU needs at least one hinge"))
            }
            ActivationKind::Melu if self.melu_total_params == 0 => {
                Err(Error::config("MeLU needs k >= 1"))
            }
            _ if self.param_count() > MAX_PARAMS_PER_CHANNEL => Err(Error::config(format!(
                "{} has more than {MAX_PARAMS_PER_CHANNEL} parameters per channel",
                self.label()
            ))),
            _ => Ok(()),
        }
    }

    /// Short name that includes the structural hyperparameter, e.g. `melu8`.
    pub fn label(&self) -> String {
        match self.kind {
            ActivationKind::Melu => format!("melu{}", self.melu_total_params),
            ActivationKind::Aplu => format!("aplu{}", self.aplu_hinge_count),
            k => k.name().to_string(),
        }
    }

    /// Parses a label such as `relu`, `melu4` or `aplu5`.
    pub fn parse_label(label: &str, max_input: f64) -> Result<Self> {
        let split = label.find(|c: char| c.is_ascii_digit()).unwrap_or(label.len());
        let (name, digits) = label.split_at(split);
        let kind: ActivationKind = name.parse()?;
        let number = if digits.is_empty() {
            None
        } else {
            Some(digits.parse::<usize>().map_err(|_| {
                Error::config(format!("bad numeric suffix in activation label `{label}`"))
            })?)
        };
        let family = match (kind, number) {
            (ActivationKind::Melu, n) => Self::melu(n.unwrap_or(DEFAULT_MELU_K), max_input),
            (ActivationKind::Aplu, n) => Self::aplu(n.unwrap_or(DEFAULT_APLU_HINGES), max_input),
            (k, None) => Self::new(k, max_input),
            (_, Some(_)) => {
                return Err(Error::config(format!("`{name}` takes no numeric suffix")));
            }
        };
        family.validate()?;
        Ok(family)
    }
}

// ---------------------------------------------------------------------------
// Kernels

/// Forward value, input derivative and parameter partials at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub dx: f64,
    pub dparams: Vec<f64>,
}

pub fn fixed_forward(kind: FixedKind, x: f64) -> f64 {
    match kind {
        FixedKind::Relu => {
            if x < 0.0 {
                0.0
            } else {
                x
            }
        }
        FixedKind::LeakyRelu => {
            if x < 0.0 {
                LEAKY_SLOPE * x
            } else {
                x
            }
        }
        FixedKind::Elu => {
            if x < 0.0 {
                ELU_ALPHA * x.exp_m1()
            } else {
                x
            }
        }
        FixedKind::Selu => {
            if x < 0.0 {
                SELU_SCALE * SELU_ALPHA * x.exp_m1()
            } else {
                SELU_SCALE * x
            }
        }
    }
}

pub fn fixed_dx(kind: FixedKind, x: f64) -> f64 {
    match kind {
        FixedKind::Relu => {
            if x < 0.0 {
                0.0
            } else {
                1.0
            }
        }
        FixedKind::LeakyRelu => {
            if x < 0.0 {
                LEAKY_SLOPE
            } else {
                1.0
            }
        }
        FixedKind::Elu => {
            if x < 0.0 {
                ELU_ALPHA * x.exp()
            } else {
                1.0
            }
        }
        FixedKind::Selu => {
            if x < 0.0 {
                SELU_SCALE * SELU_ALPHA * x.exp()
            } else {
                SELU_SCALE
            }
        }
    }
}

#[inline]
fn prelu_kernel(x: f64, slope: f64, upstream: f64, dslope: &mut f64) -> (f64, f64) {
    if x < 0.0 {
        *dslope += upstream * x;
        (slope * x, slope)
    } else {
        (x, 1.0)
    }
}

#[inline]
fn srelu_kernel(
    x: f64,
    p: &[f64],
    mode: GradientMode,
    upstream: f64,
    dp: &mut [f64],
) -> (f64, f64) {
    let (t_l, a_l, t_r, a_r) = (p[0], p[1], p[2], p[3]);
    if x < t_l {
        dp[0] += upstream
            * match mode {
                GradientMode::Analytic => 1.0 - a_l,
                GradientMode::Published => -a_l,
            };
        dp[1] += upstream * (x - t_l);
        (t_l + a_l * (x - t_l), a_l)
    } else if x > t_r {
        dp[2] += upstream
            * match mode {
                GradientMode::Analytic => 1.0 - a_r,
                GradientMode::Published => -a_r,
            };
        dp[3] += upstream * (x - t_r);
        (t_r + a_r * (x - t_r), a_r)
    } else {
        (x, 1.0)
    }
}

#[inline]
fn aplu_kernel(x: f64, p: &[f64], mode: GradientMode, upstream: f64, dp: &mut [f64]) -> (f64, f64) {
    let n = p.len() / 2;
    let (a, b) = p.split_at(n);
    let (mut value, mut dx) = if x < 0.0 { (0.0, 0.0) } else { (x, 1.0) };
    let (da, db) = dp.split_at_mut(n);
    for c in 0..n {
        if x < b[c] {
            let hinge = b[c] - x;
            value += a[c] * hinge;
            dx -= a[c];
            da[c] += upstream * hinge;
            db[c] += upstream
                * match mode {
                    GradientMode::Analytic => a[c],
                    GradientMode::Published => -a[c],
                };
        }
    }
    (value, dx)
}

#[inline]
fn melu_kernel(
    x: f64,
    c: &[f64],
    basis: &MexicanHatBasis,
    upstream: f64,
    dc: &mut [f64],
) -> (f64, f64) {
    let (slope, coeffs) = c.split_first().expect("MeLU block is never empty");
    let (dslope, dcoeffs) = dc.split_first_mut().expect("MeLU block is never empty");
    let (mut value, mut dx) = prelu_kernel(x, *slope, upstream, dslope);
    for ((hat, cj), dcj) in basis.hats().iter().zip(coeffs).zip(dcoeffs) {
        let phi = hat.eval(x);
        if phi > 0.0 {
            value += cj * phi;
            dx += cj * hat.dx(x);
            *dcj += upstream * phi;
        }
    }
    (value, dx)
}

pub fn prelu_eval(x: f64, slope: f64) -> KernelEval {
    let mut d = 0.0;
    let (value, dx) = prelu_kernel(x, slope, 1.0, &mut d);
    KernelEval { value, dx, dparams: vec![d] }
}

/// `params` is `(t_l, a_l, t_r, a_r)`.
pub fn srelu_eval(x: f64, params: [f64; 4], mode: GradientMode) -> KernelEval {
    let mut dparams = vec![0.0; 4];
    let (value, dx) = srelu_kernel(x, &params, mode, 1.0, &mut dparams);
    KernelEval { value, dx, dparams }
}

/// `params` is `(a_1..a_n, b_1..b_n)`.
pub fn aplu_eval(x: f64, params: &[f64], mode: GradientMode) -> Result<KernelEval> {
    if params.is_empty() || params.len() % 2 != 0 {
        return Err(Error::config(format!(
            "APLU expects 2n parameters with n >= 1, got {}",
            params.len()
        )));
    }
    let mut dparams = vec![0.0; params.len()];
    let (value, dx) = aplu_kernel(x, params, mode, 1.0, &mut dparams);
    Ok(KernelEval { value, dx, dparams })
}

/// `c` is `(c_0, c_1..c_{k-1})` and `basis` must hold `k - 1` hats.
pub fn melu_eval(x: f64, c: &[f64], basis: &MexicanHatBasis) -> Result<KernelEval> {
    if c.is_empty() || c.len() != basis.len() + 1 {
        return Err(Error::config(format!(
            "MeLU with {} hats needs {} coefficients, got {}",
            basis.len(),
            basis.len() + 1,
            c.len()
        )));
    }
    let mut dparams = vec![0.0; c.len()];
    let (value, dx) = melu_kernel(x, c, basis, 1.0, &mut dparams);
    Ok(KernelEval { value, dx, dparams })
}

// ---------------------------------------------------------------------------
// Runtime activation

/// A family resolved for evaluation (the MeLU basis is prebuilt).
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    family: ActivationFamily,
    basis: Option<MexicanHatBasis>,
}

impl Activation {
    pub fn new(family: ActivationFamily) -> Result<Self> {
        family.validate()?;
        let basis = match family.kind {
            ActivationKind::Melu => {
                Some(build_melu_basis(family.max_input, family.melu_total_params - 1).map_err(
                    |e| Error::config(format!("MeLU k = {}: {e}", family.melu_total_params)),
                )?)
            }
            _ => None,
        };
        Ok(Activation { family, basis })
    }

    pub fn family(&self) -> &ActivationFamily {
        &self.family
    }

    pub fn basis(&self) -> Option<&MexicanHatBasis> {
        self.basis.as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.family.param_count()
    }

    /// Initial parameter block for one channel.
    ///
    /// PReLU and MeLU start at zero (MeLU then equals ReLU), SReLU at
    /// `(0, 0, max_input, 1)`, APLU with zero slopes and breakpoints drawn
    /// uniformly from `[0, max_input]`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.family.max_input;
        match self.family.kind {
            ActivationKind::Srelu => vec![0.0, 0.0, m, 1.0],
            ActivationKind::Aplu => {
                let n = self.family.aplu_hinge_count;
                let mut p = vec![0.0; 2 * n];
                for b in &mut p[n..] {
                    *b = rng.random_range(0.0..=m);
                }
                p
            }
            _ => vec![0.0; self.param_count()],
        }
    }

    #[inline]
    pub fn forward(&self, x: f64, params: &[f64]) -> f64 {
        match self.family.kind.as_fixed() {
            Some(k) => fixed_forward(k, x),
            None => {
                let mut scratch = [0.0; 64];
                if params.len() <= scratch.len() {
                    self.accumulate(x, params, 0.0, &mut scratch[..params.len()]).0
                } else {
                    self.accumulate(x, params, 0.0, &mut vec![0.0; params.len()]).0
                }
            }
        }
    }

    /// Returns `(value, d value / dx)` and adds `upstream * d value / d p`
    /// into `dparams`.
    #[inline]
    pub fn accumulate(
        &self,
        x: f64,
        params: &[f64],
        upstream: f64,
        dparams: &mut [f64],
    ) -> (f64, f64) {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(dparams.len(), params.len());
        let mode = self.family.gradient_mode;
        match self.family.kind {
            ActivationKind::Relu => (fixed_forward(FixedKind::Relu, x), fixed_dx(FixedKind::Relu, x)),
            ActivationKind::LeakyRelu => {
                (fixed_forward(FixedKind::LeakyRelu, x), fixed_dx(FixedKind::LeakyRelu, x))
            }
            ActivationKind::Elu => (fixed_forward(FixedKind::Elu, x), fixed_dx(FixedKind::Elu, x)),
            ActivationKind::Selu => {
                (fixed_forward(FixedKind::Selu, x), fixed_dx(FixedKind::Selu, x))
            }
            ActivationKind::Prelu => prelu_kernel(x, params[0], upstream, &mut dparams[0]),
            ActivationKind::Srelu => srelu_kernel(x, params, mode, upstream, dparams),
            ActivationKind::Aplu => aplu_kernel(x, params, mode, upstream, dparams),
            ActivationKind::Melu => melu_kernel(
                x,
                params,
                self.basis.as_ref().expect("MeLU activation carries a basis"),
                upstream,
                dparams,
            ),
        }
    }

    pub fn evaluate(&self, x: f64, params: &[f64]) -> Result<KernelEval> {
        if params.len() != self.param_count() {
            return Err(Error::config(format!(
                "{} expects {} parameters per channel, got {}",
                self.family.label(),
                self.param_count(),
                params.len()
            )));
        }
        let mut dparams = vec![0.0; params.len()];
        let (value, dx) = self.accumulate(x, params, 1.0, &mut dparams);
        Ok(KernelEval { value, dx, dparams })
    }

    /// Points where the function (or a parameter partial) is not smooth.
    pub fn kinks(&self, params: &[f64]) -> Vec<f64> {
        match self.family.kind {
            ActivationKind::Srelu => vec![params[0], params[2]],
            ActivationKind::Aplu => {
                let n = self.family.aplu_hinge_count;
                std::iter::once(0.0).chain(params[n..].iter().copied()).collect()
            }
            ActivationKind::Melu => std::iter::once(0.0)
                .chain(self.basis.as_ref().into_iter().flat_map(|b| b.kinks()))
                .collect(),
            _ => vec![0.0],
        }
    }
}
