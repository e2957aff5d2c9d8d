//! The fixed dyadic schedule of Mexican-hat bumps used by MeLU.
//!
//! Level 1 holds a single hat centred at `2 * max_input` with half-width
//! `2 * max_input`, so its support is `[0, 4 * max_input]`. Every further
//! level halves the width and places hats at the odd multiples of the new
//! half-width, tiling the same interval. Hats are listed level by level and
//! in ascending centre order within a level.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `max(half_width - |x - center|, 0)`.
#[inline]
pub fn mexican_hat(x: f64, center: f64, half_width: f64) -> f64 {
    (half_width - (x - center).abs()).max(0.0)
}

/// Derivative of [`mexican_hat`] in `x`. Zero at the three kinks.
#[inline]
pub fn mexican_hat_dx(x: f64, center: f64, half_width: f64) -> f64 {
    let d = x - center;
    if d > -half_width && d < 0.0 {
        1.0
    } else if d > 0.0 && d < half_width {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hat {
    pub center: f64,
    pub half_width: f64,
}

impl Hat {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        mexican_hat(x, self.center, self.half_width)
    }

    #[inline]
    pub fn dx(&self, x: f64) -> f64 {
        mexican_hat_dx(x, self.center, self.half_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MexicanHatBasis {
    max_input: f64,
    hats: Vec<Hat>,
}

/// Number of complete dyadic levels making up `n_hats`, if any.
fn levels_for(n_hats: usize) -> Option<u32> {
    let n = n_hats.checked_add(1)?;
    (n_hats >= 1 && n.is_power_of_two()).then(|| n.trailing_zeros())
}

/// Builds the first `n_hats` hats of the schedule. `n_hats` must be
/// `2^L - 1` for some `L >= 1`; partial levels are rejected.
pub fn build_melu_basis(max_input: f64, n_hats: usize) -> Result<MexicanHatBasis> {
    if !(max_input.is_finite() && max_input > 0.0) {
        return Err(Error::config(format!("max_input must be positive and finite, got {max_input}")));
    }
    let levels = levels_for(n_hats).ok_or_else(|| {
        Error::config(format!(
            "MeLU basis needs 2^L - 1 hats (1, 3, 7, 15, ...), got {n_hats}"
        ))
    })?;
    if levels > 52 {
        return Err(Error::config(format!("{n_hats} hats exceed double precision resolution")));
    }
    let mut hats = Vec::with_capacity(n_hats);
    for level in 1..=levels {
        let per_level = 1u64 << (level - 1);
        let half_width = 2.0 * max_input / per_level as f64;
        for i in 0..per_level {
            hats.push(Hat { center: (2 * i + 1) as f64 * half_width, half_width });
        }
    }
    Ok(MexicanHatBasis { max_input, hats })
}

impl MexicanHatBasis {
    pub fn max_input(&self) -> f64 {
        self.max_input
    }

    pub fn hats(&self) -> &[Hat] {
        &self.hats
    }

    pub fn len(&self) -> usize {
        self.hats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hats.is_empty()
    }

    /// Number of complete dyadic levels.
    pub fn levels(&self) -> u32 {
        levels_for(self.hats.len()).unwrap_or(0)
    }

    /// Right end of the common support, `4 * max_input`.
    pub fn support_end(&self) -> f64 {
        4.0 * self.max_input
    }

    /// `sum_j coeffs[j] * phi_j(x)`.
    pub fn combine(&self, coeffs: &[f64], x: f64) -> f64 {
        self.hats.iter().zip(coeffs).map(|(h, c)| c * h.eval(x)).sum()
    }

    /// Every kink location of every hat, unsorted and possibly repeated.
    pub fn kinks(&self) -> impl Iterator<Item = f64> + '_ {
        self.hats
            .iter()
            .flat_map(|h| [h.center - h.half_width, h.center, h.center + h.half_width])
    }

    /// Coefficients whose combination interpolates `target` at every node of
    /// the finest grid (spacing equal to the finest half-width).
    ///
    /// The target is assumed to vanish at `0` and `4 * max_input`; for
    /// piecewise-linear targets with kinks on that grid the fit is exact.
    /// Coefficients are resolved coarse to fine: finer hats vanish at every
    /// coarser centre, so each coefficient is the residual at its own centre
    /// divided by the peak height.
    pub fn fit_grid(&self, target: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.hats.len()];
        for j in 0..self.hats.len() {
            let hat = self.hats[j];
            let current = self.combine(&coeffs[..j], hat.center);
            coeffs[j] = (target(hat.center) - current) / hat.half_width;
        }
        coeffs
    }
}
