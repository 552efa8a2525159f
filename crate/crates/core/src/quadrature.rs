//! Fixed-order Gauss-Legendre rules and dyadic block integration.
//!
//! Integrals over `(0, top]` whose integrand may blow up or vanish at zero are
//! split into dyadic blocks `[top·2^{-(k+1)}, top·2^{-k}]`. Inside a block the
//! substitution `t = top·2^{-(k+u)}`, `u ∈ [0,1]` turns `dt` into
//! `ln 2 · t du`, so each block is a smooth integral over the unit interval.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Order of the rule used per dyadic block.
pub const BLOCK_ORDER: usize = 32;
/// Order of the rule used per step-path interval.
pub const INTERVAL_ORDER: usize = 8;

fn rule(order: usize) -> &'static GaussLegendre {
    static R8: OnceLock<GaussLegendre> = OnceLock::new();
    static R32: OnceLock<GaussLegendre> = OnceLock::new();
    let cell = match order {
        INTERVAL_ORDER => &R8,
        BLOCK_ORDER => &R32,
        _ => panic!("unsupported Gauss-Legendre order {order}"),
    };
    cell.get_or_init(|| GaussLegendre::new(order).expect("valid Gauss-Legendre degree"))
}

/// 32-point Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss_legendre_32<F: FnMut(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    rule(BLOCK_ORDER).integrate(a, b, f)
}

/// 8-point Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss_legendre_8<F: FnMut(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    rule(INTERVAL_ORDER).integrate(a, b, f)
}

/// Integral of `f` over the `k`-th dyadic block below `top`,
/// i.e. over `[top·2^{-(k+1)}, top·2^{-k}]`.
///
/// `f` is evaluated at interior Gauss nodes only, so it never sees the block
/// endpoints. Errors raised by `f` abort the block.
pub fn dyadic_block<E, F>(top: f64, k: usize, mut f: F) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut err = None;
    let value = gauss_legendre_32(0.0, 1.0, |u| {
        if err.is_some() {
            return 0.0;
        }
        let t = top * (-(k as f64 + u) * LN_2).exp();
        match f(t) {
            Ok(v) => v * t,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(LN_2 * value),
    }
}

/// Blocks `0..=max_depth` of [`dyadic_block`].
pub fn dyadic_blocks<E, F>(top: f64, max_depth: usize, mut f: F) -> Result<Vec<f64>, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    (0..=max_depth)
        .map(|k| dyadic_block(top, k, &mut f))
        .collect()
}
