//! Shared numerical substrate: the weight language, quadrature, root finding,
//! and the extended number types the other modules build on.

pub mod dd;
pub mod expr;
pub mod gamma;
pub mod jet;
pub mod poly;
pub mod quadrature;
pub mod scalar;
pub mod wide;

pub use expr::{parse_weight, ParseError, WeightExpr};
pub use gamma::gamma;
pub use poly::{find_roots, Poly, RootError};
pub use quadrature::{
    weighted_l2_norm, weighted_l2_norm_wide, GaussLegendre, Integral, IntegrationError, QuadratureRule, TailPolicy,
    WideIntegral,
};
pub use wide::Wide;
