//! Radial profiles, scalar fields with smoothness metadata, the kernel `h`,
//! and the tail and Gagliardo norms.

mod field;
pub mod mollifier;
mod norms;
mod profile;

pub use field::{cutoff_field, make_field, CustomField, FieldBase, ScalarField};
pub use norms::{gagliardo_energy, gagliardo_seminorm, tail_norm};
pub use profile::{CustomProfile, Descriptor, ProfileKind, RadialProfile, TailBound};

/// `h(t) = |t|^{p-2} t`, with `h(0) = 0` for every `p > 1`.
#[inline]
pub fn h(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else if p == 2.0 {
        t
    } else {
        t.abs().powf(p - 2.0) * t
    }
}
