//! Linear reservoir systems `x_t = W x_{t-1} + V c_t`, `y_t = h(x_t)`.

mod modulus;
mod readout;
mod system;

pub use modulus::{Modulus, ModulusFn};
pub use readout::{PolyTerm, Readout, ReadoutFn, ReadoutMap};
pub use system::{truncation_tail_bound, Coupling, InputStream, LinearReservoirSystem, Trajectory};

/// Convenience wrapper mirroring [`Readout::lipschitz_on_ball`].
pub fn lipschitz_on_ball(readout: &Readout, radius: f64) -> crate::Result<f64> {
    readout.lipschitz_on_ball(radius)
}
