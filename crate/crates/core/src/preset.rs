//! Named problem presets with closed-form fields and known golden values.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{PresetOneForm, PresetPotential};
use crate::lagrangian::MagneticTonelliData;
use crate::scalar::Real;
use crate::surface::SurfaceModel;

pub const PRESET_NAMES: [&str; 5] = [
    "torus-example",
    "pendulum-torus",
    "flat-torus-free",
    "sphere-magnetic",
    "round-sphere-free",
];

/// Build a preset by name.
///
/// * `torus-example`: flat torus, `theta = -cos(2 pi y) dx`, `V = 0`.
/// * `pendulum-torus`: flat torus, `theta = 0`, `V = cos(2 pi y)`.
/// * `flat-torus-free`: flat torus, `theta = 0`, `V = 0`.
/// * `sphere-magnetic`: round sphere, `theta = 0.5 (1 - z^2) dphi`, `V = 0`.
/// * `round-sphere-free`: round sphere, `theta = 0`, `V = 0`.
pub fn preset<S: Real>(name: &str) -> Result<MagneticTonelliData<S>> {
    match name {
        "torus-example" => Ok(MagneticTonelliData::new(
            SurfaceModel::flat_torus(),
            Arc::new(PresetOneForm::<S>::torus_example()),
            Arc::new(PresetPotential::Zero),
        )),
        "pendulum-torus" => Ok(MagneticTonelliData::new(
            SurfaceModel::flat_torus(),
            Arc::new(PresetOneForm::<S>::Zero),
            Arc::new(PresetPotential::CosLatitude),
        )),
        "flat-torus-free" => Ok(MagneticTonelliData::new(
            SurfaceModel::flat_torus(),
            Arc::new(PresetOneForm::<S>::Zero),
            Arc::new(PresetPotential::Zero),
        )),
        "sphere-magnetic" => Ok(MagneticTonelliData::new(
            SurfaceModel::round_sphere(),
            Arc::new(PresetOneForm::<S>::sphere_magnetic(0.5)),
            Arc::new(PresetPotential::Zero),
        )),
        "round-sphere-free" => Ok(MagneticTonelliData::new(
            SurfaceModel::round_sphere(),
            Arc::new(PresetOneForm::<S>::Zero),
            Arc::new(PresetPotential::Zero),
        )),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}
