//! Browser bindings. Every function returns a flat `Float64Array`; the
//! layout is given on each function. Errors come back as JS exceptions.
//! The exported wrappers forward to the plain functions in [`compute`],
//! which also build and run natively.

use wasm_bindgen::prelude::*;

pub mod compute {
    use ret_core::{
        average_band_gap, band_spectrum, evolve, fit_exponential, force_for_phase, resonance_map, sample_plateaus,
        LatticeParams, Protocol,
    };

    pub type Result<T> = std::result::Result<T, String>;

    fn msg(e: ret_core::Error) -> String {
        e.to_string()
    }

    /// Lowest `bands` energies on `points` quasi-momenta over [-1, 1].
    /// Layout: row-major, `points` rows of `[k, E_1, .., E_bands]`.
    pub fn bands(v0: f64, bands: usize, points: usize) -> Result<Vec<f64>> {
        let params = LatticeParams::new(v0, 0.0, 0.0).with_grid_points(points);
        let spec = band_spectrum(&params).map_err(msg)?;
        if bands == 0 || bands > spec.energies[0].len() {
            return Err(format!("bands must lie in 1..={}", spec.energies[0].len()));
        }
        let mut out = Vec::with_capacity(spec.k_grid.len() * (bands + 1));
        for (k, e) in spec.k_grid.iter().zip(&spec.energies) {
            out.push(*k);
            out.extend_from_slice(&e[..bands]);
        }
        Ok(out)
    }

    /// Force that gives Bloch phase φ = 2π·`phi_over_2pi` at depth `v0`.
    pub fn force_for(v0: f64, phi_over_2pi: f64) -> Result<f64> {
        let gap = average_band_gap(&LatticeParams::new(v0, 0.0, 0.0)).map_err(msg)?;
        force_for_phase(gap, phi_over_2pi).map_err(msg)
    }

    fn protocol(name: &str, seed: u64) -> Result<Protocol> {
        Ok(match name {
            "constant" => Protocol::ConstantForce,
            "reversal" => Protocol::PhaseReversalHalt,
            "random" => Protocol::RandomizedHalt {
                halt_probability: 0.5,
                rng_seed: seed,
            },
            "empty" => Protocol::EmptySecondBand,
            other => return Err(format!("unknown protocol {other:?}")),
        })
    }

    /// Full propagation. Layout: `[Z, γ per period, t/T_B, P, t/T_B, P, ..]`;
    /// Z and γ are NaN when fewer than three periods are run.
    pub fn survival(v0: f64, f0: f64, k0: f64, periods: usize, protocol_name: &str, seed: u64) -> Result<Vec<f64>> {
        let params = LatticeParams::new(v0, f0, k0);
        let traj = evolve(&params, &protocol(protocol_name, seed)?, periods, 32).map_err(msg)?;
        let (z, gamma) = match sample_plateaus(&traj, &params).and_then(|s| fit_exponential(&s, 2)) {
            Ok(fit) => (fit.z, fit.gamma_per_period),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let mut out = vec![z, gamma];
        for (t, p) in traj.sample_times.iter().zip(&traj.survival_series) {
            out.push(t / traj.bloch_period);
            out.push(*p);
        }
        Ok(out)
    }

    /// Cascade-model map over φ/2π. Layout: `count` rows of
    /// `[φ/2π, γ per period, Z]`, ordered by φ.
    pub fn resonances(v0: f64, phi_min: f64, phi_max: f64, count: usize) -> Result<Vec<f64>> {
        if count < 2 || !(phi_min > 0.0 && phi_min < phi_max) {
            return Err("need count >= 2 and 0 < phi_min < phi_max".to_string());
        }
        let gap = average_band_gap(&LatticeParams::new(v0, 0.0, 0.0)).map_err(msg)?;
        let forces = (0..count)
            .map(|i| force_for_phase(gap, phi_min + (phi_max - phi_min) * i as f64 / (count - 1) as f64))
            .collect::<ret_core::Result<Vec<_>>>()
            .map_err(msg)?;
        let mut points = resonance_map(v0, &forces, LatticeParams::new(v0, 0.0, 0.0).bz_grid_points).map_err(msg)?;
        points.reverse();
        Ok(points
            .iter()
            .flat_map(|p| [p.phi_over_2pi, p.gamma_per_period, p.z_projection])
            .collect())
    }
}

fn js<T>(r: compute::Result<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bands(v0: f64, bands: usize, points: usize) -> Result<Vec<f64>, JsError> {
    js(compute::bands(v0, bands, points))
}

#[wasm_bindgen(js_name = forceFor)]
pub fn force_for(v0: f64, phi_over_2pi: f64) -> Result<f64, JsError> {
    js(compute::force_for(v0, phi_over_2pi))
}

/// `protocol` is one of "constant", "reversal", "random", "empty".
#[wasm_bindgen]
pub fn survival(v0: f64, f0: f64, k0: f64, periods: usize, protocol: &str, seed: u64) -> Result<Vec<f64>, JsError> {
    js(compute::survival(v0, f0, k0, periods, protocol, seed))
}

#[wasm_bindgen]
pub fn resonances(v0: f64, phi_min: f64, phi_max: f64, count: usize) -> Result<Vec<f64>, JsError> {
    js(compute::resonances(v0, phi_min, phi_max, count))
}
