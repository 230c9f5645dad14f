//! Resonantly enhanced tunneling of a wave packet in a tilted optical
//! lattice: band structure, exact propagation, the two-band cascade model
//! and exponential decay fits.
//!
//! All quantities are in recoil units: energies in E_rec, times in ħ/E_rec,
//! quasi-momenta in units of the recoil momentum (zone edge at |k| = 1).

pub mod cascade;
pub mod decay_fit;
pub mod error;
pub mod lattice;
pub mod propagator;

pub use cascade::{
    asymptotic_rate, cascade_operator, finite_step_estimates, iterate_cascade, iterate_cascade_emptied, k_auxiliary,
    lz_probability, resonance_map, resonance_point, step_rates, survival_amplitudes, write_resonance_csv,
    z_closed_form, z_closed_form_unchecked, z_first_order, z_projection, CascadeModel, ClosedFormZ, ResonancePoint,
    RESONANCE_CSV_HEADER,
};
pub use decay_fit::{fit_exponential, sample_plateaus, transient_length, DecayEstimate, PlateauSamples};
pub use error::{Error, Result};
pub use lattice::{
    average_band_gap, band_spectrum, bloch_eigensystem, bloch_hamiltonian, bloch_period, bloch_phase, force_for_phase,
    gap_estimate_large_v, gap_estimate_small_v, BlochEigen, BlochSpectrum, LatticeParams,
};
pub use propagator::{
    adiabatic_coupling, adiabatic_populations, apply_protocol_action, evolve, evolve_with, lz_coupling_lorentzian,
    ActionRecord, CouplingSeries, IntegratorSettings, Protocol, Trajectory, WavePacketState,
};
