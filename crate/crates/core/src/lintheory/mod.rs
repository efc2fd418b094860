//! Linear-system theory: AR models, spectral estimates and the sign structure
//! that convex attention weights can realise.
//!
//! Sign convention used throughout: `x_{t+1} = Σ_k c_k x_{t+1−k}`, so `c_1`
//! multiplies the most recent sample.

mod ar;
mod feasibility;
mod spectral;

pub use ar::{fit_ar, sdof_ar2_closed_form, ARModel};
pub use feasibility::{convex_ar_feasibility, FeasibilityReport};
pub use spectral::{
    ar_spectrum, dominant_peaks, hann, periodogram, spectrogram, Peak, SpectralDensity, Spectrogram, DEFAULT_HOP,
    DEFAULT_WINDOW_LEN,
};

/// Frequency tolerance for spectral claims: `max(0.3 Hz, 2 bins)`.
pub fn peak_tolerance(bin_width_hz: f64) -> f64 {
    0.3_f64.max(2.0 * bin_width_hz)
}
