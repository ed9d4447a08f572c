//! Lock-in demodulation, spectral estimation and model fits.

pub mod fft;
pub mod fir;
pub mod fit;
pub mod lockin;
pub mod psd;

pub use fit::{fit_lorentzian, fit_noise_model, fit_quadratic_floor, LorentzianFit, NoiseFit, QuadraticFit};
pub use lockin::{lock_in, DemodRecord, LockIn};
pub use psd::{periodogram, psd, psd_hann, PsdAccumulator, Window};
