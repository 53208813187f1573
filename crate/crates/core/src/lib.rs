//! Method-of-moments estimation for binary latent variable models
//! `x = Wᵀh + σε`, `h ∈ {0,1}^d`.
//!
//! The pipeline estimates the second and third moments of `x`, whitens the
//! third moment down to a `d×d×d` tensor, enumerates the tensor's
//! eigenpairs, and filters the resulting candidate vectors either exactly
//! (noiseless data) or by a Kolmogorov-Smirnov score against a
//! two-component Gaussian mixture (noisy data).

pub mod baselines;
pub mod datagen;
pub mod denoise;
pub mod eigensolver;
pub mod error;
pub mod eval;
pub mod io;
pub mod learn;
pub mod linalg;
pub mod moments;
pub mod rng;
pub mod stability;
pub mod tensor;

pub use eigensolver::{enumerate_eigenpairs, EigenpairSet, SolveMode, SolverConfig};
pub use error::{Error, ErrorKind, Result};
pub use eval::{aligned_error, Alignment};
pub use learn::{algorithm1, algorithm2, ModelEstimate, NoiselessConfig, NoisyConfig};
pub use moments::{CorrectedMoments, LatentMoments, MomentSet, WhitenedModel};
pub use stability::{Eigenpair, Stability};
pub use tensor::{SymTensor3, Tensor3};
