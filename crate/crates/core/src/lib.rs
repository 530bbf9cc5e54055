//! Cache-aided MISO broadcast delivery with delayed CSIT.
//!
//! Coded-caching placement folds each user's missing subfiles into
//! `C(K, Gamma+1)` messages, and a multi-phase retrospective broadcast built
//! on delayed channel feedback delivers them in `H_K - H_Gamma` time slots.
//! The crate constructs the scheme, runs it symbol by symbol over a generic
//! channel in `GF(2^31 - 1)`, decodes every user, and evaluates the matching
//! outer bound, gap and DoF metrics exactly.

pub mod bounds;
pub mod combinatorics;
pub mod decoder;
pub mod error;
pub mod field;
pub mod io;
pub mod placement;
pub mod scheduler;
pub mod simulator;

pub use combinatorics::{Rational, Subset};
pub use error::{Error, Result};
pub use field::{FieldElement, FieldMatrix, SeededRng};
pub use placement::{CacheContents, Library, SystemConfig};
pub use scheduler::{DeliveryPlan, PhasePlan, XorMessage};
pub use simulator::Transcript;
