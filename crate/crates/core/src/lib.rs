//! Personalized machine unlearning: saliency masks, block-wise curvature,
//! Group-OBS compensation, KKT certificates and an arithmetic-circuit
//! encoding of the certificate.

pub mod certify;
pub mod container;
pub mod curvature;
pub mod error;
pub mod evalx;
pub mod masking;
pub mod numkit;
pub mod obs;
pub mod registry;
pub mod toymodel;
pub mod zkp;

pub use error::{Error, Result};
