// Licensed under the Apache-2.0 license

//! Oracles and generators shared by the integration tests. Nothing here
//! calls into the crate's own MAC or monitor code.

#![allow(dead_code)]

pub mod apex_oracle;
pub mod gen;
pub mod sha;
