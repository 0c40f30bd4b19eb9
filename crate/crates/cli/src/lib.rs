//! Command-line front end for the `gstvar` library.

pub mod commands;
pub mod io;
