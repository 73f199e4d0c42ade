//! Command-line tools and the `/v1` HTTP session API for hiergrounding.

pub mod api;
pub mod cli;
