pub mod oracles;
pub mod properties;
