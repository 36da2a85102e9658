pub mod error;
pub mod normal;
pub mod quad;
pub mod rng;
pub mod measure;
pub mod payoff;
pub mod analytic;
pub mod richardson;
pub mod engine;
pub mod mc;
pub mod pathdep;
pub mod fixtures;
pub mod spd;
pub mod hedge;
pub mod mollify;
pub mod io;
