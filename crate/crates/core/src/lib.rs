pub mod backend;
pub mod cli;
pub mod entropy;
pub mod expansion;
pub mod model;
pub mod radius;
pub mod rational;
pub mod series;
