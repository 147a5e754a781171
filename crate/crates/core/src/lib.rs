pub mod annotator;
pub mod bundle;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod hashing;
pub mod meter;
pub mod scope;
