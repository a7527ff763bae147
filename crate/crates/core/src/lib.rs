pub mod blocks;
pub mod error;
pub mod manifold;
pub mod nonsmooth;
pub mod alf;
pub mod subsolvers;
pub mod alm;
pub mod problems;
