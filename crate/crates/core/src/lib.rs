pub mod closed_form;
pub mod exponents;
pub mod extended;
pub mod grid;
pub mod harnack;
pub mod integrability;
pub mod obstacle;
pub mod quadrature;
pub mod solver;
pub mod source;
pub mod tridiag;
