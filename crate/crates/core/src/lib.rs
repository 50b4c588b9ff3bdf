pub mod diagnostics;
pub mod fespace;
pub mod io;
pub mod mesh;
pub mod operators;
pub mod quadrature;
pub mod scheme;
pub mod sparsela;
pub mod testsupport;
pub mod verify;
