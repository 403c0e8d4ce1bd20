//! Bulk-surface Cahn-Hilliard system with dynamic boundary conditions of
//! Liu-Wu type, discretised by P1 finite elements on the unit disk and an
//! implicit viscous time scheme with Moreau-Yosida regularised potentials.

pub mod diagnostics;
pub mod diskfem;
pub mod graphs;
pub mod par;
pub mod sparse;
pub mod stepper;

