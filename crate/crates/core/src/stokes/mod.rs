//! Formal normal forms and Stokes data of the limiting irregular equation.

mod normal_form;
mod oracle;

pub use normal_form::{formal_normal_form, FormalNormalForm, TruncatedNormalization};
pub use oracle::{
    least_term, matching_radius, project_unipotent, triangularity_order, LeastTerm, StokesOracle,
    StokesPair, LEAST_TERM_TOL, ORACLE_TOL, SERIES_ORDER,
};
