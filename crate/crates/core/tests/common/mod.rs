pub mod manifold_checks;
