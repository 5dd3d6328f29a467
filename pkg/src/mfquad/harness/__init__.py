"""Test functions, reference integrals, convergence studies and the CLI."""
