"""Numerical laboratory for the spatially homogeneous Boltzmann equation."""
