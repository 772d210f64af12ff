"""Gaussian hand model fitting to depth images."""
