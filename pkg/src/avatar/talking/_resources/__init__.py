"""Contains the managers of run directory resources."""
