"""Homogenization toolkit for Stokes flow in thin porous media.

Cell problems on a voxelized reference cell give a permeability tensor, a
2-D Darcy solve gives the homogenized flow, and a direct Stokes simulation
of the thin perforated slab checks the limit.
"""
__version__ = "0.1.0"
