"""Relativistic particle localization: classical, NW, Kijowski and POVM tooling."""
