"""Entanglement-based two-way clock synchronization: simulation and analysis.

Subsystems:

- ``timetags``: pair-source, detector, and clock models producing integer-ps
  detection streams, plus the tag file formats.
- ``channel``: fiber delays, including direction-dependent path lengths.
- ``correlation``: cross-correlation histograms, peak finding, and per-block
  offset/round-trip estimation.
- ``polarization``: Jones states, Faraday rotation phases, and the circulator
  action on entangled pairs.
- ``tomography``: 36-setting measurement model, maximum-likelihood state
  reconstruction, fidelities, and Monte Carlo error propagation.
- ``scenario`` / ``cli``: configuration files and batch runners.
"""

__version__ = "0.1.0"
