"""
Active Steering - runs, sweeps and verification of actively steered qubits.
"""

__version__ = "1.0.0"
