"""
Steering Engine Configuration

Centralized numerical settings for the steering engine.
Modify these settings to tune tolerances and simulation defaults.
"""

import math

# ============================================================================
# Numerical Tolerances
# ============================================================================

TOLERANCE_CONFIG = {
    # Algebraic identities (hermiticity, unitarity, normalization)
    "algebraic": 1e-12,

    # Trace of a density matrix
    "trace": 1e-10,

    # Smallest eigenvalue tolerated in a density matrix
    "eigenvalue": 1e-9,

    # Imaginary residue allowed in Tr(rho A) for Hermitian A
    "imaginary_residue": 1e-10,

    # Probability table entries may overshoot [0, 1] by this much
    "probability": 1e-10,

    # Walker norm after renormalization
    "walker_norm": 1e-10,

    # A jump drawn from a channel with <c^dag c> below this is inconsistent
    "null_jump": 1e-14,

    # Direct SME integration fails below this eigenvalue (time step too large)
    "positivity": 1e-6,

    # Bloch vectors longer than 1 + this are rejected
    "bloch_length": 1e-6,
}

# ============================================================================
# Weak-Measurement Regime
# ============================================================================

REGIME_CONFIG = {
    # J*dt and Lambda*dt above this emit a RuntimeWarning
    "weak_measurement_limit": 0.3,
}

# ============================================================================
# Simulation Defaults
# ============================================================================

SIMULATION_CONFIG = {
    # Steps per trajectory; must stay >> 1/(J dt)
    "n_steps": 3000,

    # Walkers sharing one measurement record
    "n_walkers": 100,

    # Late-time window as a fraction of the trajectory
    "window_fraction": 0.2,

    # Ensemble-average snapshots are stored every N steps
    "snapshot_stride": 10,

    # Options: "kraus" (completely positive step), "euler" (literal increment)
    "sme_scheme": "kraus",

    # Walker error channels. Options: "kraus" (exact per-step channel, one
    # branch per walker drawn from its bath variable), "diffusive" (first-order
    # Gaussian update, accurate only for gamma * dt << 1)
    "error_scheme": "kraus",
}

# ============================================================================
# Decision Making
# ============================================================================

DECISION_CONFIG = {
    # Gains within atol + rtol * spread of the maximum count as ties
    "tie_atol": 1e-14,
    "tie_rtol": 1e-9,
}

# ============================================================================
# Sweep Analysis
# ============================================================================

SWEEP_CONFIG = {
    # Minimum number of grid points for a threshold fit
    "min_grid_points": 5,

    # Onset method: purity level as fraction of its range above the minimum
    "onset_fraction": 0.1,

    # Spectral peak must exceed the next-highest bin by this factor
    "min_snr": 2.0,

    # Bins around the peak excluded from the SNR denominator
    "snr_guard_bins": 2,

    # Shortest trace accepted by the frequency analysis
    "min_trace_length": 256,
}

# ============================================================================
# Reference Parameters
# ============================================================================

REFERENCE_PARAMETERS = {
    "delta": 1.0,
    "transmission": 0.98,
    "phase": 0.97 * math.pi,
    "coupling": 0.98,
    "coupling_two_qubit": 0.49,
    "steer_strength": 3.0,
    "dt": 0.03,
}

# ============================================================================
# Logging Configuration
# ============================================================================

LOGGING_CONFIG = {
    # Log level: "DEBUG", "INFO", "WARNING", "ERROR"
    "log_level": "INFO",

    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",

    # Log a progress line every N finished trajectories (0 = never)
    "progress_every": 50,
}

# ============================================================================
# Helper Functions
# ============================================================================

_SECTIONS = {
    "tolerance": TOLERANCE_CONFIG,
    "regime": REGIME_CONFIG,
    "simulation": SIMULATION_CONFIG,
    "decision": DECISION_CONFIG,
    "sweep": SWEEP_CONFIG,
    "reference": REFERENCE_PARAMETERS,
    "logging": LOGGING_CONFIG,
}


def get_config(section: str) -> dict:
    """
    Get configuration for a specific section.

    Args:
        section: Configuration section name

    Returns:
        Configuration dictionary
    """
    if section not in _SECTIONS:
        raise ValueError(f"Unknown config section: {section}")
    return _SECTIONS[section]


def update_config(section: str, key: str, value):
    """
    Update a configuration value.

    Args:
        section: Configuration section name
        key: Configuration key
        value: New value
    """
    config = get_config(section)
    if key not in config:
        raise ValueError(f"Unknown key '{key}' in section '{section}'")
    config[key] = value


def print_all_configs():
    """Print all configuration sections."""
    print("=" * 80)
    print("STEERING ENGINE CONFIGURATION")
    print("=" * 80)

    for name, config in _SECTIONS.items():
        print(f"\n{name.upper()}:")
        for key, value in config.items():
            print(f"  {key}: {value}")

    print("\n" + "=" * 80)


if __name__ == "__main__":
    print_all_configs()
