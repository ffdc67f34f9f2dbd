"""Services behind the command line: single runs, sweeps and verification."""
