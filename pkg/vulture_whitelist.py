# vulture_whitelist.py
# This file is used to whitelist symbols that vulture incorrectly marks as unused.
# Each symbol below is referenced from tests, reports or serialization only,
# or is part of the public API, and should not be removed.


# --- src/sstsim/sparse_format.py ---
def validate_pattern():
    pass  # Public API, used in tests


def equals():
    pass  # Used in tests


# --- src/sstsim/spe.py ---
def spe_mac_reference():
    pass  # Single-SPE oracle, used in tests


# --- src/sstsim/sst_slice.py ---
valid_out = False  # Output port, read by slice drivers and tests


# --- src/sstsim/fabric.py ---
bank_peaks = {}  # Reported per-bank peak read width


# --- src/sstsim/trace.py ---
def mac_gaps():
    pass  # Utilization audit, used in tests


# --- src/sstsim/workloads.py ---
def list_networks():
    pass  # Used in tests


def network_to_dict():
    pass  # Used in tests


# --- vulture whitelist references ---
validate_pattern
equals
spe_mac_reference
valid_out
bank_peaks
list_networks
network_to_dict
mac_gaps
