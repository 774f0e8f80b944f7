"""
Shared constants & scenario defaults for shieldsim.

Every key a scenario file may set lives in ``DEFAULTS``; the config parser
rejects anything not listed here.  ``None`` marks a value that is derived at
resolve time (or, for ``experiment.seed``, one that is mandatory).
"""
from __future__ import annotations

VERSION = "1.0.0"

# ───────────────────────── statistical constants ─────────────────────────
TVLA_THRESHOLD: float = 4.5

# ─────────────────────────── random streams ──────────────────────────────
# Second element of every SeedSequence; keeps independent experiments apart.
STREAM_SIMULATE    = 1
STREAM_EFFORT      = 3
STREAM_TVLA        = 4
STREAM_CORRELATION = 5
STREAM_SUCCESS     = 6
STREAM_CALIBRATE   = 7
STREAM_DSE         = 8
STREAM_OVERHEAD    = 9
STREAM_REACTION    = 10
STREAM_KEYGEN      = 11
STREAM_MESSAGES    = 12
STREAM_DIST        = 13

# ─────────────────────────── batch schedule ──────────────────────────────
# Trace i always lands in the same batch slot, whatever the caller's n_max.
BATCH_SCHEDULE: tuple[int, ...] = (4, 8, 16, 32, 64)
BATCH_MAX = 128

# Samples drawn per RNG block; fixes the random streams independently of
# whether the engine runs open- or closed-loop.
SAMPLE_BLOCK = 64

# ─────────────────────────── defense modes ───────────────────────────────
MODES: tuple[str, ...] = ("none", "random", "shield")
EVENTS: tuple[str, ...] = ("DETECT", "RAMP", "RESET")
METRICS: tuple[str, ...] = ("effort", "tvla", "corr", "overhead", "success", "reaction", "dist")

# ─────────────────────────── environment ─────────────────────────────────
WORKERS_ENV = "SHIELDSIM_WORKERS"

# ─────────────────────────── scenario defaults ───────────────────────────
DEFAULTS: dict = {
    "floorplan": {
        "width": 32,
        "height": 32,
        "locations": {
            "rsa": [16, 16],
            "noise_bank": [16, 17],
            "random_bank": [16, 15],
        },
    },
    "pdn": {
        "v_nom": 1.0,
        "r_eff": 0.1,
        "l_eff": 1e-8,
        "lambda": 0.5,
        "tick_period": 1e-7,
    },
    "victim": {
        "n_bits": 1024,
        "key_hex": None,
        "modulus_hex": None,
        "p_idle": 0.1,
        "p_square": 1.1,
        "p_mult": 2.4,
        "t_square": 32,
        "t_mult": 32,
        "location": "rsa",
    },
    "monitor": {
        "placement": "close2",
        "ro_locations": None,
        "m": 32,
        "f_ref": 10e6,
        "c_ref": 4,
        "k": 200e6,
        "f0": 100e6,
        "n_ff": 16,
        "cycle_jitter": 1.0,
        "self_power_per_ro": 0.001,
    },
    "placements": {
        "far":    {"kind": "ring",    "anchor": "rsa",    "radius": 12},
        "close1": {"kind": "cluster", "anchor": [16, 12], "radius": 0},
        "close2": {"kind": "ring",    "anchor": "rsa",    "radius": 2},
    },
    "defense": {
        "mode": "none",
        "theta0": None,
        "delta": None,
        "auto_calibrate": False,
        "s": 4,
        "p_set": None,
        "location": "noise_bank",
        "ro_per_set": 16,
        "random": {
            "n_ros": 16,
            "p_per_ro": 0.4,
            "duty": 0.5,
            "location": "random_bank",
        },
    },
    "tenants": [],
    "attacker": {
        "error_tolerance": 0,
    },
    "experiment": {
        "name": "scenario",
        "seed": None,
        "trials": 20,
        "n_max": 2000,
        "traces": 10,
        "tail_ticks": 64,
        "success_order": 2,
        "success_traces": 1,
        "reaction_frequencies": [10e6, 50e6, 100e6],
    },
    "dse": {
        "mode": "exhaustive",
        "placements": ["far", "close1", "close2"],
        "frequencies": [10e6, 100e6],
        "ro_counts": [16, 32, 64],
        "w_acc": 0.8,
        "w_area": 0.1,
        "w_power": 0.1,
        "trials": 200,
        "effort_trials": 3,
        "effort_n_max": 50,
        "noise_sets": [1, 2, 4, 8],
        "random_ros": [8, 16, 32, 64],
    },
    "overhead": {
        "ref_counter_width": 16,
        "shield_control_ff": 2,
        "bank_register_width": 8,
        "random_tff_chain": 48,
        "lfsr_width": 16,
        "victim_ff": None,
        "static_monitor_w": 0.0,
        "static_shield_w": 0.0,
        "static_random_w": 0.0,
    },
}

# Keys whose value is a free-form mapping (user may add labels).
FREE_MAPPINGS: frozenset[str] = frozenset({"floorplan.locations", "placements"})

TENANT_KEYS: dict = {"location": None, "p_mean": 0.0, "p_std": 0.0}
PLACEMENT_KEYS: dict = {"kind": "ring", "anchor": "rsa", "radius": 0}
PLACEMENT_KINDS: tuple[str, ...] = ("ring", "cluster")

# Keys defaulting to None, with the type a user value must have.
NULLABLE_TYPES: dict = {
    "victim.key_hex": str,
    "victim.modulus_hex": str,
    "monitor.ro_locations": list,
    "defense.theta0": float,
    "defense.delta": float,
    "defense.p_set": float,
    "overhead.victim_ff": int,
    "experiment.seed": int,
}

MANIFEST_NAME = "manifest.yaml"
