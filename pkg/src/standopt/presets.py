"""Built-in parameter sets: the size-class table, default growth and economic
parameters, and the named initial stand states used throughout the toolkit.

All tree counts are per hectare, diameters in millimeters, volumes in cubic
meters per tree, basal areas in square meters per tree. Each basal area equals
the disc area of the class midpoint diameter rounded to four decimals.
"""

from __future__ import annotations

# Per size class s = 1..12: basal area (m2), diameter (mm), pulpwood volume
# (m3), sawlog volume (m3). Row order defines the class index.
SIZE_CLASS_ROWS = (
    # b_s      d_s   v1_s   v2_s
    (0.0044,  75.0, 0.014, 0.000),
    (0.0123, 125.0, 0.067, 0.000),
    (0.0241, 175.0, 0.167, 0.000),
    (0.0398, 225.0, 0.081, 0.234),
    (0.0594, 275.0, 0.065, 0.446),
    (0.0830, 325.0, 0.060, 0.684),
    (0.1104, 375.0, 0.050, 0.963),
    (0.1419, 425.0, 0.050, 1.253),
    (0.1772, 475.0, 0.043, 1.574),
    (0.2165, 525.0, 0.039, 1.900),
    (0.2597, 575.0, 0.033, 2.214),
    (0.3068, 625.0, 0.031, 2.565),
)

# Ingrowth / mortality / growth parameters (see GrowthParams).
GROWTH_DEFAULTS = dict(
    S1=147.8,
    S2=0.5494,
    gamma=0.0180,
    nu=0.157,
    B0=0.741,
    m=0.0310,
    A1=0.006824,
    A2=0.000480,
    site_index=15.0,
    latitude=60.0,
)

# Prices, cost rates, fixed cost, interest rate, stage length (see EconParams).
ECON_DEFAULTS = dict(
    p1=34.07,
    p2=58.44,
    C1=2.1,
    C2=1.0,
    Cf=300.0,
    r=0.03,
    delta_years=5,
)

# Named initial states (trees/ha per size class).
INITIAL_STATES = {
    "x1": (1750.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "x2": (50.0, 25.0, 10.0, 0.0, 25.0, 250.0, 25.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "x3": (190.0, 162.0, 140.0, 124.0, 75.0, 18.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
}

# Schedule-length bounds and GA parameters (see GaConfig / ScheduleBounds).
BOUNDS_DEFAULTS = dict(t_min=10, t_max=25, s_min=1, s_max=10)
GA_DEFAULTS = dict(
    population=50,
    crossover_prob=0.9,
    mutation_prob=0.1,
    replacement_pool=2,
    max_generations=4000,
    nlp_call_budget=8000,
    seed=0,
)
NLP_DEFAULTS = dict(
    multistarts=3,
    constraint_tol=1e-6,
    stationarity_tol=1e-6,
    max_outer=20,
    max_inner=400,
    penalty_init=1.0,
    penalty_growth=10.0,
    smoothing_eps=1e-8,
    seed=0,
)

# Initialization-robustness study: two parameter sets of three stand states
# each. Set A uses synthetic even/normal/old profiles; set B reuses the named
# initial states (e = x3 column, n = x1 column, o = x2 column).
STUDY_STATES = {
    ("A", "e"): (20.0,) * 12,
    ("A", "n"): (100.0, 100.0, 100.0, 100.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    ("A", "o"): (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 50.0, 50.0, 50.0, 50.0, 50.0),
    ("B", "e"): (196.0, 162.0, 140.0, 124.0, 75.0, 18.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    ("B", "n"): INITIAL_STATES["x1"],
    ("B", "o"): INITIAL_STATES["x2"],
}

# Fixed reference schedules for the study, written in the CLI text format
# "TRANSITION|CYCLE". Three-letter code: long/short transition (30 or 10
# stages), long/short cycle (6 or 3 stages), dense/sparse harvesting.
STUDY_SCHEDULES = {
    "lld": "010010010010010010010010010010|010010",
    "lls": "010000010000010000010000010000|010000",
    "lsd": "010010010010010010010010010010|010",
    "lss": "010000010000010000010000010000|010",
    "sld": "1000100100|010010",
    "sls": "0100000100|010000",
    "ssd": "1001001001|001",
    "sss": "0100000010|001",
}
