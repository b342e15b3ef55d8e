# config/settings.py
import math
import os
from dotenv import load_dotenv

load_dotenv()

LOG_DIR = os.getenv("OVERTAKING_LOG_DIR", "logs")
OUTPUT_DIR = os.getenv("OVERTAKING_OUTPUT_DIR", "output")
SWEEP_JOBS = int(os.getenv("OVERTAKING_SWEEP_JOBS", "4"))
MPEC_NODE_BUDGET = int(os.getenv("OVERTAKING_MPEC_NODE_BUDGET", "5000"))

APP_VERSION = "0.3.0"

# vehicle, road and actuation limits
EV_SPEED_LIMIT = 19.67        # v̄, m/s
OV_SPEED_LIMIT = 17.88        # v̄_o, m/s
OV_SPEED_MIN = 0.0
VEHICLE_LENGTH = 4.4
VEHICLE_WIDTH = 1.82
WHEELBASE = 2.5
LANE_WIDTH = 3.65
STANDSTILL_GAP = 6.08         # d_X0, m
ACCEL_MIN = -6.5
ACCEL_MAX = 2.33
STEER_LIMIT = math.radians(5.0)
HEADING_LIMIT = math.radians(5.0)
MIN_HEADWAY_TIME = 1.5        # t_min, s
TARGET_HEADWAY_TIME = 2.0     # t̃, s
GRAVITY = 9.81
SIM_TIME = 50.0
SAMPLE_TIME = 0.1
HORIZON = 20

# QP solver
QP_TOL_STATIONARITY = 1e-6
QP_TOL_COMPLEMENTARITY = 1e-6
QP_TOL_PRIMAL = 1e-8
QP_MAX_ITER = 100
PSD_SHIFT = 1e-10

# MPEC
COMPLEMENTARITY_TOL = 1e-6
SLACK_PENALTY = 1e4
COUPLING_BUFFER = 0.8         # m of lateral clearance the plan keeps above every movable boundary row
FOLLOWER_AUDIT_TOL = 1e-6

# Controller weights (calibration knobs)
LATERAL_Q_Y = (0.01, 18.0, 2600.0)    # s_y tracking, psi, delta
LATERAL_Q_O = (0.02, 1.0, 5.0)        # OV headway tracking, speed tracking, effort
LONGITUDINAL_P_X = 1.0
LONGITUDINAL_Q_X = (0.25, 1.0)        # speed tracking, acceleration effort

# Chance constraint
DEFAULT_BETA = 0.05

# Driver uncertainty
HEADWAY_BAND = (-0.6, 3.0)    # s, interaction band of the variance curve
VARIANCE_PEAK_TIME = 0.5
VARIANCE_PEAK = 0.49          # (m/s²)²
VARIANCE_PLATEAU = 0.04
VARIANCE_DECAY_RATE = 2.0     # 1/s
BIN_WIDTH = 0.1
MIN_BIN_COUNT = 50
MIN_OV_SPEED = 0.1            # m/s, below this headway time saturates

# Pareto critical zone
CRITICAL_HEADWAY_TIME = 0.8   # s
CRITICAL_LATERAL_GAP = 1.0    # m

# Metrics
SETTLE_TOLERANCE = 0.05       # m, cut-in ends when |s_y| first drops below this
