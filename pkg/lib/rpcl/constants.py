EPISODE_CAP = 1000

# CartPole
CP_GRAVITY = 9.8
CP_MASS_CART = 1.0
CP_MASS_POLE = 0.1
CP_TOTAL_MASS = CP_MASS_CART + CP_MASS_POLE
CP_HALF_LENGTH = 0.5
CP_POLE_MASS_LENGTH = CP_MASS_POLE * CP_HALF_LENGTH
CP_FORCE = 10.0
CP_TAU = 0.02
CP_X_LIMIT = 2.4
CP_THETA_LIMIT = 12 * 2 * 3.141592653589793 / 360  # ~0.2095 rad
CP_INIT_BOUND = 0.05

# MountainCar (discrete + continuous)
MC_FORCE = 0.001
MC_GRAVITY = 0.0025
MC_POWER = 0.0015
MC_MIN_POSITION = -1.2
MC_MAX_POSITION = 0.6
MC_MAX_SPEED = 0.07
MC_GOAL_POSITION = 0.5
MC_INIT_LOW = -0.6
MC_INIT_HIGH = -0.4
MC_GOAL_BONUS = 100.0
MC_ACTION_COST = 0.1

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

# Discretized LQR gain for CartPole: [cart position, cart velocity, pole angle, pole tip velocity]
LQR_GAIN = (-0.9299, -2.0221, 32.3251, 11.0069)

# Moving-average thresholds over the last STOP_WINDOW episodes (env name -> (comparison, threshold))
STOP_WINDOW = 50
STOP_THRESHOLDS = {
    'cartpole': ('>=', 995.0),
    'mountaincar': ('<=', 140.0),
    'mountaincar_continuous': ('<=', 300.0),
}

CHECKPOINT_VERSION = 1
CHECKPOINT_EVERY = 500
LOG_EVERY = 100

DEFAULT_CONFIG_NAMES = {
    'cartpole': 'cartpole.cfg',
    'mountaincar': 'mountaincar.cfg',
    'mountaincar_continuous': 'mountaincar_continuous.cfg',
}

# Discount sets compared by the ablation command
ABLATION_SETS = ('0.9', '0.995', '0.9,0.995', '0.9,0.99,0.995')
