import os

SOLVER_CONFIG = {
    'solver': os.environ.get('GSFT_SOLVER', 'CLARABEL'),
    'tol': float(os.environ.get('GSFT_SOLVER_TOL', 1e-8)),
    'max_iters': int(os.environ.get('GSFT_SOLVER_MAX_ITERS', 500)),
    'verbose': os.environ.get('GSFT_SOLVER_VERBOSE', '0') == '1'
}

SOLVE_DEFAULTS = {
    'eps_prime': 1e-3,
    'min_depth': 0.1,
    'lambda': 0.5,
    'max_iters': 50,
    'rank_one_ratio': 1e-4,
    'weight_agreement': 1e-4,
    'max_silhouette_directions': 512,
    'alpha_bisection_steps': 20,
    'depth_epsilon': 1e-9
}

SSM_DEFAULTS = {
    'variance_fraction': 0.99
}

RUN_CONFIG = {
    'out_dir': os.environ.get('GSFT_OUT_DIR', 'out'),
    'workers': int(os.environ.get('GSFT_WORKERS', 1)),
    'log_level': os.environ.get('GSFT_LOG_LEVEL', 'INFO')
}

APP_TITLE = "gsft - generalised-camera Shape-from-Template"
