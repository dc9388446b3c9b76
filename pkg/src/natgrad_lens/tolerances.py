"""Numerical tolerances used throughout the library, collected in one place.

Relative tolerances (suffix ``_RTOL``) are applied against a stated scale;
everything else is an absolute bound in max-norm.
"""

# Eigendecomposition certificates.
EIG_ORTHONORMALITY_TOL = 1e-10    # max|V V^T - I|
EIG_RECONSTRUCTION_RTOL = 1e-9    # max|A - V diag(w) V^T| <= RTOL * max(1, max|A|)

# Lyapunov solve certificate: max|P A + A^T P + Q| <= RTOL * max|Q|.
LYAPUNOV_RESIDUAL_RTOL = 1e-9

# Orthonormal complement basis: |u_i . g| <= TOL * |g| and Gram defect <= TOL.
COMPLEMENT_ORTHO_TOL = 1e-12

# Alignment gate: metric construction requires y.g > ALIGNMENT_RTOL * |y||g|.
ALIGNMENT_RTOL = 1e-12

# Metric certificates.
METRIC_MAP_RTOL = 1e-10           # |M g - y| <= RTOL * |y| on construction
VALIDITY_MAP_RTOL = 1e-8          # looser gate used when validating foreign matrices
SYMMETRY_DEFECT_TOL = 1e-12

# Discrete-gradient certificates.
TAYLOR_RESIDUAL_RTOL = 1e-9       # second-order expansion residual vs max(1, |L|)
PAIRING_RTOL = 1e-9               # p . (discrete gradient) = delta L
STEP_RECONSTRUCTION_TOL = 1e-9    # recovering theta_next through the inverse metric
COMBINED_RECONSTRUCTION_TOL = 1e-8
STOCHASTIC_RECONSTRUCTION_TOL = 1e-8
CORRECTION_ORTHO_RTOL = 1e-12     # <Hg>.<g> treated as zero below this (relative)

# Finite differences.
FD_HESSIAN_STEP_SCALE = 1e-5      # step = SCALE * max(1, |theta|)
GRADIENT_SELFTEST_RTOL = 1e-5
