"""Integer codes shared by the compiled and numpy kernels."""

C_NONE = 0
C_BOX = 1
C_L1 = 2

ENGINE_TSENG = 0
ENGINE_KORPELEVICH = 1

CONVERGED = 0
INNER_CAP = 1
NUMERIC_FAILURE = 2
CERT_VIOLATION = 3
BROKEN_CONVEXITY = 4

REL_SLACK = 1e-10
