"""Frozen numerical constants used by the estimation and simulation layers."""

# Mean of the built-in oscillatory interest function over (0, 1), computed
# once by high-precision quadrature (30-digit working precision, panel-split
# at multiples of 1/8) and frozen here to 12 significant digits. All RMSE and
# coverage computations measure against this value.
INTEREST_FUNCTION_MEAN = 28.5909286908
