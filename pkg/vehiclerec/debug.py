"""
This module defines some switches that can be set to Disable or corrupt certain parts of the code,
which is useful for isolating numerical problems.

GRADIENT_FAULT names a layer checked by the gradcheck suite whose backward pass gets corrupted on purpose.
It is the negative control for `main.py gradcheck`: with it set, the command has to fail.
"""

# stdlib imports
import os


# Set Debug options through Environment variables
CHECK_FINITE_ENV_VAR = os.environ.get('VEHICLEREC_CHECK_FINITE')
GRADIENT_FAULT_ENV_VAR = os.environ.get('VEHICLEREC_GRADIENT_FAULT')


# Debug options
CHECK_FINITE = False if CHECK_FINITE_ENV_VAR is not None and int(CHECK_FINITE_ENV_VAR) == 0 else True  # NaN/Inf check after every op
GRADIENT_FAULT = GRADIENT_FAULT_ENV_VAR  # Layer name whose gradient is corrupted, None to disable
