"""Massless Dirac fields with spinor null forms at desk scale.

Spectral evolution on a periodic box, radiation fields at null infinity,
and the linear/nonlinear scattering maps with their inverses.
"""

from .clifford import (Direction, Matrix4C, NullFormCoeffs, gamma, gamma5,
                       hermiticity_report, inner, null_form,
                       null_form_commutator, projector)
from .grid import (DataSpec, Grid, SpinorField, charge, derivative, dump_field,
                   interpolate, load_field, make_field)
from .propagate import (BlowupError, EvolveConfig, LinearizedNonlinearity,
                        RunHandle, evolve, free_step, reconstruct_time_derivative)
from .radiation import (NullGrid, RadiationField, duhamel_radiation, extract,
                        isometry_defect, oracle_point_value)
from .symmetry import (NormConfig, VectorFieldId, apply_null_infinity,
                       apply_spacetime, null_infinity_family, spacetime_family,
                       weighted_norm)
from .diagnostics import (DiagnosticsConfig, DiagnosticsLog, charge_balance_defect,
                          cone_flux_defect, ghost_weight_check, ks_ratio,
                          peeling_fit)
from .scattering import (LinearMapHandle, PicardDivergenceError, ScatterConfig,
                         apply_adjoint, apply_forward, commutation_defect,
                         forward_nonlinear, invert_linear, invert_nonlinear,
                         linearized_forward)

__version__ = "0.1.0"
