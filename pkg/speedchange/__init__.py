"""Speed-change exclusion lattice gases: structure, flux algebra, diffusivity bounds and simulation"""

__version__ = "1.0.0"

from .errors import InputError, NumericalError, ResourceError, SpeedChangeError, StructuralError
from .model import Configuration, DensityContext, Model, RateTable, validate_all
from .catalog import builtin_model, load_model, resolve_model
from .dual import DualFunction, FluxBundle, RegimeReport, classify_regime, macroscopic_flux, microscopic_flux
from .bounds import DhatCurve, LambdaGrid, dhat_bounds, lower_bound_dhat, upper_bound_dhat

__all__ = [
    "__version__",
    "SpeedChangeError",
    "InputError",
    "StructuralError",
    "NumericalError",
    "ResourceError",
    "Model",
    "RateTable",
    "Configuration",
    "DensityContext",
    "validate_all",
    "builtin_model",
    "load_model",
    "resolve_model",
    "DualFunction",
    "FluxBundle",
    "RegimeReport",
    "classify_regime",
    "macroscopic_flux",
    "microscopic_flux",
    "DhatCurve",
    "LambdaGrid",
    "dhat_bounds",
    "lower_bound_dhat",
    "upper_bound_dhat",
]
