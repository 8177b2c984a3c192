"""Numerical checks for time separation, Busemann functions and the p-d'Alembertian."""
from .charts import BUILTINS, get_chart, load_chart_file, symbolic_chart
from .errors import LorentzLabError
from .metric import MetricChart, christoffel, classify, ricci, riemann
from .geodesic import exp_map, integrate, shoot_bvp
from .timesep import check_rti, ell, ell_action, ell_shooting
from .busemann import BusemannField, LineSpec, busemann_limit

__all__ = [
    "BUILTINS", "get_chart", "load_chart_file", "symbolic_chart", "LorentzLabError",
    "MetricChart", "christoffel", "classify", "ricci", "riemann", "exp_map", "integrate",
    "shoot_bvp", "check_rti", "ell", "ell_action", "ell_shooting", "BusemannField",
    "LineSpec", "busemann_limit",
]
__version__ = "0.1.0"
