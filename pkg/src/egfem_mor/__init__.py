"""Model order reduction of nonlinear finite element problems with group
(interpolated-coefficient) formulations, POD and DEIM/MDEIM hyper-reduction."""

from . import assembly, bench, meshfe, reduction, rom, solve, tensor3
from .errors import *  # noqa: F401,F403
from .fom import FullOrderModel, GroupModel, MlsgaModel, SgaModel, build_fom
from .rom import FORMULATIONS, project

__version__ = "0.1.0"
