# flake8: noqa
from . import exceptions
from . import sparse
from . import krylov
from . import precond

from .exceptions import *
from .sparse import CsrMatrix, DenseMatrix, csr_from_coo, spmv
from .krylov import gmres, SolveResult
from .precond import FactorPair, ilu0
from .version import __version__
