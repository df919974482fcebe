"""MBQC on finite symmetric spin-1/2 chains.

Subpackages: exact Pauli-string algebra (`pauli`), symmetry schemes and their
validation (`schemes`), resource-state construction (`states`), string order
parameters (`strings`), shot-level pattern execution (`runtime`), the
logical-channel oracle (`oracle`), the Boolean-function contextuality witness
(`witness`), and the command-line interface (`cli`).
"""

__version__ = "0.1.0"

from .pauli import PauliOperator, SitePartition
from .schemes import SymmetryScheme, ValidatedScheme, builtin_scheme, validate
from .states import HamiltonianSpec, ResourceState

__all__ = [
    "PauliOperator",
    "SitePartition",
    "SymmetryScheme",
    "ValidatedScheme",
    "builtin_scheme",
    "validate",
    "HamiltonianSpec",
    "ResourceState",
    "__version__",
]
