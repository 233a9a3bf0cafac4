"""Numerics for discrete causal variational principles.

A configuration of weighted points with a compactly supported pair
Lagrangian defines a discrete causal variational system.  This package
assembles the linearized field operator on jets, evaluates surface-layer
energies over local foliations, solves the weak Cauchy problem by a Gram
realization of the Riesz construction, globalizes solutions over lens
exhaustions into causal Green's operators, and verifies the structural
identities of the theory (energy identities, Green's formula, exact
sequence, symplectic identity) numerically.
"""

from .errors import InputError, ParseError, StructuralError, ValidationError
from .kernels import AnisotropicBumpKernel, CustomKernel, IsotropicBumpKernel, check_derivatives, make_kernel
from .system import DiscreteSystem, action, el_residuals, ell, load_system, save_system
from .jets import Jet, JetSubspace, coordinate_jets, l2_product, pointwise_product, subspace_algebra
from .foliation import Foliation, LensRegion, check_localization, future_partition
from .linfield import LinearizedOperator, assemble_delta, check_positivity, solve_scalar_component
from .optimizer import linearize_variation, minimize
from . import presets, surfacelayer

__version__ = "0.1.0"
