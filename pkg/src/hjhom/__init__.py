"""Hamilton-Jacobi equations with a winding drift on weighted graphs.

The package models a finite weighted graph as a metric measure space and
solves, on it, the final-value Hamilton-Jacobi problem whose Hamiltonian
couples the gradient to a closed one-form (a winding/homological drift):

* :mod:`hjhom.space` -- the graph space, squared-gradient form, Laplacian,
  heat semigroup and sup-norm hierarchy;
* :mod:`hjhom.forms` -- closed one-forms (edge cocycles and chart
  families), path integrals, periods, harmonicity;
* :mod:`hjhom.cover` -- the deck window on which a cocycle becomes exact;
* :mod:`hjhom.inviscid` -- the backward Bellman value function;
* :mod:`hjhom.viscous` -- the log-transformed linear solvers (fixed point,
  method of lines, direct stepping, minimizing movement);
* :mod:`hjhom.fokker_planck` -- forward drift-diffusion and the stochastic
  value duality;
* :mod:`hjhom.cli` -- scenario-driven command line front end.
"""

from .space import (
    GraphSpace,
    ScalarFieldPath,
    TimeGrid,
    VNorms,
    gamma,
    heat_flow,
    laplacian,
    v_norms,
)
from .forms import (
    ChartForm,
    ChartGap,
    Cocycle,
    VertexPath,
    add,
    check_hypotheses,
    cycle_basis,
    divergence,
    edge_charts,
    equivalent,
    gamma_hat,
    harmonic_representative,
    homology_class,
    integrate,
    is_harmonic,
    local_primitive_chart,
    path_bound_constant,
    periods,
)
from .cover import CoverWindow, WindowExceeded, build_cover, lift_path
from .inviscid import (
    InviscidProblem,
    ValueTable,
    comparison_test,
    cover_equivalence_check,
    extract_minimizer,
    solve_value,
    trajectory_action,
)
from .viscous import (
    NoContraction,
    NonPositive,
    SchrodingerSolution,
    StepSizeRejected,
    ViscousProblem,
    b_operator,
    bound_envelopes,
    cole_hopf,
    cole_hopf_inverse,
    generator_matrix,
    gradient_flow_solve,
    gradient_flow_tau_bound,
    mol_solve,
    picard_solve,
    solve_viscous_hj_direct,
)
from .fokker_planck import (
    DriftPath,
    DualityReport,
    FPResidualError,
    MassDrift,
    MeasurePath,
    PositivityLossWarning,
    drift_divergence,
    drift_inner,
    drift_inner_slice,
    duality_check,
    fp_solve,
    fp_step,
    optimal_drift,
    stochastic_value,
)

__version__ = "0.1.0"
