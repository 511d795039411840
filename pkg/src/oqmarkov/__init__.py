"""Markovianity criterion checkers, counterexample models and stochastic
unravellings for small open quantum systems, with a mirrored classical
stochastic-process toolkit."""

from .core import (DensityOperator, Operator, PureState, helstrom_norm, kron,
                   matrix_exp, mutual_information, negativity, partial_trace,
                   purity, trace_distance)
from .superop import (CanonicalGenerator, ChoiMatrix, LindbladSpec,
                      SuperOperator, canonical_decompose, choi_of, compose,
                      dissipator, generator_from_maps, intermediate_map,
                      is_cptp, me_integrate, pinv, superop_of)
from .models import (afl, bath_correlation, collision, dd_apply, eternal_me,
                     make_model, nqib_qubit, static_dephasing, tam,
                     tam_post_replacement_model, tam_post_replacement_rate)
from .criteria import (CriterionReport, check_composability,
                       check_distinguishability, check_divisibility, check_fa,
                       check_fdd, check_gqrf, check_nib, check_nqib, check_qrf,
                       check_semigroup, dd_effectiveness, hierarchy_report,
                       map_family, multitime_correlation,
                       regression_prediction, tomograph)
from .unravel import (Ensemble, Trajectory, collision_unravel, ensemble_mean,
                      ensemble_second_moment, mcwf_diffusive, mcwf_jump,
                      static_unravel)
from .classical import (FiniteProcess, SDESpec, StochasticMatrix,
                        TransitionFamily, blockwise_counterexample, check_cdiv,
                        check_cke, check_classical_disting, check_cm,
                        check_crf, check_stochastic_semigroup, conditional,
                        markov_chain, mcsm)

__version__ = "0.1.0"
