"""Strong-converse exponents for lossy source coding with decoder
side-information: exact objective evaluation, multi-start optimization,
closed-form special cases, a matching-based achievability simulator, and
brute-force converse oracles at tiny blocklengths."""

from .probability import (
    Alphabet,
    Channel,
    JointTable,
    compose,
    cond_mutual_information,
    condition,
    entropy,
    kl_divergence,
    make_table,
    marginalize,
    mutual_information,
)
from .exponent import (
    AndExample,
    ExponentPoint,
    RdResult,
    WZInstance,
    and_example,
    and_instance,
    binary_entropy,
    cardinality_functionals,
    fstar_function_computation,
    fstar_slepian_wolf,
    function_computation_instance,
    naive_upper_value,
    objective_terms,
    optimize_fstar,
    rd_wyner_ziv,
    slepian_wolf_instance,
)
from .matching import (
    SharedExpSource,
    WeightedSupport,
    argmin_sample,
    couple_conditional,
    coupled_mismatch,
    exp_variate,
    mismatch_bound,
)
from .seqtypes import (
    CondClassHandle,
    JointType,
    class_size,
    enumerate_class,
    joint_type_of,
    nearest_type,
    sample_uniform_cond,
    type_class_prob,
    variation_distance,
)
from .simulate import (
    EstimateReport,
    SchemeConfig,
    build_scheme,
    estimate,
    exact_pc_timesharing_and,
    run_trial,
)
from .oracle import Code, check_converse, min_exponent_bruteforce, pc_exact, timesharing_and_code

__version__ = "0.1.0"
