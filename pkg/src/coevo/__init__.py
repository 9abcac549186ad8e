"""Cooperative coevolution of neural network blueprints and modules.

Small graph chromosomes evolve in two populations: blueprints describe how
module species compose into a full network, and modules describe small
layer graphs. Assembled networks are scored by a pluggable evaluator,
optionally fanned out to workers over a fault-tolerant completion service,
and scores flow back to every chromosome that contributed.
"""

from .search_space import (
    ConfigurationError,
    HyperparameterSpec,
    ParameterSet,
    SearchSpace,
    build_space,
)
from .genome import (
    BLUEPRINT,
    MODULE,
    ChromosomeGraph,
    CompatibilityCoefficients,
    EdgeGene,
    InnovationRegistry,
    MutationPolicy,
    NodeGene,
    chromosome_from_dict,
    chromosome_to_dict,
    compatibility_distance,
    crossover,
    mutate_add_connection,
    mutate_add_node,
    mutate_chromosome,
    mutate_hyperparameters,
    new_minimal_chromosome,
    validate_chromosome,
)
from .network_ir import (
    FORMAT_VERSION,
    InterchangeError,
    LayerSpec,
    NetworkGraph,
    ShapeError,
    TensorShape,
    analyze_network,
    augment_filters,
    count_parameters,
    deserialize_network,
    infer_shapes,
    serialize_network,
    validate_dag,
)
from .multiobjective import (
    ObjectiveVector,
    complexity_objective,
    front_covers,
    pareto_front,
    peel_fronts,
    rank_by_fronts,
    rank_species_multiobjective,
    truncate_ranked,
)
from .evaluation import (
    EvaluationResult,
    EvaluationTask,
    NoisyEvaluator,
    SurrogateConfig,
    SurrogateEvaluator,
    evaluate_local,
)
from .speciation import (
    Population,
    Species,
    allocate_offspring,
    reproduce_species,
    speciate,
)
from .distrib import (
    CompletionQueue,
    CompletionServer,
    EvaluatorUnreachable,
    LocalBackend,
    ProtocolError,
    RemoteBackend,
    decode_frames,
    encode_message,
    recv_message,
    run_worker,
    send_message,
)
from .coevolution import (
    AssembledNetwork,
    BestRecord,
    CheckpointError,
    EvolutionSettings,
    EvolutionState,
    assemble_networks,
    attribute_fitness,
    build_network,
    evolve_generation,
    initial_state,
    state_from_checkpoint,
    state_to_checkpoint,
)
from .config import RunConfig, load_config, load_config_dict, validate_config

__version__ = "0.1.0"
