"""Extreme-operating-condition search for relay protection setting calculation.

A reactance-only short-circuit engine, enumeration and GA oracles, and a
graph-convolutional dueling double-Q network trained with a two-stage
guided-learning / free-exploration schedule, for finding the line-outage
combinations that maximize tail-end three-phase fault currents.
"""

from .grid import (
    CaseError,
    GridCase,
    Line,
    RelayPoint,
    Source,
    TopologyState,
    apply_trip,
    components,
    load_case,
    parse_case,
    serialize_case,
)
from .fault import (
    build_susceptance,
    electrical_distances,
    feature_cap,
    impedance_matrix,
    tail_fault_current,
)
from .env import EnvConfig, EpisodeState, Observation, Transition, encode, reset, step
from .nn import (
    AdamState,
    QNetworkParams,
    WeightFileError,
    build_guide_params,
    build_value_params,
    d3qn_target,
    dueling_combine,
    gcn_forward,
    guide_forward,
    load_params,
    normalize_adjacency,
    save_params,
    select_eoc,
    train_step,
    value_forward,
)
from .oracles import (
    DatasetSample,
    GAConfig,
    SearchResult,
    ga_search,
    gen_dataset,
    global_enumerate,
    local_enumerate,
    read_dataset,
    write_dataset,
)
from .training import (
    GuideConfig,
    ReplayBuffer,
    TrainConfig,
    TrainReport,
    ValueConfig,
    extended_explore,
    guided_episode,
    pretrain_guide,
    train_value,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    ablation_run,
    benchmark,
    infer_eoc,
    run_scenario,
    selectivity_check,
)

__version__ = "0.1.0"
