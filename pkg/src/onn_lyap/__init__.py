"""Graph consensus gradient flow coupled with homology-preserving topology
surgery, with executable stability certificates: class-K-infinity sandwich
constants, delay margins, ISS bounds, and closed-form performance limits."""

from .graph_core import (  # noqa: F401
    WeightedGraph,
    Spectrum,
    build_graph,
    laplacian,
    normalized_laplacian,
    spectrum,
    cheeger_estimate,
    check_admissible,
    save_graph,
    load_graph,
)
from .curvature import (  # noqa: F401
    CurvatureField,
    forman_curvature,
    ricci_loss,
    ricci_threshold_edges,
)
from .homology import (  # noqa: F401
    BettiPair,
    PersistenceDiagram,
    betti,
    persistence,
    bottleneck,
    homology_loss,
    move_preserves_betti,
)
from .loss import (  # noqa: F401
    SemanticState,
    LossConfig,
    LossBreakdown,
    LyapunovCertificate,
    semantic_state,
    consensus_loss,
    connection_loss,
    total_loss,
    grad_s,
    certificate,
)
from .dynamics import (  # noqa: F401
    OnnState,
    SurgeryConfig,
    RunConfig,
    TrajectoryRecord,
    semantic_step,
    surgery_decay,
    surgery_rewire,
    run,
    fit_rate,
    surgery_efficiency,
    roa_member,
)
from .delay import (  # noqa: F401
    DelayConfig,
    HistoryBuffer,
    tau_max,
    degraded_rate,
    zero_rate_tau,
    dde_run,
    find_tau_star,
    iss_run,
)
from .bounds import (  # noqa: F401
    LimitReport,
    spectral_lower_bound,
    info_iterations,
    min_edges,
    laman_edges,
    oracle_cost,
)
from .generators import GenSpec, generate, init_state  # noqa: F401

__version__ = "0.1.0"
