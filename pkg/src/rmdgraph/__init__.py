"""Rank-modulated degree graphs for clustering and transduction on unbalanced data.

Points get a neighbor budget that grows with their density rank, so graphs
are sparse across density valleys and dense inside modes. The package
builds these graphs and the usual baselines, runs spectral clustering and
label propagation on them, and evaluates graph cuts and their limits.
"""

__version__ = "0.1.0"

from .cuts import (
    CutCurve,
    CutReport,
    Partition,
    cut_constant,
    cut_metrics,
    hyperplane_sweep,
    limit_ncut_knn,
    limit_ncut_rmd,
    scaled_ncut,
    unit_ball_volume,
)
from .dataset import (
    DataFormatError,
    DataSet,
    LabeledSplit,
    MixtureSpec,
    density_valleys,
    gen_banana_scene,
    gen_blobs,
    gen_mixture,
    hierarchy_spec,
    load_csv,
    make_labeled_split,
    save_csv,
    subsample_unbalanced,
    two_gaussian_spec,
    unbalanced_pair_spec,
)
from .estimators import (
    DivisiveSpectralClustering,
    GraphBuilder,
    GRFClassifier,
    GTAMClassifier,
    RankEstimator,
    RMDSpectralClustering,
)
from .graph import (
    DegreeProfile,
    DegreeScheme,
    SparseGraph,
    apply_weights,
    bmatching_graph,
    degree_profile,
    eps_graph,
    full_rbf_graph,
    knn_graph,
    laplacian,
    read_edgelist,
    rmd_graph_nn,
    rmd_graph_opt,
    scheme,
    write_edgelist,
)
from .learn import (
    CvConfig,
    Labeling,
    cross_validate,
    divisive_cluster,
    error_rate,
    grf,
    gtam,
    spectral_clustering,
)
from .rank import PValueTable, RankVector, StatisticSpec, pvalue_oracle, rank_all, rank_ustat, statistic
from .recipes import GraphRecipe
