from .bundle import DatasetBundle
from .ingest import (
    chronological_split,
    filter_records,
    make_supervised_samples,
    parse_checkins,
    preprocess,
    split_trajectories,
)
from .kmeans import kmeans_geo
from .mobility_tree import (
    MobilityTree,
    build_mobility_tree,
    period_index,
    render_tree,
    tree_stats,
)
from .modules import MobilityDataModule, TreeBatch, collate
