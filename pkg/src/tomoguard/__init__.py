"""Topology obfuscation workbench for tree network tomography."""
from .attackers import (GibbsPosterior, MleConfig, RnjConfig, candidate_space, gibbs_posterior,
                        mle_infer, path_loss, rnj_infer)
from .baselines import BaselineConfig, antitomo_defense, proto_defense
from .defense import TrainConfig, init_generator, perturb, structural_loss, train
from .kernels import BACKEND
from .metrics import MetricReport, compare, link_distance, struct_similarity, ted_similarity
from .observation import NoiseConfig, apply_positive_noise, observe, project_realizable
from .theory import (ChannelSpec, check_entropy_bound, empirical_success_probability, fano_bound,
                     mutual_information)
from .topology import (PathDelayVector, TopologySpace, TreeTopology, build_tree,
                       enumerate_topologies, random_tree, read_topology, routing_matrix,
                       shared_path_vector, write_topology)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BaselineConfig", "ChannelSpec", "GibbsPosterior", "MetricReport", "MleConfig",
    "NoiseConfig", "PathDelayVector", "RnjConfig", "TopologySpace", "TrainConfig", "TreeTopology",
    "antitomo_defense", "apply_positive_noise", "build_tree", "candidate_space",
    "check_entropy_bound", "compare", "empirical_success_probability", "enumerate_topologies",
    "fano_bound", "gibbs_posterior", "init_generator", "link_distance", "mle_infer",
    "mutual_information", "observe", "path_loss", "perturb", "project_realizable", "proto_defense",
    "random_tree", "read_topology", "rnj_infer", "routing_matrix", "shared_path_vector",
    "struct_similarity", "structural_loss", "ted_similarity", "train", "write_topology",
]
