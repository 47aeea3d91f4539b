"""Simulation and numerical toolkit for two-choice bounded-size graph
processes (Bohman-Frieze rule and relatives): exact discrete simulation,
the isolated-share ODE, tree-component density integrals, near-critical
tail fits, and a statistical verification harness."""

__version__ = "0.1.0"

from .criticality import (CriticalityReport, FitResult, GiantEstimate, c_of_t,
                          estimate_tc, fit_delta_gamma, lambda_K,
                          lambda_K_asymptotic, predict_L_quantile, rho_giant)
from .harness import (CheckReport, ExperimentConfig, ReplicaResults,
                      check_concentration, check_conditional_edge_frequencies,
                      check_gap, check_nontree_scarcity,
                      check_pair_factorization, check_poisson_window,
                      check_small_vertex_mass, check_tree_counts,
                      extreme_value_experiment, gumbel_cdf, ks_distance,
                      run_replicas)
from .measure import (ArrivalTimes, MuEstimate, UnsupportedSizeError,
                      er_mode_mu_closed_form, er_mode_rho_closed_form, f_hat,
                      g_product, mu_graph_mc, mu_graph_quad, mu_k0, mu_table,
                      rho_k)
from .process import (ComponentCensus, EdgeEvent, ProcessState, RuleSpec,
                      decide, new_process, replica_seed, run_sweep)
from .trajectory import Trajectory, integrals_at, rho1_at, solve_rho1
from .trees import (LabeledForest, LabeledTree, canonical_code,
                    enumerate_labeled_trees, isomorphism_classes)

__all__ = [name for name in dir() if not name.startswith("_")]
