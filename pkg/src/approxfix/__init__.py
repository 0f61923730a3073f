"""Certified approximate fixed points of set-valued maps, and approximate saddle points."""

from .brouwer import BrouwerResult, KuhnCell, approx_fixed_point, completely_labeled_search, grid_for_eps, sperner_label
from .expr import evaluate, evaluate_batch, lipschitz_modulus, parse, to_string
from .geometry import Box, Hull, diameter, distance, eps_net, hausdorff, project
from .kakutani import (FixedPointResult, approx_kakutani, approx_kakutani_weak, multi_point_delta,
                       piecewise_affine_selection, residual_certificate)
from .minimax import SaddleCertificate, approx_saddle, brute_gap, certified_inf, certified_sup, sublevel_maps
from .modulus import Lipschitz, Table
from .setvalued import (check_approximability, from_function, from_polygonal_graph, permute_inputs, product)

__version__ = "0.1.0"
