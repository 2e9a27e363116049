"""Kernels, gauges, capacities, Cantor sets and the polarity phase diagram."""

from .capacity import DiscreteMeasure, capacity_estimate, energy, segment_points
from .cantor import CantorSpec, cantor_build, cantor_capacity_series, critical_ratio, hausdorff_premeasure
from .kernels import (
    KernelOrGauge,
    gauge_phi,
    kernel_K,
    newtonian_kernel,
    power_log_gauge,
    power_log_kernel,
    v_integral,
)
from .phase import commensurability_check, polarity_classify, texa_case_select
