"""Stochastic Prandtl boundary-layer toolkit: fields, norms, drift operators,
noise, local truncated schemes and the global Gevrey experiment."""

__version__ = "0.1.0"
