from .apls import AplsConfig, AplsDomainError, apls, apls_directional, inject_midpoints, snap_control_nodes
from .topo import TopoConfig, TopoResult, topo

__all__ = [
    "AplsConfig",
    "AplsDomainError",
    "TopoConfig",
    "TopoResult",
    "apls",
    "apls_directional",
    "inject_midpoints",
    "snap_control_nodes",
    "topo",
]
