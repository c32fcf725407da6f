"""Run configuration.

Values are resolved in increasing precedence: built-in defaults, then a
``key = value`` config file, then command-line flags.
"""
import dataclasses
from dataclasses import dataclass

from ..search import TrackerConfig, make_tracker
from .imageio import parse_corners


def parse_resolution(text):
    if isinstance(text, (tuple, list)):
        r = tuple(int(v) for v in text)
    else:
        parts = str(text).lower().replace(",", "x").split("x")
        r = tuple(int(p) for p in parts if p.strip())
        if len(r) == 1:
            r = (r[0], r[0])
    if len(r) != 2 or min(r) < 2:
        raise ValueError(f"resolution must be RxC with both >= 2, got {text!r}")
    return r


@dataclass
class RunConfig:
    sm: str = "fclk"
    am: str = "ssd"
    ssm: str = "homography"
    ilm: str = "none"
    resolution: tuple = (50, 50)
    seq: str = None
    ref: str = None
    gt: str = None
    init: str = None
    out: str = None
    seed: int = 0
    max_iterations: int = 30
    epsilon: float = 0.01
    hessian_order: str = "first"
    n_samples: int = 1000
    index: str = "brute-force"
    n_particles: int = 200
    ess_threshold: float = 0.5
    corner_sigma: float = 5.0
    likelihood_alpha: float = 5.0
    smooth_sigma: float = 1.0
    smooth_ksize: int = 5

    def tracker_config(self):
        return TrackerConfig(max_iterations=self.max_iterations, epsilon=self.epsilon,
                             hessian_order=self.hessian_order, n_samples=self.n_samples,
                             index=self.index, n_particles=self.n_particles,
                             ess_threshold=self.ess_threshold,
                             corner_sigma_px=self.corner_sigma, seed=self.seed)

    def make_tracker(self):
        return make_tracker(self.sm, self.am, self.ssm, self.tracker_config(),
                            resolution=self.resolution, ilm=self.ilm,
                            likelihood_alpha=self.likelihood_alpha)

    def init_corners(self):
        return None if self.init is None else parse_corners(self.init)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
RUN_KEYS = frozenset(_FIELDS)


def _coerce(name, value):
    if value is None:
        return None
    default = _FIELDS[name].default
    if name == "resolution":
        return parse_resolution(value)
    if isinstance(default, bool):
        return str(value).lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def read_config_file(path):
    """Parse ``key = value`` lines; blank lines and '#' comments are ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def build_config(file_values=None, overrides=None):
    cfg = RunConfig()
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is not None:
                setattr(cfg, key, _coerce(key, value))
    return cfg
