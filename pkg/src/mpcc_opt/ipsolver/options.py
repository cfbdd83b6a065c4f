from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 500
    mu_init: float = 0.1
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    kappa_eps: float = 10.0  # barrier is reduced once E(mu) <= kappa_eps * mu
    tau_min: float = 0.99
    delta_w_init: float = 1e-4
    delta_w_growth: float = 10.0
    delta_w_max: float = 1e40
    delta_c: float = 1e-8
    max_corrections: int = 40
    penalty_growth: float = 10.0
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-16
    damping_cuts: int = 6  # halvings after which the next step is damped through delta_w
    max_soc: int = 4  # second-order corrections tried when the first trial step is rejected
    kappa_sigma: float = 1e10
    slack_init: float = 1e-2
    linear_solver: str = "auto"  # "auto" (block when staged), "dense"
    refine_tol: float = 1e-10
    mode: object = None  # relaxation passthrough; the NLP's own mode wins when set

    def __post_init__(self):
        if not 0 < self.kappa_mu < 1:
            raise ValueError("kappa_mu must lie in (0, 1)")
        if not 1 < self.theta_mu < 2:
            raise ValueError("theta_mu must lie in (1, 2)")
        if not 0 < self.tau_min < 1:
            raise ValueError("tau_min must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.linear_solver not in ("auto", "dense"):
            raise ValueError("linear_solver must be 'auto' or 'dense'")

    def with_overrides(self, **kw) -> "SolverOptions":
        names = {f.name for f in fields(self)}
        unknown = set(kw) - names
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return replace(self, **kw)
