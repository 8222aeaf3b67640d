from typing import List, Optional
from pydantic import BaseModel, Field

class ScalingQuery(BaseModel):
    """Scaling parameters: threshold exponent gamma, rate slack delta, Lyapunov exponent beta, window eta."""
    gamma: float = Field(gt=0)
    beta: float = Field(default=0.5, gt=0, le=0.5)
    delta: Optional[float] = Field(default=None, gt=0)
    eta: Optional[float] = Field(default=None, gt=0, lt=0.5)

class LambdaReport(BaseModel):
    """Result of a contraction-constant supremum search."""
    operator: str
    beta: Optional[float] = None
    # `lambda` is a keyword, the JSON name is restored by jsonify()
    lambda_: float = Field(alias="lambda")
    argmax_x: float
    grid_points: int
    refine_tol: float
    grid_max: float
    symmetric: bool = True

    model_config = {"populate_by_name": True}

    @property
    def value(self) -> float:
        return self.lambda_

    def __str__(self):
        return f"Operator: {self.operator}, beta: {self.beta}, lambda: {self.lambda_:.6f}, argmax: {self.argmax_x:.6f}"

    def jsonify(self) -> dict:
        return {
            "operator": self.operator,
            "beta": self.beta,
            "lambda": self.lambda_,
            "argmax_x": self.argmax_x,
            "grid_points": self.grid_points,
            "refine_tol": self.refine_tol,
            "grid_max": self.grid_max,
        }

class GapMetrics(BaseModel):
    q: int
    n: int
    eps: float
    threshold: float
    good_fraction: float
    gap: float
    bound: Optional[float] = None
    gap_bound: Optional[float] = None

    def jsonify(self) -> dict:
        return self.model_dump()

class MonteCarloEstimate(BaseModel):
    estimate: float
    stderr: float
    trials: int

    def within(self, expected: float, sigmas: float = 3.0, floor: float = 0.0) -> bool:
        """True when expected lies within `sigmas` standard errors (plus an absolute floor)."""
        return abs(self.estimate - expected) <= sigmas * self.stderr + floor

    def jsonify(self) -> dict:
        return self.model_dump()

class InequalitySlack(BaseModel):
    name: str
    min_slack: float
    witness: List[float]
    passed: bool

class InequalityReport(BaseModel):
    q: int
    beta: float
    points: int
    slack_tol: float
    entries: List[InequalitySlack]

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    def failures(self) -> List[InequalitySlack]:
        return [entry for entry in self.entries if not entry.passed]

    def jsonify(self) -> dict:
        data = self.model_dump()
        data["passed"] = self.passed
        return data

class Conjecture1Report(BaseModel):
    m: int
    q: int
    beta: float
    depth: int
    grid_points: int
    tolerance: float
    max_second_difference: List[float]
    interpolation_error: List[float]
    concave: List[bool]

    @property
    def passed(self) -> bool:
        return all(self.concave)

    def jsonify(self) -> dict:
        data = self.model_dump()
        data["passed"] = self.passed
        return data

class Conjecture2Report(BaseModel):
    """Regression evidence only; never a pass/fail against -1/2."""
    q: int
    beta: float
    m_list: List[int]
    lambdas: List[float]
    slope: float
    intercept: float
    residuals: List[float]

    def jsonify(self) -> dict:
        return self.model_dump()

class RsCandidateReport(BaseModel):
    q: int
    matches_tails: bool
    kernel_profile: List[List[int]]
    tail_profile: List[List[int]]

    def jsonify(self) -> dict:
        return self.model_dump()

class RunConfig(BaseModel):
    command: str
    seed: int
    grid_points: int
    refine_tol: float
    output_format: str
    output_path: Optional[str] = None
    arguments: dict = {}

    def jsonify(self) -> dict:
        return self.model_dump()
