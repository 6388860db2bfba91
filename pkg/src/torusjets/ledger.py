"""Exact-exponent parameter ledger for the convex integration scheme.

Stage frequencies grow like lambda_q = a**(b**q), far beyond float
range, so every derived scale is carried as prefactor * a**exponent
with the exponent an exact rational and only logarithms materialized.
The inequality set governing the parameters is kept as a data
catalogue (name, source anchor, evaluation) so each check can be
audited individually; qualitative "much smaller than" conditions are
operationalized as ratio <= epsilon (default 1e-2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

__all__ = [
    "LedgerError",
    "LogQuantity",
    "GrowthFunction",
    "Targets",
    "ParameterLedger",
    "StageParameters",
    "ConstraintVerdict",
    "ConstraintReport",
    "ConstraintSpec",
    "CATALOGUE",
    "derive",
    "check_feasibility",
    "search",
]

TWO_PI = 2.0 * math.pi
LOG_2PI32 = 1.5 * math.log(TWO_PI)  # log (2 pi)^{3/2}
_N_CAP = 1000


class LedgerError(Exception):
    """A scheme-parameter constraint is violated."""


def _to_float(fr):
    # Fractions built from b**q overflow float conversion for deep stages.
    try:
        return float(fr)
    except OverflowError:
        return math.inf if fr > 0 else -math.inf


@dataclass(frozen=True)
class LogQuantity:
    """A positive scale of the form prefactor * a**exponent.

    The exponent is exact; the prefactor is stored as its natural log.
    """

    exponent: Fraction
    log_prefactor: float = 0.0

    @classmethod
    def number(cls, x):
        return cls(Fraction(0), math.log(x))

    @classmethod
    def a_power(cls, exponent):
        return cls(Fraction(exponent))

    def __mul__(self, other):
        return LogQuantity(self.exponent + other.exponent,
                           self.log_prefactor + other.log_prefactor)

    def __truediv__(self, other):
        return LogQuantity(self.exponent - other.exponent,
                           self.log_prefactor - other.log_prefactor)

    def __pow__(self, p):
        p = Fraction(p)
        return LogQuantity(self.exponent * p, self.log_prefactor * float(p))

    def log_value(self, ln_a):
        """Natural log of the represented value at a = exp(ln_a)."""
        return self.log_prefactor + _to_float(self.exponent) * ln_a

    def compare(self, other, ln_a):
        """Sign of self - other; exact when the exponents coincide."""
        if self.exponent == other.exponent:
            d = self.log_prefactor - other.log_prefactor
        else:
            d = self.log_value(ln_a) - other.log_value(ln_a)
        return (d > 0) - (d < 0)


@dataclass(frozen=True)
class GrowthFunction:
    """The closed-form bound t -> exp(log_prefactor + rate * t)."""

    log_prefactor: float
    rate: float

    def log_at(self, t):
        return self.log_prefactor + self.rate * t

    def __call__(self, t):
        return math.exp(self.log_at(t))


@dataclass(frozen=True)
class Targets:
    """Blow-up targets the terminal stage must reach."""

    K: float = 2.0
    T: float = 1.0
    iota: float = 0.5
    trace_g: float = 1.0


@dataclass(frozen=True)
class ParameterLedger:
    """Full parameter set of one iteration scheme.

    The base frequency is a = k**(24/(25-20m)) for k in N, which makes
    lambda_{q+1} r_perp = k**(b**(q+1)) an integer exactly as the
    periodicity of the jets requires.
    """

    m: Fraction
    k: int
    b: int
    beta: Fraction
    L: float
    c_R: float
    sigma: float = 0.5
    delta_holder: Fraction = Fraction(1, 60)
    mode: str = "additive"
    q: int = 0

    def __post_init__(self):
        object.__setattr__(self, "m", Fraction(self.m))
        object.__setattr__(self, "beta", Fraction(self.beta))
        object.__setattr__(self, "delta_holder", Fraction(self.delta_holder))
        if not Fraction(13, 20) < self.m < Fraction(5, 4):
            raise LedgerError(f"dissipation order m={self.m} outside "
                              "(13/20, 5/4)")
        if self.mode not in ("additive", "multiplicative"):
            raise LedgerError(f"unknown mode {self.mode!r}")
        if self.k < 2 or self.b < 2 or self.q < 0:
            raise LedgerError("need k >= 2, b >= 2 and q >= 0")
        if self.beta <= 0 or self.L <= 1 or self.c_R <= 0 or self.sigma <= 0:
            raise LedgerError("beta, c_R, sigma must be positive and L > 1")

    @property
    def alpha(self):
        return (5 - 4 * self.m) / 480

    @property
    def a_exponent(self):
        """a = k**a_exponent."""
        return 24 / (25 - 20 * self.m)

    @property
    def ln_a(self):
        return float(self.a_exponent) * math.log(self.k)

    @property
    def a(self):
        try:
            return math.exp(self.ln_a)
        except OverflowError:
            return math.inf


@dataclass(frozen=True)
class StageParameters:
    """All scales of stage q, in exact log_a form."""

    lambda_q: LogQuantity
    lambda_q1: LogQuantity
    delta_q1: LogQuantity
    delta_q2: LogQuantity
    l: LogQuantity
    r_perp: LogQuantity
    r_par: LogQuantity
    mu: LogQuantity
    alpha: Fraction
    p_star: Fraction
    M0: GrowthFunction


def derive(ledger):
    """Derive all stage-q scales of the ledger.

    Raises LedgerError if the interpolation exponent p* falls outside
    (1, 2); this cannot happen for m in range but is verified.
    """
    m, al, b, q = ledger.m, ledger.alpha, ledger.b, ledger.q
    e_q = Fraction(b ** q)
    e_q1 = Fraction(b ** (q + 1))
    e_q2 = Fraction(b ** (q + 2))
    p_star = (40 * m - 14) / (170 * al - 19 + 44 * m)
    if not 1 < p_star < 2:
        raise LedgerError(f"p* = {p_star} outside (1, 2)")
    if ledger.mode == "additive":
        m0 = GrowthFunction(4.0 * math.log(ledger.L), 4.0 * ledger.L)
    else:
        m0 = GrowthFunction(2.0 * ledger.L, 4.0 * ledger.L)
    return StageParameters(
        lambda_q=LogQuantity(e_q),
        lambda_q1=LogQuantity(e_q1),
        delta_q1=LogQuantity(-2 * ledger.beta * e_q1),
        delta_q2=LogQuantity(-2 * ledger.beta * e_q2),
        l=LogQuantity(-Fraction(3, 2) * al * e_q1 - 2 * e_q),
        r_perp=LogQuantity((1 - 20 * m) / 24 * e_q1),
        r_par=LogQuantity((13 - 20 * m) / 12 * e_q1),
        mu=LogQuantity(((2 * m - 1) + (25 - 20 * m) / 24) * e_q1),
        alpha=al,
        p_star=p_star,
        M0=m0,
    )


@dataclass(frozen=True)
class ConstraintVerdict:
    name: str
    anchor: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class ConstraintReport:
    verdicts: tuple

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    @property
    def failures(self):
        return tuple(v.name for v in self.verdicts if not v.passed)

    def __iter__(self):
        return iter(self.verdicts)

    def __getitem__(self, name):
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True)
class _Context:
    epsilon: float
    targets: Targets
    ln_a: float
    geometry_sup: float


@lru_cache(maxsize=1)
def _geometry_sup():
    """The amplitude bound M of the direction-set decomposition."""
    from .geometry import build_direction_set, build_gamma_solver, constants
    _, sup, _ = constants(build_gamma_solver(build_direction_set()),
                          n_samples=200)
    return sup


# --- individual checks; each returns (passed, log-space margin, detail) ---

def _chk_m_range(led, st, ctx):
    lo, hi = Fraction(13, 20), Fraction(5, 4)
    margin = float(min(led.m - lo, hi - led.m))
    return margin > 0, margin, f"m = {led.m}"


def _chk_alpha_upper(led, st, ctx):
    bound = (5 - 4 * led.m) / Fraction(384)
    margin = float(bound - st.alpha)
    return margin > 0, margin, f"alpha = {st.alpha} < {bound}"


def _chk_b_alpha(led, st, ctx):
    margin = float(st.alpha * led.b - 16)
    return margin > 0, margin, f"alpha b = {float(st.alpha) * led.b:.3g}"


def _chk_b_L2(led, st, ctx):
    margin = led.b - led.L ** 2
    return margin > 0, margin, f"b = {led.b:.6g}, L^2 = {led.L ** 2:.6g}"


def _chk_beta_window(led, st, ctx):
    margin = float(st.alpha - 16 * led.beta * led.b)
    return margin > 0, margin, f"16 beta b = {16 * float(led.beta) * led.b:.3g}"


def _chk_delta_range(led, st, ctx):
    hi = Fraction(1, 30) if led.mode == "additive" else Fraction(1, 12)
    margin = float(min(led.delta_holder, hi - led.delta_holder))
    return margin > 0, margin, f"delta = {led.delta_holder}, bound {hi}"


def _chk_L_floor(led, st, ctx):
    need = max(16.0, 153.0 * TWO_PI ** 1.5 / led.c_R)
    margin = math.log(led.L) - math.log(need)
    return margin > 0, margin, f"L = {led.L:.6g} > {need:.6g}"


def _log_mult_budget(led):
    # log of c_R e^L / (L^{1/4} (2L + 13) e^{L^{1/4}/2})
    return (math.log(led.c_R) + led.L - 0.25 * math.log(led.L)
            - math.log(2 * led.L + 13) - 0.5 * led.L ** 0.25)


def _chk_est38(led, st, ctx):
    margin = _log_mult_budget(led) - math.log(18 * math.sqrt(3)) - LOG_2PI32
    return margin > 0, margin, "c_R e^L budget vs 18 (2pi)^{3/2} sqrt3"


def _log_a_2betab(led):
    return 2 * float(led.beta) * led.b * led.ln_a


def _chk_47_lower(led, st, ctx):
    m1 = _log_a_2betab(led) - math.log(9.0)
    m2 = LOG_2PI32 + 4 * led.ln_a - math.log(2 * led.L + 2)
    return min(m1, m2) > 0, min(m1, m2), \
        f"a^(2 beta b) = e^{_log_a_2betab(led):.3f} > 9"


def _chk_47_upper(led, st, ctx):
    margin = (math.log(led.c_R * led.L) - math.log(17.0) - LOG_2PI32
              - _log_a_2betab(led))
    return margin >= 0, margin, "17 (2pi)^{3/2} a^(2 beta b) <= c_R L"


def _chk_69_lower(led, st, ctx):
    m1 = _log_a_2betab(led) - math.log(9.0)
    m2 = LOG_2PI32 + 4 * led.ln_a - math.log(2 * led.L + 2)
    return min(m1, m2) > 0, min(m1, m2), "a^(2 beta b) > 9 and a^4 bound"


def _chk_69_upper(led, st, ctx):
    lhs = math.log(2 * math.sqrt(3)) + LOG_2PI32 + _log_a_2betab(led)
    margin = _log_mult_budget(led) - lhs
    return margin >= 0, margin, \
        "2 (2pi)^{3/2} sqrt3 a^(2 beta b) <= c_R e^L budget"


def _chk_e2(led, st, ctx):
    margin = float((5 - 4 * led.m) / 48) * led.ln_a - 2.0
    return margin >= 0, margin, "e^2 <= a^((5-4m)/48)"


def _chk_est49(led, st, ctx):
    coeff = led.b * ((5 - 4 * led.m) / 48 - 49 * st.alpha / 24
                     + (4 * led.m - 5) / 24)
    val = math.log(led.b) + _to_float(coeff) * led.ln_a
    margin = math.log(ctx.epsilon) - val
    return margin >= 0, margin, f"b a^(b ...) = e^{val:.3g}"


def _chk_416(led, st, ctx):
    al = st.alpha
    # l lambda_q^4 <= lambda_{q+1}^{-alpha} and l^{-1} <= lambda_{q+1}^{2 alpha}
    # are exact exponent comparisons; 4 L <= l^{-1} is numeric.
    m1 = _to_float(-al * st.lambda_q1.exponent
                   - (st.l.exponent + 4 * st.lambda_q.exponent)) * led.ln_a
    m2 = -st.l.log_value(led.ln_a) - math.log(4 * led.L)
    m3 = _to_float(2 * al * st.lambda_q1.exponent
                   + st.l.exponent) * led.ln_a
    margin = min(m1, m2, m3)
    return margin >= 0, margin, "mollification scale vs frequencies"


def _chk_418(led, st, ctx):
    val = (0.5 * st.M0.log_at(led.L)
           + _to_float((4 * led.m - 5 - 52 * st.alpha) / 24
                       * st.lambda_q1.exponent) * led.ln_a
           - st.delta_q2.log_value(led.ln_a))
    margin = math.log(ctx.epsilon) - val
    return margin >= 0, margin, \
        f"M0(L)^(1/2) lambda^((4m-5-52a)/24) / delta_(q+2) = e^{val:.3g}"


def _chk_448o(led, st, ctx):
    expr = (-st.alpha * led.b / 2 + Fraction(10, 3)
            + 2 * led.beta * led.b ** 2)
    margin = _to_float(Fraction(-8, 3) - expr)
    return margin > 0, margin, f"-ab/2 + 10/3 + 2 b^2 beta = {float(expr):.3g}"


def _chk_periodicity(led, st, ctx):
    expo = st.lambda_q1.exponent + st.r_perp.exponent
    in_k = expo * led.a_exponent
    ok = in_k.denominator == 1 and in_k > 0
    return ok, 1.0 if ok else -1.0, \
        "lambda_(q+1) r_perp = k**(b**(q+1))"


def _chk_b2a(led, st, ctx):
    log_eps = math.log(ctx.epsilon)
    m1 = log_eps - (st.r_perp / st.r_par).log_value(led.ln_a)
    m2 = log_eps - st.r_par.log_value(led.ln_a)
    m3 = log_eps - (st.r_perp ** -1 / st.lambda_q1).log_value(led.ln_a)
    margin = min(m1, m2, m3)
    return margin >= 0, margin, "r_perp << r_par << 1 << lambda r_perp"


def _chk_lemma74(led, st, ctx):
    log_z = (st.l ** -8).log_value(led.ln_a)
    log_k = (st.lambda_q1 * st.r_perp).log_value(led.ln_a)
    c = math.log(2 * math.pi * math.sqrt(3))
    m1 = math.log(1.0 / 3.0) - (c + log_z - log_k)
    step = c + log_z - log_k
    n = None
    if step < 0:
        n = max(1, math.ceil(4 * log_z / -step))
    ok = m1 >= 0 and n is not None and n <= _N_CAP
    return ok, m1, f"zeta = l^-8, kappa = lambda r_perp, N = {n}"


def _chk_lemma75(led, st, ctx):
    ze = (st.l ** -5).exponent
    ke = (st.lambda_q1 * st.r_perp).exponent
    if not 0 <= ze < ke:
        return False, _to_float(ke - ze) * led.ln_a, "need 1 <= zeta < kappa"
    n = max(3, math.ceil(_to_float(2 * ke / (ke - ze))))
    margin = _to_float((n - 2) * ke - n * ze) * led.ln_a
    return n <= _N_CAP and margin >= 0, margin, \
        f"zeta = l^-5, kappa = lambda r_perp, N = {n}"


def _chk_cr_2pi6(led, st, ctx):
    margin = math.log(ctx.epsilon) - math.log(led.c_R) - 6 * math.log(TWO_PI)
    return margin >= 0, margin, "c_R << (2pi)^-6"


def _chk_cr_quarter(led, st, ctx):
    margin = (math.log(ctx.epsilon) - 0.25 * math.log(led.c_R)
              - math.log(ctx.geometry_sup))
    return margin >= 0, margin, "c_R^(1/4) << 1/M"


def _chk_cr_m4(led, st, ctx):
    margin = (math.log(ctx.epsilon) - math.log(led.c_R)
              - 4 * math.log(ctx.geometry_sup))
    return margin >= 0, margin, "c_R << M^-4"


def _chk_415(led, st, ctx):
    # Conservative form: the initial-datum term is dropped, which only
    # strengthens the growth requirement.
    t = ctx.targets
    m1 = (led.L * t.T + math.log(1 / math.sqrt(2) - 0.5)
          - math.log(1.5 + 1.0 / led.L))
    m2 = led.L * t.T - math.log(t.K)
    lhs = led.L ** 0.25 * TWO_PI ** 1.5 + t.K * math.sqrt(t.T * t.trace_g)
    m3 = math.log(led.L) + led.L * t.T - math.log(lhs)
    margin = min(m1, m2, m3)
    return margin > 0, margin, "terminal growth targets (K, T)"


def _chk_615(led, st, ctx):
    t = ctx.targets
    m1 = (math.log(1 / math.sqrt(2) - 0.5) + 2 * led.L * t.T
          - math.log(1.5) - 2 * math.sqrt(led.L))
    m2 = led.L - (math.log(t.K) + t.T / 2) ** 2
    margin = min(m1, m2)
    return margin > 0, margin, "terminal growth targets (K, T)"


def _chk_a26(led, st, ctx):
    margin = (26 * led.ln_a - 0.5 * math.log(3.0)
              - 0.25 * math.log(led.L) - 0.5 * led.L ** 0.25)
    return margin >= 0, margin, "a^26 >= sqrt3 L^(1/4) e^(L^(1/4)/2)"


def _chk_pstar(led, st, ctx):
    margin = float(min(st.p_star - 1, 2 - st.p_star))
    return margin > 0, margin, f"p* = {st.p_star}"


@dataclass(frozen=True)
class ConstraintSpec:
    """One catalogue entry: a named, anchored inequality.

    a_trend marks monotone dependence on the base frequency: "+" means
    the constraint holds for all larger a once it holds, "-" the
    reverse, None that a plays no role.
    """

    name: str
    anchor: str
    modes: tuple
    a_trend: str | None
    check: object = field(compare=False)


_BOTH = ("additive", "multiplicative")
_ADD = ("additive",)
_MUL = ("multiplicative",)

CATALOGUE = (
    ConstraintSpec("m-range", "admissible dissipation order",
                   _BOTH, None, _chk_m_range),
    ConstraintSpec("p-star-range", "interpolation exponent in (1, 2)",
                   _BOTH, None, _chk_pstar),
    ConstraintSpec("alpha-upper", "alpha < (5-4m)/384",
                   _BOTH, None, _chk_alpha_upper),
    ConstraintSpec("alpha-b", "alpha b > 16",
                   _BOTH, None, _chk_b_alpha),
    ConstraintSpec("b-over-L-squared", "b > L^2",
                   _ADD, None, _chk_b_L2),
    ConstraintSpec("beta-window", "alpha > 16 beta b",
                   _BOTH, None, _chk_beta_window),
    ConstraintSpec("holder-margin", "delta in (0,1/30) resp. (0,1/12)",
                   _BOTH, None, _chk_delta_range),
    ConstraintSpec("L-floor", "L > 16 and L > 153 (2pi)^{3/2} / c_R",
                   _ADD, None, _chk_L_floor),
    ConstraintSpec("mult-L-necessary", "necessary growth of c_R e^L budget",
                   _MUL, None, _chk_est38),
    ConstraintSpec("base-window-lower", "9 < a^(2 beta b), a^4 vs L",
                   _ADD, "+", _chk_47_lower),
    ConstraintSpec("base-window-upper", "17 (2pi)^{3/2} a^(2 beta b) <= c_R L",
                   _ADD, "-", _chk_47_upper),
    ConstraintSpec("mult-window-lower", "9 < a^(2 beta b), a^4 vs L",
                   _MUL, "+", _chk_69_lower),
    ConstraintSpec("mult-window-upper",
                   "2 sqrt3 (2pi)^{3/2} a^(2 beta b) <= c_R e^L budget",
                   _MUL, "-", _chk_69_upper),
    ConstraintSpec("a-exp-floor", "e^2 <= a^((5-4m)/48)",
                   _ADD, "+", _chk_e2),
    ConstraintSpec("stage-gain", "b a^(b [...]) << 1",
                   _ADD, "+", _chk_est49),
    ConstraintSpec("mollifier-scale", "l lambda_q^4 <= lambda_(q+1)^-alpha etc",
                   _BOTH, "+", _chk_416),
    ConstraintSpec("growth-absorption",
                   "M0(L)^(1/2) lambda^((4m-5-52a)/24) << delta_(q+2)",
                   _BOTH, "+", _chk_418),
    ConstraintSpec("commutator-exponent", "-ab/2 + 10/3 + 2 b^2 beta < -8/3",
                   _BOTH, None, _chk_448o),
    ConstraintSpec("jet-periodicity", "lambda_(q+1) r_perp integer",
                   _BOTH, None, _chk_periodicity),
    ConstraintSpec("scale-separation", "r_perp << r_par << 1, 1/r_perp << lambda",
                   _BOTH, "+", _chk_b2a),
    ConstraintSpec("slow-fast-product", "2 pi sqrt3 zeta/kappa <= 1/3, N exists",
                   _BOTH, "+", _chk_lemma74),
    ConstraintSpec("slow-fast-mean", "zeta^N <= kappa^(N-2) for some N",
                   _BOTH, "+", _chk_lemma75),
    ConstraintSpec("stress-floor-2pi", "c_R << (2pi)^-6",
                   _ADD, None, _chk_cr_2pi6),
    ConstraintSpec("stress-floor-amplitude", "c_R^(1/4) << 1/M",
                   _ADD, None, _chk_cr_quarter),
    ConstraintSpec("mult-stress-floor", "c_R << M^-4",
                   _MUL, None, _chk_cr_m4),
    ConstraintSpec("terminal-growth", "growth beats K e^(T/2)",
                   _ADD, None, _chk_415),
    ConstraintSpec("mult-terminal-growth", "growth beats K e^(T/2)",
                   _MUL, None, _chk_615),
    ConstraintSpec("mult-a-26", "a^26 >= sqrt3 L^(1/4) e^(L^(1/4)/2)",
                   _MUL, "+", _chk_a26),
)


def _context(ledger, targets, epsilon):
    return _Context(epsilon=epsilon, targets=targets or Targets(),
                    ln_a=ledger.ln_a, geometry_sup=_geometry_sup())


def check_feasibility(ledger, targets=None, epsilon=1e-2):
    """Evaluate every applicable constraint at the ledger's stage q."""
    st = derive(ledger)
    ctx = _context(ledger, targets, epsilon)
    verdicts = []
    for spec in CATALOGUE:
        if ledger.mode not in spec.modes:
            continue
        ok, margin, detail = spec.check(ledger, st, ctx)
        verdicts.append(ConstraintVerdict(spec.name, spec.anchor,
                                          bool(ok), margin, detail))
    return ConstraintReport(tuple(verdicts))


def _monotone_pass(ledger, q_max, targets, epsilon):
    """First failing '+'-monotone constraint over stages 0..q_max, or None."""
    ctx = _context(ledger, targets, epsilon)
    for q in range(q_max + 1):
        led = replace(ledger, q=q)
        st = derive(led)
        for spec in CATALOGUE:
            if spec.a_trend != "+" or led.mode not in spec.modes:
                continue
            ok, _, _ = spec.check(led, st, ctx)
            if not ok:
                return spec.name
    return None


def _pick_L_additive(c_R, targets, epsilon):
    L = 2.0 * max(16.0, 153.0 * TWO_PI ** 1.5 / c_R)
    probe = ParameterLedger(m=1, k=2, b=2, beta=Fraction(1, 10 ** 6),
                            L=L, c_R=c_R)
    ctx = _Context(epsilon, targets, probe.ln_a, 1.0)
    for _ in range(200):
        if _chk_415(replace(probe, L=L), None, ctx)[0]:
            return L
        L *= 2.0
    raise LedgerError("no L satisfies the terminal growth targets")


def _pick_L_multiplicative(c_R, targets, epsilon):
    L = 16.0
    probe = ParameterLedger(m=1, k=2, b=2, beta=Fraction(1, 10 ** 6),
                            L=L, c_R=c_R, mode="multiplicative")
    ctx = _Context(epsilon, targets, probe.ln_a, 1.0)
    for _ in range(200):
        led = replace(probe, L=L)
        # require a factor-2 budget margin so the a-window is non-empty
        budget = _log_mult_budget(led) - math.log(2.0)
        ok = (budget > math.log(18 * math.sqrt(3)) + LOG_2PI32
              and _chk_615(led, None, ctx)[0])
        if ok:
            return L
        L *= 2.0
    raise LedgerError("no L satisfies the multiplicative budget")


def search(m, mode="additive", q_max=2, targets=None, epsilon=1e-2,
           max_iter=200):
    """Find a feasible ledger for the given dissipation order.

    Follows the quantifier order of the scheme: fix c_R from its
    smallness conditions, L from its lower bounds, b above its floor,
    beta below alpha/(16 b), then grow a = (2**j)**(24/(25-20m)) until
    every a-monotone constraint passes for all stages 0..q_max.
    """
    m = Fraction(m)
    targets = targets or Targets()
    al = (5 - 4 * m) / 480
    if not Fraction(13, 20) < m < Fraction(5, 4):
        raise LedgerError(f"dissipation order m={m} outside (13/20, 5/4)")
    sup = _geometry_sup()
    c_R = min(epsilon ** 4 / sup ** 4, epsilon * TWO_PI ** -6,
              epsilon / sup ** 4)
    if mode == "additive":
        L = _pick_L_additive(c_R, targets, epsilon)
        b = 2 * max(math.ceil(L * L), math.ceil(16 / al))
    else:
        L = _pick_L_multiplicative(c_R, targets, epsilon)
        b = math.ceil(16 / al) + 1
    beta = al / (17 * b)

    def make(j):
        return ParameterLedger(m=m, k=2 ** j, b=b, beta=beta, L=L,
                               c_R=c_R, mode=mode)

    # exponential growth then bisection for the smallest passing k = 2**j
    j, it, binding = 1, 0, None
    while True:
        binding = _monotone_pass(make(j), q_max, targets, epsilon)
        if binding is None:
            break
        j *= 2
        it += 1
        if it > max_iter:
            raise LedgerError(f"search cap reached; binding constraint: "
                              f"{binding}")
    lo, hi = j // 2, j
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _monotone_pass(make(mid), q_max, targets, epsilon) is None:
            hi = mid
        else:
            lo = mid
    ledger = make(hi)
    for q in range(q_max + 1):
        report = check_feasibility(replace(ledger, q=q), targets, epsilon)
        if not report.passed:
            raise LedgerError(f"infeasible at stage {q}: "
                              f"{', '.join(report.failures)}")
    return ledger
