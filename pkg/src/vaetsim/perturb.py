"""Fourth-order time-dependent perturbation theory for the symmetric trimer.

Everything here is specific to the symmetric electronic system (equal hops,
equal site-energy gaps), whose eigensystem has closed forms.  Transfer
pathways are encoded as interaction amplitudes

    W^{q1 x1, ..., qn xn}_{j k1, ..., k_{n-1} kn}
      = prod_i kappa_{x_i} (X_i)_{k_{i-1} k_i}
        * Int_0^t dt_1 ... Int_0^{t_{n-1}} dt_n  prod_i exp(i w_i t_i),

with w_i the transition frequency of leg i shifted by +-nu of the mode that
emitted (+) or absorbed (-) a phonon.  The nested oscillatory integrals are
reduced in closed form; thermal factors come from Wick averages of the
bosonic operator strings.

Conventions: the bare W above carries no (-i)^n factor.  The public
:func:`amplitude` multiplies it in, so a first-order resonant amplitude is
``-i * kappa * X * t``.  The probability assembly uses bare Ws with the
signs written out explicitly.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import TransferTrace
from .fock import mean_occupancy
from .model import VibrationalModeSpec

# Below this value of |frequency| * t the oscillatory integrals are evaluated
# by a truncated power series instead of the closed form, which removes the
# 1/frequency singularities without cancellation error.  Both branches are
# exposed for testing (_integral_exact / _integral_series).
SERIES_RADIUS = 0.25
_SERIES_TERMS = 26


@dataclass(frozen=True)
class SymmetricEigenSystem:
    """Closed-form eigensystem of the symmetric three-site Hamiltonian.

    ``lambdas = (-Omega, 0, +Omega)`` with ``Omega = sqrt(2 J^2 + Delta^2)``;
    ``coef_alpha/beta/gamma`` expand the donor state as
    ``|1> = alpha |e1> - beta |e2> + gamma |e3>`` (and the acceptor as
    ``|3> = gamma |e1> + beta |e2> + alpha |e3>``).  ``eigvecs`` holds
    |e1>, |e2>, |e3> as columns in the site basis.
    """

    delta: float
    j: float
    omega_cap: float
    lambdas: tuple[float, float, float]
    coef_alpha: float
    coef_beta: float
    coef_gamma: float
    eigvecs: np.ndarray

    def transition_frequency(self, j: int, k: int) -> float:
        """Delta_jk = lambda_j - lambda_k (1-based eigenstate indices)."""
        return self.lambdas[j - 1] - self.lambdas[k - 1]


def symmetric_eigensystem(delta: float, j: float) -> SymmetricEigenSystem:
    """Eigensystem for site-energy gap ``delta`` > 0 and hop ``j`` != 0.

    The combination J^2 + Delta*(Delta - Omega) is rewritten as
    2 J^4 / (Omega + Delta)^2 to avoid cancellation at small J/Delta.
    """
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be > 0, got {delta}")
    if not (math.isfinite(j) and j != 0):
        raise ValueError(f"j must be nonzero, got {j}")
    omega = math.sqrt(2 * j * j + delta * delta)
    sqrt2 = math.sqrt(2.0)
    q_plus = j * j + delta * (delta + omega)
    root_q_plus = math.sqrt(q_plus)
    root_q_minus = sqrt2 * j * j / (omega + delta)  # sqrt(J^2 + Delta(Delta-Omega))

    alpha = root_q_plus / (sqrt2 * omega)
    beta = j / omega
    gamma = root_q_minus / (sqrt2 * omega)

    e1 = np.array(
        [
            alpha,
            -j * (delta + omega) / (sqrt2 * omega * root_q_plus),
            j * j / (sqrt2 * omega * root_q_plus),
        ]
    )
    e2 = np.array([-j / omega, -delta / omega, j / omega])
    # delta - omega = -2 J^2 / (delta + omega), exactly
    delta_minus_omega = -2 * j * j / (delta + omega)
    e3 = np.array(
        [
            gamma,
            -j * delta_minus_omega / (sqrt2 * omega * root_q_minus),
            j * j / (sqrt2 * omega * root_q_minus),
        ]
    )
    return SymmetricEigenSystem(
        delta=delta,
        j=j,
        omega_cap=omega,
        lambdas=(-omega, 0.0, omega),
        coef_alpha=alpha,
        coef_beta=beta,
        coef_gamma=gamma,
        eigvecs=np.column_stack([e1, e2, e3]),
    )


@dataclass(frozen=True)
class CouplingCoefficients:
    """Eigenbasis matrix elements of the two site-coupling operators.

    ``a_jk`` represents |2><2| - |1><1| - |3><3| (bridge-mode operator),
    ``b_jk`` represents |3><3| - |1><1| - |2><2| (terminal-mode operator).
    Both are symmetric; A_13 = -2 B_13 always.
    """

    a_jk: np.ndarray
    b_jk: np.ndarray


def coupling_coefficients(sys: SymmetricEigenSystem) -> CouplingCoefficients:
    d, j, omega = sys.delta, sys.j, sys.omega_cap
    om2 = omega * omega
    q_plus = j * j + d * (d + omega)
    q_minus = 2 * j ** 4 / (omega + d) ** 2  # J^2 + Delta(Delta - Omega)
    d_minus = -2 * j * j / (d + omega)  # Delta - Omega
    root_2q_plus = math.sqrt(2 * q_plus)
    root_2q_minus = 2 * j * j / (omega + d)  # sqrt(2 (J^2 + Delta(Delta-Omega)))

    a = np.empty((3, 3))
    a[0, 0] = -d * d * (d + omega) ** 2 / (2 * om2 * q_plus)
    a[1, 1] = (d * d - 2 * j * j) / om2
    a[2, 2] = -d * d * d_minus ** 2 / (2 * om2 * q_minus)
    a[0, 1] = a[1, 0] = 2 * d * j * (d + omega) / (om2 * root_2q_plus)
    a[0, 2] = a[2, 0] = -2 * j * j / om2
    a[1, 2] = a[2, 1] = 2 * d * j * d_minus / (om2 * root_2q_minus)

    b = np.empty((3, 3))
    b[0, 0] = -(d * omega + j * j) * (d + omega) ** 2 / (2 * om2 * q_plus)
    b[1, 1] = -d * d / om2
    b[2, 2] = (d * omega - j * j) * d_minus ** 2 / (2 * om2 * q_minus)
    b[0, 1] = b[1, 0] = 2 * j ** 3 / (om2 * root_2q_plus)
    b[0, 2] = b[2, 0] = j * j / om2
    b[1, 2] = b[2, 1] = 2 * j ** 3 / (om2 * root_2q_minus)

    return CouplingCoefficients(a_jk=a, b_jk=b)


# ---------------------------------------------------------------------------
# Nested time-ordered oscillatory integrals
# ---------------------------------------------------------------------------


def _integral_exact(k: int, nu: float, t: float) -> complex:
    """Closed form of Int_0^t s^k exp(i nu s) ds for nu != 0."""
    inv = 1.0 / (1j * nu)
    phase = cmath.exp(1j * nu * t)
    total = 0j
    fall = 1.0  # k!/(k-j)!
    for jj in range(k + 1):
        total += ((-1) ** jj) * fall * inv ** (jj + 1) * t ** (k - jj)
        fall *= k - jj
    total *= phase
    total -= ((-1) ** k) * math.factorial(k) * inv ** (k + 1)
    return total


def _integral_series(k: int, nu: float, t: float, terms: int = _SERIES_TERMS) -> complex:
    """Power-series form of Int_0^t s^k exp(i nu s) ds, exact in the nu -> 0 limit."""
    total = 0j
    inu_p = 1.0 + 0j
    fac = 1.0
    for p in range(terms):
        total += inu_p * t ** (k + p + 1) / (fac * (k + p + 1))
        inu_p *= 1j * nu
        fac *= p + 1
    return total


def _integrate_terms(terms: dict, omega: float, t: float) -> dict:
    """One integration level applied to a sum of c * s^k * exp(i f s) terms."""
    out: dict[tuple[int, float], complex] = {}

    def add(key, val):
        out[key] = out.get(key, 0j) + val

    for (k, f), c in terms.items():
        nu = omega + f
        if abs(nu) * t < SERIES_RADIUS:
            inu_p = 1.0 + 0j
            fac = 1.0
            for p in range(_SERIES_TERMS):
                add((k + p + 1, 0.0), c * inu_p / (fac * (k + p + 1)))
                inu_p *= 1j * nu
                fac *= p + 1
        else:
            inv = 1.0 / (1j * nu)
            fall = 1.0
            for jj in range(k + 1):
                add((k - jj, nu), c * ((-1) ** jj) * fall * inv ** (jj + 1))
                fall *= k - jj
            add((0, 0.0), -c * ((-1) ** k) * math.factorial(k) * inv ** (k + 1))
    return out


def _nested_integral(omegas: tuple[float, ...], t: float) -> complex:
    """Int_0^t dt_1 e^{i w_1 t_1} Int_0^{t_1} dt_2 e^{i w_2 t_2} ... (depth n)."""
    if t == 0.0:
        return 0j
    terms: dict[tuple[int, float], complex] = {(0, 0.0): 1.0 + 0j}
    for omega in reversed(omegas):
        terms = _integrate_terms(terms, omega, t)
    return sum(c * t ** k * cmath.exp(1j * f * t) for (k, f), c in terms.items())


@dataclass(frozen=True)
class Leg:
    """One interaction event: phonon sign (+ emission / - absorption) on a
    mode, attached to an eigenstate transition (j, k), 1-based."""

    mode: str  # 'a' | 'b'
    sign: int  # +1 | -1
    transition: tuple[int, int]


def _parse_legs(spec: str, path: tuple[int, ...]) -> tuple[Leg, ...]:
    """'-a+b' with path (3,1,3) -> legs ((3,1),-a), ((1,3),+b)."""
    if len(spec) % 2 != 0:
        raise ValueError(f"bad leg spec {spec!r}")
    n = len(spec) // 2
    if len(path) != n + 1:
        raise ValueError(f"path {path} does not match {n} legs")
    legs = []
    for i in range(n):
        sign_ch, mode = spec[2 * i], spec[2 * i + 1]
        sign = {"+": 1, "-": -1}[sign_ch]
        if mode not in ("a", "b"):
            raise ValueError(f"bad mode {mode!r} in {spec!r}")
        legs.append(Leg(mode=mode, sign=sign, transition=(path[i], path[i + 1])))
    return tuple(legs)


def _w_bare(
    legs: tuple[Leg, ...],
    t: float,
    sys: SymmetricEigenSystem,
    coeffs: CouplingCoefficients,
    kappas: tuple[float, float],
    nus: tuple[float, float],
) -> complex:
    prefactor = 1.0
    omegas = []
    for leg in legs:
        jj, kk = leg.transition
        if leg.mode == "a":
            prefactor *= kappas[0] * coeffs.a_jk[jj - 1, kk - 1]
            shift = leg.sign * nus[0]
        else:
            prefactor *= kappas[1] * coeffs.b_jk[jj - 1, kk - 1]
            shift = leg.sign * nus[1]
        omegas.append(sys.transition_frequency(jj, kk) + shift)
    return prefactor * _nested_integral(tuple(omegas), t)


def amplitude(
    legs: tuple[Leg, ...] | list[Leg],
    t: float,
    sys: SymmetricEigenSystem,
    coeffs: CouplingCoefficients,
    kappas: tuple[float, float],
    nus: tuple[float, float],
) -> complex:
    """Time-ordered interaction amplitude including the (-i)^order factor.

    At an exact first-order resonance this is -i * kappa * X_jk * t.
    """
    legs = tuple(legs)
    if not 1 <= len(legs) <= 4:
        raise ValueError(f"order must be 1..4, got {len(legs)}")
    return (-1j) ** len(legs) * _w_bare(legs, t, sys, coeffs, kappas, nus)


# ---------------------------------------------------------------------------
# Wick factors
# ---------------------------------------------------------------------------


def wick_pair(n: float) -> dict[str, float]:
    """Thermal averages of two-operator strings, n = Bose occupancy."""
    return {"+-": n + 1.0, "-+": n}  # <a a^dag> , <a^dag a>


def wick_quartic(n: float) -> dict[str, float]:
    """Thermal averages of the four-operator strings used at fourth order.

    Keys name the operator string left-to-right with '-' for the
    annihilator and '+' for the creator, e.g. ``'++--'`` is
    <a^dag a^dag a a> = 2 n^2.
    """
    return {
        "--++": 2.0 * (n + 1.0) ** 2,  # <a a a+ a+>
        "++--": 2.0 * n * n,  # <a+ a+ a a>
        "+-+-": n * (2.0 * n + 1.0),  # <a+ a a+ a>
        "-+-+": (n + 1.0) * (2.0 * n + 1.0),  # <a a+ a a+>
        "+--+": 2.0 * n * (n + 1.0),  # <a+ a a a+>
        "-++-": 2.0 * n * (n + 1.0),  # <a a+ a+ a>
    }


# ---------------------------------------------------------------------------
# Order-by-order transfer probability
# ---------------------------------------------------------------------------


@dataclass
class PerturbativeResult:
    """Assembled P3(t) with its per-pathway breakdown."""

    trace: TransferTrace
    terms: dict[str, np.ndarray]
    regime: str
    notes: list[str]


def _weak_j_terms(wf, n_a: float, n_b: float, include_nonconserving: bool):
    """Named weak-hop terms as functions of the cached W evaluator ``wf``."""

    def terms_at():
        w31a = wf("-a", (3, 1))
        w31b = wf("-b", (3, 1))
        waa = wf("-a-a", (3, 2, 1))
        wbb = wf("-b-b", (3, 2, 1))
        wba = wf("-b-a", (3, 2, 1))
        wab = wf("-a-b", (3, 2, 1))

        out = {
            "p1_a": n_a * abs(w31a) ** 2,
            "p1_b": n_b * abs(w31b) ** 2,
            "p21_aa": 2 * n_a * n_a * abs(waa) ** 2,
            "p21_bb": 2 * n_b * n_b * abs(wbb) ** 2,
            "p21_coop_ba": n_a * n_b * abs(wba) ** 2,
            "p21_coop_ab": n_a * n_b * abs(wab) ** 2,
            "p21_interf": n_a * n_b * 2 * (wab.conjugate() * wba).real,
            "p22_aa": -n_a * (2 * n_a + 1) * 2 * (wf("+a", (1, 3)) * wf("-a+a-a", (3, 1, 3, 1))).real,
            "p22_bb": -n_b * (2 * n_b + 1) * 2 * (wf("+b", (1, 3)) * wf("-b+b-b", (3, 1, 3, 1))).real,
            "p22_ab": -n_a * (n_b + 1) * 2 * (wf("+a", (1, 3)) * wf("-a+a-b", (3, 1, 3, 1))).real,
            "p22_ba": -(n_a + 1) * n_b * 2 * (wf("+b", (1, 3)) * wf("-b+b-a", (3, 1, 3, 1))).real,
            "p22_mixed": -n_a
            * n_b
            * 2
            * (
                wf("+a", (1, 3)) * wf("-a+b-b", (3, 1, 3, 1))
                + wf("+b", (1, 3)) * wf("-b+a-a", (3, 1, 3, 1))
            ).real,
        }
        if include_nonconserving:
            out["p1_a_nonconserving"] = (n_a + 1) * abs(wf("+a", (3, 1))) ** 2
            out["p1_b_nonconserving"] = (n_b + 1) * abs(wf("+b", (3, 1))) ** 2
        return out

    return terms_at


def _first_order_square(wf, mode: str, sign: int, al: float, be: float, ga: float, omega: float, t: float) -> float:
    """|A^(1)|^2-style combination for one mode and phonon sign."""
    m = mode
    if sign > 0:
        w12, w13, w23 = wf(f"+{m}", (1, 2)), wf(f"+{m}", (1, 3)), wf(f"+{m}", (2, 3))
        phase = cmath.exp(-1j * omega * t)  # Delta_21 = Omega
        return (
            be * be * ga * ga * (abs(w12) ** 2 + abs(w23) ** 2)
            + ga ** 4 * abs(w13) ** 2
            - be * be * ga * ga * 2 * (phase * w12.conjugate() * w23).real
        )
    w21, w31, w32 = wf(f"-{m}", (2, 1)), wf(f"-{m}", (3, 1)), wf(f"-{m}", (3, 2))
    phase = cmath.exp(-1j * omega * t)  # Delta_32 = Omega
    return (
        al * al * be * be * (abs(w21) ** 2 + abs(w32) ** 2)
        + al ** 4 * abs(w31) ** 2
        - al * al * be * be * 2 * (phase * w21.conjugate() * w32).real
    )


def _zeroth_cross(wf, mode: str, order: str, al: float, be: float, ga: float, omega: float, t: float) -> float:
    """[A^(2) + c.c.] combinations entering the cross term with the zeroth order."""
    m = mode
    if order == "-+":
        w2112 = wf(f"-{m}+{m}", (2, 1, 2))
        w3113 = wf(f"-{m}+{m}", (3, 1, 3))
        w3223 = wf(f"-{m}+{m}", (3, 2, 3))
        lam2, lam3 = 0.0, omega
        return (
            -be * be * 2 * (cmath.exp(-1j * lam2 * t) * w2112).real
            + al * ga * 2 * (cmath.exp(-1j * lam3 * t) * w3113).real
            + al * ga * 2 * (cmath.exp(-1j * lam3 * t) * w3223).real
        )
    w1221 = wf(f"+{m}-{m}", (1, 2, 1))
    w1331 = wf(f"+{m}-{m}", (1, 3, 1))
    w2332 = wf(f"+{m}-{m}", (2, 3, 2))
    lam1, lam2 = -omega, 0.0
    return (
        al * ga * 2 * (cmath.exp(-1j * lam1 * t) * w1221).real
        + al * ga * 2 * (cmath.exp(-1j * lam1 * t) * w1331).real
        - be * be * 2 * (cmath.exp(-1j * lam2 * t) * w2332).real
    )


def _second_order_squares(wf, mode: str, al: float, be: float, ga: float, omega: float, t: float):
    """The four |A^(2)|^2 blocks and the order-exchange cross term for one mode."""
    m = mode
    w1223_pp = wf(f"+{m}+{m}", (1, 2, 3))
    w3221_mm = wf(f"-{m}-{m}", (3, 2, 1))
    w1221_pm = wf(f"+{m}-{m}", (1, 2, 1))
    w1331_pm = wf(f"+{m}-{m}", (1, 3, 1))
    w2332_pm = wf(f"+{m}-{m}", (2, 3, 2))
    w2112_mp = wf(f"-{m}+{m}", (2, 1, 2))
    w3113_mp = wf(f"-{m}+{m}", (3, 1, 3))
    w3223_mp = wf(f"-{m}+{m}", (3, 2, 3))

    e_m21 = cmath.exp(-1j * omega * t)  # exp(-i Delta_21 t) = exp(-i Delta_32 t)
    e_m31 = cmath.exp(-2j * omega * t)

    sq_pp = ga ** 4 * abs(w1223_pp) ** 2
    sq_mm = al ** 4 * abs(w3221_mm) ** 2
    sq_pm = (
        al * al * ga * ga * (abs(w1221_pm) ** 2 + abs(w1331_pm) ** 2)
        + be ** 4 * abs(w2332_pm) ** 2
        - al * be * be * ga * 2 * (e_m21 * w1221_pm.conjugate() * w2332_pm).real
    )
    sq_mp = (
        be ** 4 * abs(w2112_mp) ** 2
        + al * al * ga * ga * (abs(w3113_mp) ** 2 + abs(w3223_mp) ** 2)
        - al * be * be * ga * 2 * (e_m21 * w2112_mp.conjugate() * w3223_mp).real
    )
    # (A_{+-})^* A_{-+}; the first weight is alpha*beta^2*gamma from the
    # component products (the source text drops the beta^2 there, at odds
    # with its own neighbouring terms).
    cross = (
        -al * be * be * ga * e_m21 * w1221_pm.conjugate() * w2112_mp
        + be ** 4 * w2332_pm.conjugate() * w2112_mp
        + al * al * ga * ga * e_m31 * w1221_pm.conjugate() * w3223_mp
        - al * be * be * ga * e_m21 * w2332_pm.conjugate() * w3223_mp
        + al * al * ga * ga * e_m31 * w1331_pm.conjugate() * w3113_mp
    )
    return sq_pp, sq_mm, sq_pm, sq_mp, cross


def _mixed_mode_squares(wf, al: float, be: float, ga: float, omega: float, t: float):
    """|C^(2)|^2 blocks mixing one phonon from each mode."""
    e_m21 = cmath.exp(-1j * omega * t)
    e_m31 = cmath.exp(-2j * omega * t)

    # both emitted / both absorbed, the two orderings interfere
    wpp_ab = wf("+a+b", (1, 2, 3))
    wpp_ba = wf("+b+a", (1, 2, 3))
    sq_pp = ga ** 4 * abs(wpp_ab + wpp_ba) ** 2
    wmm_ab = wf("-a-b", (3, 2, 1))
    wmm_ba = wf("-b-a", (3, 2, 1))
    sq_mm = al ** 4 * abs(wmm_ab + wmm_ba) ** 2

    def exchange(first: str, second: str) -> float:
        # first = emitted-then-absorbed spec like '+a-b'; second = '-b+a'
        wx_1221 = wf(first, (1, 2, 1))
        wx_1331 = wf(first, (1, 3, 1))
        wx_2332 = wf(first, (2, 3, 2))
        wy_2112 = wf(second, (2, 1, 2))
        wy_3113 = wf(second, (3, 1, 3))
        wy_3223 = wf(second, (3, 2, 3))
        val = (
            al * al * ga * ga * (abs(wx_1221) ** 2 + abs(wx_1331) ** 2)
            + be ** 4 * abs(wx_2332) ** 2
            + be ** 4 * abs(wy_2112) ** 2
            + al * al * ga * ga * (abs(wy_3113) ** 2 + abs(wy_3223) ** 2)
            - al * be * be * ga * 2 * (e_m21 * wx_1221.conjugate() * wx_2332).real
            - al * be * be * ga * 2 * (e_m21 * wy_2112.conjugate() * wy_3223).real
            - al * be * be * ga * 2 * (e_m21 * wx_1221.conjugate() * wy_2112).real
            - al * be * be * ga * 2 * (e_m21 * wx_2332.conjugate() * wy_3223).real
            + al * al * ga * ga * 2 * (e_m31 * wx_1331.conjugate() * wy_3113).real
            + al * al * ga * ga * 2 * (e_m31 * wx_1221.conjugate() * wy_3223).real
            + be ** 4 * 2 * (wy_2112.conjugate() * wx_2332).real
        )
        return val

    sq_pm = exchange("+a-b", "-b+a")  # a emitted, b absorbed
    sq_mp = exchange("+b-a", "-a+b")  # b emitted, a absorbed
    return sq_pp, sq_mm, sq_pm, sq_mp


def _strong_j_terms(wf, sys: SymmetricEigenSystem, n_a: float, n_b: float, t_holder):
    al, be, ga = sys.coef_alpha, sys.coef_beta, sys.coef_gamma
    omega = sys.omega_cap
    j4 = sys.j ** 4 / omega ** 4

    def terms_at():
        t = t_holder[0]
        cos_fac = math.cos(omega * t) - 1.0
        out = {"p0": j4 * cos_fac * cos_fac}

        for mode, n in (("a", n_a), ("b", n_b)):
            out[f"p11_{mode}_plus"] = (n + 1) * _first_order_square(wf, mode, +1, al, be, ga, omega, t)
            out[f"p11_{mode}_minus"] = n * _first_order_square(wf, mode, -1, al, be, ga, omega, t)

        pref = -(sys.j ** 2 / (2 * omega ** 2)) * cos_fac
        for mode, n in (("a", n_a), ("b", n_b)):
            out[f"p12_{mode}"] = pref * (
                (n + 1) * _zeroth_cross(wf, mode, "-+", al, be, ga, omega, t)
                + n * _zeroth_cross(wf, mode, "+-", al, be, ga, omega, t)
            )

        for mode, n in (("a", n_a), ("b", n_b)):
            wick = wick_quartic(n)
            sq_pp, sq_mm, sq_pm, sq_mp, cross = _second_order_squares(wf, mode, al, be, ga, omega, t)
            out[f"p21_{mode}{mode}_pp"] = wick["--++"] * sq_pp
            out[f"p21_{mode}{mode}_mm"] = wick["++--"] * sq_mm
            out[f"p21_{mode}{mode}_pm"] = wick["+-+-"] * sq_pm
            out[f"p21_{mode}{mode}_mp"] = wick["-+-+"] * sq_mp
            out[f"p21_{mode}{mode}_cross"] = wick["+--+"] * 2 * cross.real

        sq_pp, sq_mm, sq_pm, sq_mp = _mixed_mode_squares(wf, al, be, ga, omega, t)
        out["p21_ab_pp"] = (n_a + 1) * (n_b + 1) * sq_pp
        out["p21_ab_mm"] = n_a * n_b * sq_mm
        out["p21_ab_pm"] = (n_a + 1) * n_b * sq_pm
        out["p21_ab_mp"] = n_a * (n_b + 1) * sq_mp
        return out

    return terms_at


def p3_perturbative(
    sys: SymmetricEigenSystem,
    coeffs: CouplingCoefficients,
    modes: tuple[VibrationalModeSpec, VibrationalModeSpec],
    t_grid: np.ndarray,
    regime: str = "weak_j",
    include_nonconserving: bool = False,
) -> PerturbativeResult:
    """Order-by-order transfer probability on ``t_grid``.

    ``weak_j`` uses the reduced formulas valid for J < Delta (initial and
    final site states approximated by the extremal eigenstates; non-
    energy-conserving first-order terms dropped unless
    ``include_nonconserving``).  ``strong_j`` keeps the full alpha/beta/gamma
    weights, the zeroth-order background and its interference with second
    order; the third-x-first and fourth-x-zeroth contributions at that order
    have no closed form here and are bounded by comparison against exact
    propagation in the test suite.
    """
    if regime not in ("weak_j", "strong_j"):
        raise ValueError(f"regime must be 'weak_j' or 'strong_j', got {regime!r}")
    mode_a, mode_b = modes
    notes: list[str] = []
    kappa_max = max(mode_a.kappa, mode_b.kappa)
    if kappa_max > abs(sys.j) / 2:
        msg = f"site-vibration coupling {kappa_max} exceeds j/2 = {abs(sys.j)/2}; fourth-order truncation may be inaccurate"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    if regime == "weak_j" and abs(sys.j) >= sys.delta:
        msg = f"weak_j regime assumes |j| < delta but j={sys.j}, delta={sys.delta}"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    n_a = mean_occupancy(mode_a.nu, mode_a.kbt) if mode_a.kbt > 0 else 0.0
    n_b = mean_occupancy(mode_b.nu, mode_b.kbt) if mode_b.kbt > 0 else 0.0
    kappas = (mode_a.kappa, mode_b.kappa)
    nus = (mode_a.nu, mode_b.nu)

    t_grid = np.asarray(t_grid, dtype=float)
    t_holder = [0.0]
    cache: dict[tuple[str, tuple[int, ...]], complex] = {}

    def wf(spec: str, path: tuple[int, ...]) -> complex:
        key = (spec, path)
        val = cache.get(key)
        if val is None:
            val = _w_bare(_parse_legs(spec, path), t_holder[0], sys, coeffs, kappas, nus)
            cache[key] = val
        return val

    if regime == "weak_j":
        terms_at = _weak_j_terms(wf, n_a, n_b, include_nonconserving)
    else:
        terms_at = _strong_j_terms(wf, sys, n_a, n_b, t_holder)

    term_series: dict[str, np.ndarray] = {}
    p3 = np.zeros_like(t_grid)
    for it, t in enumerate(t_grid):
        t_holder[0] = float(t)
        cache.clear()
        vals = terms_at()
        if not term_series:
            term_series = {k: np.zeros_like(t_grid) for k in vals}
        for k, v in vals.items():
            term_series[k][it] = v
            p3[it] += v

    return PerturbativeResult(
        trace=TransferTrace.from_series(t_grid, p3),
        terms=term_series,
        regime=regime,
        notes=notes,
    )
