"""Exact-rational classification of parameter points.

Every hypothesis is evaluated with :class:`fractions.Fraction`; infinity is
the singleton :data:`INF`, ordered above every rational.  Each conclusion
carries a citation key naming the result it comes from:

==========================  =================================================
key                          statement
==========================  =================================================
``cub-embedding``            s + n(tau - 1/p) > 0 gives continuous bounded functions
``cub-failure``              boundary cases where that embedding fails
``holder-zygmund``           large tau collapses the space to B^sigma_{inf,inf}
``continuity``               radial elements are continuous off the origin
``decay-bounded``            radial elements are bounded (tau above the threshold)
``decay-far``                far decay |x|^((1-n)/p + n tau)
``decay-near``               near-origin power or logarithmic bound
``sharp-far``                witnesses showing the far bound fails
``sharp-near``               witnesses showing the near bound fails
``morrey-cub``               Sobolev-Morrey spaces with n/u < m are bounded
``sm-first-order``           first-order Sobolev-Morrey far decay
``sm-decay``                 higher-order Sobolev-Morrey far decay
``sm-near``                  Sobolev-Morrey near-origin bound
``sm-continuity``            Sobolev-Morrey radial continuity
``open``                     region left open; the answer is "unknown"
==========================  =================================================
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering

from .errors import ClassifierRejection


@total_ordering
class _Infinity:
    """+infinity on the extended rationals."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self

    def __le__(self, other):
        return other is self

    def __ge__(self, other):
        return True

    def __hash__(self):
        return hash("radlab-inf")

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "inf"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def rat(x):
    """Parse an extended rational from int, Fraction, str ("3/4", "inf") or a float."""
    if x is INF:
        return INF
    if isinstance(x, str):
        t = x.strip().lower()
        if t in ("inf", "infinity", "+inf", "∞"):
            return INF
        return Fraction(t)
    if isinstance(x, float):
        if x == float("inf"):
            return INF
        return Fraction(x).limit_denominator(10 ** 9)
    return Fraction(x)


def recip(x):
    """1/x on (0, inf], with 1/inf = 0."""
    return Fraction(0) if x is INF else 1 / Fraction(x)


def fmt(x) -> str:
    if x is INF:
        return "inf"
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# parameter points

SPACES = ("B", "N", "W")


@dataclass(frozen=True)
class ParameterPoint:
    """Parameters of one function space on R^n.

    ``space`` selects the scale: "B" Besov-type B^{s,tau}_{p,q} (tau = 0 is
    the classical Besov space), "N" Besov-Morrey N^s_{u,p,q}, "W"
    Sobolev-Morrey W^m M^u_p.
    """

    n: int
    s: Fraction = Fraction(0)
    tau: Fraction = Fraction(0)
    p: object = Fraction(2)
    q: object = Fraction(2)
    u: object = None
    m: int | None = None
    space: str = "B"

    def __post_init__(self):
        conv = {
            "s": rat(self.s), "tau": rat(self.tau), "p": rat(self.p), "q": rat(self.q),
            "u": None if self.u is None else rat(self.u),
        }
        for k, v in conv.items():
            object.__setattr__(self, k, v)
        if not isinstance(self.n, int) or self.n < 2:
            raise ClassifierRejection("n >= 2", "dimension")
        if self.space not in SPACES:
            raise ClassifierRejection(f"space in {SPACES}", "catalog")
        if self.s is INF or self.tau is INF:
            raise ClassifierRejection("s and tau finite", "definition")
        if self.tau < 0:
            raise ClassifierRejection("tau >= 0", "definition")
        for name in ("p", "q"):
            if not getattr(self, name) > 0:
                raise ClassifierRejection(f"{name} > 0", "definition")
        if self.u is not None and not self.p <= self.u:
            raise ClassifierRejection("p <= u", "definition")
        if self.m is not None and (int(self.m) != self.m or self.m < 0):
            raise ClassifierRejection("m a nonnegative integer", "definition")
        if self.space in ("N", "W") and self.u is None:
            raise ClassifierRejection("Morrey parameter u given", "definition")
        if self.space == "W" and self.m is None:
            raise ClassifierRejection("order m given", "definition")

    # -- derived quantities ------------------------------------------------

    @property
    def sigma_p(self) -> Fraction:
        return self.n * max(Fraction(0), recip(self.p) - 1)

    @property
    def tau_star(self) -> Fraction:
        """The threshold (n-1)/(np)."""
        return Fraction(self.n - 1, self.n) * recip(self.p)

    @property
    def far_exponent(self) -> Fraction:
        return (1 - self.n) * recip(self.p) + self.n * self.tau

    @property
    def cub_index(self) -> Fraction:
        """s + n(tau - 1/p)."""
        return self.s + self.n * (self.tau - recip(self.p))

    def to_dict(self) -> dict:
        d = {"space": self.space, "n": self.n, "s": fmt(self.s), "tau": fmt(self.tau),
             "p": fmt(self.p), "q": fmt(self.q)}
        if self.u is not None:
            d["u"] = fmt(self.u)
        if self.m is not None:
            d["m"] = int(self.m)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterPoint":
        kw = {k: d[k] for k in ("s", "tau", "p", "q", "u") if k in d}
        if "m" in d:
            kw["m"] = int(d["m"])
        return cls(int(d["n"]), space=d.get("space", "B"), **kw)

    def label(self) -> str:
        d = self.to_dict()
        return ", ".join(f"{k}={v}" for k, v in d.items() if k != "space")


# ---------------------------------------------------------------------------
# reports

@dataclass
class RegionReport:
    """Conclusions for one parameter point.

    ``far`` and ``near`` are dicts with a ``kind`` among "bounded",
    "decay"/"power" (with an ``exponent``), "log", "unbounded" and
    "unknown", plus the ``cite`` key.
    """

    point: ParameterPoint
    holder_zygmund: dict
    embeds_cub: dict
    fails_cub: dict
    continuous: dict
    far: dict
    near: dict
    sharp_far: dict
    sharp_near: dict
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "holder_zygmund": self.holder_zygmund,
            "embeds_cub": self.embeds_cub,
            "fails_cub": self.fails_cub,
            "continuous_outside_origin": self.continuous,
            "far": self.far,
            "near": self.near,
            "sharpness_far": self.sharp_far,
            "sharpness_near": self.sharp_near,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def far_exponent(self):
        e = self.far.get("exponent")
        return None if e is None else Fraction(e)


def _flag(value, cite, **extra):
    d = {"value": value, "cite": cite}
    d.update(extra)
    return d


def _continuity_hyp(pp) -> bool:
    """Either s > 1/p, or s = 1/p and q <= 1 (p finite)."""
    if pp.p is INF:
        return False
    ip = recip(pp.p)
    return pp.s > ip or (pp.s == ip and pp.q <= 1)


def _sharp_hyp(pp) -> bool:
    """Either s < 1/p, or s = 1/p and q > 1."""
    ip = recip(pp.p)
    return pp.s < ip or (pp.s == ip and pp.q > 1)


def classify(pp: ParameterPoint) -> RegionReport:
    """All stated conclusions for a Besov-type parameter point.

    Besov-Morrey points with q = inf are classified through their
    Besov-type twin tau = 1/p - 1/u; Sobolev-Morrey points go to
    :func:`classify_sobolev_morrey`.
    """
    if pp.space == "W":
        return classify_sobolev_morrey(pp)
    if pp.space == "N":
        if pp.q is not INF:
            raise ClassifierRejection("q = inf for the Besov-type identification",
                                      "besov-morrey-identity")
        pp = ParameterPoint(pp.n, pp.s, recip(pp.p) - recip(pp.u), pp.p, pp.q)
    n, p, q, tau = pp.n, pp.p, pp.q, pp.tau
    ip = recip(p)
    notes = []

    hz = (q is not INF and tau > ip) or (q is INF and tau >= ip)
    sigma = pp.cub_index
    holder = _flag(hz and sigma > 0, "holder-zygmund",
                   besov_identity=hz, smoothness=fmt(sigma))

    embeds = _flag(sigma > 0, "cub-embedding", index=fmt(sigma))
    fail = False
    if p is not INF:
        if 0 < tau < ip and sigma == 0:
            fail = True
        if pp.s == 0 and tau == ip:
            fail = True
    fails = _flag(fail, "cub-failure")

    cont_hyp = _continuity_hyp(pp)
    continuous = _flag(cont_hyp or sigma > 0,
                       "continuity" if cont_hyp else ("cub-embedding" if sigma > 0 else "open"))

    ts = pp.tau_star
    finite_p = p is not INF
    # far region
    if finite_p and tau > ts and sigma > 0:
        far = {"kind": "bounded", "cite": "decay-bounded"}
    elif finite_p and tau <= ts and cont_hyp:
        far = {"kind": "decay", "exponent": fmt(pp.far_exponent), "cite": "decay-far"}
    elif sigma > 0:
        far = {"kind": "bounded", "cite": "cub-embedding"}
    else:
        far = {"kind": "unknown", "cite": "open"}

    # near-origin region
    if sigma > 0:
        near = {"kind": "bounded", "cite": "cub-embedding"}
    elif finite_p and tau <= ts and cont_hyp:
        # here s <= n(1/p - tau) holds automatically since sigma <= 0
        if tau == ts:
            near = {"kind": "log", "cite": "decay-near"}
        else:
            near = {"kind": "power", "exponent": fmt(pp.far_exponent), "cite": "decay-near"}
    else:
        near = {"kind": "unknown", "cite": "open"}

    sf = finite_p and p > Fraction(n - 1, n) and tau <= ts and _sharp_hyp(pp)
    sharp_far = _flag(sf, "sharp-far")
    if finite_p and tau <= ts and _sharp_hyp(pp) and not p > Fraction(n - 1, n):
        sharp_far = _flag(None, "open")
        notes.append("sharpness for p <= (n-1)/n is left open")
    if sf:
        far = {"kind": "unbounded", "cite": "sharp-far"}
    sn = finite_p and pp.s < ip and not sigma > 0
    sharp_near = _flag(sn, "sharp-near")
    if finite_p and pp.s < ip and sigma > 0:
        notes.append("near-origin blow-up witness conflicts with the C_ub embedding; "
                     "boundedness is reported")
    if sn and near["kind"] == "unknown":
        near = {"kind": "unbounded", "cite": "sharp-near"}
    if finite_p and pp.s == ip and q > 1 and near["kind"] == "unknown":
        notes.append("near-origin behaviour for s = 1/p, q > 1 is left open")
    return RegionReport(pp, holder, embeds, fails, continuous, far, near,
                        sharp_far, sharp_near, notes)


def classify_sobolev_morrey(pp: ParameterPoint) -> RegionReport:
    """Conclusions for a Sobolev-Morrey point W^m M^u_p (1 <= p <= u <= inf, m >= 1)."""
    if pp.u is None or pp.m is None:
        raise ClassifierRejection("Sobolev-Morrey points need m and u", "definition")
    n, p, u, m = pp.n, pp.p, pp.u, int(pp.m)
    if not (p >= 1 and p <= u):
        raise ClassifierRejection("1 <= p <= u", "definition")
    if m < 1:
        raise ClassifierRejection("m >= 1", "definition")
    ip, iu = recip(p), recip(u)
    expo = ip - n * iu
    notes = []
    bounded = n * iu < m
    embeds = _flag(bounded, "morrey-cub", index=fmt(m - n * iu))
    hz = _flag(False, "holder-zygmund", besov_identity=False)
    fails = _flag(False, "cub-failure")
    decay_hyp = p > 1 and u is not INF and u <= n * p
    first_order = m == 1

    cont = bounded or (p > 1 and u is not INF)
    continuous = _flag(cont, "morrey-cub" if bounded else ("sm-continuity" if cont else "open"))

    if first_order:
        far = {"kind": "decay", "exponent": fmt(expo), "cite": "sm-first-order"}
    elif decay_hyp:
        far = {"kind": "decay", "exponent": fmt(expo), "cite": "sm-decay"}
    elif bounded:
        far = {"kind": "bounded", "cite": "morrey-cub"}
    else:
        far = {"kind": "unknown", "cite": "open"}
    if bounded and far["kind"] == "decay":
        far["bounded"] = True

    stated = None
    if decay_hyp and ip == n * iu:
        stated = {"kind": "log", "cite": "sm-near"}
    elif decay_hyp and ip < n * iu:
        stated = {"kind": "power", "exponent": fmt(expo), "cite": "sm-near"}
    if bounded:
        # the embedding is stronger; keep the weaker stated bound alongside
        near = {"kind": "bounded", "cite": "morrey-cub"}
        if stated is not None:
            near["stated"] = stated
    elif stated is not None:
        near = stated
    else:
        near = {"kind": "unknown", "cite": "open"}
        if p == 1:
            notes.append("near-origin bounds are stated for p > 1 only")
    none = _flag(False, "open")
    return RegionReport(pp, hz, embeds, fails, continuous, far, near, none, none, notes)


# ---------------------------------------------------------------------------
# consistency

def consistency_violations(rep: RegionReport) -> list:
    """Internal contradictions in a report (empty list when consistent)."""
    out = []
    pp = rep.point
    if rep.embeds_cub["value"] and not rep.continuous["value"]:
        out.append("embeds-in-C_ub without continuity")
    if rep.embeds_cub["value"] and rep.fails_cub["value"]:
        out.append("embeds and fails C_ub")
    if pp.space == "B" or pp.space == "N":
        if rep.far["kind"] == "decay" and rep.far_exponent is not None:
            if pp.space == "B" and not pp.tau <= pp.tau_star:
                out.append("far decay above the tau threshold")
        if rep.sharp_far["value"] and rep.far["kind"] == "decay":
            out.append("sharpness and far decay both set")
        if rep.sharp_far["value"] and rep.embeds_cub["value"]:
            out.append("sharpness witnessed for a bounded space")
        if rep.near["kind"] == "log" and pp.space == "B" and pp.tau != pp.tau_star:
            out.append("log case off the threshold")
        if pp.space == "B" and pp.tau == pp.tau_star and rep.far["kind"] == "decay" \
                and rep.far_exponent != 0:
            out.append("nonzero exponent at the threshold")
        if rep.sharp_near["value"] and rep.near["kind"] == "bounded":
            out.append("near-origin sharpness for a bounded space")
        if rep.holder_zygmund["value"] and not rep.embeds_cub["value"]:
            out.append("Holder-Zygmund collapse without C_ub embedding")
    return out


# ---------------------------------------------------------------------------
# embeddings

@dataclass(frozen=True)
class EmbeddingResult:
    relation: str  # "embeds", "equal" or "unknown"
    proper: bool = False
    chain: tuple = ()

    def to_dict(self) -> dict:
        return {"relation": self.relation, "proper": self.proper, "chain": list(self.chain)}


def _node(pp: ParameterPoint):
    if pp.space == "B":
        return ("B", pp.s, pp.tau, pp.p, pp.q)
    if pp.space == "N":
        return ("N", pp.s, pp.u, pp.p, pp.q)
    return ("W", Fraction(pp.m), pp.u, pp.p)


def _pools(a, b):
    vals = {"s": set(), "q": set()}
    for x in (a, b):
        if x[0] in ("B", "N"):
            vals["s"].add(x[1])
            vals["q"].add(x[4])
        else:
            vals["s"].add(x[1])
    vals["q"] |= {Fraction(1), INF}
    return vals


def _successors(x, n: int, pools):
    """(node, kind, cite) edges out of x; kind is "embeds", "proper" or "equal"."""
    out = []
    kind = x[0]
    if kind == "B":
        _, s, tau, p, q = x
        for s1 in pools["s"]:
            if s1 < s:
                for q1 in pools["q"] | {q}:
                    out.append((("B", s1, tau, p, q1), "embeds", "monotone-s"))
        for q1 in pools["q"]:
            if q <= q1 and q1 != q:
                out.append((("B", s, tau, p, q1), "embeds", "monotone-q"))
        ip = recip(p)
        if (q is not INF and tau > ip) or (q is INF and tau >= ip):
            out.append((("B", s + n * (tau - ip), Fraction(0), INF, INF), "equal", "holder-zygmund"))
        if q is INF:
            # twin Besov-Morrey spaces N^s_{u,p,inf} with 1/p - 1/u = tau
            if p is not INF and tau <= ip:
                iu = ip - tau
                u = INF if iu == 0 else 1 / iu
                out.append((("N", s, u, p, INF), "equal", "besov-morrey-identity"))
        if tau == 0 and p is not INF:
            out.append((("N", s, p, p, q), "equal", "morrey-lebesgue"))
    elif kind == "N":
        _, s, u, p, q = x
        tau = recip(p) - recip(u)
        if q is not INF:
            out.append((("B", s, tau, p, q), "proper" if p < u else "embeds", "besov-morrey-embedding"))
        else:
            out.append((("B", s, tau, p, q), "equal", "besov-morrey-identity"))
        if u == p:
            out.append((("B", s, Fraction(0), p, q), "equal", "morrey-lebesgue"))
        if s.denominator == 1 and s >= 0 and p >= 1 and u is not INF and q == min(Fraction(2), p):
            out.append((("W", s, u, p), "embeds", "sobolev-morrey-sandwich"))
    else:
        _, m, u, p = x
        if p >= 1 and u is not INF:
            out.append((("N", m, u, p, INF), "embeds", "sobolev-morrey-sandwich"))
        if m == 1 and p > 1:
            tau = recip(p) - recip(u)
            out.append((("B", 1 / p, tau, p, Fraction(1)), "proper" if u == p else "embeds",
                        "first-order-chain"))
    return out


def _reach(a, b, n: int, extra_p):
    pools = _pools(a, b)
    seen = {a: (False, ())}
    dq = deque([a])
    while dq:
        x = dq.popleft()
        prop, chain = seen[x]
        if x == b:
            return True, prop, chain
        succ = _successors(x, n, pools)
        if x[0] == "W" and x[2] == x[3]:
            # W^m_p embeds into W^m M^p_v for 1 <= v <= p
            for v in extra_p:
                if 1 <= v <= x[3] and v != x[3]:
                    succ.append((("W", x[1], x[2], v), "embeds", "morrey-monotone"))
        for y, kind, cite in succ:
            if y not in seen and len(chain) < 8:
                seen[y] = (prop or kind == "proper", chain + (cite,))
                dq.append(y)
    return False, False, ()


def embedding_check(a: ParameterPoint, b: ParameterPoint) -> EmbeddingResult:
    """Relation between two spaces derived from the stated embeddings.

    Searches chains of stated embeddings and identities from a to b and
    from b to a.  Returns "equal" when both directions are found and no
    step is a proper embedding, "embeds" when only a -> b is found,
    otherwise "unknown".  Never guesses a negative answer.
    """
    if a.n != b.n:
        raise ClassifierRejection("spaces on the same R^n", "catalog")
    na, nb = _node(a), _node(b)
    extra_p = {x.p for x in (a, b)}
    if na == nb:
        return EmbeddingResult("equal", False, ("identity",))
    ok_ab, prop_ab, ch_ab = _reach(na, nb, a.n, extra_p)
    ok_ba, prop_ba, _ = _reach(nb, na, a.n, extra_p)
    if ok_ab and ok_ba and not (prop_ab or prop_ba):
        return EmbeddingResult("equal", False, ch_ab)
    if ok_ab:
        return EmbeddingResult("embeds", prop_ab, ch_ab)
    return EmbeddingResult("unknown")


# ---------------------------------------------------------------------------
# sweeps and tables

def sweep_points(n_values=(2, 3), s_values=None, tau_values=None, p_values=None,
                 q_values=None):
    """Cartesian product of rational parameter values (Besov-type points)."""
    s_values = s_values or [Fraction(k, 4) for k in range(-2, 9)]
    p_values = p_values or [Fraction(1, 2), Fraction(2, 3), Fraction(1), Fraction(3, 2),
                            Fraction(2), Fraction(3), Fraction(4)]
    q_values = q_values or [Fraction(1, 2), Fraction(1), Fraction(2), INF]
    for n, s, p, q in itertools.product(n_values, s_values, p_values, q_values):
        taus = tau_values or sorted({Fraction(0), Fraction(n - 1, n) * recip(p),
                                     recip(p), Fraction(1, 8), Fraction(3, 4)})
        for tau in taus:
            yield ParameterPoint(n, s, tau, p, q)


def markdown_table(points) -> str:
    """One row per point: far and near behaviour, continuity, sharpness."""
    head = "| n | s | tau | p | q | continuous | far | near | C_ub | sharp far | sharp near |"
    rows = [head, "|" + "---|" * 11]
    for pp in points:
        r = classify(pp)

        def beh(d):
            k = d["kind"]
            return f"{k} {d['exponent']}" if "exponent" in d else k

        sf = r.sharp_far["value"]
        rows.append("| " + " | ".join([
            str(pp.n), fmt(pp.s), fmt(pp.tau), fmt(pp.p), fmt(pp.q),
            "yes" if r.continuous["value"] else "no", beh(r.far), beh(r.near),
            "yes" if r.embeds_cub["value"] else "no",
            "unknown" if sf is None else ("yes" if sf else "no"),
            "yes" if r.sharp_near["value"] else "no"]) + " |")
    return "\n".join(rows) + "\n"
