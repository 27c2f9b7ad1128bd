"""Trig-polynomial vector fields on flat tori T^1 and T^2.

A field component is a finite sum  sum_j  a_j cos(2 pi k_j . x) + b_j sin(2 pi k_j . x)
with integer frequency vectors k_j. Evaluation and the Jacobian are exact
(analytic differentiation of the terms), which the downstream Newton solves,
variational integration and Fourier assembly all rely on.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierTerm:
    freq: tuple          # integer frequency vector, length n
    cos_coeff: float = 0.0
    sin_coeff: float = 0.0


@dataclass(frozen=True)
class VectorFieldSpec:
    dim: int
    components: tuple    # length dim; each a tuple of FourierTerm
    tag: str = ""        # catalog tag if built-in
    gradient_of: tuple = None   # trig terms of f when V = -grad f, else None

    @property
    def max_frequency(self):
        m = 0
        for comp in self.components:
            for t in comp:
                m = max(m, max(abs(int(k)) for k in t.freq))
        return m

    def __call__(self, x):
        return evaluate_field(self, x)[0]


def _as_points(x, dim):
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[-1] != dim:
        raise ConfigurationError(f"point dimension {pts.shape[-1]} != field dimension {dim}")
    return pts


def evaluate_field(spec, x):
    """Return (V(x), DV(x)) exactly.

    x may be a single point (shape (n,)) or a batch (m, n); outputs follow,
    with Jacobians shaped (..., n, n), DV[i, j] = dV_i / dx_j.
    """
    pts = _as_points(x, spec.dim)
    m, n = pts.shape
    vals = np.zeros((m, n))
    jac = np.zeros((m, n, n))
    for i, comp in enumerate(spec.components):
        for t in comp:
            k = np.asarray(t.freq, dtype=float)
            phase = TWO_PI * pts @ k
            c, s = np.cos(phase), np.sin(phase)
            vals[:, i] += t.cos_coeff * c + t.sin_coeff * s
            # d/dx_j of cos term: -2 pi k_j sin, of sin term: +2 pi k_j cos
            dphase = TWO_PI * k
            jac[:, i, :] += np.outer(-t.cos_coeff * s + t.sin_coeff * c, dphase)
    single = np.asarray(x).ndim == 1
    if single:
        return vals[0], jac[0]
    return vals, jac


def field_values(spec, x):
    """V(x) only, batched; cheaper than evaluate_field when the Jacobian is unused."""
    pts = _as_points(x, spec.dim)
    m, n = pts.shape
    vals = np.zeros((m, n))
    for i, comp in enumerate(spec.components):
        for t in comp:
            k = np.asarray(t.freq, dtype=float)
            phase = TWO_PI * pts @ k
            if t.cos_coeff:
                vals[:, i] += t.cos_coeff * np.cos(phase)
            if t.sin_coeff:
                vals[:, i] += t.sin_coeff * np.sin(phase)
    if np.asarray(x).ndim == 1:
        return vals[0]
    return vals


def divergence(spec, x):
    _, jac = evaluate_field(spec, x)
    return np.trace(jac, axis1=-2, axis2=-1)


def scalar_terms_value(terms, x):
    """Evaluate a trig-polynomial scalar (e.g. the potential f) at batched points."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(pts.shape[0])
    for t in terms:
        k = np.asarray(t.freq, dtype=float)
        phase = TWO_PI * pts @ k
        out += t.cos_coeff * np.cos(phase) + t.sin_coeff * np.sin(phase)
    if np.asarray(x).ndim == 1:
        return out[0]
    return out


def gradient_spec_from_potential(terms, dim, tag=""):
    """Build V = -grad f for a trig-polynomial potential f.

    f = sum a cos(2 pi k.x) + b sin(2 pi k.x)
    -df/dx_i = 2 pi k_i (a sin - b cos).
    """
    comps = []
    for i in range(dim):
        ct = []
        for t in terms:
            ki = float(t.freq[i])
            if ki == 0.0:
                continue
            ct.append(FourierTerm(t.freq,
                                  cos_coeff=-TWO_PI * ki * t.sin_coeff,
                                  sin_coeff=TWO_PI * ki * t.cos_coeff))
        comps.append(tuple(ct))
    return VectorFieldSpec(dim=dim, components=tuple(comps), tag=tag,
                           gradient_of=tuple(terms))


def _hamiltonian_plus_dissipation(h_terms, alpha_terms):
    """X_H + alpha(x) grad H on T^2 for trig-polynomial H and alpha.

    Used by catalog fields that need engineered connections or limit cycles.
    alpha_terms is itself a list of (coefficient, trig-terms-of-factor) products;
    here we only need alpha = c * (h0 - H) and alpha = c * H, so the products of
    trig polynomials are expanded exactly via product-to-sum identities.
    """
    raise NotImplementedError  # catalog fields below construct terms explicitly


def _trig_product(t1, t2):
    """Exact product of two Fourier terms as a list of Fourier terms.

    cos A cos B = (cos(A-B)+cos(A+B))/2 etc. Frequencies add/subtract.
    """
    k1, k2 = np.asarray(t1.freq, int), np.asarray(t2.freq, int)
    a1, b1, a2, b2 = t1.cos_coeff, t1.sin_coeff, t2.cos_coeff, t2.sin_coeff
    plus = tuple((k1 + k2).tolist())
    minus = tuple((k1 - k2).tolist())
    out = []
    # cos*cos
    if a1 and a2:
        out += [FourierTerm(minus, cos_coeff=0.5 * a1 * a2),
                FourierTerm(plus, cos_coeff=0.5 * a1 * a2)]
    # sin*sin
    if b1 and b2:
        out += [FourierTerm(minus, cos_coeff=0.5 * b1 * b2),
                FourierTerm(plus, cos_coeff=-0.5 * b1 * b2)]
    # cos*sin
    if a1 and b2:
        out += [FourierTerm(plus, sin_coeff=0.5 * a1 * b2),
                FourierTerm(minus, sin_coeff=-0.5 * a1 * b2)]
    # sin*cos
    if b1 and a2:
        out += [FourierTerm(plus, sin_coeff=0.5 * b1 * a2),
                FourierTerm(minus, sin_coeff=0.5 * b1 * a2)]
    return out


def _collect(terms):
    """Merge duplicate frequencies; canonicalize sign so k is lexicographically >= -k."""
    acc = {}
    for t in terms:
        k = tuple(int(v) for v in t.freq)
        a, b = t.cos_coeff, t.sin_coeff
        if k < tuple(-v for v in k):
            k = tuple(-v for v in k)
            b = -b
        ca, cb = acc.get(k, (0.0, 0.0))
        acc[k] = (ca + a, cb + b)
    out = []
    for k, (a, b) in sorted(acc.items()):
        if abs(a) > 1e-15 or abs(b) > 1e-15:
            out.append(FourierTerm(k, cos_coeff=a, sin_coeff=b))
    return out


def _scalar_linear_combo(coeff_const, coeff_terms_pairs):
    """const + sum c_i * (product of given term lists), all exact."""
    out = [FourierTerm((0, 0), cos_coeff=coeff_const)] if coeff_const else []
    for c, terms in coeff_terms_pairs:
        out += [FourierTerm(t.freq, cos_coeff=c * t.cos_coeff, sin_coeff=c * t.sin_coeff)
                for t in terms]
    return _collect(out)


def _multiply_scalar_lists(terms_a, terms_b):
    out = []
    for ta in terms_a:
        for tb in terms_b:
            out += _trig_product(ta, tb)
    return _collect(out)


def catalog_field(tag):
    """Built-in fields. Evaluation of every entry stays exact trig arithmetic."""
    if tag == "grad_cos1":
        f = [FourierTerm((1,), cos_coeff=1.0)]
        return gradient_spec_from_potential(f, 1, tag=tag)
    if tag == "grad_cos2":
        f = [FourierTerm((1, 0), cos_coeff=1.0), FourierTerm((0, 1), cos_coeff=1.0)]
        return gradient_spec_from_potential(f, 2, tag=tag)
    if tag == "rotation":
        comps = ((FourierTerm((0, 0), cos_coeff=1.0),), (FourierTerm((0, 0), cos_coeff=0.0),))
        return VectorFieldSpec(dim=2, components=comps, tag=tag)
    if tag == "t2_cancel_pair":
        f = [FourierTerm((1, 0), cos_coeff=1.0),
             FourierTerm((0, 1), cos_coeff=1.0),
             FourierTerm((1, 1), cos_coeff=0.8)]
        return gradient_spec_from_potential(f, 2, tag=tag)
    if tag in ("torus_saddle_connection", "limit_cycle"):
        # Both are built from H = cos 2pi x + cos 2pi y:
        #   X_H = ( -dH/dy, dH/dx )  (area-preserving part, keeps level sets)
        #   plus a dissipative part alpha(x) * grad H.
        # torus_saddle_connection: alpha = 0.3 H       -> H=0 invariant, carries
        #   the saddle separatrices, so transversality fails there.
        # limit_cycle: alpha = 0.5 (1.0 - H)           -> attracting periodic
        #   orbit on the level {H = 1.0}.
        H = [FourierTerm((1, 0), cos_coeff=1.0), FourierTerm((0, 1), cos_coeff=1.0)]
        dHdx = [FourierTerm((1, 0), sin_coeff=-TWO_PI)]
        dHdy = [FourierTerm((0, 1), sin_coeff=-TWO_PI)]
        if tag == "torus_saddle_connection":
            alpha = _scalar_linear_combo(0.0, [(0.3, H)])
        else:
            alpha = _scalar_linear_combo(0.5, [(-0.5, H)])
        vx = _collect([FourierTerm(t.freq, cos_coeff=-t.cos_coeff, sin_coeff=-t.sin_coeff)
                       for t in dHdy] + _multiply_scalar_lists(alpha, dHdx))
        vy = _collect(list(dHdx) + _multiply_scalar_lists(alpha, dHdy))
        return VectorFieldSpec(dim=2, components=(tuple(vx), tuple(vy)), tag=tag)
    raise ConfigurationError(f"unknown catalog tag: {tag!r}")


CATALOG_TAGS = ("grad_cos1", "grad_cos2", "rotation", "t2_cancel_pair",
                "torus_saddle_connection", "limit_cycle")


def reversed_field(spec):
    comps = tuple(tuple(FourierTerm(t.freq, -t.cos_coeff, -t.sin_coeff) for t in c)
                  for c in spec.components)
    return VectorFieldSpec(dim=spec.dim, components=comps,
                           tag=(spec.tag + "_reversed") if spec.tag else "",
                           gradient_of=None)


def spec_from_config(entry):
    """Field from a config mapping: {'catalog': tag} or explicit component lists."""
    if "catalog" in entry:
        return catalog_field(entry["catalog"])
    try:
        dim = int(entry["dim"])
        comps = []
        for comp in entry["components"]:
            comps.append(tuple(FourierTerm(tuple(int(k) for k in t["freq"]),
                                           float(t.get("cos", 0.0)),
                                           float(t.get("sin", 0.0)))
                               for t in comp))
        return VectorFieldSpec(dim=dim, components=tuple(comps), tag=entry.get("tag", ""))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"malformed field spec: {e}")
