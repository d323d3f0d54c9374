"""Reading spec documents and writing samples, tables and images."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dist import Pmf
from .errors import FieldError, NotAGrid, SpecFormatError
from .graph import GridSpec, SiteGraph, ValidSetup, build_valid_setup, grid_graph
from .kernel import VARIANTS, FieldSpec, make_variant_spec

SPEC_VERSION = 1
DERIVED_VARIANTS = {"all-equal", "uniform", "uniform-hat", "captcha"}


@dataclass(frozen=True, eq=False)
class LoadedSpec:
    """A parsed spec document together with the setup it asks for."""

    spec: FieldSpec
    grid: Optional[GridSpec]
    order: Optional[Tuple[int, ...]]
    known: Dict[int, int]
    component_policy: str
    digest: str

    def setup(self) -> ValidSetup:
        unknown = set(range(self.spec.n_sites)) - set(self.known)
        if self.grid is not None and self.order is None and not self.known:
            return grid_graph(self.grid)[1]
        return build_valid_setup(self.spec.graph, unknown, self.order, self.component_policy)

    def labels(self) -> List[str]:
        return [self.spec.graph.label(s) for s in range(self.spec.n_sites)]


def _graph(doc: dict) -> Tuple[SiteGraph, Optional[GridSpec]]:
    g = doc.get("graph", {})
    grid = doc.get("grid", g.get("grid") if isinstance(g, dict) else None)
    if grid is not None:
        try:
            gs = GridSpec(int(grid["M"]), int(grid["N"]), int(grid.get("radius", 1)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecFormatError(f"grid needs integer M, N and radius: {exc}") from None
        return grid_graph(gs)[0], gs
    if not isinstance(g, dict):
        raise SpecFormatError("graph must be an object")
    labels = g.get("labels", doc.get("labels"))
    if "adjacency" in g:
        adjacency = [frozenset(int(t) for t in nbrs) for nbrs in g["adjacency"]]
        return SiteGraph(tuple(adjacency), labels), None
    if "edges" in g:
        if "n_sites" not in g:
            raise SpecFormatError("an edge list needs n_sites")
        return SiteGraph.from_edges(int(g["n_sites"]), [tuple(e) for e in g["edges"]], labels), None
    raise SpecFormatError("graph needs 'adjacency', 'edges' or 'grid'")


def _aligned(obj, states: Tuple[float, ...], where: str) -> Pmf:
    """Pmf on exactly ``states``; states missing from the document get zero mass."""
    pmf = Pmf.from_json(obj)
    extra = set(pmf.states) - set(states)
    if extra:
        raise SpecFormatError(f"{where}: states {sorted(extra)} are not states of the target marginal")
    lookup = dict(zip(pmf.states, pmf.probs))
    return Pmf(states, tuple(lookup.get(x, 0.0) for x in states))


def _sites(doc: dict, n: int):
    sites = doc.get("sites")
    if isinstance(sites, dict):
        sites = [sites] * n
    if not isinstance(sites, list) or len(sites) != n:
        raise SpecFormatError(f"'sites' must be one object or a list of {n} objects")
    pi, tilde, hat = [], [], []
    for s, entry in enumerate(sites):
        if not isinstance(entry, dict) or "pi" not in entry:
            raise SpecFormatError(f"site {s} needs a 'pi' pmf")
        p = Pmf.from_json(entry["pi"], strict=False)
        pi.append(p)
        tilde.append(_aligned(entry["tilde"], p.states, f"site {s} tilde") if "tilde" in entry else None)
        hat.append(_aligned(entry["hat"], p.states, f"site {s} hat") if "hat" in entry else None)
    return pi, tilde, hat


def _beta(doc: dict, graph: SiteGraph) -> Dict[Tuple[int, int], float]:
    raw = doc.get("beta", [])
    beta: Dict[Tuple[int, int], float] = {}
    if isinstance(raw, dict):
        if "all" in raw:
            beta.update({e: float(raw["all"]) for e in graph.edges()})
        raw = raw.get("pairs", [])
    if not isinstance(raw, list):
        raise SpecFormatError("'beta' must be a list of {s, t, value} or an object with 'all'/'pairs'")
    for item in raw:
        try:
            s, t, v = int(item["s"]), int(item["t"]), float(item["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecFormatError(f"bad beta entry {item!r}: {exc}") from None
        if not (0 <= s < graph.n_sites and 0 <= t < graph.n_sites):
            raise SpecFormatError(f"beta entry {item!r} references a site out of range")
        beta[(min(s, t), max(s, t))] = v
    return beta


def spec_from_json(doc: dict) -> LoadedSpec:
    if not isinstance(doc, dict):
        raise SpecFormatError("spec document must be a JSON object")
    version = doc.get("version", SPEC_VERSION)
    if version != SPEC_VERSION:
        raise SpecFormatError(f"unsupported spec version {version!r}")
    graph, grid = _graph(doc)
    n = graph.n_sites
    pi, tilde, hat = _sites(doc, n)
    beta = _beta(doc, graph)
    variant = doc.get("variant", "general")
    if variant not in VARIANTS:
        raise SpecFormatError(f"unknown variant {variant!r}")
    have_tilde = [t is not None for t in tilde]
    have_hat = [h is not None for h in hat]
    if any(have_tilde) and not all(have_tilde) or any(have_hat) and not all(have_hat):
        raise SpecFormatError("give tilde (and hat) for every site or for none")
    if variant in DERIVED_VARIANTS and not any(have_tilde) and not any(have_hat):
        spec = make_variant_spec(variant, graph, pi, beta)
    elif variant in ("equal-tilde-hat", "permutation-safe") and all(have_tilde) and not any(have_hat):
        spec = make_variant_spec(variant, graph, pi, beta, tilde=tilde)
    elif all(have_tilde) and all(have_hat):
        spec = FieldSpec(graph, tuple(pi), tuple(tilde), tuple(hat), beta, variant)
    else:
        raise SpecFormatError(f"variant {variant!r} needs tilde and hat for every site")

    order = doc.get("order")
    order = tuple(int(s) for s in order) if order is not None else None
    known: Dict[int, int] = {}
    if doc.get("known") is not None:
        k = doc["known"]
        try:
            pairs = list(zip(k["sites"], k["values"], strict=True))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecFormatError(f"'known' needs equal-length 'sites' and 'values': {exc}") from None
        for s, value in pairs:
            s = int(s)
            if not 0 <= s < n:
                raise SpecFormatError(f"known site {s} out of range")
            states = spec.states(s)
            if float(value) not in states:
                raise SpecFormatError(f"known value {value!r} is not a state of site {s}")
            known[s] = states.index(float(value))
    policy = doc.get("component_policy", "largest")
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    return LoadedSpec(spec, grid, order, known, policy, digest)


def load_spec(path: Union[str, Path]) -> LoadedSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecFormatError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"{path} is not valid JSON: {exc}") from None
    return spec_from_json(doc)


def spec_to_json(spec: FieldSpec, grid: Optional[GridSpec] = None, **extra) -> dict:
    doc: dict = {"version": SPEC_VERSION}
    if grid is not None:
        doc["grid"] = {"M": grid.rows, "N": grid.cols, "radius": grid.radius}
    else:
        doc["graph"] = {"adjacency": [sorted(a) for a in spec.graph.adjacency]}
        if spec.graph.labels is not None:
            doc["graph"]["labels"] = list(spec.graph.labels)
    doc["sites"] = [
        {"pi": spec.pi[s].to_json(), "tilde": spec.tilde[s].to_json(), "hat": spec.hat[s].to_json()}
        for s in range(spec.n_sites)
    ]
    doc["beta"] = [{"s": s, "t": t, "value": v} for (s, t), v in sorted(spec.beta.items())]
    doc["variant"] = spec.variant
    doc.update(extra)
    return doc


def format_state(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def samples_csv(spec: FieldSpec, samples: np.ndarray, labels: Sequence[str]) -> str:
    """Header of site labels, then one line of state values per replicate."""
    columns = []
    for s in range(spec.n_sites):
        text = np.array([format_state(x) for x in spec.states(s)], dtype=object)
        columns.append(text[samples[:, s]])
    lines = [",".join(labels)]
    lines.extend(",".join(row) for row in zip(*columns))
    return "\n".join(lines) + "\n"


def grey_levels(spec: FieldSpec, sample: np.ndarray) -> np.ndarray:
    """Map each site's state linearly so the lowest state overall is 0 and the highest 255."""
    values = np.array([spec.states(s)[u] for s, u in enumerate(sample)], dtype=float)
    lo = min(min(spec.states(s)) for s in range(spec.n_sites))
    hi = max(max(spec.states(s)) for s in range(spec.n_sites))
    if hi == lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255).astype(np.uint8)


def pgm_bytes(spec: FieldSpec, grid: Optional[GridSpec], sample: np.ndarray) -> bytes:
    """Binary PGM of one grid sample, M rows by N columns."""
    if grid is None:
        raise NotAGrid("images need a grid spec")
    levels = grey_levels(spec, sample)
    raster = levels.reshape(grid.cols, grid.rows).T  # column-major site order
    header = f"P5\n{grid.cols} {grid.rows}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(raster).tobytes()


def write_json(obj, path: Optional[Union[str, Path]] = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, FieldError):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
