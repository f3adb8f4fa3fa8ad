"""Anomaly scoring by minimum Mahalanobis distance to group centres.

Two centre layouts share one implementation: attribute-group centres (one
centre per attribute group under a section) and domain centres (one centre per
source/target domain under a section). Covariances are population covariances
with diagonal shrinkage so single-clip groups stay invertible; distances are
computed through a symmetric positive-definite solve, never an explicit
inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

COVARIANCE_MODES = ("per_group", "per_section_pooled")
DOMAIN_INDEX = {"source": 0, "target": 1}


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class GroupCentre:
    label: int
    centre: np.ndarray  # (d,)
    covariance: np.ndarray  # (d, d), unshrunk population covariance
    shrink_eps: float
    n_clips: int
    solve: object  # cho_factor of (covariance + shrink_eps * I)


@dataclass(frozen=True)
class CentreModel:
    kind: str  # "agc" | "dc"
    covariance_mode: str
    groups_by_section: dict[int, tuple[GroupCentre, ...]]  # ascending label order

    @property
    def sections(self) -> tuple[int, ...]:
        return tuple(sorted(self.groups_by_section))


@dataclass(frozen=True)
class ScoreRecord:
    clip_id: str
    score: float
    argmin_group: int


DEFAULT_SHRINKAGE_REL = 1e-3


def _shrink_eps(cov: np.ndarray, override: float | None, rel: float = DEFAULT_SHRINKAGE_REL) -> float:
    """Diagonal shrinkage: absolute override, else rel * trace/d (floor 1e-6)."""
    if override is not None:
        if override <= 0.0:
            raise ScoringError(f"shrinkage must be positive, got {override}")
        return float(override)
    if rel <= 0.0:
        raise ScoringError(f"relative shrinkage must be positive, got {rel}")
    d = cov.shape[0]
    return max(rel * float(np.trace(cov)) / d, 1e-6)


def _population_cov(devs: np.ndarray) -> np.ndarray:
    cov = devs.T @ devs / devs.shape[0]
    return 0.5 * (cov + cov.T)


def _factor(cov: np.ndarray, eps: float):
    d = cov.shape[0]
    return cho_factor(cov + eps * np.eye(d), lower=True)


def _fit(
    feats: np.ndarray,
    labels: np.ndarray,
    sections: np.ndarray,
    kind: str,
    covariance_mode: str,
    shrinkage: float | None,
    shrinkage_rel: float = DEFAULT_SHRINKAGE_REL,
) -> CentreModel:
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels)
    sections = np.asarray(sections)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ScoringError(f"expected a non-empty (N, d) feature matrix, got {feats.shape}")
    if labels.shape != (feats.shape[0],) or sections.shape != (feats.shape[0],):
        raise ScoringError("labels and sections must be 1-D and match the feature count")
    if not np.all(np.isfinite(feats)):
        raise ScoringError("non-finite feature values")
    if covariance_mode not in COVARIANCE_MODES:
        raise ScoringError(f"unknown covariance mode {covariance_mode!r}")

    groups_by_section: dict[int, tuple[GroupCentre, ...]] = {}
    for section in sorted(set(int(s) for s in sections)):
        in_section = sections == section
        section_labels = sorted(set(int(l) for l in labels[in_section]))
        stats = []
        pooled_dev_sq = np.zeros((feats.shape[1], feats.shape[1]))
        pooled_n = 0
        for label in section_labels:
            members = feats[in_section & (labels == label)]
            if members.shape[0] == 0:
                raise ScoringError(f"group {label} under section {section} has zero clips")
            centre = members.mean(axis=0)
            devs = members - centre
            cov = _population_cov(devs)
            stats.append((label, centre, cov, members.shape[0]))
            pooled_dev_sq += devs.T @ devs
            pooled_n += members.shape[0]
        if covariance_mode == "per_section_pooled":
            pooled = 0.5 * (pooled_dev_sq + pooled_dev_sq.T) / pooled_n
            eps = _shrink_eps(pooled, shrinkage, shrinkage_rel)
            factor = _factor(pooled, eps)
            groups = tuple(
                GroupCentre(label, centre, pooled, eps, n, factor)
                for label, centre, _, n in stats
            )
        else:
            groups = []
            for label, centre, cov, n in stats:
                eps = _shrink_eps(cov, shrinkage, shrinkage_rel)
                groups.append(GroupCentre(label, centre, cov, eps, n, _factor(cov, eps)))
            groups = tuple(groups)
        groups_by_section[section] = groups
    return CentreModel(kind=kind, covariance_mode=covariance_mode,
                       groups_by_section=groups_by_section)


def fit_agc(
    feats: np.ndarray,
    group_labels: np.ndarray,
    sections: np.ndarray,
    covariance_mode: str = "per_group",
    shrinkage: float | None = None,
    shrinkage_rel: float = DEFAULT_SHRINKAGE_REL,
) -> CentreModel:
    """Attribute-group centres: one centre/covariance per group label."""
    return _fit(feats, group_labels, sections, "agc", covariance_mode, shrinkage, shrinkage_rel)


def fit_dc(
    feats: np.ndarray,
    domains: np.ndarray,
    sections: np.ndarray,
    covariance_mode: str = "per_group",
    shrinkage: float | None = None,
    shrinkage_rel: float = DEFAULT_SHRINKAGE_REL,
) -> CentreModel:
    """Domain centres: one centre per domain (source=0, target=1) under a section."""
    try:
        labels = np.array([DOMAIN_INDEX[d] for d in domains])
    except KeyError as exc:
        raise ScoringError(f"unknown domain {exc.args[0]!r}") from None
    return _fit(feats, labels, sections, "dc", covariance_mode, shrinkage, shrinkage_rel)


def mahalanobis(feat: np.ndarray, centre: np.ndarray, solve) -> float:
    """sqrt((f - c)^T (Sigma + eps I)^{-1} (f - c)) via a Cholesky solve."""
    feat = np.asarray(feat, dtype=np.float64)
    centre = np.asarray(centre, dtype=np.float64)
    if feat.shape != centre.shape:
        raise ScoringError(f"dimension mismatch: {feat.shape} vs {centre.shape}")
    dev = feat - centre
    quad = float(dev @ cho_solve(solve, dev))
    return float(np.sqrt(max(quad, 0.0)))


def _score(feat: np.ndarray, model: CentreModel, section: int, clip_id: str) -> ScoreRecord:
    groups = model.groups_by_section.get(int(section))
    if not groups:
        raise ScoringError(f"section {section} not present in the {model.kind} model")
    best_score = np.inf
    best_label = -1
    for group in groups:  # ascending label: ties resolve to the lowest label
        distance = mahalanobis(feat, group.centre, group.solve)
        if distance < best_score:
            best_score = distance
            best_label = group.label
    return ScoreRecord(clip_id=clip_id, score=best_score, argmin_group=best_label)


def score_agc(feat: np.ndarray, model: CentreModel, section: int, clip_id: str = "") -> ScoreRecord:
    """Minimum Mahalanobis distance over the section's attribute-group centres."""
    if model.kind != "agc":
        raise ScoringError(f"expected an attribute-group-centre model, got {model.kind!r}")
    return _score(feat, model, section, clip_id)


def score_dc(feat: np.ndarray, model: CentreModel, section: int, clip_id: str = "") -> ScoreRecord:
    """Minimum Mahalanobis distance over the section's domain centres."""
    if model.kind != "dc":
        raise ScoringError(f"expected a domain-centre model, got {model.kind!r}")
    return _score(feat, model, section, clip_id)


# --- checkpoint (de)serialization -------------------------------------------


def centre_model_to_tensors(model: CentreModel, prefix: str) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for section, groups in model.groups_by_section.items():
        for group in groups:
            base = f"{prefix}/{section}/{group.label}"
            tensors[f"{base}/centre"] = group.centre
            tensors[f"{base}/cov"] = group.covariance
            tensors[f"{base}/stats"] = np.array([float(group.n_clips), group.shrink_eps])
    return tensors


def centre_model_from_tensors(
    tensors: dict[str, np.ndarray], prefix: str, kind: str, covariance_mode: str
) -> CentreModel:
    found: dict[int, dict[int, dict[str, np.ndarray]]] = {}
    marker = prefix + "/"
    for name, value in tensors.items():
        if not name.startswith(marker):
            continue
        _, section, label, part = name.rsplit("/", 3)
        found.setdefault(int(section), {}).setdefault(int(label), {})[part] = value
    if not found:
        raise ScoringError(f"no {prefix!r} tensors in checkpoint")
    groups_by_section = {}
    for section, per_label in found.items():
        groups = []
        for label in sorted(per_label):
            parts = per_label[label]
            cov = parts["cov"]
            n_clips, eps = parts["stats"]
            groups.append(
                GroupCentre(
                    label=label,
                    centre=parts["centre"],
                    covariance=cov,
                    shrink_eps=float(eps),
                    n_clips=int(n_clips),
                    solve=_factor(cov, float(eps)),
                )
            )
        groups_by_section[section] = tuple(groups)
    return CentreModel(kind=kind, covariance_mode=covariance_mode,
                       groups_by_section=groups_by_section)
