"""Planar articulated robot description and its JSON form."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import cached_property
from typing import List, Literal, Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field

from . import inertia as _inertia

DEFAULT_GRAVITY = (0.0, -9.81)


class ModelError(ValueError):
    """Raised for model documents that fail parsing or validation."""


# --------------------------------------------------------------------------
# document schema
# --------------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class JointDoc(_Strict):
    type: Literal["revolute", "prismatic"]
    axis: List[float] = Field(default_factory=list)


class OffsetDoc(_Strict):
    xy: List[float] = Field(default_factory=lambda: [0.0, 0.0], min_length=2, max_length=2)
    angle: float = 0.0


class InertiaDoc(_Strict):
    m: float
    hx: float = 0.0
    hy: float = 0.0
    Iz: float


class LinkDoc(_Strict):
    name: str
    parent: int
    joint: Optional[JointDoc] = None
    offset: OffsetDoc = Field(default_factory=OffsetDoc)
    inertia: InertiaDoc


class ContactDoc(_Strict):
    link: int
    point: List[float] = Field(min_length=2, max_length=2)
    mu: float


class ModelDoc(_Strict):
    links: List[LinkDoc] = Field(min_length=1)
    contacts: List[ContactDoc] = Field(default_factory=list)
    gravity: List[float] = Field(default_factory=lambda: list(DEFAULT_GRAVITY),
                                 min_length=2, max_length=2)
    actuated: Optional[List[bool]] = None


# --------------------------------------------------------------------------
# runtime types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    name: str
    parent: int
    joint: str                 # "floating" for the base, else revolute/prismatic
    axis: np.ndarray           # revolute: [sign]; prismatic: unit 2-vector
    offset_xy: np.ndarray
    offset_angle: float
    pi2: np.ndarray            # [m, hx, hy, Iz] about the link-frame origin


@dataclass(frozen=True)
class Contact:
    link: int
    point: np.ndarray
    mu: float


@dataclass(frozen=True)
class PlanarModel:
    links: tuple
    contacts: tuple
    gravity: np.ndarray
    actuated: tuple

    @cached_property
    def chain(self):
        from .kinematics import build_chain
        return build_chain(self)

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_joints(self):
        return len(self.links) - 1

    @property
    def nv(self):
        return 3 + self.n_joints

    @property
    def n_contacts(self):
        return len(self.contacts)

    @property
    def nu(self):
        return int(sum(self.actuated))

    @property
    def total_mass(self):
        return float(sum(link.pi2[0] for link in self.links))

    def actuation_matrix(self):
        """``B`` mapping actuator inputs to generalized forces."""
        B = np.zeros((self.nv, self.nu))
        col = 0
        for j, act in enumerate(self.actuated):
            if act:
                B[3 + j, col] = 1.0
                col += 1
        return B

    def pi_vector(self):
        """Stacked ``pi2`` of all links (length ``4 L``)."""
        return np.concatenate([link.pi2 for link in self.links])

    def with_pi(self, pis):
        """Copy with every link's ``pi2`` replaced (``pis``: L x 4)."""
        pis = np.asarray(pis, dtype=float).reshape(self.n_links, 4)
        links = tuple(dataclasses.replace(link, pi2=pis[i].copy())
                      for i, link in enumerate(self.links))
        return dataclasses.replace(self, links=links)

    def with_friction(self, mu):
        contacts = tuple(dataclasses.replace(c, mu=float(mu)) for c in self.contacts)
        return dataclasses.replace(self, contacts=contacts)


def _error(path, msg):
    return ModelError(f"{path}: {msg}")


def _loc_to_path(loc):
    path = "$"
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def model_from_dict(data) -> PlanarModel:
    try:
        doc = ModelDoc.model_validate(data)
    except pydantic.ValidationError as exc:
        first = exc.errors()[0]
        raise _error(_loc_to_path(first["loc"]), first["msg"]) from None

    links = []
    for i, ld in enumerate(doc.links):
        path = f"$.links[{i}]"
        if i == 0:
            if ld.parent != -1:
                raise _error(f"{path}.parent", "first link must be the base (parent -1)")
            if ld.joint is not None:
                raise _error(f"{path}.joint", "the base is floating and takes no joint")
            joint, axis = "floating", np.zeros(0)
        else:
            if not (0 <= ld.parent < i):
                raise _error(f"{path}.parent",
                             f"parent index {ld.parent} must satisfy 0 <= parent < {i}")
            if ld.joint is None:
                raise _error(f"{path}.joint", "non-base links need a joint")
            joint = ld.joint.type
            if joint == "revolute":
                axis = np.array(ld.joint.axis or [1.0])
                if axis.shape != (1,) or abs(abs(axis[0]) - 1.0) > 1e-12:
                    raise _error(f"{path}.joint.axis", "revolute axis must be [1] or [-1]")
            else:
                axis = np.array(ld.joint.axis, dtype=float)
                if axis.shape != (2,) or np.linalg.norm(axis) == 0:
                    raise _error(f"{path}.joint.axis", "prismatic axis must be a nonzero 2-vector")
                norm = np.linalg.norm(axis)
                if abs(norm - 1.0) > 1e-14:      # leave unit axes bit-identical
                    axis = axis / norm
        pi2 = np.array([ld.inertia.m, ld.inertia.hx, ld.inertia.hy, ld.inertia.Iz])
        if not np.all(np.isfinite(pi2)):
            raise _error(f"{path}.inertia", "non-finite inertia")
        ok, _ = _inertia.is_physically_consistent(pi2)
        if not ok:
            raise _error(f"{path}.inertia",
                         f"inertia of link '{ld.name}' is not physically consistent")
        links.append(Link(ld.name, ld.parent, joint, axis,
                          np.array(ld.offset.xy, dtype=float), float(ld.offset.angle), pi2))

    contacts = []
    for i, cd in enumerate(doc.contacts):
        path = f"$.contacts[{i}]"
        if not (0 <= cd.link < len(links)):
            raise _error(f"{path}.link", f"link index {cd.link} out of range")
        if not cd.mu > 0:
            raise _error(f"{path}.mu", "friction coefficient must be positive")
        contacts.append(Contact(cd.link, np.array(cd.point, dtype=float), float(cd.mu)))

    n = len(links) - 1
    actuated = doc.actuated if doc.actuated is not None else [True] * n
    if len(actuated) != n:
        raise _error("$.actuated", f"expected {n} entries, got {len(actuated)}")

    return PlanarModel(tuple(links), tuple(contacts),
                       np.array(doc.gravity, dtype=float), tuple(bool(a) for a in actuated))


def load_model(document: str) -> PlanarModel:
    """Parse and validate a JSON model document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelError(f"$: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(data)


def load_model_file(path) -> PlanarModel:
    with open(path) as fh:
        return load_model(fh.read())


def model_to_dict(model: PlanarModel) -> dict:
    links = []
    for link in model.links:
        entry = {"name": link.name, "parent": link.parent}
        if link.joint != "floating":
            entry["joint"] = {"type": link.joint, "axis": [float(a) for a in link.axis]}
        entry["offset"] = {"xy": [float(c) for c in link.offset_xy], "angle": link.offset_angle}
        m, hx, hy, iz = (float(c) for c in link.pi2)
        entry["inertia"] = {"m": m, "hx": hx, "hy": hy, "Iz": iz}
        links.append(entry)
    return {
        "links": links,
        "contacts": [{"link": c.link, "point": [float(p) for p in c.point], "mu": c.mu}
                     for c in model.contacts],
        "gravity": [float(g) for g in model.gravity],
        "actuated": list(model.actuated),
    }


def save_model(model: PlanarModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def models_equal(a: PlanarModel, b: PlanarModel) -> bool:
    """Field-by-field equality."""
    return model_to_dict(a) == model_to_dict(b)


def link_theta(model: PlanarModel, link: int, aniso=0.0, s12=0.0):
    """A log-Cholesky vector reproducing the link's current inertia."""
    return _inertia.pi_to_theta_2d(model.links[link].pi2, aniso=aniso, s12=s12)


def set_link_theta(model: PlanarModel, link: int, theta2) -> PlanarModel:
    """Copy of ``model`` with ``link``'s inertia set from a log-Cholesky vector."""
    if not (0 <= link < model.n_links):
        raise IndexError(f"link index {link} out of range for {model.n_links} links")
    pi2 = _inertia.theta_to_pi_2d(theta2)
    links = list(model.links)
    links[link] = dataclasses.replace(links[link], pi2=pi2)
    return dataclasses.replace(model, links=tuple(links))
