"""Versioned plain-text archive of identified and trained networks.

Layout::

    pdhp-archive 1
    [section]
    key = <type> <payload>

Types are ``int``, ``float``, ``bool``, ``str`` and ``array``. Arrays are
written as ``array <shape> : v1 v2 ...`` with every float at 17 significant
digits, which makes a save/load round trip bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .action import RandomizedController
from .critic import CriticModel
from .rbf import RbfNetwork
from .sysid import ForwardModel

MAGIC = "pdhp-archive"
VERSION = 1


class ArchiveError(ValueError):
    pass


def _fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def _encode(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "bool " + ("true" if value else "false")
    if isinstance(value, (int, np.integer)):
        return f"int {int(value)}"
    if isinstance(value, (float, np.floating)):
        return "float " + _fmt_float(value)
    if isinstance(value, str):
        if "\n" in value:
            raise ArchiveError("string values must be single-line")
        return "str " + value
    arr = np.asarray(value, dtype=float)
    shape = "x".join(str(d) for d in arr.shape) or "scalar"
    return f"array {shape} : " + " ".join(_fmt_float(v) for v in arr.ravel())


def _decode(text: str, where: str):
    kind, _, payload = text.partition(" ")
    try:
        if kind == "bool":
            if payload not in ("true", "false"):
                raise ValueError(payload)
            return payload == "true"
        if kind == "int":
            return int(payload)
        if kind == "float":
            return float(payload)
        if kind == "str":
            return payload
        if kind == "array":
            shape_text, _, values = payload.partition(" : ")
            shape = () if shape_text == "scalar" else tuple(int(d) for d in shape_text.split("x"))
            data = np.array([float(v) for v in values.split()], dtype=float)
            return data.reshape(shape)
    except ValueError as exc:
        raise ArchiveError(f"{where}: malformed {kind} value ({exc})") from None
    raise ArchiveError(f"{where}: unknown value type {kind!r}")


@dataclass
class ModelArchive:
    sections: dict[str, dict[str, object]] = field(default_factory=dict)

    def section(self, name: str) -> dict[str, object]:
        try:
            return self.sections[name]
        except KeyError:
            raise ArchiveError(f"archive has no section [{name}]") from None

    def has(self, name: str) -> bool:
        return name in self.sections

    def put(self, name: str, values: dict[str, object]) -> None:
        self.sections[name] = dict(values)

    def dumps(self) -> str:
        out = [f"{MAGIC} {VERSION}"]
        for name in sorted(self.sections):
            out.append(f"[{name}]")
            for key in sorted(self.sections[name]):
                out.append(f"{key} = {_encode(self.sections[name][key])}")
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ModelArchive":
        lines = text.splitlines()
        if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
            raise ArchiveError(f"not a version-{VERSION} archive")
        arc = cls()
        current = None
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                arc.sections[current] = {}
                continue
            if current is None or " = " not in line:
                raise ArchiveError(f"line {lineno}: unexpected content")
            key, value = line.split(" = ", 1)
            arc.sections[current][key] = _decode(value, f"line {lineno}")
        return arc

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), newline="\n")

    @classmethod
    def load(cls, path) -> "ModelArchive":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ArchiveError(f"cannot read archive {path}: {exc.strerror}") from exc
        return cls.loads(text)


def net_to_fields(net: RbfNetwork, prefix: str) -> dict[str, object]:
    return {
        f"{prefix}centers": net.centers,
        f"{prefix}precisions": net.width_precisions,
        f"{prefix}weights": net.weights,
        f"{prefix}bias": bool(net.has_bias),
    }


def net_from_fields(values: dict, prefix: str) -> RbfNetwork:
    try:
        return RbfNetwork(np.asarray(values[f"{prefix}centers"]),
                          np.asarray(values[f"{prefix}precisions"]),
                          np.asarray(values[f"{prefix}weights"]),
                          bool(values[f"{prefix}bias"]))
    except KeyError as exc:
        raise ArchiveError(f"missing field {exc.args[0]}") from None


def put_forward_model(arc: ModelArchive, model: ForwardModel) -> None:
    values = net_to_fields(model.h_net, "h_") | net_to_fields(model.g_net, "g_")
    values["sigma"] = model.sigma
    if model.residual_covariance is not None:
        values["residual_covariance"] = model.residual_covariance
    arc.put("forward_model", values)


def get_forward_model(arc: ModelArchive) -> ForwardModel:
    v = arc.section("forward_model")
    return ForwardModel(net_from_fields(v, "h_"), net_from_fields(v, "g_"),
                        np.asarray(v["sigma"]), v.get("residual_covariance"))


def put_trained(arc: ModelArchive, method: str, controller: RandomizedController,
                critic: CriticModel, extra: dict | None = None) -> None:
    values = net_to_fields(controller.net, "action_") | net_to_fields(critic.net, "critic_")
    values["gamma"] = controller.gamma
    values.update(extra or {})
    arc.put(f"trained.{method}", values)


def get_trained(arc: ModelArchive, method: str) -> tuple[RandomizedController, CriticModel]:
    name = f"trained.{method}"
    if not arc.has(name):
        raise ArchiveError(f"archive holds no trained {method!r} controller")
    v = arc.section(name)
    return (RandomizedController(net_from_fields(v, "action_"), np.asarray(v["gamma"])),
            CriticModel(net_from_fields(v, "critic_")))
