"""Run configuration: INI-style text, presets, validation and serialization.

Grammar (UTF-8, ``key = value`` lines, ``#`` or ``;`` comments)::

    preset = mandel                  # optional, before any section

    [meshes]
    flow = box 12 12 3 50 50 12.5    # or a path to a tetmesh v1 file
    mech = meshes/mech.tet
    plane_strain = z                 # optional: zero displacement along an axis

    [material]
    E = 5.94e9
    nu = 0.2
    b = 1.0
    M = 1.65e10                      # or phi0, c_f and K_s
    k = 9.869e-14
    mu = 1e-3
    rho_f0 = 1000
    rho_s = 2650
    gravity = 0 0 0

    [coupling]
    dt = 10                          # constant step with n_steps,
    n_steps = 40
    schedule = 1 2 4 8               # or an explicit list,
    ramp = 0.5 500 40 10000          # or dt_first dt_last n_ramp [t_end]
    fs_tol = 1e-6
    fs_maxiter = 50
    p0 = 0

    [bc.ymax.flow]
    type = fixed_pressure            # or no_flow
    value = 0

    [bc.xmax.mech]
    fixed_x = 0                      # any of fixed_x, fixed_y, fixed_z
    traction = 0 0 -1e6
    plate = x -7.5e9                 # rigid plate: axis and total force (N)

    [probes]
    corner = 50 0 6.25

    [output]
    directory = out
    cadence = 1                      # VTK every n steps, 0 for none
    formats = csv vtk

Preset values are defaults; explicit entries override them key by key.
"""
from __future__ import annotations

import configparser
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .flow import FIXED_PRESSURE, NO_FLOW, FlowBcSpec
from .material import PoroelasticMaterial
from .mechanics import AXES, MechBcSpec
from .mesh import box_tet_mesh, read_mesh

logger = logging.getLogger(__name__)

TOP = "run"
MATERIAL_KEYS = ("E", "nu", "b", "M", "phi0", "c_f", "K_s", "k", "mu", "rho_f0", "rho_s", "gravity")
MATERIAL_DEFAULTS = {"k": "1.0", "mu": "1.0", "rho_f0": "1000.0", "rho_s": "2650.0",
                     "gravity": "0.0 0.0 0.0"}
COUPLING_KEYS = ("dt", "schedule", "ramp", "n_steps", "fs_tol", "fs_maxiter", "p0")
COUPLING_DEFAULTS = {"fs_tol": "1e-06", "fs_maxiter": "50", "p0": "0.0"}
OUTPUT_DEFAULTS = {"directory": "out", "cadence": "0", "formats": "csv"}
FORMATS = ("csv", "vtk")


def _num(x):
    return repr(float(x))


def _vec(values):
    return " ".join(_num(v) for v in values)


# ----------------------------------------------------------------------------
# presets

def mandel_preset():
    """Raw sections of the default two-grid Mandel benchmark (fine flow mesh)."""
    from .mandel import MandelSetup, default_material, derive_constants, mandel_schedule

    setup = MandelSetup()
    mat = default_material()
    _, _, c = derive_constants(mat)
    tau = setup.b_y**2 / c
    n_total = len(mandel_schedule(setup, c))
    dims = f"{_num(setup.a_x)} {_num(setup.b_y)} {_num(setup.t_z)}"
    return {
        "meshes": {
            "flow": "box {} {} {} ".format(*setup.fine) + dims,
            "mech": "box {} {} {} ".format(*setup.coarse) + dims,
            "plane_strain": "z",
        },
        "material": {name: _num(getattr(mat, name)) for name in ("E", "nu", "b", "M", "phi0", "k",
                                                                   "mu", "rho_f0", "rho_s")},
        "coupling": {
            "ramp": f"{_num(setup.dt_first_factor * tau)} {_num(setup.dt_last_factor * tau)} "
                    f"{setup.n_ramp} {_num(setup.t_end_factor * tau)}",
            "n_steps": str(n_total),
            "fs_tol": _num(setup.fs_tol),
            "fs_maxiter": str(setup.fs_maxiter),
        },
        "bc.ymax.flow": {"type": FIXED_PRESSURE, "value": "0.0"},
        "bc.xmin.mech": {"fixed_x": "0.0"},
        "bc.ymin.mech": {"fixed_y": "0.0"},
        "bc.xmax.mech": {"plate": f"x {_num(-setup.force * setup.t_z)}"},
        "probes": {"corner": _vec([setup.a_x, 0.0, 0.5 * setup.t_z])},
        "output": {"directory": "mandel_out", "cadence": "0", "formats": "csv"},
    }


PRESETS = {"mandel": mandel_preset}


# ----------------------------------------------------------------------------
# config object

@dataclass
class MeshSpec:
    """A box mesh (``box nx ny nz lx ly lz``) or a tetmesh v1 file path."""

    text: str
    base_dir: str = None

    @property
    def is_box(self):
        return self.text.split()[0] == "box"

    def box_args(self):
        parts = self.text.split()
        if len(parts) != 7:
            raise ValidationError("meshes", "box spec is 'box nx ny nz lx ly lz'")
        try:
            n = [int(v) for v in parts[1:4]]
            length = [float(v) for v in parts[4:7]]
        except ValueError as exc:
            raise ValidationError("meshes", f"bad box spec {self.text!r}") from exc
        if min(n) < 1 or min(length) <= 0:
            raise ValidationError("meshes", "box counts and lengths must be positive")
        return n, length

    def path(self):
        if self.base_dir and not os.path.isabs(self.text):
            return os.path.join(self.base_dir, self.text)
        return self.text

    def build(self):
        if self.is_box:
            n, length = self.box_args()
            return box_tet_mesh(*n, *length)
        try:
            return read_mesh(self.path())
        except FileNotFoundError as exc:
            raise ValidationError("meshes", f"mesh file not found: {self.path()}") from exc

    def canonical(self):
        if self.is_box:
            n, length = self.box_args()
            return "box {} {} {} ".format(*n) + _vec(length)
        return self.text


@dataclass
class RunConfig:
    mesh_flow: MeshSpec
    mesh_mech: MeshSpec
    material: PoroelasticMaterial
    material_entries: dict
    schedule: np.ndarray
    coupling_entries: dict
    fs_tol: float
    fs_maxiter: int
    p0: float
    flow_bc: FlowBcSpec
    mech_bc: MechBcSpec
    mech_entries: dict
    probes: dict
    output_dir: str
    cadence: int
    formats: tuple
    plane_strain: str = None
    preset: str = None
    meshes: tuple = field(default=None, repr=False, compare=False)

    def load_meshes(self):
        if self.meshes is None:
            self.meshes = (self.mesh_flow.build(), self.mesh_mech.build())
        return self.meshes

    def coupling_config(self):
        from .coupling import CouplingConfig

        return CouplingConfig(dt=self.schedule, fs_tol=self.fs_tol, fs_maxiter=self.fs_maxiter)


# ----------------------------------------------------------------------------
# parsing

def _read_sections(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       strict=True, empty_lines_in_values=False)
    parser.optionxform = str  # keys are case sensitive (E, M, K_s)
    try:
        parser.read_string(f"[{TOP}]\n" + text)
    except configparser.MissingSectionHeaderError as exc:  # pragma: no cover - header is prepended
        raise ParseError(exc.lineno - 1, "missing section header") from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(lineno - 1, f"cannot parse {line.strip()!r}") from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError((exc.lineno or 1) - 1, str(exc).split(":")[-1].strip()) from exc
    return {name: dict(parser[name]) for name in parser.sections()}


def _floats(fieldname, value, count=None):
    try:
        out = [float(v) for v in value.replace(",", " ").split()]
    except ValueError as exc:
        raise ValidationError(fieldname, f"expected numbers, got {value!r}") from exc
    if count is not None and len(out) != count:
        raise ValidationError(fieldname, f"expected {count} numbers, got {len(out)}")
    if not out:
        raise ValidationError(fieldname, "empty value")
    return out


def _int(fieldname, value):
    try:
        return int(value)
    except ValueError as exc:
        raise ValidationError(fieldname, f"expected an integer, got {value!r}") from exc


def _unknown(section, entries, allowed):
    extra = sorted(set(entries) - set(allowed))
    if extra:
        raise ValidationError(f"{section}.{extra[0]}", "unknown key")


# (trigger keys, dropped keys): giving any trigger drops the preset's dropped keys,
# so alternatives never mix (n_steps only truncates the preset's own timing)
_EXCLUSIVE = {
    "coupling": (("dt", "schedule", "ramp"), ("dt", "schedule", "ramp", "n_steps")),
    "material": (("M", "c_f", "K_s"), ("M", "c_f", "K_s")),
}


def _merge(base, over):
    """Preset sections updated by explicit ones; bc sections replace wholesale."""
    out = {name: dict(entries) for name, entries in base.items()}
    for name, entries in over.items():
        if name.startswith("bc."):
            out[name] = dict(entries)
            continue
        target = out.setdefault(name, {})
        triggers, dropped = _EXCLUSIVE.get(name, ((), ()))
        if any(k in entries for k in triggers):
            for k in dropped:
                target.pop(k, None)
        target.update(entries)
    return out


def parse_config(text, base_dir=None, check_meshes=True):
    """Parse, expand presets, materialize defaults and validate.

    Raises:
        ParseError: malformed text (line numbers refer to ``text``).
        ValidationError: bad values, unknown keys or tags, material conflicts.
    """
    raw = _read_sections(text)
    top = raw.pop(TOP, {})
    _unknown(TOP, top, ("preset",))
    preset = top.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ValidationError("preset", f"unknown preset {preset!r} (known: {', '.join(PRESETS)})")
        raw = _merge(PRESETS[preset](), raw)

    for name in raw:
        if name in ("meshes", "material", "coupling", "probes", "output"):
            continue
        parts = name.split(".")
        if not (len(parts) == 3 and parts[0] == "bc" and parts[2] in ("flow", "mech") and parts[1]):
            raise ValidationError(name, "unknown section")

    # meshes
    meshes = raw.get("meshes", {})
    _unknown("meshes", meshes, ("flow", "mech", "plane_strain"))
    for key in ("flow", "mech"):
        if not meshes.get(key, "").strip():
            raise ValidationError(f"meshes.{key}", "required")
    mesh_flow = MeshSpec(meshes["flow"].strip(), base_dir)
    mesh_mech = MeshSpec(meshes["mech"].strip(), base_dir)
    for spec in (mesh_flow, mesh_mech):
        if spec.is_box:
            spec.box_args()
    plane_strain = meshes.get("plane_strain") or None
    if plane_strain is not None and plane_strain not in AXES:
        raise ValidationError("meshes.plane_strain", "must be x, y or z")

    # material
    mat_raw = dict(MATERIAL_DEFAULTS)
    mat_raw.update(raw.get("material", {}))
    _unknown("material", mat_raw, MATERIAL_KEYS)
    kwargs = {}
    for key, value in mat_raw.items():
        if key == "gravity":
            kwargs[key] = tuple(_floats("material.gravity", value, 3))
        else:
            kwargs[key] = _floats(f"material.{key}", value, 1)[0]
    for key in ("E", "nu"):
        if key not in kwargs:
            raise ValidationError(f"material.{key}", "required")
    material = PoroelasticMaterial(**kwargs)
    material_entries = {k: (_vec(v) if k == "gravity" else _num(v)) for k, v in kwargs.items()}

    # coupling
    coup = dict(COUPLING_DEFAULTS)
    coup.update(raw.get("coupling", {}))
    _unknown("coupling", coup, COUPLING_KEYS)
    given = [k for k in ("dt", "schedule", "ramp") if k in coup]
    if len(given) != 1:
        raise ValidationError("coupling.dt", "give exactly one of dt, schedule or ramp")
    n_steps = _int("coupling.n_steps", coup["n_steps"]) if "n_steps" in coup else None
    if n_steps is not None and n_steps < 1:
        raise ValidationError("coupling.n_steps", "must be >= 1")
    if "dt" in coup:
        schedule = np.full(n_steps or 1, _floats("coupling.dt", coup["dt"], 1)[0])
    elif "schedule" in coup:
        schedule = np.array(_floats("coupling.schedule", coup["schedule"]))
    else:
        from .mandel import ramp_schedule

        vals = _floats("coupling.ramp", coup["ramp"])
        if len(vals) not in (3, 4) or vals[2] != int(vals[2]) or vals[2] < 1:
            raise ValidationError("coupling.ramp", "expected dt_first dt_last n_ramp [t_end]")
        if vals[0] <= 0 or vals[1] <= 0:
            raise ValidationError("coupling.ramp", "steps must be positive")
        schedule = ramp_schedule(vals[0], vals[1], int(vals[2]), vals[3] if len(vals) == 4 else None)
    if n_steps is not None:
        if n_steps > len(schedule):
            raise ValidationError("coupling.n_steps", f"schedule has only {len(schedule)} steps")
        schedule = schedule[:n_steps]
    if np.any(schedule <= 0):
        raise ValidationError("coupling.dt", "time steps must be positive")
    fs_tol = _floats("coupling.fs_tol", coup["fs_tol"], 1)[0]
    fs_maxiter = _int("coupling.fs_maxiter", coup["fs_maxiter"])
    if not fs_tol > 0:
        raise ValidationError("coupling.fs_tol", "must be positive")
    if fs_maxiter < 1:
        raise ValidationError("coupling.fs_maxiter", "must be >= 1")
    p0 = _floats("coupling.p0", coup["p0"], 1)[0]
    coupling_entries = {}
    for key in given + ["n_steps"]:
        if key in coup:
            if key == "n_steps":
                coupling_entries[key] = str(n_steps)
            elif key == "ramp":
                vals = _floats("coupling.ramp", coup["ramp"])
                coupling_entries[key] = " ".join(
                    str(int(v)) if i == 2 else _num(v) for i, v in enumerate(vals))
            else:
                coupling_entries[key] = _vec(_floats(f"coupling.{key}", coup[key]))
    coupling_entries.update(fs_tol=_num(fs_tol), fs_maxiter=str(fs_maxiter), p0=_num(p0))

    # boundary conditions
    flow_cond, fixed, traction, plate, mech_entries = {}, {}, {}, {}, {}
    for name, entries in sorted(raw.items()):
        if not name.startswith("bc."):
            continue
        _, tag, kind = name.split(".")
        if kind == "flow":
            _unknown(name, entries, ("type", "value"))
            btype = entries.get("type", NO_FLOW)
            if btype == FIXED_PRESSURE:
                if "value" not in entries:
                    raise ValidationError(f"{name}.value", "required for fixed_pressure")
                flow_cond[tag] = (FIXED_PRESSURE, _floats(f"{name}.value", entries["value"], 1)[0])
            elif btype == NO_FLOW:
                if "value" in entries:
                    raise ValidationError(f"{name}.value", "not allowed for no_flow")
                flow_cond[tag] = (NO_FLOW,)
            else:
                raise ValidationError(f"{name}.type", f"unknown flow condition {btype!r}")
        else:
            _unknown(name, entries, ("fixed_x", "fixed_y", "fixed_z", "traction", "plate"))
            norm = {}
            comps = {}
            for axis in "xyz":
                key = f"fixed_{axis}"
                if key in entries:
                    comps[axis] = _floats(f"{name}.{key}", entries[key], 1)[0]
                    norm[key] = _num(comps[axis])
            if comps:
                fixed[tag] = comps
            if "traction" in entries:
                traction[tag] = tuple(_floats(f"{name}.traction", entries["traction"], 3))
                norm["traction"] = _vec(traction[tag])
            if "plate" in entries:
                parts = entries["plate"].split()
                if len(parts) != 2 or parts[0] not in AXES:
                    raise ValidationError(f"{name}.plate", "expected '<axis> <force>'")
                plate[tag] = (parts[0], _floats(f"{name}.plate", parts[1], 1)[0])
                norm["plate"] = f"{parts[0]} {_num(plate[tag][1])}"
            if not norm:
                raise ValidationError(name, "empty mechanical condition")
            mech_entries[tag] = norm
    flow_bc = FlowBcSpec(flow_cond)
    mech_bc = MechBcSpec(fixed=fixed, traction=traction, rigid_plate=plate, plane_strain=plane_strain)

    # probes
    probes = {}
    for name, value in raw.get("probes", {}).items():
        probes[name] = np.array(_floats(f"probes.{name}", value, 3))

    # output
    out = dict(OUTPUT_DEFAULTS)
    out.update(raw.get("output", {}))
    _unknown("output", out, ("directory", "cadence", "formats"))
    cadence = _int("output.cadence", out["cadence"])
    if cadence < 0:
        raise ValidationError("output.cadence", "must be >= 0")
    formats = tuple(out["formats"].replace(",", " ").split())
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValidationError("output.formats", f"unknown format {fmt!r}")

    cfg = RunConfig(
        mesh_flow=mesh_flow, mesh_mech=mesh_mech, material=material,
        material_entries=material_entries, schedule=schedule, coupling_entries=coupling_entries,
        fs_tol=fs_tol, fs_maxiter=fs_maxiter, p0=p0, flow_bc=flow_bc, mech_bc=mech_bc,
        mech_entries=mech_entries, probes=probes, output_dir=out["directory"], cadence=cadence,
        formats=formats, plane_strain=plane_strain, preset=preset,
    )
    if check_meshes:
        validate_against_meshes(cfg)
    logger.info("configuration:\n%s", serialize_config(cfg))
    return cfg


def validate_against_meshes(cfg):
    """Every referenced tag exists and every probe lies in the flow mesh."""
    flow, mech = cfg.load_meshes()
    flow_tags, mech_tags = set(flow.boundary_tags), set(mech.boundary_tags)
    for tag in cfg.flow_bc.conditions:
        if tag not in flow_tags:
            raise ValidationError(f"bc.{tag}.flow", "tag not present in the flow mesh")
    cfg.mech_bc.validate(mech)
    for tag in cfg.mech_bc.tags():
        if tag not in mech_tags:
            raise ValidationError(f"bc.{tag}.mech", "tag not present in the mechanics mesh")
    from .errors import ProbeOutsideMesh

    for name, point in cfg.probes.items():
        try:
            flow.locate(point)
        except ProbeOutsideMesh as exc:
            raise ValidationError(f"probes.{name}", "point outside the flow mesh") from exc


def serialize_config(cfg):
    """Materialized config text; parsing it back gives the same configuration."""
    lines = []
    if cfg.preset:
        lines += [f"preset = {cfg.preset}", ""]

    def section(name, entries):
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in entries.items())
        lines.append("")

    meshes = {"flow": cfg.mesh_flow.canonical(), "mech": cfg.mesh_mech.canonical()}
    if cfg.plane_strain:
        meshes["plane_strain"] = cfg.plane_strain
    section("meshes", meshes)
    section("material", {k: cfg.material_entries[k] for k in MATERIAL_KEYS if k in cfg.material_entries})
    section("coupling", {k: cfg.coupling_entries[k] for k in COUPLING_KEYS if k in cfg.coupling_entries})
    for tag in sorted(cfg.flow_bc.conditions):
        cond = cfg.flow_bc.conditions[tag]
        entries = {"type": cond[0]}
        if cond[0] == FIXED_PRESSURE:
            entries["value"] = _num(cond[1])
        section(f"bc.{tag}.flow", entries)
    for tag in sorted(cfg.mech_entries):
        section(f"bc.{tag}.mech", cfg.mech_entries[tag])
    section("probes", {k: _vec(v) for k, v in cfg.probes.items()})
    section("output", {"directory": cfg.output_dir, "cadence": str(cfg.cadence),
                       "formats": " ".join(cfg.formats)})
    return "\n".join(lines)
