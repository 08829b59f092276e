"""URDF export/import for interactive scenes.

Layout: a massless root link; the background and each object's inner box
attach with fixed joints; each movable part gets its own link whose frame
sits at the refined joint origin (axes parallel to world), so the URDF
joint axis equals the world-frame axis directly and the part mesh is
offset by -origin inside its link. Limits are [0, range]. Mass and inertia
are unit placeholders (kinematics only).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .articulate import PRISMATIC, Articulation
from .assemble import InteractiveScene
from .geom import Se3Pose, unit
from .meshio import save_obj


class UrdfError(ValueError):
    """Malformed or unsupported URDF content."""


def _f(x: float) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return " ".join(_f(x) for x in v)


_INERTIAL = (
    '    <inertial>\n'
    '      <mass value="1.0"/>\n'
    '      <origin xyz="0 0 0" rpy="0 0 0"/>\n'
    '      <inertia ixx="1.0" ixy="0" ixz="0" iyy="1.0" iyz="0" izz="1.0"/>\n'
    '    </inertial>\n'
)


def _link(name: str, mesh_file: str | None = None, origin=None) -> str:
    lines = [f'  <link name="{name}">\n']
    lines.append(_INERTIAL)
    if mesh_file is not None:
        o = _vec(origin) if origin is not None else "0 0 0"
        for tag in ("visual", "collision"):
            lines.append(
                f'    <{tag}>\n'
                f'      <origin xyz="{o}" rpy="0 0 0"/>\n'
                f'      <geometry>\n'
                f'        <mesh filename="{mesh_file}"/>\n'
                f'      </geometry>\n'
                f'    </{tag}>\n')
    lines.append('  </link>\n')
    return "".join(lines)


def _fixed_joint(name: str, parent: str, child: str) -> str:
    return (f'  <joint name="{name}" type="fixed">\n'
            f'    <origin xyz="0 0 0" rpy="0 0 0"/>\n'
            f'    <parent link="{parent}"/>\n'
            f'    <child link="{child}"/>\n'
            f'  </joint>\n')


def export_urdf(scene: InteractiveScene, out_dir: str | Path,
                textured: dict | None = None, robot_name: str = "scene") -> Path:
    """Write scene.urdf plus meshes/*.obj assets; returns the URDF path.

    `textured` optionally maps component names ("background", "<id>_part",
    "<id>_box") to TexturedMesh results; textured components are written
    with UVs, an MTL, and a PNG.
    """
    out = Path(out_dir)
    meshes = out / "meshes"
    meshes.mkdir(parents=True, exist_ok=True)
    textured = textured or {}

    def write_component(name: str, mesh) -> str:
        rel = f"meshes/{name}.obj"
        baked = textured.get(name)
        if baked is not None:
            png = f"{name}.png"
            _write_texture_png(baked.texture, meshes / png)
            save_obj(baked.mesh, meshes / f"{name}.obj", uvs=baked.uvs, texture_png=png)
        else:
            save_obj(mesh, meshes / f"{name}.obj")
        return rel

    parts = [f'<?xml version="1.0"?>\n<robot name="{robot_name}">\n']
    parts.append(_link("root"))
    bg_file = write_component("background", scene.background)
    parts.append(_link("background", bg_file))
    parts.append(_fixed_joint("root_to_background", "root", "background"))

    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        oid = obj.object_id
        art = obj.part.articulation
        box_file = write_component(f"{oid}_box", obj.inner_box.mesh)
        parts.append(_link(f"{oid}_base", box_file))
        parts.append(_fixed_joint(f"root_to_{oid}_base", "root", f"{oid}_base"))
        part_file = write_component(f"{oid}_part", obj.part.candidate.part_mesh)
        parts.append(_link(f"{oid}_part", part_file, origin=-art.origin))
        jt = "prismatic" if art.joint_type == PRISMATIC else "revolute"
        parts.append(
            f'  <joint name="{oid}_joint" type="{jt}">\n'
            f'    <origin xyz="{_vec(art.origin)}" rpy="0 0 0"/>\n'
            f'    <parent link="{oid}_base"/>\n'
            f'    <child link="{oid}_part"/>\n'
            f'    <axis xyz="{_vec(art.axis)}"/>\n'
            f'    <limit lower="0" upper="{_f(art.range)}" effort="10.0" velocity="1.0"/>\n'
            f'  </joint>\n')
    parts.append('</robot>\n')
    urdf_path = out / "scene.urdf"
    urdf_path.write_text("".join(parts))
    return urdf_path


def _write_texture_png(texture: np.ndarray, path: Path) -> None:
    from PIL import Image

    arr = np.clip(np.round(texture * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr[::-1]).save(path)  # flip: OBJ vt origin is bottom-left


@dataclass
class ImportedJoint:
    name: str
    joint_type: str
    origin_world: np.ndarray
    axis_world: np.ndarray
    range: float
    child_link: str
    mesh_file: str | None
    mesh_to_world: Se3Pose  # link pose composed with the visual origin

    def articulation(self) -> Articulation:
        return Articulation(self.joint_type, self.origin_world, self.axis_world,
                            self.range)


@dataclass
class ImportedScene:
    robot_name: str
    links: dict[str, str | None]       # link name -> mesh file (relative)
    joints: list[ImportedJoint]        # movable joints only
    base_dir: Path


def _rpy_matrix(r: float, p: float, y: float) -> np.ndarray:
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def import_urdf(path: str | Path) -> ImportedScene:
    """Parse a URDF into world-frame joints; geometry is referenced, not loaded.

    Raises UrdfError on malformed XML, unsupported joint types, a cyclic
    joint graph, or anything but exactly one root link.
    """
    path = Path(path)
    try:
        tree = ET.parse(path)
    except ET.ParseError as e:
        raise UrdfError(f"malformed XML: {e}")
    robot = tree.getroot()
    if robot.tag != "robot":
        raise UrdfError("root element is not <robot>")

    links: dict[str, str | None] = {}
    visual_origin: dict[str, Se3Pose] = {}
    for link in robot.findall("link"):
        name = link.get("name")
        mesh = link.find("./visual/geometry/mesh")
        links[name] = mesh.get("filename") if mesh is not None else None
        vo = link.find("./visual/origin")
        xyz = np.zeros(3)
        rpy = np.zeros(3)
        if vo is not None:
            if vo.get("xyz"):
                xyz = np.array([float(v) for v in vo.get("xyz").split()])
            if vo.get("rpy"):
                rpy = np.array([float(v) for v in vo.get("rpy").split()])
        visual_origin[name] = Se3Pose(_rpy_matrix(*rpy), xyz)

    joints = []
    children = set()
    parent_of: dict[str, tuple[str, Se3Pose, dict]] = {}
    for joint in robot.findall("joint"):
        jtype = joint.get("type")
        if jtype not in ("fixed", "prismatic", "revolute"):
            raise UrdfError(f"unsupported joint type {jtype!r}")
        parent = joint.find("parent").get("link")
        child = joint.find("child").get("link")
        origin = joint.find("origin")
        xyz = np.zeros(3)
        rpy = np.zeros(3)
        if origin is not None:
            if origin.get("xyz"):
                xyz = np.array([float(v) for v in origin.get("xyz").split()])
            if origin.get("rpy"):
                rpy = np.array([float(v) for v in origin.get("rpy").split()])
        if parent not in links or child not in links:
            raise UrdfError(f"joint {joint.get('name')} references unknown link")
        if child in children:
            raise UrdfError(f"link {child} has two parent joints")
        children.add(child)
        meta = {"name": joint.get("name"), "type": jtype}
        if jtype != "fixed":
            axis_el = joint.find("axis")
            meta["axis"] = np.array([float(v) for v in axis_el.get("xyz").split()]) \
                if axis_el is not None else np.array([1.0, 0.0, 0.0])
            limit = joint.find("limit")
            meta["upper"] = float(limit.get("upper")) if limit is not None else 1.0
        parent_of[child] = (parent, Se3Pose(_rpy_matrix(*rpy), xyz), meta)

    roots = [name for name in links if name not in children]
    if len(roots) != 1:
        raise UrdfError(f"expected exactly one root link, found {roots}")

    world: dict[str, Se3Pose] = {}

    def resolve(link: str, trail: set[str]) -> Se3Pose:
        if link in world:
            return world[link]
        if link in trail:
            raise UrdfError(f"cyclic joint graph at {link}")
        if link not in parent_of:
            world[link] = Se3Pose.identity()
            return world[link]
        parent, local, _ = parent_of[link]
        pose = resolve(parent, trail | {link}).compose(local)
        world[link] = pose
        return pose

    for name in links:
        resolve(name, set())

    movable = []
    for child, (parent, local, meta) in parent_of.items():
        if meta["type"] == "fixed":
            continue
        pose = world[child]
        axis_world = pose.rotation @ unit(meta["axis"])
        movable.append(ImportedJoint(
            meta["name"], meta["type"], pose.translation.copy(), axis_world,
            meta["upper"], child, links.get(child),
            pose.compose(visual_origin[child])))
    movable.sort(key=lambda j: j.name)
    return ImportedScene(robot.get("name", ""), links, movable, path.parent)
