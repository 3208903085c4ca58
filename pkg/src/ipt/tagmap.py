"""Tag family codebooks, tag rendering and the localization tag map.

Bit layout of a rendered tag: the bitmap is ``grid + 2 * border`` cells per
side with a black border ring. Data cells are filled row-major from the
top-left data cell, most significant code bit first; a set bit is white.

World frame: ENU with the origin at the map center, +x to the right of the
map image and +y towards its top row. Tag corners are always listed as the
outer black-border corners in the order bottom-left, bottom-right,
top-right, top-left (counter-clockwise seen from above).
"""
from __future__ import annotations

import functools
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .imaging import ColorSpace, ImagePlane, write_png


class FamilyFormatError(ValueError):
    pass


class LayoutError(ValueError):
    pass


class UnknownTagError(LookupError):
    pass


@dataclass(frozen=True)
class TagFamily:
    name: str
    data_bits: int
    grid: int
    border: int
    min_hamming: int
    codes: tuple[int, ...] = field(repr=False)

    def __post_init__(self):
        if self.grid * self.grid != self.data_bits:
            raise FamilyFormatError(f"{self.data_bits} bits do not fill a {self.grid}x{self.grid} grid")

    @property
    def total_cells(self) -> int:
        return self.grid + 2 * self.border

    @functools.cached_property
    def codes_array(self) -> np.ndarray:
        return np.array(self.codes, dtype=np.uint64)

    def __len__(self) -> int:
        return len(self.codes)


def code_to_grid(code: int, grid: int) -> np.ndarray:
    n = grid * grid
    bits = [(code >> (n - 1 - i)) & 1 for i in range(n)]
    return np.array(bits, dtype=np.uint8).reshape(grid, grid)


def grid_to_code(bits: np.ndarray) -> int:
    code = 0
    for b in np.asarray(bits).ravel():
        code = (code << 1) | int(b)
    return code


def rotate_code(code: int, grid: int, k: int = 1) -> int:
    """Code word of the data grid rotated by ``k`` quarter turns counter-clockwise."""
    return grid_to_code(np.rot90(code_to_grid(code, grid), k))


def parse_family(text: str) -> TagFamily:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if not lines:
        raise FamilyFormatError("empty codebook")
    header = dict(tok.split("=", 1) for tok in lines[0].split() if "=" in tok)
    try:
        name = header["family"]
        bits = int(header["bits"])
        hamming = int(header["hamming"])
    except (KeyError, ValueError) as exc:
        raise FamilyFormatError(f"bad codebook header {lines[0]!r}") from exc
    grid = int(round(bits**0.5))
    codes = []
    for ln in lines[1:]:
        try:
            value = int(ln, 16)
        except ValueError as exc:
            raise FamilyFormatError(f"not a hex code: {ln!r}") from exc
        if value.bit_length() > bits:
            raise FamilyFormatError(f"code {ln} exceeds {bits} bits")
        codes.append(value)
    if not codes:
        raise FamilyFormatError("codebook lists no codes")
    if len(set(codes)) != len(codes):
        raise FamilyFormatError("duplicate codes in codebook")
    return TagFamily(name, bits, grid, int(header.get("border", 1)), hamming, tuple(codes))


def load_family(source) -> TagFamily:
    """Load a codebook from a file path, or a bundled family by name."""
    path = Path(source)
    if not path.exists() and "/" not in str(source):
        return builtin_family(str(source))
    return parse_family(path.read_text())


@functools.lru_cache(maxsize=None)
def builtin_family(name: str = "tag36h11") -> TagFamily:
    try:
        text = resources.files("ipt.data").joinpath(f"{name}.txt").read_text()
    except FileNotFoundError as exc:
        raise FamilyFormatError(f"no bundled family named {name!r}") from exc
    return parse_family(text)


def tag_cells(family: TagFamily, tag_id: int) -> np.ndarray:
    """Cell-level bitmap (1 = white) of a tag, border included."""
    if not 0 <= tag_id < len(family):
        raise UnknownTagError(f"tag id {tag_id} outside family of {len(family)} codes")
    n = family.total_cells
    cells = np.zeros((n, n), dtype=np.uint8)
    b = family.border
    cells[b : b + family.grid, b : b + family.grid] = code_to_grid(family.codes[tag_id], family.grid)
    return cells


def render_tag(family: TagFamily, tag_id: int, cell: int = 1) -> ImagePlane:
    if cell < 1:
        raise ValueError("cell size must be >= 1 pixel")
    cells = tag_cells(family, tag_id)
    bitmap = np.kron(cells, np.ones((cell, cell), dtype=np.uint8)) * 255
    return ImagePlane(bitmap, ColorSpace.BINARY)


@dataclass(frozen=True)
class TagMapConfig:
    rows: int = 9
    cols: int = 9
    map_width: int = 1920
    map_height: int = 2160
    tag_side: int = 120
    ratio_x: float = 2.17 / 1920
    ratio_y: float = 2.47 / 2160
    # White ring (in cells) around each tag that is modulated together with
    # the tag; gives the detector a clean edge for the black border.
    quiet_cells: int = 1
    family_name: str = "tag36h11"
    codebook: str | None = None

    @functools.cached_property
    def family(self) -> TagFamily:
        return load_family(self.codebook) if self.codebook else builtin_family(self.family_name)

    @property
    def n_tags(self) -> int:
        return self.rows * self.cols

    @property
    def cell(self) -> int:
        return self.tag_side // self.family.total_cells

    @property
    def origin(self) -> tuple[float, float]:
        return self.map_width / 2.0, self.map_height / 2.0

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise LayoutError("rows and cols must be positive")
        if self.n_tags > len(self.family):
            raise LayoutError(f"{self.n_tags} tags exceed the {len(self.family)} codes of {self.family.name}")
        n = self.family.total_cells
        if self.tag_side < n or self.tag_side % n:
            raise LayoutError(f"tag_side {self.tag_side} must be a positive multiple of {n} cells")
        footprint = self.tag_side + 2 * self.quiet_cells * self.cell
        if footprint > self.map_width / self.cols or footprint > self.map_height / self.rows:
            raise LayoutError(
                f"tag footprint {footprint}px does not fit a {self.map_width / self.cols:.1f}x"
                f"{self.map_height / self.rows:.1f}px slot"
            )
        if self.ratio_x <= 0 or self.ratio_y <= 0:
            raise LayoutError("pixel-to-meter ratios must be positive")

    def tag_origin(self, tag_id: int) -> tuple[int, int]:
        """(col, row) of the tag bitmap's top-left pixel in the map image."""
        if not 0 <= tag_id < self.n_tags:
            raise UnknownTagError(f"tag id {tag_id} is not placed in a {self.rows}x{self.cols} map")
        row_from_bottom, col = divmod(tag_id, self.cols)
        cx = (col + 0.5) * self.map_width / self.cols
        cy = self.map_height - (row_from_bottom + 0.5) * self.map_height / self.rows
        return int(round(cx - self.tag_side / 2)), int(round(cy - self.tag_side / 2))

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TagMapConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise LayoutError(f"unknown map config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "TagMapConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TagMapImage:
    image: ImagePlane
    mask: np.ndarray  # int8 in {-1, 0, +1}
    config: TagMapConfig


def generate_map(config: TagMapConfig | None = None) -> TagMapImage:
    config = config or TagMapConfig()
    config.validate()
    image = np.full((config.map_height, config.map_width), 255, dtype=np.uint8)
    mask = np.zeros(image.shape, dtype=np.int8)
    q = config.quiet_cells * config.cell
    s = config.tag_side
    for tag_id in range(config.n_tags):
        x0, y0 = config.tag_origin(tag_id)
        bitmap = render_tag(config.family, tag_id, config.cell).data
        image[y0 : y0 + s, x0 : x0 + s] = bitmap
        mask[y0 - q : y0 + s + q, x0 - q : x0 + s + q] = 1
        mask[y0 : y0 + s, x0 : x0 + s] = np.where(bitmap > 0, 1, -1)
    return TagMapImage(ImagePlane(image, ColorSpace.BINARY), mask, config)


def lookup_world_corners(tag_id: int, config: TagMapConfig) -> np.ndarray:
    """World corners (4x3, meters, z = 0) of a placed tag: BL, BR, TR, TL."""
    x0, y0 = config.tag_origin(tag_id)
    s = config.tag_side
    px = np.array([[x0, y0 + s], [x0 + s, y0 + s], [x0 + s, y0], [x0, y0]], dtype=np.float64)
    cx, cy = config.origin
    world = np.zeros((4, 3))
    world[:, 0] = (px[:, 0] - cx) * config.ratio_x
    world[:, 1] = (cy - px[:, 1]) * config.ratio_y
    return world


def world_to_map_px(xy: np.ndarray, config: TagMapConfig) -> np.ndarray:
    """Continuous map-image coordinates (col, row edges at integers) of world points."""
    xy = np.asarray(xy, dtype=np.float64)
    cx, cy = config.origin
    return np.stack([xy[..., 0] / config.ratio_x + cx, cy - xy[..., 1] / config.ratio_y], axis=-1)


def mask_to_png8(mask: np.ndarray) -> np.ndarray:
    return np.choose(np.asarray(mask, dtype=np.int16) + 1, [0, 128, 255]).astype(np.uint8)


def png8_to_mask(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    out = np.zeros(data.shape, dtype=np.int8)
    out[data >= 192] = 1
    out[data < 64] = -1
    return out


def save_map(tag_map: TagMapImage, directory) -> dict:
    """Write map.png, mask.png (0 -> -1, 128 -> 0, 255 -> +1) and map.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_png(tag_map.image, directory / "map.png")
    write_png(ImagePlane(mask_to_png8(tag_map.mask), ColorSpace.GRAY_U8), directory / "mask.png")
    tag_map.config.save(directory / "map.json")
    return {name: str(directory / name) for name in ("map.png", "mask.png", "map.json")}
