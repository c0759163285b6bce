"""Plain-text exporters for experiment results."""
import csv
import logging
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

import numpy as np

from config.settings import settings
from homog.basis import CoarseBasis
from mesh.hierarchy import MeshHierarchy

logger = logging.getLogger(__name__)


class ExportTool:
    """Writes CSV tables and vector dumps into an output directory."""

    def __init__(self, output_dir: Optional[Union[str, Path]] = None, digits: Optional[int] = None):
        self.output_dir = Path(output_dir or settings.output_dir)
        self.digits = digits or settings.csv_digits
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _format(self, value: Any) -> str:
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return format(float(value), f".{self.digits}g")
        if value is None:
            return ""
        return str(value)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """CSV with a header row; floats use `digits` significant digits."""
        target = self.path(name)
        count = 0
        with open(target, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"Row {count} of {name} has {len(row)} fields, header has {len(header)}")
                writer.writerow([self._format(v) for v in row])
                count += 1
        logger.info(f"Wrote {count} rows to {target}")
        return target

    def write_array(self, name: str, header: Sequence[str], values: np.ndarray) -> Path:
        values = np.atleast_2d(np.asarray(values))
        return self.write_csv(name, header, values.tolist())

    def write_vector(self, name: str, values: np.ndarray, index_name: str = "index") -> Path:
        values = np.asarray(values).ravel()
        return self.write_csv(name, [index_name, "value"], zip(range(values.size), values.tolist()))

    def write_basis(self, name: str, basis: CoarseBasis, columns: Optional[List[int]] = None) -> Path:
        """Sparse dump: one (basis, fine node, value) row per stored entry."""
        columns = range(basis.N) if columns is None else columns

        def rows():
            for j in columns:
                column = basis.matrix[:, j].tocoo()
                for node, value in sorted(zip(column.row.tolist(), column.data.tolist())):
                    yield (j, node, value)

        return self.write_csv(name, ["basis", "node", "value"], rows())

    def write_trace(self, name: str, trace: Sequence[Sequence[Any]]) -> Path:
        return self.write_csv(name, ["n", "state_increment", "objective"], trace)

    def write_mesh(self, name: str, mesh: MeshHierarchy, level: str = "fine") -> Path:
        """Node coordinates then triangles (0-based, counter-clockwise)."""
        if level == "fine":
            nodes, triangles = mesh.fine_nodes, mesh.fine_triangles
        elif level == "coarse":
            nodes, triangles = mesh.coarse_nodes, mesh.coarse_triangles
        else:
            raise ValueError(f"Unknown mesh level '{level}' (expected 'fine' or 'coarse')")
        target = self.path(name)
        with open(target, "w") as handle:
            handle.write(f"nodes {nodes.shape[0]}\n")
            for x, y in nodes.tolist():
                handle.write(f"{self._format(x)} {self._format(y)}\n")
            handle.write(f"triangles {triangles.shape[0]}\n")
            for a, b, c in triangles.tolist():
                handle.write(f"{a} {b} {c}\n")
        logger.info(f"Wrote {level} mesh to {target}")
        return target
