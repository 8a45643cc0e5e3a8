"""Artifact files: deterministic CSV/JSON writers, directory listing and path-normalized reading."""
import csv
import io
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from pydantic import BaseModel, Field

from .utils import ConeContactError

logger = logging.getLogger(__name__)

ARTIFACT_FILES = {
    "geodesics": "geodesics.csv",
    "roundtrip": "roundtrip.csv",
    "positivity": "positivity.csv",
    "skies": "skies.csv",
    "lipschitz": "lipschitz.json",
    "probe": "probe.json",
}


class ArtifactError(ConeContactError):
    """Artifacts are missing, unreadable or outside the artifact directory."""

    def __init__(self, message, error_code=1):
        super().__init__(message, error_code=error_code)


def header_line(scenario: str, seed: int) -> str:
    return f"# scenario={scenario} seed={seed}"


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence], comment: Optional[str] = None) -> str:
    buffer = io.StringIO(newline="")
    if comment:
        buffer.write(comment + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(x) for x in row])
    return buffer.getvalue()


def render_json(payload: Dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_utf8_file(output_filepath, content: str) -> Path:
    """Write ``content`` to a fixed path; the same content always gives the same bytes."""
    output_filepath = Path(output_filepath)
    output_filepath.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(output_filepath, "w", encoding="utf-8", newline="\n") as file:
            file.write(content)
    except OSError as exc:
        raise ArtifactError(f"Cannot write artifact {output_filepath}: {exc}")
    logger.info("Artifact written to %s", output_filepath)
    return output_filepath


class ArtifactDirectorySchema(BaseModel):
    """
    Schema for ArtifactDirectory.

    Attributes:
        directory (str): Directory holding the artifacts of one scenario run.
        ignore_dirs (Optional[List[str]]): Subdirectories to skip when listing. Defaults to ["plot"].
    """
    directory: str = Field(..., description="Directory holding the artifacts of one scenario run")
    ignore_dirs: List[str] = Field(default_factory=lambda: ["plot"], description="Subdirectories to skip")
    max_file_size: int = Field(64 * 1024 * 1024, gt=0, description="Largest artifact that will be read, in bytes")


class ArtifactDirectory:
    """
    Lists and reads the artifacts of a scenario run.

    Paths handed to ``read`` are normalized against the directory and may not escape it.
    Contents are cached per path.
    """

    def __init__(self, directory, ignore_dirs: Optional[List[str]] = None, max_file_size: int = 64 * 1024 * 1024):
        config = ArtifactDirectorySchema(directory=str(directory), max_file_size=max_file_size,
                                         **({"ignore_dirs": ignore_dirs} if ignore_dirs is not None else {}))
        self.base_path = Path(config.directory).resolve()
        self.ignore_dirs = config.ignore_dirs
        self.max_file_size = config.max_file_size
        self._cache: Dict[str, str] = {}
        if not self.base_path.is_dir():
            raise ArtifactError(f"Artifact directory '{self.base_path}' does not exist.")

    def listing(self) -> List[str]:
        """Relative posix paths of every file below the directory, sorted."""
        files_list = []
        for root, dirs, files in os.walk(self.base_path):
            dirs[:] = sorted(d for d in dirs if d not in self.ignore_dirs)
            for filename in files:
                files_list.append((Path(root) / filename).relative_to(self.base_path).as_posix())
        return sorted(files_list)

    def available_tasks(self) -> List[str]:
        present = set(self.listing())
        return [task for task, name in ARTIFACT_FILES.items() if name in present]

    def _normalize_path(self, file_path) -> Path:
        normalized_path = (self.base_path / Path(file_path)).resolve()
        if self.base_path not in normalized_path.parents and normalized_path != self.base_path:
            raise ArtifactError(f"Access denied. File path '{file_path}' is outside the artifact directory.")
        return normalized_path

    def read(self, file_path, encoding: str = "utf-8") -> str:
        full_path = self._normalize_path(file_path)
        cache_key = f"{full_path}:{encoding}"
        if cache_key in self._cache:
            return self._cache[cache_key]
        if not full_path.is_file():
            raise ArtifactError(f"'{full_path}' is not a file or does not exist.")
        if full_path.stat().st_size > self.max_file_size:
            raise ArtifactError(f"Artifact '{full_path}' exceeds the maximum size of {self.max_file_size} bytes.")
        try:
            content = full_path.read_text(encoding=encoding)
        except UnicodeDecodeError:
            raise ArtifactError(f"Unable to decode '{file_path}' with encoding '{encoding}'.")
        self._cache[cache_key] = content
        return content

    def read_csv(self, file_path) -> List[Dict[str, str]]:
        """Rows of an artifact CSV keyed by header, skipping the leading comment line."""
        lines = [line for line in self.read(file_path).splitlines() if not line.startswith("#")]
        return list(csv.DictReader(lines))

    def read_json(self, file_path) -> Dict:
        try:
            return json.loads(self.read(file_path))
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"Artifact '{file_path}' is not valid JSON: {exc}")

    def comment(self, file_path) -> str:
        first = self.read(file_path).splitlines()[:1]
        return first[0] if first and first[0].startswith("#") else ""


def _coordinate_columns(header: Sequence[str]) -> List[str]:
    return [name for name in header if name in ("x", "y", "z")]


def _select(rows: List[Dict[str, str]], columns: Sequence[str], where: Optional[Dict[str, str]] = None):
    where = where or {}
    return [[row[c] for c in columns] for row in rows if all(row.get(k) == v for k, v in where.items())]


def _csv_export(artifacts: ArtifactDirectory, task: str, leading: Sequence[str], trailing: Sequence[str],
                where: Optional[Dict[str, str]] = None):
    rows = artifacts.read_csv(ARTIFACT_FILES[task])
    columns = list(leading) + (_coordinate_columns(rows[0].keys()) if rows else []) + list(trailing)
    return columns, _select(rows, columns, where)


def _lipschitz_rows(payload: Dict):
    report = payload["report"]
    rows = [[v["name"], format_value([float(x) for x in v["location"]]), format_value(float(v["magnitude"]))]
            for v in report["violations"]]
    for name in ("homogeneity_violation", "concavity_violation", "lipschitz_estimate"):
        value = report.get(name)
        rows.append([name, "", "" if value is None else format_value(float(value))])
    return ["name", "location", "magnitude"], rows


def _probe_rows(payload: Dict):
    rows = [[r["ray"], r["crossings"], format_value(float(r["min_causal_residual"])), format_value(r["blown_up"])]
            for r in payload["report"]["rays"]]
    return ["ray", "crossings", "min_causal_residual", "blown_up"], rows


def export_plotdata(artifact_dir, plot_dir: Optional[str] = None) -> List[Path]:
    """Write plot-ready CSVs with fixed headers under ``artifact_dir/plot``; raises ArtifactError if none exist."""
    artifacts = ArtifactDirectory(artifact_dir)
    tasks = artifacts.available_tasks()
    if not tasks:
        raise ArtifactError(f"No scenario artifacts found in '{artifacts.base_path}'.")
    target = Path(plot_dir) if plot_dir else artifacts.base_path / "plot"
    written = []
    for task in tasks:
        name = ARTIFACT_FILES[task]
        if task == "lipschitz":
            payload = artifacts.read_json(name)
            bundles = {task: _lipschitz_rows(payload)}
            comment = header_line(payload["scenario"], payload["seed"])
        elif task == "probe":
            payload = artifacts.read_json(name)
            bundles = {task: _probe_rows(payload)}
            comment = header_line(payload["scenario"], payload["seed"])
        else:
            comment = artifacts.comment(name)
            if task == "geodesics":
                bundles = {task: _csv_export(artifacts, task, ["t"], ["null_residual"])}
            elif task == "positivity":
                bundles = {task: _csv_export(artifacts, task, ["t", "ray", "margin"], [])}
            elif task == "roundtrip":
                bundles = {task: _csv_export(artifacts, task, ["t"], ["hausdorff", "g_error"])}
            else:
                bundles = {
                    "skies": _csv_export(artifacts, task, ["s", "ray", "margin"], [], {"curve": "timelike"}),
                    "skies_null": _csv_export(artifacts, task, ["s", "ray", "margin"], [], {"curve": "null"}),
                }
        for label, (header, rows) in bundles.items():
            written.append(write_utf8_file(target / f"{label}.csv", render_csv(header, rows, comment or None)))
    logger.info("Exported %d plot files to %s", len(written), target)
    return written
