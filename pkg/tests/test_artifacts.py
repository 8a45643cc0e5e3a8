import json

import pytest

from cone_contact.artifacts import (ArtifactDirectory, ArtifactError, export_plotdata, format_value, header_line,
                                    render_csv, render_json, write_utf8_file)


@pytest.fixture
def artifact_dir(tmp_path):
    comment = header_line("demo", 4)
    write_utf8_file(tmp_path / "positivity.csv", render_csv(
        ["t", "ray", "margin", "reversed_margin"], [[0.0, 0, 1.0, -1.0], [0.5, 1, 0.999, -1.001]], comment))
    write_utf8_file(tmp_path / "skies.csv", render_csv(
        ["curve", "s", "ray", "margin"],
        [["timelike", 0.0, 0, -1.0], ["null", 0.0, 0, 0.0], ["null", 0.0, 1, -0.5]], comment))
    report = {"homogeneity_violation": 0.0, "concavity_violation": 1e-12, "lipschitz_estimate": 0.25,
              "violations": [{"name": "concavity", "location": [0.0, 0.5], "magnitude": 1e-12}]}
    write_utf8_file(tmp_path / "lipschitz.json", render_json({"scenario": "demo", "seed": 4, "report": report}))
    return tmp_path


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(0.1) == "0.1"
    assert format_value(3) == "3"
    assert format_value([1.0, 2]) == "1.0;2"


def test_render_csv_has_fixed_layout():
    text = render_csv(["a", "b"], [[1.5, False]], comment="# c")
    assert text == "# c\na,b\n1.5,false\n"


def test_render_json_is_sorted():
    text = render_json({"b": 1, "a": 2})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("}\n")


def test_directory_listing_and_reading(artifact_dir):
    artifacts = ArtifactDirectory(artifact_dir)
    assert artifacts.listing() == ["lipschitz.json", "positivity.csv", "skies.csv"]
    assert artifacts.available_tasks() == ["positivity", "skies", "lipschitz"]
    assert artifacts.comment("positivity.csv") == "# scenario=demo seed=4"
    rows = artifacts.read_csv("positivity.csv")
    assert rows[1]["margin"] == "0.999"
    assert artifacts.read_json("lipschitz.json")["seed"] == 4


def test_reads_stay_inside_the_directory(artifact_dir):
    artifacts = ArtifactDirectory(artifact_dir / "..")
    inner = ArtifactDirectory(artifact_dir)
    with pytest.raises(ArtifactError, match="outside"):
        inner.read("../elsewhere.csv")
    with pytest.raises(ArtifactError, match="not a file"):
        inner.read("missing.csv")
    assert artifacts.base_path == artifact_dir.parent.resolve()


def test_size_limit(artifact_dir):
    artifacts = ArtifactDirectory(artifact_dir, max_file_size=10)
    with pytest.raises(ArtifactError, match="maximum size"):
        artifacts.read("positivity.csv")


def test_missing_directory(tmp_path):
    with pytest.raises(ArtifactError, match="does not exist"):
        ArtifactDirectory(tmp_path / "nowhere")


def test_export_writes_plot_files(artifact_dir):
    written = export_plotdata(artifact_dir)
    assert sorted(p.name for p in written) == ["lipschitz.csv", "positivity.csv", "skies.csv", "skies_null.csv"]
    plot = artifact_dir / "plot"
    positivity = (plot / "positivity.csv").read_text(encoding="utf-8").splitlines()
    assert positivity == ["# scenario=demo seed=4", "t,ray,margin", "0.0,0,1.0", "0.5,1,0.999"]
    null = (plot / "skies_null.csv").read_text(encoding="utf-8").splitlines()
    assert null[1:] == ["s,ray,margin", "0.0,0,0.0", "0.0,1,-0.5"]
    lipschitz = (plot / "lipschitz.csv").read_text(encoding="utf-8").splitlines()
    assert lipschitz[1] == "name,location,magnitude"
    assert "lipschitz_estimate,,0.25" in lipschitz
    assert ArtifactDirectory(artifact_dir).listing() == ["lipschitz.json", "positivity.csv", "skies.csv"]


def test_export_is_repeatable(artifact_dir, tmp_path_factory):
    first = tmp_path_factory.mktemp("first")
    second = tmp_path_factory.mktemp("second")
    export_plotdata(artifact_dir, str(first))
    export_plotdata(artifact_dir, str(second))
    for path in first.iterdir():
        assert (second / path.name).read_bytes() == path.read_bytes()


def test_export_needs_artifacts(tmp_path):
    with pytest.raises(ArtifactError, match="No scenario artifacts"):
        export_plotdata(tmp_path)


def test_crossing_report_export(tmp_path):
    rays = [{"ray": 0, "crossings": 1, "min_causal_residual": 0.0, "blown_up": False}]
    write_utf8_file(tmp_path / "probe.json", json.dumps({"scenario": "p", "seed": 0, "report": {"rays": rays}}))
    export_plotdata(tmp_path)
    lines = (tmp_path / "plot" / "probe.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["# scenario=p seed=0", "ray,crossings,min_causal_residual,blown_up", "0,1,0.0,false"]
