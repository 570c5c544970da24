import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from hiercheck import cli
from hiercheck.io import DatasetError, dataset_to_csv, parse_dataset, read_draws, read_table, write_draws
from hiercheck.models import GroupedNormalData, PriorSpec
from hiercheck.plots import PlotDocument, histogram_counts, qq_document, render_plot, render_svg
from hiercheck.samplers import ChainConfig, SamplerError, gibbs_normal_hier

SVG = "{http://www.w3.org/2000/svg}"


# -- ingestion -----------------------------------------------------------------


def test_single_group_two_observations():
    d = parse_dataset("group,value\na,1.0\na,2.0\n", "normal-hier")
    assert d.n_groups == 1 and d.sizes.tolist() == [2] and d.means[0] == 1.5


def test_groups_numbered_by_first_appearance():
    d = parse_dataset("group,value\nb,1\na,2\nb,3\n", "normal-hier")
    assert [g.tolist() for g in d.groups] == [[1.0, 3.0], [2.0]]


def test_successes_above_trials_names_line():
    with pytest.raises(DatasetError) as exc:
        parse_dataset("unit,successes,trials\nh1,5,3\n", "beta-binom")
    assert exc.value.line == 2 and "line 2" in str(exc.value)


@pytest.mark.parametrize(
    "text,line",
    [
        ("group,value\na,1\nb,x\n", 3),
        ("group,value\na,1,2\n", 2),
        ("group,value\na,nan\n", 2),
        ("grp,value\na,1\n", 1),
        ("", 1),
    ],
)
def test_normal_parse_errors(text, line):
    with pytest.raises(DatasetError) as exc:
        parse_dataset(text, "normal-hier")
    assert exc.value.line == line


def test_betabinom_parse_errors():
    for text in ("unit,successes,trials\nu,1,0\n", "unit,successes,trials\nu,-1,3\n", "unit,successes,trials\nu,1.5,3\n"):
        with pytest.raises(DatasetError):
            parse_dataset(text, "beta-binom")
    with pytest.raises(DatasetError):
        parse_dataset("group,value\n", "normal-hier")


def test_dataset_csv_round_trip():
    d = GroupedNormalData([[0.1, 1 / 3], [2.0]])
    back = parse_dataset(dataset_to_csv(d), "normal-hier")
    assert all(np.array_equal(a, b) for a, b in zip(d.groups, back.groups))
    bb = parse_dataset("unit,successes,trials\nx,2,5\ny,0,4\n", "beta-binom")
    assert parse_dataset(dataset_to_csv(bb), "beta-binom").fingerprint() == bb.fingerprint()


def test_draws_round_trip(tmp_path):
    d = GroupedNormalData([[0.1, 0.4], [1.0, 1.5], [-0.3, 0.2]])
    draws = gibbs_normal_hier(d, PriorSpec("proper-normal"), ChainConfig(iterations=60, burn_in=10, seed=2))
    write_draws(tmp_path / "d.csv", draws)
    back = read_draws(tmp_path / "d.csv")
    assert np.array_equal(back.matrix(), draws.matrix())
    assert back.column_names() == draws.column_names()


# -- plots ---------------------------------------------------------------------


def test_plot_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        PlotDocument("histogram", [])
    with pytest.raises(ValueError):
        qq_document(np.array([[0.0, np.nan]]))
    with pytest.raises(ValueError):
        PlotDocument("pie", [1.0])


def test_plot_bytes_identical(tmp_path):
    pairs = np.column_stack([np.linspace(-2, 2, 30), np.linspace(-2.1, 1.9, 30)])
    doc = qq_document(pairs, title="a & b", identity_line=True)
    render_plot(doc, tmp_path / "a.svg")
    render_plot(qq_document(pairs.copy(), title="a & b", identity_line=True), tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_svg_well_formed_with_expected_marks():
    pairs = np.column_stack([np.arange(7.0), np.arange(7.0)])
    root = ET.fromstring(render_svg(qq_document(pairs, identity_line=True)))
    assert root.tag == SVG + "svg"
    assert len(root.findall(f".//{SVG}circle")) == 7
    hist = ET.fromstring(render_svg(PlotDocument("histogram", np.random.default_rng(0).random(100), bins=8)))
    # background rect plus one bar per bin
    assert len(hist.findall(f".//{SVG}rect")) == 9


def test_histogram_uniform_counts():
    N, bins = 50_000, 20
    counts = histogram_counts(np.random.default_rng(4).random(N), bins)
    assert counts.sum() == N
    p = 1 / bins
    assert np.all(np.abs(counts - N * p) < 3.5 * np.sqrt(N * p * (1 - p)))


def test_render_plot_unwritable(tmp_path):
    doc = PlotDocument("histogram", [0.5])
    with pytest.raises(OSError):
        render_plot(doc, tmp_path / "missing" / "x.svg")


# -- CLI -----------------------------------------------------------------------


def normal_csv(tmp_path, groups=5, n=6, seed=0):
    rng = np.random.default_rng(seed)
    lines = ["group,value"] + [f"g{i},{float(v)!r}" for i in range(groups) for v in rng.normal(i * 0.3, 1.0, n)]
    path = tmp_path / "normal.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def betabinom_csv(tmp_path):
    rows = [(3, 8), (5, 8), (1, 8), (6, 8), (4, 8), (2, 8)]
    path = tmp_path / "bb.csv"
    path.write_text("unit,successes,trials\n" + "".join(f"u{i},{x},{n}\n" for i, (x, n) in enumerate(rows)))
    return path


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    return code


def snapshot(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


FAST = ["--iters", "600", "--burn-in", "100", "--seed", "5"]


@pytest.mark.parametrize(
    "command,extra",
    [
        ("fit", []),
        ("check", []),
        ("ppp", []),
        ("postpred", []),
        ("priorpred", ["--prior", "proper"]),
        ("calibrate", ["--prior", "proper", "--replicates", "4", "--methods", "pivotal-SW,posterior-predictive"]),
        ("simulate", ["--prior", "proper"]),
    ],
)
def test_commands_deterministic(tmp_path, command, extra, capsys):
    data = normal_csv(tmp_path)
    outs = []
    for run_id in ("a", "b"):
        out = tmp_path / run_id
        argv = [command, "--data", data, "--out", out, *FAST, *extra]
        assert cli.main([str(a) for a in argv]) == 0
        outs.append(snapshot(out))
    assert outs[0] == outs[1] and outs[0]
    printed = capsys.readouterr().out
    assert printed.count("{") >= 2


def test_check_normal_bundle(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["check", "--data", str(normal_csv(tmp_path)), "--out", str(out), *FAST]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"draws.csv", "pvalues.csv", "pvalues_hist.svg", "bound.json", "summary.json"} <= names
    qq = sorted(n for n in names if n.startswith("pivots_qq_") and n.endswith(".csv"))
    assert len(qq) == 3
    header, cols, vals = read_table(out / qq[0])
    assert vals.shape == (5, 2) and cols == ["theoretical", "empirical"]
    assert header["operation"] == "check" and header["seed"] == 5
    svg = ET.parse(out / qq[0].replace(".csv", ".svg")).getroot()
    assert len(svg.findall(f".//{SVG}circle")) == 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pvalue_series"]["statistic"] .startswith("shapiro-wilk")
    assert summary["pvalue_series"]["n"] == 500


def test_check_betabinom_bundle(tmp_path, capsys):
    out = tmp_path / "o"
    argv = ["check", "--model", "beta-binom", "--data", str(betabinom_csv(tmp_path)), "--out", str(out), *FAST]
    assert cli.main(argv) == 0
    names = {p.name for p in out.iterdir()}
    assert {"bound.json", "max_pit_qq.csv", "max_pit_qq.svg"} <= names
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pvalue_series"]["statistic"].startswith("max")
    bound = json.loads((out / "bound.json").read_text())
    assert 0.0 <= bound["overall_bound"] <= 1.0


def test_plots_off_and_fix_k(tmp_path, capsys):
    out = tmp_path / "o"
    argv = ["check", "--data", str(normal_csv(tmp_path)), "--out", str(out), "--plots", "off", "--fix-k", "3", *FAST]
    assert cli.main(argv) == 0
    assert not list(out.glob("*.svg"))
    assert json.loads((out / "summary.json").read_text())["bound"]["fixed_k"] == 3


def test_plot_command(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["check", "--data", str(normal_csv(tmp_path)), "--out", str(out), "--plots", "off", *FAST]) == 0
    assert cli.main(["plot", "--input", str(out / "pvalues.csv"), "--out", str(tmp_path / "p")]) == 0
    ET.parse(tmp_path / "p" / "pvalues.svg")


def test_config_file_layering(tmp_path, capsys):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"iters": 300, "burn_in": 50, "seed": 9}))
    out = tmp_path / "o"
    argv = ["fit", "--config", str(cfgfile), "--data", str(normal_csv(tmp_path)), "--out", str(out), "--seed", "4"]
    assert cli.main(argv) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["chain"]["iterations"] == 300
    assert summary["config"]["chain"]["seed"] == 4


def test_exit_codes(tmp_path, capsys, monkeypatch):
    data = normal_csv(tmp_path)
    out = str(tmp_path / "o")
    assert cli.main(["fit", "--data", str(data), "--out", out, "--iters", "10", "--burn-in", "20"]) == 2
    assert cli.main(["fit", "--out", out]) == 2
    assert cli.main(["nonsense"]) == 2
    assert cli.main(["priorpred", "--data", str(data), "--out", out]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("unit,successes,trials\nh1,5,3\n")
    assert cli.main(["fit", "--model", "beta-binom", "--data", str(bad), "--out", out]) == 2
    assert "line 2" in capsys.readouterr().err
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"itters": 5}))
    assert cli.main(["fit", "--config", str(cfgfile), "--data", str(data), "--out", out]) == 2
    assert cli.main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", out]) == 4

    def fail(*a, **k):
        raise SamplerError("no progress")

    monkeypatch.setattr(cli, "gibbs_normal_hier", fail)
    assert cli.main(["fit", "--data", str(data), "--out", out]) == 3
