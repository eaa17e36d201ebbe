"""End-to-end checks of the batch front-end: exit codes, determinism, sweep."""

import csv
import json
import math

from avcjam.cli import main

DP_CHANNEL = """\
[channel]
kind = dp
p = 1
lam = 1
sigma2 = 1
sigma_s2 = 1
"""


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_capacity_dp_closed_form_row(tmp_path):
    cfg = write(tmp_path / "c.ini",
                "[channel]\nkind = dp\np = 3\nlam = 1\nsigma2 = 1\n"
                "sigma_s2 = 2.5\n")
    assert main(["capacity", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "capacity.csv")
    assert len(rows) == 1
    got = float(rows[0]["capacity"])
    assert abs(got - 0.5 * math.log2(1 + 3 / 2)) < 1e-12
    assert f"{got:.5f}" == "0.66096"


def test_negative_power_exits_2_without_outputs(tmp_path):
    cfg = write(tmp_path / "c.ini",
                "[channel]\nkind = dp\np = -1\nlam = 1\nsigma2 = 1\n"
                "sigma_s2 = 1\n")
    out = tmp_path / "o"
    assert main(["capacity", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_unknown_key_and_section_exit_2(tmp_path):
    bad_key = write(tmp_path / "k.ini", DP_CHANNEL + "\n[run]\ntirals = 5\n")
    assert main(["capacity", "--config", bad_key,
                 "--out", str(tmp_path / "o1")]) == 2
    bad_sec = write(tmp_path / "s.ini", DP_CHANNEL + "\n[chanel]\np = 1\n")
    assert main(["capacity", "--config", bad_sec,
                 "--out", str(tmp_path / "o2")]) == 2
    assert not (tmp_path / "o1").exists() and not (tmp_path / "o2").exists()


def test_missing_out_dir_exits_2(tmp_path):
    cfg = write(tmp_path / "c.ini", DP_CHANNEL)
    assert main(["capacity", "--config", cfg]) == 2


SIM_DP = DP_CHANNEL + """
[code]
n = 64
rate_scale = 0.4

[jammer]
kind = state_cancelling

[run]
trials = 40
seed = 11
"""


def test_simulate_dp_rerun_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.ini", SIM_DP)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate-dp", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate-dp", "--config", cfg, "--out", str(b)]) == 0
    for name in ("dp_trials.csv", "dp_summary.csv", "manifest.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_dp_jobs_do_not_change_bytes(tmp_path):
    cfg = write(tmp_path / "c.ini", SIM_DP)
    one, three = tmp_path / "one", tmp_path / "three"
    assert main(["simulate-dp", "--config", cfg, "--out", str(one)]) == 0
    assert main(["simulate-dp", "--config", cfg, "--out", str(three),
                 "--jobs", "3"]) == 0
    assert (one / "dp_trials.csv").read_bytes() \
        == (three / "dp_trials.csv").read_bytes()
    assert (one / "dp_summary.csv").read_bytes() \
        == (three / "dp_summary.csv").read_bytes()


def test_seed_flag_changes_trials(tmp_path):
    cfg = write(tmp_path / "c.ini", SIM_DP)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate-dp", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate-dp", "--config", cfg, "--out", str(b),
                 "--seed", "99"]) == 0
    assert (a / "dp_trials.csv").read_bytes() \
        != (b / "dp_trials.csv").read_bytes()


def test_manifest_contents(tmp_path):
    cfg = write(tmp_path / "c.ini", SIM_DP)
    out = tmp_path / "o"
    assert main(["simulate-dp", "--config", cfg, "--out", str(out),
                 "--trials", "12"]) == 0
    lines = [json.loads(l) for l in
             (out / "manifest.jsonl").read_text().splitlines()]
    run = next(l for l in lines if l["type"] == "run")
    assert run["seed"] == 11 and run["trials"] == 12
    assert set(run["versions"]) >= {"package", "numpy", "scipy", "python"}
    assert "date" not in {k.lower() for k in run} and "time" not in run
    resolved = next(l for l in lines if l["type"] == "config")["resolved"]
    # filled defaults are echoed, trials override included
    assert resolved["run"]["trials"] == 12
    assert resolved["code"]["eps1"] == 0.05
    assert resolved["code"]["rate_bin"] > 0
    outputs = {l["path"] for l in lines if l["type"] == "output"}
    assert outputs == {"dp_trials.csv", "dp_summary.csv"}
    rows = read_rows(out / "dp_trials.csv")
    assert len(rows) == 12


def test_runtime_failure_exits_3_without_outputs(tmp_path):
    cfg = write(tmp_path / "c.ini", DP_CHANNEL + """
[code]
n = 512
rate = 0.25
mode = explicit

[jammer]
kind = zero

[run]
trials = 4
""")
    out = tmp_path / "o"
    assert main(["simulate-dp", "--config", cfg, "--out", str(out)]) == 3
    assert list(out.iterdir()) == []


GP_SIM = """\
[channel]
kind = gp
preset = bsc_pair
p0 = 0.05
p1 = 0.15

[code]
n = 48
rate = 0.0625
p_u_given_s = uniform
strategy = identity

[jammer]
kind = memoryless
q = worst

[run]
trials = 30
seed = 4
"""


def test_simulate_gp_explicit_tables(tmp_path):
    cfg = write(tmp_path / "c.ini", GP_SIM)
    out = tmp_path / "o"
    assert main(["simulate-gp", "--config", cfg, "--out", str(out)]) == 0
    summary = read_rows(out / "gp_summary.csv")[0]
    assert summary["n"] == "48" and summary["trials"] == "30"
    assert 0.0 <= float(summary["err_rate"]) <= 1.0
    trials = read_rows(out / "gp_trials.csv")
    assert [r["trial"] for r in trials] == [str(i) for i in range(30)]


def test_simulate_gp_jobs_identical(tmp_path):
    cfg = write(tmp_path / "c.ini", GP_SIM)
    one, four = tmp_path / "one", tmp_path / "four"
    assert main(["simulate-gp", "--config", cfg, "--out", str(one)]) == 0
    assert main(["simulate-gp", "--config", cfg, "--out", str(four),
                 "--jobs", "4"]) == 0
    assert (one / "gp_trials.csv").read_bytes() \
        == (four / "gp_trials.csv").read_bytes()


def test_lemmas_schema_and_determinism(tmp_path):
    cfg = write(tmp_path / "c.ini", """\
[lemmas]
which = sphere_cap, hoeffding
cap_gamma = 0.3
cap_n = 60
cap_trials = 5000
ts = 0.1, 0.2
hoeffding_trials = 2000

[run]
seed = 2
out = PLACEHOLDER
""")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["lemmas", "--config", cfg, "--out", str(a)]) == 0
    assert main(["lemmas", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "lemmas.csv").read_bytes() == (b / "lemmas.csv").read_bytes()
    text = (a / "lemmas.csv").read_text().splitlines()
    assert text[0] == "lemma_id,param_json,n,trials,violations,rate,bound," \
                      "ci_lo,ci_hi"
    ids = {line.split(",")[0] for line in text[1:]}
    assert ids == {"sphere_cap", "hoeffding_wor"}


def test_sweep_capacity_monotone_in_jammer_power(tmp_path):
    cfg = write(tmp_path / "c.ini", DP_CHANNEL + """
[sweep]
target = capacity
axis = channel.lam
values = 0.25, 0.5, 1.0, 2.0, 4.0
""")
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    caps = [float(r["capacity"]) for r in rows]
    assert all(a > b for a, b in zip(caps, caps[1:]))
    assert all(r["failed"] == "0" for r in rows)


def test_sweep_continues_past_bad_point(tmp_path):
    cfg = write(tmp_path / "c.ini", DP_CHANNEL + """
[code]
n = 32
rate_scale = 0.4

[jammer]
kind = zero

[run]
trials = 10
seed = 1

[sweep]
target = simulate-dp
axis = code.n
values = 32, 1, 48
""")
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    assert [r["failed"] for r in rows] == ["0", "1", "0"]
    assert "ConfigError" in rows[1]["error"]
    assert rows[0]["err_rate"] != "" and rows[1]["err_rate"] == ""


def test_sweep_empty_values_exits_2(tmp_path):
    cfg = write(tmp_path / "c.ini", DP_CHANNEL + """
[sweep]
target = capacity
axis = channel.lam
values =
""")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_plot_flag_writes_deterministic_svg(tmp_path):
    cfg = write(tmp_path / "c.ini", DP_CHANNEL + """
[sweep]
target = capacity
axis = channel.sigma2
values = 0.5, 1.0, 2.0
""")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", cfg, "--out", str(a), "--plot"]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b), "--plot"]) == 0
    assert (a / "sweep.svg").exists()
    assert (a / "sweep.svg").read_bytes() == (b / "sweep.svg").read_bytes()
    manifest = (a / "manifest.jsonl").read_text()
    assert "sweep.svg" in manifest
