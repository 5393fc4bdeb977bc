import json
import subprocess
import sys

import pytest

from mbm import apply_weights, formats, min_pairwise_distance
from mbm.optimizer import mapping_cost, nearest_pairs
from mbm.cli import EXIT_IO, EXIT_PARSE, EXIT_USAGE, main, parse_snr_grid

from oracles import exhaustive_min_cost, qpsk_awgn_ser

FAST_SCHED = '{"max_trials": 3000, "stall_limit": 1000}'


def run(*argv):
    return main([str(a) for a in argv])


def test_snr_grid_parsing():
    assert parse_snr_grid("0:2:10") == (0, 2, 4, 6, 8, 10)
    assert parse_snr_grid("0:3:10") == (0, 3, 6, 9)
    assert parse_snr_grid("0:0.1:0.3") == (0, 0.1, 0.2, 0.3)
    assert parse_snr_grid("7") == (7,)


def test_gen_writes_points_and_manifest(tmp_path):
    out = tmp_path / "c.json"
    assert run("gen", "--k", 4, "--seed", 7, "--out", out) == 0
    c = formats.constellation_from_json(out.read_text())
    assert c.size == 16 and c.seed == 7
    man = json.loads((tmp_path / "c.json.manifest.json").read_text())
    assert man["seeds"] == [7] and str(out) in man["outputs"]
    first = out.read_text()
    assert run("gen", "--k", 4, "--seed", 7, "--out", out) == 0
    assert out.read_text() == first


@pytest.mark.parametrize("k", [0, 17])
def test_gen_rejects_bad_k(tmp_path, k, capsys):
    assert run("gen", "--k", k, "--out", tmp_path / "c.json") == EXIT_USAGE
    assert not (tmp_path / "c.json").exists()


def test_gen_subprocess_exit_code(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mbm", "gen", "--k", "0", "--out", str(tmp_path / "x")])
    assert r.returncode == EXIT_USAGE


def test_optimize_euclidean(tmp_path):
    run("gen", "--k", 4, "--seed", 3, "--out", tmp_path / "c.json")
    rc = run(
        "optimize", "--in", tmp_path / "c.json", "--seed", 1, "--schedule-json", FAST_SCHED,
        "--out", tmp_path / "w.json", "--trace", tmp_path / "t.csv",
    )
    assert rc == 0
    c = formats.constellation_from_json((tmp_path / "c.json").read_text())
    w, achieved = formats.weights_from_json((tmp_path / "w.json").read_text())
    assert achieved > min_pairwise_distance(c).d_min
    rows = formats.trace_from_csv((tmp_path / "t.csv").read_text())
    acc = [d for _, a, d in rows if a]
    assert acc and all(b > a for a, b in zip(acc, acc[1:]))


def test_optimize_hamming_matches_exhaustive(tmp_path):
    run("gen", "--k", 2, "--seed", 5, "--out", tmp_path / "c.json")
    rc = run("optimize", "--in", tmp_path / "c.json", "--metric", "hamming", "--out", tmp_path / "m.json")
    assert rc == 0
    c = formats.constellation_from_json((tmp_path / "c.json").read_text())
    _, cost = formats.mapping_from_json((tmp_path / "m.json").read_text())
    assert cost == exhaustive_min_cost(c.points)


def test_optimize_schedule_from_file_and_restarts(tmp_path):
    run("gen", "--k", 3, "--seed", 1, "--out", tmp_path / "c.json")
    (tmp_path / "s.json").write_text(FAST_SCHED)
    rc = run("optimize", "--in", tmp_path / "c.json", "--schedule-json", tmp_path / "s.json",
             "--restarts", 3, "--out", tmp_path / "w.json")
    assert rc == 0


def test_optimize_parse_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    assert run("optimize", "--in", tmp_path / "bad.json", "--out", tmp_path / "w.json") == EXIT_PARSE
    run("gen", "--k", 2, "--out", tmp_path / "c.json")
    assert run("optimize", "--in", tmp_path / "c.json", "--schedule-json", '{"radius": 2}',
               "--out", tmp_path / "w.json") == EXIT_USAGE
    assert run("optimize", "--in", tmp_path / "missing.json", "--out", tmp_path / "w.json") == EXIT_IO


def test_simulate_qpsk_awgn(tmp_path):
    out = tmp_path / "q.csv"
    rc = run("simulate", "--channel", "awgn_qam", "--k", 2, "--snr", "10", "--trials", 2_000_000,
             "--min-errors", 0, "--seed", 1, "--out", out)
    assert rc == 0
    curve = formats.curves_from_csv(out.read_text())[0]
    assert curve.rows[0].ser == pytest.approx(qpsk_awgn_ser(10), rel=0.1)
    assert (tmp_path / "q.csv.manifest.json").exists()


def test_simulate_shards_leave_body_unchanged(tmp_path):
    run("gen", "--k", 3, "--seed", 2, "--out", tmp_path / "c.json")
    bodies = []
    for shards in (1, 8):
        out = tmp_path / f"s{shards}.csv"
        assert run("simulate", "--const", tmp_path / "c.json", "--channel", "rayleigh_mbm_open",
                   "--snr", "0:5:20", "--trials", 40_000, "--shards", shards, "--out", out) == 0
        bodies.append(out.read_text())
    assert bodies[0] == bodies[1]


def test_simulate_closed_loop_with_weights_and_mapping(tmp_path):
    run("gen", "--k", 3, "--seed", 2, "--out", tmp_path / "c.json")
    run("optimize", "--in", tmp_path / "c.json", "--schedule-json", FAST_SCHED, "--out", tmp_path / "w.json")
    common = ["--const", tmp_path / "c.json", "--weights", tmp_path / "w.json", "--snr", "0:5:10", "--trials", 5000]
    assert run("simulate", "--channel", "rayleigh_mbm_closed", *common, "--out", tmp_path / "s.csv") == 0
    # a mapping for the shaped constellation; simulate BER
    from mbm import apply_weights, optimize_bit_mapping
    c = formats.constellation_from_json((tmp_path / "c.json").read_text())
    w, _ = formats.weights_from_json((tmp_path / "w.json").read_text())
    m = optimize_bit_mapping(apply_weights(c, w))
    (tmp_path / "m.json").write_text(formats.mapping_to_json(m, 0))
    assert run("simulate", "--channel", "rayleigh_mbm_closed", *common, "--mapping", tmp_path / "m.json",
               "--out", tmp_path / "b.csv") == 0
    curve = formats.curves_from_csv((tmp_path / "b.csv").read_text())[0]
    assert curve.rows[0].trials == 3 * 5000


def test_mapping_on_shaped_constellation_and_natural_ber(tmp_path):
    assert run("gen", "--k", 3, "--seed", 4, "--out", tmp_path / "c.json") == 0
    assert run("optimize", "--in", tmp_path / "c.json", "--seed", 1, "--schedule-json", FAST_SCHED,
               "--out", tmp_path / "w.json") == 0
    assert run("optimize", "--in", tmp_path / "c.json", "--weights", tmp_path / "w.json",
               "--metric", "hamming", "--out", tmp_path / "m.json") == 0
    c = formats.constellation_from_json((tmp_path / "c.json").read_text())
    w, _ = formats.weights_from_json((tmp_path / "w.json").read_text())
    mapping, cost = formats.mapping_from_json((tmp_path / "m.json").read_text())
    shaped = apply_weights(c, w)
    assert cost == mapping_cost(mapping, nearest_pairs(shaped))
    common = ("simulate", "--const", tmp_path / "c.json", "--weights", tmp_path / "w.json",
              "--channel", "awgn_mbm_shaped", "--snr", "4", "--trials", 4000, "--seed", 2)
    assert run(*common, "--mapping", "natural", "--out", tmp_path / "nat.csv") == 0
    nat = formats.curves_from_csv((tmp_path / "nat.csv").read_text())[0]
    assert nat.rows[0].trials == 3 * 4000
    assert run("optimize", "--in", tmp_path / "c.json", "--weights", tmp_path / "w.json",
               "--out", tmp_path / "x.json") == EXIT_USAGE


def test_simulate_draws(tmp_path):
    out = tmp_path / "avg.csv"
    assert run("simulate", "--channel", "rayleigh_mbm_open", "--k", 2, "--draws", 3, "--snr", "0:10:20",
               "--trials", 2000, "--out", out) == 0
    curve = formats.curves_from_csv(out.read_text())[0]
    assert curve.rows[0].trials == 3 * 2000


def test_simulate_energy_reference(tmp_path):
    common = ("simulate", "--channel", "rayleigh_mbm_open", "--k", 2, "--draws", 3, "--snr", "10",
              "--trials", 500, "--seed", 1)
    assert run(*common, "--out", tmp_path / "e.csv") == 0
    assert run(*common, "--energy-reference", "nominal", "--out", tmp_path / "n.csv") == 0
    ens = json.loads((tmp_path / "e.csv.manifest.json").read_text())["config"]
    nom = json.loads((tmp_path / "n.csv.manifest.json").read_text())["config"]
    assert ens["energy_reference"] == "ensemble" and nom["energy_reference"] == "nominal"
    assert nom["es"] == 1.0 and ens["es"] == ens["realized_es"]
    assert run(*common, "--energy-reference", "bogus", "--out", tmp_path / "x.csv") == EXIT_USAGE


def test_simulate_incoherent_flags(tmp_path):
    run("gen", "--k", 2, "--out", tmp_path / "c.json")
    run("optimize", "--in", tmp_path / "c.json", "--schedule-json", FAST_SCHED, "--out", tmp_path / "w.json")
    base = ["simulate", "--snr", "0:5:10", "--trials", 100, "--out", tmp_path / "x.csv"]
    assert run(*base, "--channel", "rayleigh_mbm_open", "--const", tmp_path / "c.json",
               "--weights", tmp_path / "w.json") == EXIT_USAGE
    assert run(*base, "--channel", "rayleigh_mbm_open") == EXIT_USAGE
    assert run(*base, "--channel", "awgn_qam", "--k", 2, "--draws", 3) == EXIT_USAGE
    assert run(*base[:2], "0:a:10", *base[3:], "--channel", "awgn_qam", "--k", 2) == EXIT_USAGE


def test_analytic_text_and_json_agree(capsys):
    assert run("analytic", "--k", 2) == 0
    text = capsys.readouterr().out
    assert run("analytic", "--k", 2, "--json") == 0
    data = json.loads(capsys.readouterr().out)
    parsed = {}
    for line in text.strip().splitlines():
        key, val = line.split(": ")
        parsed[key] = int(val) if key == "k" else float(val)
    assert parsed == data
    assert data["mean_dmin_bound"] == pytest.approx(0.8862, abs=5e-5)
    assert data["qam_rayleigh_dmin"] == pytest.approx(1.2533, abs=5e-5)


def test_analytic_large_k(capsys):
    assert run("analytic", "--k", 60, "--json") == 0
    assert json.loads(capsys.readouterr().out)["eta_bound"] == pytest.approx(0.8165, abs=5e-5)
    assert run("analytic", "--k", 0) == EXIT_USAGE


def test_dmin_stats_outputs(tmp_path):
    out = tmp_path / "h.csv"
    assert run("dmin-stats", "--k", 2, "--draws", 20_000, "--statistic", "do", "--seed", 3, "--out", out) == 0
    h = formats.histogram_from_csv(out.read_text())
    assert abs(sum(h.density * h.widths) - 1) <= 1e-9
    mean = sum(h.centers * h.counts) / h.total
    assert mean == pytest.approx(0.8862, rel=0.02)
    assert (tmp_path / "h_scaled.csv").exists()
    pdf = (tmp_path / "h_pdf.csv").read_text().splitlines()
    assert pdf[0] == "d,pdf" and len(pdf) > 100
    man = json.loads((tmp_path / "h.csv.manifest.json").read_text())
    assert len(man["outputs"]) == 3


def test_dmin_stats_closed_loop_shift(tmp_path):
    args = ["dmin-stats", "--k", 4, "--draws", 30, "--seed", 2, "--max-d", 2]
    assert run(*args, "--out", tmp_path / "o.csv") == 0
    assert run(*args, "--mode", "closed_loop", "--schedule-json", FAST_SCHED, "--out", tmp_path / "c.csv") == 0
    o = formats.histogram_from_csv((tmp_path / "o.csv").read_text())
    c = formats.histogram_from_csv((tmp_path / "c.csv").read_text())
    assert c.median() > o.median()


def test_seed_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MBM_SEED_DIR", str(tmp_path))
    assert run("gen", "--k", 2, "--seed", 1, "--out", "rel.json") == 0
    assert (tmp_path / "rel.json").exists()


def test_replay_reproduces(tmp_path):
    out = tmp_path / "r.csv"
    run("simulate", "--channel", "rayleigh_qam", "--k", 4, "--snr", "0:5:15", "--trials", 20_000, "--out", out)
    first = out.read_text()
    out.unlink()
    assert run("replay", tmp_path / "r.csv.manifest.json") == 0
    assert out.read_text() == first
