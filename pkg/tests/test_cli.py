import json
from pathlib import Path

import numpy as np
import pytest

from anneal_tuner import cli
from anneal_tuner.embedding import pair_chain_embedding, write_embedding
from anneal_tuner.ising import IsingProblem, write_instance
from anneal_tuner.pipeline import Budgets, iterative_tune
from anneal_tuner.sampler import SamplerConfig
from anneal_tuner.store import ENV_OUT, ResultStore, file_hash
from anneal_tuner.topology import ChimeraSpec, build_chimera, write_graph

FAST = ["--sweeps=10"]


def run(*argv, out):
    code = cli.main([*map(str, argv), f"--out={out}"])
    return code


def artifacts(capsys):
    return [Path(p) for p in json.loads(capsys.readouterr().out.strip().splitlines()[-1])["artifacts"]]


@pytest.fixture
def generated(tmp_path, capsys):
    assert run("generate", "--chimera", "2x2x4", "--seed", 3, out=tmp_path) == 0
    inst, graph = artifacts(capsys)
    return inst, graph


def test_generate_files(generated):
    inst, graph = generated
    assert inst.read_text().startswith("p ising 32 0 80 ")
    assert graph.read_text().startswith("chimera 2 2 4 0\n")


def test_score_five_energy_fixture(tmp_path, capsys):
    f = tmp_path / "five.csv"
    f.write_text("batch,read,energy_device,spins\n" + "".join(f"0,{i},{-e},+-\n" for i, e in enumerate(range(1, 6))))
    assert run("score", "--readouts", f, "--epsilon", 40, out=tmp_path / "o") == 0
    (path,) = artifacts(capsys)
    assert path.read_text().splitlines()[1] == "five,4.5,1,5,1,40"


def test_sample_is_byte_identical(generated, tmp_path, capsys):
    inst, _ = generated
    flags = ["sample", "--instance", inst, "--n-reads", 300, "--gauge-seed", 2, "--sigma-j", 0.05, *FAST]
    assert run(*flags, out=tmp_path / "a") == 0
    a_csv, a_json = artifacts(capsys)
    assert run(*flags, "--threads", 1, out=tmp_path / "b") == 0
    b_csv, b_json = artifacts(capsys)
    assert a_csv.read_bytes() == b_csv.read_bytes()
    assert a_json.read_bytes() == b_json.read_bytes()
    meta = json.loads(a_json.read_text())
    assert meta["spec_id"] == "2" and meta["sampler"]["n_reads"] == 300


def test_score_and_rank_clean_energies(generated, tmp_path, capsys):
    inst, _ = generated
    paths = []
    for g in (1, 2, 3):
        assert run("sample", "--instance", inst, "--n-reads", 200, "--gauge-seed", g, *FAST, out=tmp_path) == 0
        paths.append(artifacts(capsys)[0])
    assert run("score", "--readouts", *paths, "--instance", inst, "--batched", out=tmp_path) == 0
    (scores,) = artifacts(capsys)
    rows = scores.read_text().splitlines()
    assert rows[0] == "spec_id,score,rank,n_reads,n_reps,epsilon" and len(rows) == 4
    assert run("rank", "--readouts", *paths, "--instance", inst, "--method", "greedy", out=tmp_path) == 0
    (ranks,) = artifacts(capsys)
    assert {r.split(",")[0] for r in ranks.read_text().splitlines()[1:]} == {"1", "2", "3"}
    assert run("rank", "--readouts", paths[0], paths[0], out=tmp_path) == 1


def test_validation_errors_exit_one_with_json(tmp_path, capsys):
    assert run("sample", "--instance", tmp_path / "missing.txt", out=tmp_path) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "validation" and err["command"] == "sample"
    assert run("sample", "--no-such-flag", out=tmp_path) == 1
    assert run("generate", "--chimera", "2x2", out=tmp_path) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("p ising 2 0 1 0\n0 1 3.0\n")
    assert run("sample", "--instance", bad, "--n-reads", 7, "--t-a", 100, "--duty", 300, out=tmp_path) == 1


def test_env_var_sets_output_dir(generated, tmp_path, monkeypatch, capsys):
    inst, _ = generated
    monkeypatch.setenv(ENV_OUT, str(tmp_path / "env"))
    assert cli.main(["sample", "--instance", str(inst), "--n-reads", "10", *FAST]) == 0
    (csv_path, _) = artifacts(capsys)
    assert csv_path.parent == tmp_path / "env" / "readouts"


def test_manifest_replay_reproduces_hash(generated, tmp_path, capsys):
    inst, _ = generated
    out = tmp_path / "m"
    assert run("gauge-scan", "--instance", inst, "--n-gauges", 4, "--n-reads", 100, *FAST, out=out) == 0
    capsys.readouterr()
    for entry in ResultStore(out).entries():
        fresh = cli.replay(entry, tmp_path / "replay")
        assert file_hash(fresh) == entry["sha256"]


@pytest.fixture
def embedded_fixture(tmp_path):
    g = build_chimera(ChimeraSpec(1, 2, 4))
    emb = pair_chain_embedding(g)
    rng = np.random.default_rng(0)
    from anneal_tuner.embedding import induced_logical_edges

    J = {e: float(rng.choice([-1, 1])) for e in induced_logical_edges(emb, g)}
    lp = IsingProblem.from_terms(emb.n_logical, J=J)
    paths = tmp_path / "lp.txt", tmp_path / "emb.json", tmp_path / "g.txt"
    write_instance(lp, paths[0])
    write_embedding(emb, paths[1])
    write_graph(g, paths[2])
    return (lp, emb, g), paths


def test_tune_matches_library(embedded_fixture, tmp_path, capsys):
    (lp, emb, g), (ip, ep, gp) = embedded_fixture
    cands = [0.25, 0.5, 1.0, 2.0, 4.0]
    argv = ["tune", "--instance", ip, "--embedding", ep, "--graph", gp, "--candidates", ",".join(map(str, cands)),
            "--n-gauges", 6, "--scan-reads", 200, "--total-reads", 400, "--top-k", 3, "--seed", 4, *FAST]
    assert run(*argv, out=tmp_path / "o") == 0
    (report,) = artifacts(capsys)
    rep = iterative_tune(lp, emb, g, cands, 6, Budgets(200, 400, 3), 2.0, SamplerConfig(sweeps=10), seed=4)
    assert json.loads(report.read_text()) == json.loads(cli.json_dumps(rep.to_dict()))


def test_je_scan_experiment_correlate_run(embedded_fixture, tmp_path, capsys):
    _, (ip, ep, gp) = embedded_fixture
    assert run("je-scan", "--instance", ip, "--embedding", ep, "--graph", gp, "--candidates", "0.5,1,2",
               "--n-reads", 100, *FAST, out=tmp_path) == 0
    (curve,) = artifacts(capsys)
    assert curve.read_text().splitlines()[0] == "J_E,f_SE,elite_score"
    common = ["--instance", ip, "--embedding", ep, "--graph", gp, "--J-E", 1.0, *FAST]
    assert run("experiment", *common, "--n-gauges", 6, "--n-reads", "50,100", "--epsilons", "2,10",
               "--experiments", 2, "--total-reads", 200, "--top-k", 2, out=tmp_path) == 0
    (table,) = artifacts(capsys)
    rows = json.loads(table.read_text())["rows"]
    assert {(r["n_reads"], r["method"]) for r in rows} == {(n, m) for n in (50, 100) for m in ("2%", "10%", "greedy")}
    assert run("correlate", *common, "--n-gauges", 10, "--n-reads", 50, "--total-reads", 100, out=tmp_path) == 0
    (corr,) = artifacts(capsys)
    assert corr.read_text().splitlines()[0] == "count_type,spearman_rho,degenerate"
    assert run("gauge-scan", "--instance", ip, "--embedding", ep, out=tmp_path) == 1
