import json

from qsagg import cli


def run_cli(argv):
    return cli.main(argv)


def test_run_writes_artifacts_and_passes(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli([
        "run", "--n", "3", "--key-lengths", "2,2", "--keys", "01,10",
        "--shots", "50", "--seed", "7", "--out-dir", str(out),
    ])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["fcp_fraction"] == 1.0
    assert summary["planted_secret"] == "1001"
    assert summary["spec"]["engine"] == "factorized"
    lines = (out / "transcripts.jsonl").read_text().splitlines()
    assert len(lines) == 50
    record = json.loads(lines[0])
    assert record["s"] == "1001" and record["n"] == 3
    hist_lines = (out / "histogram.csv").read_text().splitlines()
    assert hist_lines[0] == "outcome,count,probability"
    printed = json.loads(capsys.readouterr().out)
    assert printed["shots"] == 50


def test_spec_file_with_flag_override(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "n": 3, "key_lengths": [1, 1], "random_keys": True,
        "shots": 5, "seed": 1, "out_dir": str(tmp_path / "a"),
    }))
    code = run_cli(["run", "--spec", str(spec_path), "--shots", "9",
                    "--out-dir", str(tmp_path / "b")])
    assert code == 0
    lines = ((tmp_path / "b") / "transcripts.jsonl").read_text().splitlines()
    assert len(lines) == 9  # the flag outranks the file


def test_unknown_spec_field_is_config_error(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"qubits": 3}))
    code = run_cli(["run", "--spec", str(spec_path), "--seed", "1"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"


def test_seed_must_be_explicit(tmp_path, capsys):
    code = run_cli(["run", "--n", "3", "--key-lengths", "1,1", "--random-keys",
                    "--shots", "1", "--out-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert "seed" in err["message"]


def test_blinding_with_explicit_player_source_rejected(tmp_path, capsys):
    code = run_cli([
        "run", "--n", "3", "--m", "2", "--random-keys", "--shots", "1",
        "--seed", "1", "--attack", "blinding", "--source", "spymaster",
        "--out-dir", str(tmp_path),
    ])
    assert code == 2


def test_blinding_defaults_to_third_party(tmp_path):
    code = run_cli([
        "run", "--n", "3", "--m", "2", "--random-keys", "--shots", "4",
        "--seed", "1", "--attack", "blinding", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    record = json.loads((tmp_path / "transcripts.jsonl").read_text().splitlines()[0])
    assert record["source"] == "third-party"
    assert record["attack"]["kind"] == "blinding"


def test_infeasible_key_split_rejected(tmp_path, capsys):
    code = run_cli(["run", "--n", "5", "--m", "2", "--random-keys", "--shots", "1",
                    "--seed", "1", "--out-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert "at least one bit" in err["message"]


def test_keys_and_lengths_must_agree(tmp_path, capsys):
    code = run_cli(["run", "--n", "3", "--keys", "01,10", "--key-lengths", "1,1",
                    "--shots", "1", "--seed", "1", "--out-dir", str(tmp_path)])
    assert code == 2


def test_assertion_failures_exit_one(tmp_path, capsys, monkeypatch):
    def broken_verify(batch):
        return {"fcp_fraction": 0.5, "reconstruction_success_fraction": 1.0,
                "restart_counts": {}, "planted_secret": None, "shots": batch.shots}

    monkeypatch.setattr(cli, "verify_batch", broken_verify)
    code = run_cli(["run", "--n", "3", "--key-lengths", "1,1", "--random-keys",
                    "--shots", "2", "--seed", "3", "--out-dir", str(tmp_path)])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "assertion"


def test_verify_subcommand_passes(capsys):
    assert run_cli(["verify"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 4
    assert all(line.startswith("PASS ") for line in out)


def test_attack_sweep_writes_curves(tmp_path, capsys):
    code = run_cli([
        "attack", "--attack", "pns", "--n", "3", "--m", "2", "--shots", "300",
        "--seed", "5", "--fractions", "0,1", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    lines = (tmp_path / "attack_curves.csv").read_text().splitlines()
    assert lines[0] == "attack,parameter,value,shots,eve_success,alice_corrupted,extended_parity"
    assert len(lines) == 3
    zero_row = lines[1].split(",")
    # no tuples touched: reconstruction intact, Eve at blind chance only
    assert zero_row[2] == "0.0"
    assert float(zero_row[5]) == 0.0
    assert abs(float(zero_row[4]) - 0.25) < 0.15


def test_ghz_json_dump(capsys):
    assert run_cli(["ghz", "--n", "5", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n"] == 5
    assert [entry[0] for entry in payload["nonzero"]] == [0, 31]


def test_ghz_text_dump(capsys):
    assert run_cli(["ghz", "--n", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "2 CNOT layers" in lines[0]
    assert lines[1].startswith("000 ")
    assert lines[2].startswith("111 ")


def test_intercept_basis_sweep(tmp_path, capsys):
    code = run_cli([
        "attack", "--attack", "intercept", "--n", "3", "--m", "2",
        "--shots", "200", "--seed", "9", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    lines = (tmp_path / "attack_curves.csv").read_text().splitlines()
    assert len(lines) == 3  # header + z + x
    assert lines[1].split(",")[2] == "z"
    assert lines[2].split(",")[2] == "x"


def test_even_split_with_remainder():
    from qsagg.cli import even_key_lengths

    assert even_key_lengths(7, 3) == [3, 2, 2]
    assert even_key_lengths(8, 5) == [2, 2, 2, 1, 1]
    assert even_key_lengths(3, 3) == [1, 1, 1]


def test_thread_count_does_not_change_bytes(tmp_path):
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}"
        code = run_cli([
            "run", "--n", "3", "--key-lengths", "2,2", "--keys", "01,10",
            "--shots", "64", "--seed", "11", "--threads", threads,
            "--out-dir", str(out),
        ])
        assert code == 0
        outs.append(out)
    for name in ("transcripts.jsonl", "histogram.csv", "summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
