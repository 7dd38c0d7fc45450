"""End-to-end behaviour of the command-line entry point and its exit codes."""

import json

import pytest

from metriplex import cli


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestExitCodes:
    def test_list_systems(self, capsys):
        code, out, _ = run(capsys, "list-systems")
        assert code == 0 and "rigid-body" in out.split()

    def test_schema(self, capsys):
        code, out, _ = run(capsys, "schema")
        assert code == 0 and "properties" in json.loads(out)

    def test_usage_error(self, capsys):
        assert run(capsys, "fpe", "--cells", "x,y")[0] == 2
        assert run(capsys, "frobnicate")[0] == 2

    def test_unknown_system(self, capsys):
        code, _, err = run(capsys, "verify", "nosuch")
        assert code == 2 and "nosuch" in err

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('scenario = "fpe"\n[system]\nname = "canonical2d"\n[gird]\ncells = [8, 8]\n')
        code, _, err = run(capsys, "run", "--config", cfg)
        assert code == 2 and "gird.cells" in err

    def test_sde_blow_up(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "sde", "--system", "canonical2d", "--x0", "1,0", "--N", 4, "--D", 0, "--friction", "fixed:0",
            "--dt", 100, "--steps", 40, "--out", tmp_path,
        )
        assert code == 3 and "last good time" in err


class TestVerify:
    def test_corrupted_demo_fails(self, capsys):
        code, out, _ = run(capsys, "verify", "corrupted-demo", "--states", 20, "--no-brackets")
        report = json.loads(out)
        assert code == 1 and not report["ok"]

    def test_chm(self, capsys, tmp_path):
        code, out, _ = run(capsys, "chm", "verify", "--K", 2, "--states", 20, "--out", tmp_path)
        assert code == 0 and json.loads(out)["ok"]
        assert (tmp_path / "verify-chm.json").exists() and (tmp_path / "manifest.json").exists()

    def test_rigid_body_with_brackets(self, capsys):
        code, out, _ = run(capsys, "verify", "rigid-body", "--states", 20, "--cells", 10)
        assert code == 0 and json.loads(out)["ok"]

    def test_bracket_fault_injection(self, capsys):
        assert run(capsys, "verify-brackets", "canonical2d", "--cells", 24)[0] == 0
        assert run(capsys, "verify-brackets", "canonical2d", "--cells", 24, "--corrupt")[0] == 1


class TestRuns:
    def fpe(self, capsys, out):
        return run(
            capsys, "fpe", "--system", "canonical2d", "--min=-4,-4", "--max", "4,4", "--cells", "24,24",
            "--dt", 0.01, "--t-end", 0.2, "--record-every", 5, "--centre", "0.5,0", "--out", out,
        )

    def test_fpe_outputs(self, capsys, tmp_path):
        code, out, _ = self.fpe(capsys, tmp_path)
        assert code == 0
        summary = json.loads(out)
        assert summary["max_energy_drift"] <= 1e-3
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert {"diagnostics.csv", "final_density.npy", "final_density.json"} <= set(manifest["files"])
        header = (tmp_path / "diagnostics.csv").read_text().splitlines()[0]
        assert header == "t,N,E,S,Sigma,beta,dSdt,L1_eq"

    def test_byte_identical_reruns(self, capsys, tmp_path):
        self.fpe(capsys, tmp_path / "a")
        self.fpe(capsys, tmp_path / "b")
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()

    def test_sde_threads_do_not_change_output(self, capsys, tmp_path):
        for threads, name in ((1, "a"), (3, "b")):
            code, _, _ = run(
                capsys, "sde", "--system", "rigid-body", "--x0", "1,0.5,0.2", "--spread", 0.3, "--N", 600,
                "--steps", 20, "--dt", 0.01, "--record-every", 10, "--seed", 5, "--threads", threads,
                "--out", tmp_path / name,
            )
            assert code == 0
        a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
        assert a == (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert a.splitlines()[0] == b"t,E,S,beta,C1"

    def test_chm_integrate(self, capsys, tmp_path):
        code, out, _ = run(capsys, "chm", "integrate", "--K", 2, "--dt", 1e-3, "--steps", 50, "--out", tmp_path)
        assert code == 0
        assert json.loads(out)["energy_drift"] <= 1e-8

    def test_chm_thermalize_outputs(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "chm", "thermalize", "--K", 1, "--N", 64, "--steps", 20, "--average-from", 10,
            "--record-every", 10, "--out", tmp_path,
        )
        assert code == 0
        header = (tmp_path / "spectrum.csv").read_text().splitlines()[0]
        assert header.startswith("n,m,alpha_nm,mean_sq_amp,predicted")

    def test_run_shipped_config(self, capsys, tmp_path):
        cfg = tmp_path / "p.toml"
        text = open("configs/polynomial_sde.toml").read()
        cfg.write_text(text)
        code, _, _ = run(capsys, "run", "--config", cfg, "--out", tmp_path / "o")
        assert code == 0 and (tmp_path / "o" / "manifest.json").exists()
