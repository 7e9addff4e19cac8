import csv
import io

import numpy as np
import pytest

from softmax_newton import formats
from softmax_newton.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    return dict(ln.split("=", 1) for ln in out.splitlines() if "=" in ln)


@pytest.fixture
def bundle(tmp_path, capsys):
    path = tmp_path / "inst"
    code, _, _ = run(capsys, "generate", "--n", 20, "--d", 5, "--mode", "trivial", "--seed", 1, "--out", path)
    assert code == EXIT_OK
    return path


def test_generate_trivial_bundle(bundle):
    for name in ("A.mat", "b.vec", "w.vec", "meta", "xstar.vec"):
        assert (bundle / name).is_file()
    assert np.array_equal(formats.read_vector(bundle / "xstar.vec"), np.zeros(5))


def test_generate_byte_identical(bundle, tmp_path, capsys):
    again = tmp_path / "again"
    run(capsys, "generate", "--n", 20, "--d", 5, "--mode", "trivial", "--seed", 1, "--out", again)
    for name in ("A.mat", "b.vec", "w.vec", "meta", "xstar.vec"):
        assert (bundle / name).read_bytes() == (again / name).read_bytes()


def test_generate_oracle_bundle(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--n", 15, "--d", 3, "--mode", "oracle", "--R", 1.0,
                     "--radius", 0.5, "--seed", 2, "--out", tmp_path / "o")
    assert code == EXIT_OK
    meta = formats.read_keyvalue(tmp_path / "o" / "meta")
    assert float(meta["oracle_grad_norm"]) <= 1e-10


def test_seed_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SOFTMAX_NEWTON_SEED", "1")
    run(capsys, "generate", "--n", 20, "--d", 5, "--out", tmp_path / "env")
    run(capsys, "generate", "--n", 20, "--d", 5, "--seed", 1, "--out", tmp_path / "flag")
    assert (tmp_path / "env" / "A.mat").read_bytes() == (tmp_path / "flag" / "A.mat").read_bytes()


def test_generated_bundle_passes_assumptions(bundle, capsys):
    code, out, _ = run(capsys, "verify", "--check", "assumptions", "--bundle", bundle)
    assert code == EXIT_OK and out.strip().endswith("PASS")


def test_solve_exact_full(bundle, tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--bundle", bundle, "--mode", "exact_full", "--stop", "grad_norm",
                       "--init-radius", 0.5, "--out", tmp_path / "x.vec", "--trace", tmp_path / "t.csv")
    assert code == EXIT_OK
    assert float(kv(out)["grad_norm"]) <= 1e-10
    assert formats.read_vector(tmp_path / "x.vec").shape == (5,)


def test_solve_sketched_contractions(bundle, tmp_path, capsys):
    trace = tmp_path / "t.csv"
    code, out, _ = run(capsys, "solve", "--bundle", bundle, "--mode", "sketched_diag", "--eps", 1e-6,
                       "--delta", 0.05, "--stop", "fixed_T", "--init-radius", 0.01, "--trace", trace)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(trace.read_text())))
    contr = [float(r["contraction"]) for r in rows if r["contraction"]]
    assert contr and max(contr) <= 0.4
    assert float(rows[-1]["r"]) <= 1e-6


def test_solve_missing_matrix(bundle, capsys):
    (bundle / "A.mat").unlink()
    code, _, err = run(capsys, "solve", "--bundle", bundle)
    assert code == EXIT_IO and "A.mat" in err


def test_solve_malformed_file(bundle, capsys):
    (bundle / "b.vec").write_text("3\n1\n")
    code, _, err = run(capsys, "solve", "--bundle", bundle)
    assert code == EXIT_IO and "b.vec" in err


def test_solve_names_failing_assumption(bundle, capsys):
    b = formats.read_vector(bundle / "b.vec")
    formats.write_vector(bundle / "b.vec", 1.2 * b)
    code, _, err = run(capsys, "solve", "--bundle", bundle)
    assert code == EXIT_VALIDATION and "b_l1_le_1" in err
    code, _, _ = run(capsys, "solve", "--bundle", bundle, "--unsafe", "--mode", "exact_full")
    assert code == EXIT_OK


def test_solve_fixed_T_without_xstar(bundle, capsys):
    (bundle / "xstar.vec").unlink()
    code, _, err = run(capsys, "solve", "--bundle", bundle, "--stop", "fixed_T")
    assert code == EXIT_VALIDATION and "xstar" in err


def test_solve_iteration_cap_is_numerical(bundle, capsys):
    code, _, _ = run(capsys, "solve", "--bundle", bundle, "--mode", "exact_diag", "--init-radius", 0.5,
                     "--max-iters", 1, "--grad-tol", 1e-300)
    assert code == EXIT_NUMERICAL


def test_bad_flag_range(bundle):
    with pytest.raises(SystemExit) as ei:
        main(["solve", "--bundle", str(bundle), "--eps", "0.5"])
    assert ei.value.code == EXIT_VALIDATION


def test_config_file_with_flag_override(bundle, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"bundle={bundle}\nmode=exact_full\nstop=grad_norm\ninit-radius=0.5\nmax_iters=1\n")
    code, _, _ = run(capsys, "solve", "--config", cfg)
    assert code == EXIT_NUMERICAL
    code, out, _ = run(capsys, "solve", "--config", cfg, "--max-iters", 50)
    assert code == EXIT_OK


def test_config_unknown_key(bundle, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    code, _, err = run(capsys, "solve", "--bundle", bundle, "--config", cfg)
    assert code == EXIT_VALIDATION and "colour" in err


def test_verify_B_bounds_random(capsys):
    code, out, _ = run(capsys, "verify", "--check", "B_bounds", "--random", 10, 4, 100)
    assert code == EXIT_OK
    assert kv(out)["B_bounds.passed"] == "100"


def test_verify_gradient_fd(capsys):
    code, out, _ = run(capsys, "verify", "--check", "gradient_fd")
    assert code == EXIT_OK
    assert float(kv(out)["gradient_fd.max_rel_err"]) <= 1e-6


def test_verify_sandwich(capsys):
    code, out, _ = run(capsys, "verify", "--check", "sandwich", "--eps0", 0.1, "--trials", 100)
    r = kv(out)
    assert code == EXIT_OK
    assert int(r["sandwich.failures"]) <= int(r["sandwich.allowed"])


def test_verify_all_on_bundle(bundle, capsys):
    code, out, _ = run(capsys, "verify", "--bundle", bundle, "--trials", 5, "--pairs", 10, "--points", 20)
    assert code == EXIT_OK
    assert out.strip().endswith("PASS")


def test_verify_jobs_do_not_change_output(capsys):
    args = ["verify", "--check", "B_bounds,gradient_fd", "--random", 8, 3, 6]
    _, one, _ = run(capsys, *args, "--jobs", 1)
    _, two, _ = run(capsys, *args, "--jobs", 2)
    assert one == two


def test_verify_unknown_check(capsys):
    code, _, err = run(capsys, "verify", "--check", "nope")
    assert code == EXIT_VALIDATION and "nope" in err


def test_verify_reports_failure(tmp_path, capsys):
    # weights far below the threshold
    A = np.eye(3)
    formats.write_matrix(tmp_path / "A.mat", A)
    formats.write_vector(tmp_path / "b.vec", np.full(3, 1 / 3))
    formats.write_vector(tmp_path / "w.vec", np.ones(3))
    code, out, _ = run(capsys, "verify", "--check", "assumptions,w2_sandwich", "--bundle", tmp_path, "--trials", 3)
    assert code != EXIT_OK and out.strip().endswith("FAIL")


def test_bench_rows_and_agreement(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    code, _, _ = run(capsys, "bench", "--n-grid", "200,400", "--d", 4, "--modes", "exact_full,sketched_diag",
                     "--eps", 1e-8, "--out", out_csv)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out_csv.read_text())))
    assert len(rows) == 4
    for n in ("200", "400"):
        errs = [float(r["final_error"]) for r in rows if r["n"] == n]
        assert max(errs) <= 1e-8 and abs(errs[0] - errs[1]) <= 10 * 1e-8


def test_bench_deterministic_columns(capsys):
    args = ["bench", "--n-grid", "100", "--d", 3, "--modes", "exact_diag"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    strip = lambda s: [r[:6] for r in csv.reader(io.StringIO(s))]
    assert strip(a) == strip(b)
