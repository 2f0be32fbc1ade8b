import pytest

from deeplinlab.cli import (
    ConfigError,
    RunConfig,
    main,
    read_trajectory_csv,
    run_experiment,
)
from deeplinlab.data import Dataset, gen_input_gaussian, gen_output_uniform, write_csv
from deeplinlab.losses import error_report, l2
from deeplinlab.network import load_network
from deeplinlab.oracle import optimal_loss


def base_args(tmp_path, **extra):
    out = tmp_path / "traj.csv"
    args = [
        "train",
        "--d-in", "6", "--d-out", "2", "--m", "20",
        "--data-seed", "3", "--depth", "3", "--seed", "5",
        "--policy", "optimal", "--order", "desc", "--sweeps", "4",
        "--target", "0", "--out", str(out),
    ]
    for key, value in extra.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    return args, out


def test_train_writes_csv_and_exits_zero(tmp_path, capsys):
    args, out = base_args(tmp_path)
    assert main(args) == 0
    assert "final_dist=" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    data_rows = [l for l in lines if l and not l.startswith("#")]
    assert data_rows[0].startswith("iteration,sweep,layer_updated,lr,loss,")
    assert len(data_rows) == 1 + 3 * 4  # header + L * sweeps


def test_same_config_byte_identical(tmp_path):
    args1, out1 = base_args(tmp_path)
    main(args1)
    first = out1.read_bytes()
    out2 = tmp_path / "again.csv"
    args2, _ = base_args(tmp_path)
    args2[args2.index(str(out1))] = str(out2)
    main(args2)
    assert out2.read_bytes() == first


def test_trajectory_roundtrip(tmp_path):
    cfg = RunConfig(
        d_in=5, d_out=2, m=15, data_seed=1, depth=2, seed=2,
        policy="theory:1.0", sweeps=3, target=0.0,
        out=str(tmp_path / "t.csv"),
    )
    traj = run_experiment(cfg)
    back = read_trajectory_csv(cfg.out)
    assert len(back) == len(traj)
    for a, b in zip(traj.records, back.records):
        assert a.iteration == b.iteration
        assert a.lr == b.lr
        assert a.loss_after == b.loss_after
        assert a.dist_after == b.dist_after
        assert a.gamma_bound == b.gamma_bound
    assert back.records[0].dist_before == traj.records[0].dist_before


def test_zero_sweeps_header_only(tmp_path):
    cfg = RunConfig(d_in=4, d_out=2, m=10, sweeps=0, out=str(tmp_path / "e.csv"))
    traj = run_experiment(cfg)
    assert len(traj) == 0
    rows = [l for l in (tmp_path / "e.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows == ["iteration,sweep,layer_updated,lr,loss,dist_to_opt_raw,dist_display,gamma_bound,grad_frobenius"]


def test_config_file_with_flag_override(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text(
        "# layer lab config\n"
        "d_in = 6\nd_out = 2\nm = 18\ndata_seed = 7\n"
        "depth = 2\nseed = 9\npolicy = optimal\norder = asc\nsweeps = 5\n"
        f"out = {tmp_path / 'cfg.csv'}\n"
    )
    code = main(["train", "--config", str(config), "--sweeps", "2", "--target", "0"])
    assert code == 0
    rows = [
        l for l in (tmp_path / "cfg.csv").read_text().splitlines()
        if l and not l.startswith("#")
    ]
    assert len(rows) == 1 + 2 * 2  # flag override wins: 2 sweeps, not 5


def test_bad_config_exit_code_2(tmp_path, capsys):
    assert main(["train", "--policy", "magic", "--out", str(tmp_path / "x.csv")]) == 2
    assert "config error" in capsys.readouterr().err
    config = tmp_path / "bad.cfg"
    config.write_text("nonsense_key = 1\n")
    assert main(["train", "--config", str(config)]) == 2


def test_bottleneck_chain_rejected_mismatch(tmp_path):
    cfg = RunConfig(d_in=6, d_out=2, dims=(6, 3, 3), out=str(tmp_path / "z.csv"))
    with pytest.raises(ConfigError):
        cfg.validate()


def test_gen_data_and_train_from_csv(tmp_path, capsys):
    data_path = tmp_path / "data.csv"
    assert main([
        "gen-data", "--d-in", "5", "--d-out", "2", "--m", "30",
        "--data-seed", "11", "--out", str(data_path),
    ]) == 0
    assert "kappa(X)" in capsys.readouterr().out
    out = tmp_path / "fromcsv.csv"
    code = main([
        "train", "--csv", str(data_path), "--d-in", "5", "--d-out", "2",
        "--depth", "2", "--sweeps", "2", "--target", "0", "--out", str(out),
    ])
    assert code == 0 and out.exists()


def test_snapshots_spot_check(tmp_path):
    cfg = RunConfig(
        d_in=6, d_out=2, m=20, data_seed=13, depth=3, seed=1,
        policy="optimal", order="desc", sweeps=10, target=0.0,
        out=str(tmp_path / "snap.csv"), snapshots=10,
    )
    traj = run_experiment(cfg)
    x = gen_input_gaussian(6, 20, 13)
    y = gen_output_uniform(2, 20, 14)
    data = Dataset(x=x, y=y)
    ref = optimal_loss(x, y, 2)
    snapdir = tmp_path / "snap.csv.snapshots"
    snaps = sorted(snapdir.glob("sweep_*.net"))
    assert len(snaps) >= 10
    checked = 0
    for snap in snaps:
        sweep = int(snap.stem.split("_")[1])
        if sweep == 0 or sweep * 3 > len(traj.records):
            continue
        net = load_network(snap)
        report = error_report(net, data, l2(), ref)
        row = traj.records[sweep * 3 - 1]
        assert report.dist_to_opt == pytest.approx(row.dist_after, rel=1e-9, abs=1e-15)
        checked += 1
    assert checked >= 5


def test_verify_command_exit_codes(tmp_path):
    cfg = RunConfig(
        d_in=6, d_out=2, m=20, data_seed=17, depth=2, seed=3,
        policy="theory:1.0", sweeps=5, target=0.0, out=str(tmp_path / "v.csv"),
    )
    run_experiment(cfg)
    assert main(["verify", "--trajectory", str(tmp_path / "v.csv")]) == 0
    # plant a violation: increase one recorded distance mid-file
    lines = (tmp_path / "v.csv").read_text().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("#") or line.startswith("iteration"):
            continue
        parts = line.split(",")
        parts[5] = repr(float(parts[5]) * 10 + 1.0)
        lines[i + 2] = lines[i + 2]  # keep later rows; only one bump needed
        lines[i] = ",".join(parts)
        break
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    assert main(["verify", "--trajectory", str(tmp_path / "bad.csv")]) == 1
    # a trajectory without gamma bounds is a usage error
    cfg2 = RunConfig(
        d_in=6, d_out=2, m=20, data_seed=17, depth=2, seed=3,
        policy="optimal", sweeps=2, target=0.0, out=str(tmp_path / "nog.csv"),
    )
    run_experiment(cfg2)
    assert main(["verify", "--trajectory", str(tmp_path / "nog.csv")]) == 2


def test_oracle_command(tmp_path, capsys):
    assert main([
        "oracle", "--d-in", "5", "--d-out", "2", "--m", "25",
        "--data-seed", "19", "--rank", "2",
    ]) == 0
    out = capsys.readouterr().out
    assert "optimal_loss=" in out and "w_star_frobenius=" in out


def test_bcsgd_command(tmp_path, capsys):
    code = main([
        "bcsgd", "--d-in", "4", "--d-out", "2", "--m", "12",
        "--data-seed", "23", "--depth", "2", "--seed", "1",
        "--sweeps", "60", "--eta", "0.5", "--seeds", "2",
        "--out", str(tmp_path / "sgd.csv"),
    ])
    out = capsys.readouterr().out
    assert "aggregate:" in out
    assert code in (0, 1)  # bracket check result is data-dependent here
    assert (tmp_path / "sgd_seed1.csv").exists()
    assert (tmp_path / "sgd_seed2.csv").exists()


def test_batch_command(tmp_path):
    paths = []
    for k in (1, 2):
        cfg = tmp_path / f"b{k}.cfg"
        cfg.write_text(
            f"d_in = 4\nd_out = 2\nm = 10\ndata_seed = {k}\ndepth = 2\n"
            f"sweeps = 2\ntarget = 0\nout = {tmp_path / f'b{k}.csv'}\n"
        )
        paths.append(str(cfg))
    assert main(["batch", *paths]) == 0
    assert (tmp_path / "b1.csv").exists() and (tmp_path / "b2.csv").exists()


def test_gd_command(tmp_path, capsys):
    out = tmp_path / "gd.csv"
    code = main([
        "gd", "--d-in", "5", "--d-out", "2", "--m", "15", "--data-seed", "29",
        "--depth", "2", "--seed", "4", "--iters", "20", "--target", "0",
        "--out", str(out),
    ])
    assert code == 0
    assert "eta=" in capsys.readouterr().out
    assert out.exists()


def test_spectrum_shaped_flows_through(tmp_path):
    cfg = RunConfig(
        d_in=5, d_out=2, m=20, data_seed=31, spectrum="shaped", spectrum_seed=7,
        depth=2, sweeps=1, target=0.0, out=str(tmp_path / "s.csv"),
    )
    traj = run_experiment(cfg)
    assert len(traj) == 2


def test_write_csv_roundtrip_matches_generator(tmp_path):
    x = gen_input_gaussian(3, 8, 1)
    y = gen_output_uniform(2, 8, 2)
    write_csv(tmp_path / "d.csv", Dataset(x=x, y=y))
    text = (tmp_path / "d.csv").read_text()
    assert text.startswith("# d_in=3 d_out=2 m=8")
    assert len([l for l in text.splitlines() if not l.startswith("#")]) == 8


def test_policy_loss_pairing_validated(tmp_path):
    cfg = RunConfig(loss="lp:4", policy="optimal", out=str(tmp_path / "p.csv"))
    with pytest.raises(ConfigError, match="l2 loss"):
        cfg.validate()
    cfg2 = RunConfig(loss="lp:4", policy="lp:6", out=str(tmp_path / "q.csv"))
    with pytest.raises(ConfigError, match="does not match"):
        cfg2.validate()
    cfg3 = RunConfig(
        d_in=4, d_out=2, m=10, loss="lp:4", policy="lp:4", sweeps=2,
        target=0.0, out=str(tmp_path / "r.csv"),
    )
    traj = run_experiment(cfg3)
    assert len(traj) == 2 * cfg3.depth or len(traj) == 2 * 5


def test_depth_sweep_improves_per_sweep_convergence(tmp_path):
    # deeper chains convert each sweep into more contraction on the same data
    dists = []
    for depth in (1, 4, 16):
        cfg = RunConfig(
            d_in=16, d_out=3, m=60, data_seed=1, depth=depth, seed=9,
            policy="optimal", order="desc", sweeps=2, target=0.0,
            out=str(tmp_path / f"depth{depth}.csv"),
        )
        dists.append(run_experiment(cfg).final_dist())
    assert dists[0] > dists[1] > dists[2]


def test_long_trajectory_row_count(tmp_path):
    cfg = RunConfig(
        d_in=4, d_out=2, m=10, data_seed=2, depth=4, seed=1,
        policy="optimal", sweeps=250, target=-1.0, out=str(tmp_path / "long.csv"),
    )
    traj = run_experiment(cfg)
    assert len(traj) == 1000
    rows = [
        l for l in (tmp_path / "long.csv").read_text().splitlines()
        if l and not l.startswith("#")
    ]
    assert len(rows) == 1000 + 1  # steps + header
