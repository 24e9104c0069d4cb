"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one ``[PASS]`` or ``[FAIL]`` line that is printed
immediately and again in the terminal summary. Model and training sizes here
are desk scale (see README); the synthetic suites are sized so that one CPU
core finishes the whole file in well under an hour.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pcie import numerics as nx
from pcie.cli import main
from pcie.data import ALL_CHANNELS, WindowSet, derive_pct_channels
from pcie.eval import (
    PCIE_VARIANT,
    PERSISTENCE,
    ablation_no_tokenization,
    build_variant,
    channel_mix_ab,
    generate_suite,
    read_csv,
    run_matrix,
)
from pcie.model import (
    ATL_MODES,
    PCIE,
    PcieConfig,
    atl_forward,
    channel_mix,
    head_forward,
    multi_head_attention,
    patch_count,
    patchify,
    revin_denormalize,
    revin_normalize,
)
from pcie.numerics import Tensor
from pcie.training import TrainConfig, evaluate, train

from helpers import ACCEPTANCE, build_cells, check_op_grad, closed_form_onecycle
from oracles import (
    batchnorm_oracle,
    enumerate_offsets,
    matmul_oracle,
    model_grad_error,
    naive_attention,
    naive_head,
    softmax_oracle,
    split_audit,
    two_pass_pct,
)

# desk-scale model and schedule shared by criteria 7-9
DESK_MODEL = dict(patch_len=4, stride=2, d_patch=4, n_heads=4, n_layers=1, ff_hidden=64, dropout=0.1)
DESK_TRAIN = TrainConfig(batch_size=32, max_epochs=10, patience=9, max_lr=1e-3, seed=0)
LOOKBACK = 32
HORIZONS = (10, 20, 40, 60)
CROSS_SUITE = dict(n_tickers=8, length=1500)
TINY = dict(lookback=8, n_channels=3, patch_len=4, stride=2, d_patch=4, n_heads=2, n_layers=1,
            horizon=2, ff_hidden=8, atl_hidden=6, dropout=0.0, target_channel=1)

# every EvalReport produced here, re-checked by criterion 11
REPORTS = []


@contextmanager
def criterion(n, title):
    info = {}
    t0 = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        line = f"[FAIL] criterion {n}: {title} -- {info.get('detail', '')} {msg}".replace("  ", " ")
        ACCEPTANCE.append(line)
        print(line)
        raise
    line = f"[PASS] criterion {n}: {title} -- {info.get('detail', '')} ({time.perf_counter() - t0:.1f} s)"
    ACCEPTANCE.append(line)
    print(line)


# --- 1 ----------------------------------------------------------------------

def _op_cases(rng):
    st = nx.BatchNormState.fresh(3)
    x8 = rng.normal(size=(4, 8, 3))
    _, rstate = revin_normalize(x8, Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3)))
    return [
        ("add", nx.add, [(3, 4), (4,)], False),
        ("sub", nx.sub, [(2, 3, 4), (3, 1)], False),
        ("mul", nx.mul, [(3, 1), (1, 5)], False),
        ("div", nx.div, [(3, 4), (4,)], True),
        ("matmul", nx.matmul, [(2, 3, 5), (5, 2)], False),
        ("relu", nx.relu, [(3, 4)], False),
        ("gelu", nx.gelu, [(3, 4)], False),
        ("softmax", nx.softmax_lastdim, [(2, 3, 4)], False),
        ("sum", lambda a: nx.sum_(a, axis=1), [(2, 3, 4)], False),
        ("mean", lambda a: nx.mean(a, axis=0), [(2, 3, 4)], False),
        ("transpose", lambda a: nx.transpose(a, (2, 0, 1)), [(2, 3, 4)], False),
        ("reshape", lambda a: nx.reshape(a, (4, 6)), [(2, 3, 4)], False),
        ("flatten", lambda a: nx.flatten(a, 1), [(2, 3, 4)], False),
        ("gather", lambda a: nx.getitem(a, (slice(None), [0, 2, 2])), [(2, 3, 4)], False),
        ("concat", lambda a, b: nx.concat([a, b], axis=1), [(2, 3), (2, 4)], False),
        ("mse", nx.mse, [(4, 3), (4, 3)], False),
        ("batchnorm", lambda a, g, b: nx.batchnorm(a, g, b, nx.BatchNormState(st.running_mean.copy(),
                                                                               st.running_var.copy()), True),
         [(6, 3), (3,), (3,)], False),
        ("dropout", lambda a: nx.dropout(a, 0.3, np.random.default_rng(0), True), [(4, 5)], False),
        ("revin", lambda w, b: revin_normalize(x8, w, b)[0], [(3,), (3,)], False),
        ("revin_inverse", lambda y: revin_denormalize(y, rstate, 1), [(4, 2)], False),
        ("patchify", lambda a: patchify(a, 4, 2), [(2, 8, 3)], False),
        ("atl_shared", lambda p, w, b: atl_forward(p, {"atl.w": w, "atl.b": b}, "shared_linear"),
         [(2, 3, 4, 4), (4, 5), (5,)], False),
        ("atl_independent", lambda p, w, b: atl_forward(p, {"atl.w": w, "atl.b": b}, "independent_linear"),
         [(2, 3, 4, 4), (3, 4, 5), (3, 1, 5)], False),
        ("atl_mlp", lambda p, w1, b1, w2, b2: atl_forward(p, {"atl.w1": w1, "atl.b1": b1, "atl.w2": w2,
                                                             "atl.b2": b2}, "mlp"),
         [(2, 3, 4, 4), (4, 6), (6,), (6, 5), (5,)], False),
        ("channel_mix", channel_mix, [(2, 3, 4, 5), (4, 15)], False),
        ("attention", lambda a, q, k, v, o: multi_head_attention(a, q, k, v, o, 2), [(2, 4, 6)] + [(6, 6)] * 4,
         False),
        ("head", head_forward, [(2, 4, 3), (12, 2), (2,)], False),
    ]


def test_criterion_1_gradient_suite():
    rng = np.random.default_rng(1)
    with criterion(1, "finite-difference gradients of every op and the tiny PCIE") as c:
        t0 = time.perf_counter()
        errors = {name: check_op_grad(op, *shapes, rng=rng, positive=pos)
                  for name, op, shapes, pos in _op_cases(rng)}
        for mode in ATL_MODES:
            errors[f"pcie[{mode}]"] = model_grad_error(PcieConfig(**TINY, atl_mode=mode), rng)
        errors["pcie[untokenized]"] = model_grad_error(PcieConfig(**{**TINY, "tokenization": False}), rng)
        errors["pcie[eval]"] = model_grad_error(PcieConfig(**TINY), rng, train=False)
        elapsed = time.perf_counter() - t0
        worst = max(errors, key=errors.get)
        c["detail"] = f"{len(errors)} checks, worst {worst} rel err {errors[worst]:.1e}, {elapsed:.0f} s"
        assert errors[worst] < 1e-4, errors
        assert elapsed < 60


# --- 2 ----------------------------------------------------------------------

def test_criterion_2_oracle_suite():
    rng = np.random.default_rng(2)
    with criterion(2, "matmul/softmax/batchnorm/attention/head vs naive loops") as c:
        t0 = time.perf_counter()
        worst = dict.fromkeys(("matmul", "softmax", "batchnorm", "attention", "head"), 0.0)
        for _ in range(100):
            m, k, n = (int(v) for v in rng.integers(1, 7, 3))
            a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
            worst["matmul"] = max(worst["matmul"], np.abs(nx.matmul(Tensor(a), Tensor(b)).data
                                                          - matmul_oracle(a, b)).max())
            x = rng.normal(0, 3, size=(m, n + 1))
            got = nx.softmax_lastdim(Tensor(x)).data
            worst["softmax"] = max(worst["softmax"], max(np.abs(got[i] - softmax_oracle(x[i])).max()
                                                         for i in range(m)))
            x = rng.normal(size=(m + 1, n))
            out = nx.batchnorm(Tensor(x), Tensor(np.ones(n)), Tensor(np.zeros(n)), nx.BatchNormState.fresh(n),
                               True).data
            worst["batchnorm"] = max(worst["batchnorm"], np.abs(out - batchnorm_oracle(x)).max())
            bsz, tok, heads = int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 3))
            d = heads * int(rng.integers(1, 4))
            x = rng.normal(size=(bsz, tok, d))
            ws = [rng.normal(size=(d, d)) for _ in range(4)]
            worst["attention"] = max(worst["attention"], np.abs(
                multi_head_attention(Tensor(x), *map(Tensor, ws), heads).data - naive_attention(x, *ws, heads)).max())
            lf = int(rng.integers(1, 5))
            w, bias = rng.normal(size=(tok * d, lf)), rng.normal(size=lf)
            worst["head"] = max(worst["head"], np.abs(head_forward(Tensor(x), Tensor(w), Tensor(bias)).data
                                                      - naive_head(x, w, bias)).max())
        elapsed = time.perf_counter() - t0
        c["detail"] = "100 instances each, max err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
        assert max(worst.values()) < 1e-10
        assert elapsed < 60


# --- 3 ----------------------------------------------------------------------

def test_criterion_3_patch_count_conformance():
    with criterion(3, "patch counts vs exhaustive offset enumeration") as c:
        checked = 0
        for length in range(1, 65):
            x = Tensor(np.zeros((1, length, 1)))
            for p in range(1, length + 1):
                for s in range(1, 9):
                    n = len(enumerate_offsets(length, p, s))
                    assert patch_count(length, p, s) == n, (length, p, s)
                    assert patchify(x, p, s).shape[2] == n, (length, p, s)
                    checked += 1
        c["detail"] = f"{checked} (L, P, S) triples exact"


# --- 4 ----------------------------------------------------------------------

def test_criterion_4_revin_round_trip_and_shift():
    rng = np.random.default_rng(4)
    with criterion(4, "RevIN round trip and shift equivariance") as c:
        m = 5
        # z-scored inputs, as the pipeline feeds them: per-window scales and offsets of a few units
        x = rng.normal(size=(1000, 24, m)) * rng.uniform(0.1, 3, (1000, 1, m)) + rng.normal(0, 3, (1000, 1, m))
        w, b = Tensor(np.ones(m)), Tensor(np.zeros(m))
        z, state = revin_normalize(x, w, b)
        rt = max(np.abs(revin_denormalize(Tensor(z.data[:, :, ch]), state, ch).data - x[:, :, ch]).max()
                 for ch in range(m))
        shift = rng.normal(0, 100, (1000, 1, m))
        z2, state2 = revin_normalize(x + shift, w, b)
        y = Tensor(rng.normal(size=(1000, 7)))
        eq = max(np.abs(z2.data - z.data).max(),
                 np.abs(revin_denormalize(y, state2, 3).data - revin_denormalize(y, state, 3).data
                        - shift[:, :, 3]).max())
        model = PCIE(PcieConfig(**TINY), seed=4)
        xs = rng.normal(size=(1000, 8, 3))
        sh = np.zeros((1000, 1, 3))
        sh[:, 0, 1] = rng.normal(0, 50, 1000)
        full = np.abs(model.predict(xs + sh) - model.predict(xs) - sh[:, :, 1]).max()
        c["detail"] = f"1000 windows, round trip {rt:.1e}, shift {eq:.1e}, full model shift {full:.1e}"
        assert rt < 1e-8 and eq < 1e-8 and full < 1e-8


# --- 5 ----------------------------------------------------------------------

def test_criterion_5_data_pipeline():
    with criterion(5, "percentage channels bit exact, 7:1:2 boundary and leakage audit") as c:
        frames = generate_suite("cross_channel", 5, n_tickers=3, length=400) + generate_suite("ar_trend", 5, 2, 300)
        for f in frames:
            d = derive_pct_channels(f)
            for raw, pct in zip("ohlcv", ("op", "hp", "lp", "cp", "vp")):
                x = d.values[:, ALL_CHANNELS.index(raw)]
                assert d.values[:, ALL_CHANNELS.index(pct)].tobytes() == two_pass_pct(x).tobytes(), pct
        audits = 0
        for T in range(50, 501):
            for L, H in ((8, 2), (10, 10), (16, 20), (20, 5), (32, 10)):
                if T >= L + H + 10:
                    split_audit(T, L, H)
                    audits += 1
        c["detail"] = f"{len(frames)} frames x 5 channels bit exact, {audits} (T, L, L_f) audits"


# --- 6 ----------------------------------------------------------------------

def test_criterion_6_overfit(tmp_path):
    with criterion(6, "32-sample overfit within 2000 steps") as c:
        t0 = time.perf_counter()
        (cell,) = build_cells(tmp_path / "ds", "ar_trend", seed=0, n_tickers=1, length=400, lookback=LOOKBACK,
                              horizons=(10,), tasks=("forecast",))
        tr = cell.sets["train"]
        ws = WindowSet(tr.inputs[:32], tr.targets[:32], tr.origins[:32])
        model = build_variant(cell, PCIE_VARIANT, {**DESK_MODEL, "dropout": 0.0}, 0)
        model, log = train(model, ws, ws, TrainConfig(batch_size=32, max_epochs=2000, patience=1999, max_lr=3e-4))
        mse = evaluate(model, ws)[0]
        elapsed = time.perf_counter() - t0
        c["detail"] = f"train MSE {mse:.2e} after {log.n_steps} steps, {elapsed:.0f} s"
        assert log.n_steps <= 2000 and mse < 1e-3 and elapsed < 300


# --- 7 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def ar_trend_report(tmp_path_factory):
    root = tmp_path_factory.mktemp("ar_trend")
    t0 = time.perf_counter()
    cells = build_cells(root / "ds", "ar_trend", seed=0, n_tickers=4, length=1000, lookback=LOOKBACK,
                        horizons=(10, 20), tasks=("forecast",))
    report = run_matrix(cells, [PCIE_VARIANT, PERSISTENCE], dataset="ar_trend", model_base=DESK_MODEL,
                        train_cfg=DESK_TRAIN, checkpoint_root=root / "runs")
    REPORTS.append(report)
    return report, root / "runs", time.perf_counter() - t0


def test_criterion_7_beats_persistence(ar_trend_report):
    report, _, elapsed = ar_trend_report
    with criterion(7, "ar_trend forecast: PCIE beats persistence") as c:
        gains = {}
        for h in (10, 20):
            p = report.get("ar_trend", "forecast", h, "persistence").mse
            m = report.get("ar_trend", "forecast", h, "pcie").mse
            gains[h] = (p - m) / p * 100
        c["detail"] = f"MSE gain h10 {gains[10]:.1f}% (>= 20), h20 {gains[20]:.1f}% (>= 10), {elapsed:.0f} s"
        assert gains[10] >= 20 and gains[20] >= 10 and elapsed < 900


# --- 8 and 9 ----------------------------------------------------------------

@pytest.fixture(scope="module")
def cross_channel(tmp_path_factory):
    root = tmp_path_factory.mktemp("cross_channel")
    mixed = build_cells(root / "mixed10", "cross_channel", seed=0, lookback=LOOKBACK, horizons=HORIZONS,
                        channel_set="mixed10", **CROSS_SUITE)
    raw = build_cells(root / "raw5", "cross_channel", seed=0, lookback=LOOKBACK, horizons=HORIZONS,
                      channel_set="raw5", **CROSS_SUITE)
    ablation = ablation_no_tokenization(mixed, dataset="cross_channel", model_base=DESK_MODEL,
                                        train_cfg=DESK_TRAIN, checkpoint_root=root / "ablation")
    trained = {(c.task, c.horizon): root / "ablation" / "pcie" / c.path.name for c in mixed}
    mix = channel_mix_ab(raw, mixed, dataset="cross_channel", model_base=DESK_MODEL, train_cfg=DESK_TRAIN,
                         checkpoint_root=root / "channel_mix", checkpoints={"mixed10": trained})
    REPORTS.extend([ablation, mix.report])
    return ablation, mix


@pytest.mark.slow
def test_criterion_8_tokenization_direction(cross_channel):
    ablation, _ = cross_channel
    with criterion(8, "cross_channel: tokenized <= untokenized in >= 6 of 8 cells") as c:
        cells = []
        for task in ("forecast", "prediction"):
            for h in HORIZONS:
                tok = ablation.get("cross_channel", task, h, "pcie").mse
                notok = ablation.get("cross_channel", task, h, "pcie_notok").mse
                cells.append(f"{task[0]}{h}:{(notok - tok) / notok * 100:+.1f}%")
        wins = sum(ablation.get("cross_channel", r.task, r.horizon, "pcie").mse <= r.mse
                   for r in ablation.rows if r.variant == "pcie_notok")
        c["detail"] = f"{wins}/8 wins [{' '.join(cells)}]"
        assert wins >= 6


@pytest.mark.slow
def test_criterion_9_channel_mix_direction(cross_channel):
    _, mix = cross_channel
    with criterion(9, "cross_channel: mixed10 improves average MSE over raw5") as c:
        per = " ".join(f"{t[0]}{h}:{v:+.1f}%" for (t, h), v in mix.improvements.items())
        ref = mix.report.metadata["reference_improvement_pct"]
        c["detail"] = f"overall {mix.overall:+.2f}% [{per}], reference {ref}"
        assert mix.overall > 0
        assert ref == {"US_71": 2.762, "US_14L": 3.985}


# --- 10 ---------------------------------------------------------------------

PIPELINE = {"lookback": 16, "horizons": [2, 4], "patch_len": 4, "stride": 4, "d_patch": 2, "n_heads": 2,
            "n_layers": 1, "ff_hidden": 8, "batch_size": 32, "max_epochs": 3, "patience": 2, "max_lr": 1e-3,
            "synth_tickers": 2, "synth_length": 300, "variants": ["pcie", "persistence", "direct_linear"]}


def _pipeline(root, capsys):
    config = root / "run.json"
    root.mkdir(parents=True)
    config.write_text(json.dumps(PIPELINE))
    steps = [["synth", "ar_trend", "--seed", "3", "--out", root / "synth"],
             ["train", root / "synth" / "dataset", "--seed", "3", "--out", root / "runs"],
             ["eval", root / "synth" / "dataset", "--seed", "3", "--checkpoints", root / "runs",
              "--out", root / "report"]]
    hashes = None
    for argv in steps:
        assert main([str(a) for a in argv] + ["--config", str(config)]) == 0
        out = capsys.readouterr().out
        if argv[0] == "train":
            hashes = [line.split(",")[-1] for line in out.splitlines()[1:]]
    files = {p.name: p.read_bytes() for p in sorted((root / "report").iterdir())}
    return files, hashes


def test_criterion_10_determinism(tmp_path, capsys):
    with criterion(10, "two synth-prepare-train-eval pipelines are byte identical") as c:
        a_files, a_hashes = _pipeline(tmp_path / "a", capsys)
        b_files, b_hashes = _pipeline(tmp_path / "b", capsys)
        c["detail"] = f"{len(a_files)} report files, {len(a_hashes)} checkpoint hashes"
        assert a_hashes and a_hashes == b_hashes
        assert a_files.keys() == b_files.keys()
        for name in a_files:
            assert a_files[name] == b_files[name], name
        REPORTS.append(read_csv(tmp_path / "a" / "report" / "report.csv"))


# --- 11 ---------------------------------------------------------------------

def test_criterion_11_schedule_and_metric_identities(ar_trend_report, tmp_path):
    _, runs, _ = ar_trend_report
    with criterion(11, "LR trace equals closed-form one-cycle; MAE <= sqrt(MSE) on every report") as c:
        traces = 0
        for trace in sorted(runs.rglob("lr_trace.csv")):
            lrs = [float(line.split(",")[1]) for line in trace.read_text().splitlines()[1:]]
            n_train = json.loads((trace.parent / "runlog.jsonl").read_text().splitlines()[-1])["steps"]
            epochs = len(trace.parent.joinpath("runlog.jsonl").read_text().splitlines()) - 1
            total = n_train // epochs * DESK_TRAIN.max_epochs
            expected = closed_form_onecycle(total, DESK_TRAIN.max_lr, DESK_TRAIN.pct_start, DESK_TRAIN.div_factor,
                                            DESK_TRAIN.final_div_factor)
            assert lrs == expected[:len(lrs)], trace
            traces += 1
        rows = 0
        for rep in REPORTS:
            for r in getattr(rep, "rows", rep):
                assert r.mae <= math.sqrt(r.mse) and r.raw_mae <= math.sqrt(r.raw_mse), r
                rows += 1
        c["detail"] = f"{traces} LR traces bit identical, {rows} rows from {len(REPORTS)} reports"
        assert traces > 0 and rows > 0
