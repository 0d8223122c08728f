"""Acceptance criteria. Each test records one PASS/FAIL line, printed at the end of the run."""

from pathlib import Path

import numpy as np

import oracles
from conftest import ACCEPTANCE_LINES
from mmhcl import csmf, dmss
from mmhcl.dataset import MultimodalSample, make_eval_scenarios, split_classes, standard_benchmark
from mmhcl.evaluation import config_fingerprint, evaluate, model_predictor
from mmhcl.numerics import cosine, entropy, softmax
from mmhcl.osrs import bundle_from_logits, make_ensemble
from mmhcl.semantic import ClassCatalog
from mmhcl.training import (
    TrainConfig,
    ensemble_loss_and_grads,
    init_model,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
    train,
)


def record(cid: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}")
    assert ok, detail


def median(xs):
    return float(np.median(np.asarray(xs, dtype=float)))


# ---------------------------------------------------------------------------
# 1. gradient check
# ---------------------------------------------------------------------------


def test_c1_gradient_check():
    rng = np.random.default_rng(0)
    n, d_s, d_a, d_b, batch = 5, 4, 6, 7, 8
    catalog = ClassCatalog(tuple(f"c{i}" for i in range(n)), rng.standard_normal((n, d_s)))
    arch = ((9,), (6,))
    ens = {
        "A": make_ensemble("A", d_a, d_s, k=2, seed=1, architectures=arch),
        "B": make_ensemble("B", d_b, d_s, k=2, seed=1, architectures=arch),
    }
    # nonzero biases so their gradients are exercised away from the init point
    for e in ens.values():
        for m in e.modules:
            m.mapper.biases = [rng.normal(0, 0.1, b.shape) for b in m.mapper.biases]
    data = {
        "A": (rng.standard_normal((batch, d_a)), rng.integers(0, n, batch)),
        "B": (rng.standard_normal((batch, d_b)), rng.integers(0, n, batch)),
    }

    def total():
        return sum(ensemble_loss_and_grads(ens[m], *data[m], catalog)[0] for m in "AB")

    h, worst, count = 1e-5, 0.0, 0
    for m in "AB":
        _, grads = ensemble_loss_and_grads(ens[m], *data[m], catalog, mapper_bias=True)
        for module, g in zip(ens[m].modules, grads):
            for arr, garr in zip(module.mapper.weights + module.mapper.biases, g.weights + g.biases):
                for idx in np.ndindex(arr.shape):
                    old = arr[idx]
                    arr[idx] = old + h
                    up = total()
                    arr[idx] = old - h
                    down = total()
                    arr[idx] = old
                    num = (up - down) / (2 * h)
                    ana = garr[idx]
                    rel = abs(num - ana) / max(abs(num), abs(ana), 1e-12)
                    worst = max(worst, rel)
                    count += 1
    record("C1 gradient check", worst < 1e-4, f"max relative error {worst:.2e} over {count} parameters (h=1e-5, tol 1e-4)")


# ---------------------------------------------------------------------------
# 2. normalization invariants
# ---------------------------------------------------------------------------


def _random_bundle_pair(rng):
    k = int(rng.integers(2, 6))
    n = int(rng.integers(2, 12))
    scale = float(rng.choice([0.01, 1.0, 10.0, 50.0]))
    la = rng.standard_normal((k, n)) * scale
    lb = rng.standard_normal((k, n)) * scale
    kind = rng.integers(0, 5)
    if kind == 1:
        la[:] = 0.0  # zero-padded missing modality
    elif kind == 2:
        la[:] = la[0]  # identical modules: zero spread
        lb[:] = lb[0]
    elif kind == 3:
        la = la * 1e3  # near one-hot
    return bundle_from_logits(la), bundle_from_logits(lb)


def test_c2_normalization_invariants():
    rng = np.random.default_rng(1)
    worst = 0.0
    n_bundles = 1500
    for _ in range(n_bundles):
        rep = dmss.assess(*_random_bundle_pair(rng))
        worst = max(
            worst,
            abs(rep.inc["A"] + rep.inc["B"] - 1.0),
            abs(rep.dif["A"] + rep.dif["B"] - 1.0),
            abs(rep.u["A"] + rep.u["B"] - 2.0),
        )
    record("C2 normalization invariants", worst <= 1e-9, f"max deviation {worst:.2e} over {n_bundles} bundles (tol 1e-9)")


# ---------------------------------------------------------------------------
# 3. oracle equivalence
# ---------------------------------------------------------------------------


def test_c3_oracle_equivalence():
    rng = np.random.default_rng(2)
    worst = {"softmax": 0.0, "entropy": 0.0, "cosine": 0.0, "similarity_reweight": 0.0, "fuse": 0.0}
    mismatch = 0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        lo = rng.standard_normal(n) * 5
        p = softmax(lo)
        worst["softmax"] = max(worst["softmax"], np.max(np.abs(p - oracles.softmax(lo.tolist()))))
        q = rng.dirichlet(np.ones(n))
        worst["entropy"] = max(worst["entropy"], abs(entropy(q) - oracles.entropy(q.tolist())))
        u, v = rng.standard_normal(n), rng.standard_normal(n)
        worst["cosine"] = max(worst["cosine"], abs(cosine(u, v) - oracles.cosine(u.tolist(), v.tolist())))
        s = rng.uniform(-1, 1, (n, n))
        lo_b = rng.standard_normal(n) * 5
        re = csmf.similarity_reweight(s, lo_b)
        worst["similarity_reweight"] = max(
            worst["similarity_reweight"], np.max(np.abs(re - oracles.matvec(s.tolist(), lo_b.tolist())))
        )
        s2 = rng.uniform(-1, 1, (n, n))
        u_a, u_b = rng.uniform(0, 2, 2)
        dec = csmf.fuse(lo, lo_b, s, s2, u_a, u_b)
        name, fused, best = oracles.fuse(lo.tolist(), lo_b.tolist(), s.tolist(), s2.tolist(), u_a, u_b)
        worst["fuse"] = max(worst["fuse"], np.max(np.abs(dec.lo_fused - fused)))
        mismatch += (dec.dominant != name) or (dec.predicted_class != best)
    ok = all(w <= 1e-12 for w in worst.values()) and mismatch == 0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record("C3 oracle equivalence", ok, f"max abs error {detail}; fuse decision mismatches {mismatch} (tol 1e-12, 100 instances)")


# ---------------------------------------------------------------------------
# 4. identity similarity
# ---------------------------------------------------------------------------


def test_c4_identity_similarity():
    n, d = 6, 8
    rng = np.random.default_rng(3)
    # signed permuted standard basis: orthonormal with an exactly diagonal Gram matrix
    emb = np.zeros((n, d))
    emb[np.arange(n), rng.permutation(d)[:n]] = rng.choice([-1.0, 1.0], n)
    catalog = ClassCatalog(tuple(f"c{i}" for i in range(n)), emb)
    partition = split_classes(n, 0)
    model = init_model(5, 7, catalog, TrainConfig(n_modules=2, seed=3), partition)
    samples = [
        MultimodalSample(f"s{i}", int(rng.integers(n)), rng.standard_normal(5), rng.standard_normal(7))
        for i in range(40)
    ]
    samples += [MultimodalSample(f"a{i}", 0, feat_a=rng.standard_normal(5)) for i in range(5)]
    bad = 0
    for k in range(1, n + 1):
        pb = predict_batch(model.with_config(top_k=k), samples)
        expect = pb.bundle_a.mean_logits + pb.bundle_b.mean_logits
        bad += int(not np.array_equal(pb.fused, expect))
    record("C4 identity similarity", bad == 0, f"fused == lo_A + lo_B bit-exactly for k=1..{n}: {n - bad}/{n} values of k")


# ---------------------------------------------------------------------------
# 5-8. standard benchmark
# ---------------------------------------------------------------------------


def test_c5_dominance(benchmark_runs):
    fracs = [r["dominance"] for r in benchmark_runs]
    m = median(fracs)
    record("C5 DMSS dominance", m >= 80.0, f"median {m:.1f}% (per seed {[round(f, 1) for f in fracs]}), need >= 80%")


def test_c6_generalization(benchmark_runs):
    chance = benchmark_runs[0]["chance"]
    med = {
        (model, scen): median([r[src][model][scen] if model else r[src][scen] for r in benchmark_runs])
        for model, scen, src in [
            ("B", "A_u", "ablation"),
            ("B", "B_u", "ablation"),
            ("B+O", "A_u", "ablation"),
            ("B+O", "B_u", "ablation"),
            (None, "A_u", "rho0"),
            (None, "B_u", "rho0"),
        ]
    }
    ok = (
        med[("B", "A_u")] <= 1.5 * chance
        and med[("B", "B_u")] <= 1.5 * chance
        and med[("B+O", "A_u")] >= 3 * chance
        and med[("B+O", "B_u")] >= 3 * chance
        and med[(None, "A_u")] <= 1.5 * chance
        and med[(None, "B_u")] <= 1.5 * chance
    )
    detail = (
        f"chance {chance:.1f}%; FC A_u/B_u {med[('B', 'A_u')]:.1f}/{med[('B', 'B_u')]:.1f} (<= {1.5 * chance:.1f}); "
        f"B+O rho=0.9 A_u/B_u {med[('B+O', 'A_u')]:.1f}/{med[('B+O', 'B_u')]:.1f} (>= {3 * chance:.1f}); "
        f"B+O rho=0 A_u/B_u {med[(None, 'A_u')]:.1f}/{med[(None, 'B_u')]:.1f} (<= {1.5 * chance:.1f}); medians over 5 seeds"
    )
    record("C6 generalization", ok, detail)


def test_c7_ablation_trend(benchmark_runs):
    bo, bod, full = (median([r["ablation"][n]["A_all+B_all"] for r in benchmark_runs]) for n in ("B+O", "B+O+D", "B+O+D+C"))
    ok = bo <= bod <= full and full - bo >= 0.5
    record("C7 ablation trend", ok, f"A_all+B_all medians B+O {bo:.2f} <= B+O+D {bod:.2f} <= full {full:.2f}, full - B+O >= 0.5")


def test_c8_baseline_comparison(benchmark_runs):
    full, avg, conf = (median([r["comparison"][n]["mix"] for r in benchmark_runs]) for n in ("CSCF", "avg-fusion", "conf-max"))
    record("C8 baseline comparison", full > avg and full > conf, f"acc_mix medians full {full:.2f} vs average fusion {avg:.2f}, confidence-max {conf:.2f}")


# ---------------------------------------------------------------------------
# 9-10. determinism and checkpoints
# ---------------------------------------------------------------------------


def _run_once(path: Path):
    _, catalog, ds = standard_benchmark(11)
    cfg = TrainConfig(epochs=5, seed=11)
    model = train(ds, catalog, cfg)
    save_checkpoint(model, path)
    report = evaluate(model_predictor(model), make_eval_scenarios(ds), "CSCF", config_fingerprint(cfg), 11)
    return path.read_bytes(), report.to_dict(), report.records


def test_c9_determinism(tmp_path):
    ckpt1, metrics1, rec1 = _run_once(tmp_path / "a.ckpt")
    ckpt2, metrics2, rec2 = _run_once(tmp_path / "b.ckpt")
    ok = ckpt1 == ckpt2 and metrics1 == metrics2 and rec1 == rec2
    record("C9 determinism", ok, f"checkpoints identical: {ckpt1 == ckpt2} ({len(ckpt1)} bytes), metrics identical: {metrics1 == metrics2 and rec1 == rec2}")


def test_c10_checkpoint_roundtrip(tmp_path):
    _, catalog, ds = standard_benchmark(12)
    model = train(ds, catalog, TrainConfig(epochs=3, seed=12))
    idx = np.random.default_rng(0).choice(len(ds.test), size=100, replace=False)
    probe = [ds.test[i] for i in idx]
    save_checkpoint(model, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    before, after = predict_batch(model, probe), predict_batch(loaded, probe)
    same = all(
        np.array_equal(getattr(before, f), getattr(after, f)) for f in ("fused", "lo_dom", "lo_aux", "a_dominant")
    ) and np.array_equal(before.uncertainty.u_a, after.uncertainty.u_a)
    record("C10 checkpoint round-trip", same, "save -> load -> predict bit-identical to in-memory predict on 100 probe samples")
