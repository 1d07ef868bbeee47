"""
Acceptance Runner
Slow end-to-end checks: full reconstruction sweeps, adjoints, gradient
checks, boundary effects, the 300-epoch training run and the dual-structure
comparison report. Run with `python eval/acceptance.py`; set FAST_EVAL=1 to
shorten training (the convergence thresholds are then reported, not met).
"""

import math
import os
import sys
import time

import numpy as np

ACCEPTANCE_CASES = [
    {"id": 1, "type": "reconstruction", "name": "Perfect reconstruction of every shipped wavelet"},
    {"id": 2, "type": "oracle", "name": "Haar ground truth"},
    {"id": 3, "type": "property", "name": "Energy conservation of orthogonal wavelets"},
    {"id": 4, "type": "property", "name": "Adjoint identities of dwt, idwt and conv2d"},
    {"id": 5, "type": "gradient", "name": "Finite-difference gradient checks"},
    {"id": 6, "type": "boundary", "name": "Boundary band widths in zero mode"},
    {"id": 7, "type": "training", "name": "WADS training convergence"},
    {"id": 8, "type": "oracle", "name": "Metric fractions"},
    {"id": 9, "type": "determinism", "name": "Serialization and seeded training"},
    {"id": 10, "type": "report", "name": "WADS vs PUDS thin-line comparison (recorded, not gated)"},
]

SEED = 7


# ---------- Checks ----------

def check_reconstruction():
    from waveseg.config import PR_TOL
    from waveseg.filters import list_wavelets
    from waveseg.transform import dwt, idwt

    rng = np.random.default_rng(SEED)
    worst = {"periodic": 0.0, "symmetric": 0.0}
    symmetric = {"haar", "ch2.2", "ch3.3", "ch4.4", "ch5.5"}
    for name in list_wavelets():
        cases = [((int(rng.integers(1, 5)), 2 * int(rng.integers(2, 33))), 1),
                 ((int(rng.integers(1, 5)), 64, 48), 2),
                 ((int(rng.integers(1, 5)), 16, 16, 16), 3)]
        for shape, dim in cases:
            x = rng.normal(size=shape)
            for mode in ("periodic", "symmetric"):
                if mode == "symmetric" and name not in symmetric:
                    continue
                err = float(np.max(np.abs(np.asarray(idwt(dwt(x, name, dim, mode))) - x)))
                worst[mode] = max(worst[mode], err)
    print(f"  worst periodic error {worst['periodic']:.3e}, symmetric {worst['symmetric']:.3e}")
    return {"periodic_pr": worst["periodic"] <= PR_TOL, "symmetric_pr": worst["symmetric"] <= PR_TOL}


def check_haar():
    from waveseg.filters import get_wavelet
    from waveseg.transform import dwt

    r = 1 / math.sqrt(2)
    haar = get_wavelet("haar")
    one_d = dwt(np.array([1.0, 2.0, 3.0, 4.0]), haar, 1, "periodic")
    two_d = dwt(np.array([[1.0, 2.0], [3.0, 4.0]]), haar, 2, "periodic").arrays()
    expected = {"ll": 5.0, "lh": -2.0, "hl": -1.0, "hh": 0.0}
    return {
        "filters": haar.dec_lo == (r, r) and haar.dec_hi == (r, -r),
        "1d_example": np.allclose(np.asarray(one_d.low), [3 * r, 7 * r], atol=1e-12, rtol=0)
        and np.allclose(np.asarray(one_d["h"]), [-r, -r], atol=1e-12, rtol=0),
        "2d_example": all(abs(float(two_d[t][0, 0]) - v) <= 1e-12 for t, v in expected.items()),
    }


def check_energy():
    from waveseg.transform import dwt

    rng = np.random.default_rng(SEED)
    worst = 0.0
    for name in ("haar", "db2", "db3", "db4", "db5", "db6"):
        for _ in range(100):
            x = rng.normal(size=(2, 16, 16))
            energy = float(np.sum(x * x))
            worst = max(worst, abs(dwt(x, name, 2, "periodic").energy() - energy) / energy)
    print(f"  worst relative energy error {worst:.3e}")
    return {"energy": worst <= 1e-8}


def check_adjoints():
    from waveseg.autodiff import Tape, backward, conv2d_node, dot_node
    from waveseg.filters import list_wavelets, subband_tags
    from waveseg.tensor import Tensor
    from waveseg.transform import Subbands, dwt, dwt_adjoint, idwt, idwt_adjoint

    rng = np.random.default_rng(SEED)
    names = list_wavelets()
    modes = ("periodic", "symmetric", "zero")
    worst = {"dwt": 0.0, "idwt": 0.0, "conv2d": 0.0}

    def subbands(name, mode):
        comps = {t: rng.normal(size=(2, 6, 5)) for t in subband_tags(2)}
        return Subbands(2, Tensor(comps["ll"]), {t: Tensor(v) for t, v in comps.items() if t != "ll"},
                        mode, name, (12, 10))

    def flat(s):
        return np.concatenate([a.ravel() for a in s.arrays().values()])

    for trial in range(50):
        name, mode = names[trial % len(names)], modes[trial % 3]
        x = rng.normal(size=(2, 12, 10))
        s = subbands(name, mode)
        gap = abs(flat(dwt(x, name, 2, mode)) @ flat(s) - float(np.sum(x * np.asarray(dwt_adjoint(s)))))
        worst["dwt"] = max(worst["dwt"], gap / (np.linalg.norm(x) * np.linalg.norm(flat(s))))

        y = rng.normal(size=(2, 12, 10))
        gap = abs(float(np.sum(np.asarray(idwt(s)) * y)) - flat(s) @ flat(idwt_adjoint(y, name, 2, mode)))
        worst["idwt"] = max(worst["idwt"], gap / (np.linalg.norm(y) * np.linalg.norm(flat(s))))

        tape = Tape()
        xn = tape.leaf(rng.normal(size=(1, 3, 9, 9)))
        out = conv2d_node(xn, tape.leaf(rng.normal(size=(4, 3, 3, 3))), tape.leaf(np.zeros(4)))
        c = rng.normal(size=out.shape)
        backward(tape, dot_node(out, c))
        gap = abs(float(np.sum(out.value * c)) - float(np.sum(xn.value * xn.grad)))
        worst["conv2d"] = max(worst["conv2d"], gap / (np.linalg.norm(xn.value) * np.linalg.norm(c)))

    print("  worst scaled gaps " + ", ".join(f"{k} {v:.3e}" for k, v in worst.items()))
    return {k: v <= 1e-10 for k, v in worst.items()}


def check_gradients():
    from waveseg.autodiff import (
        Tape, add_node, backward, conv2d_node, dot_node, dwt_node, half_sq_norm_node, idwt_node,
        numerical_gradient, relative_error, softmax_ce_loss_node,
    )
    from waveseg.wadsnet import build_net

    rng = np.random.default_rng(SEED)

    def op_error(build, x0):
        tape = Tape()
        x = tape.leaf(x0)
        backward(tape, build(x))
        numeric = numerical_gradient(lambda v: float(build(Tape().leaf(v)).value), x0)
        return relative_error(x.grad, numeric)

    def energy(x):
        total = None
        for node in dwt_node(x, "db3", 2, "symmetric").components().values():
            term = half_sq_norm_node(node)
            total = term if total is None else add_node(total, term)
        return total

    c = rng.normal(size=(1, 2, 8, 8))
    k = rng.normal(size=(2, 2, 3, 3))
    labels = rng.integers(0, 3, size=(1, 8, 8))
    errors = {
        "dwt": op_error(energy, rng.normal(size=(1, 2, 8, 8))),
        "idwt": op_error(lambda x: dot_node(idwt_node(dwt_node(x, "ch2.2", 2, "zero")), c),
                         rng.normal(size=(1, 2, 8, 8))),
        "conv": op_error(lambda x: dot_node(conv2d_node(x, x.tape.leaf(k), x.tape.leaf(np.zeros(2))), c),
                         rng.normal(size=(1, 2, 8, 8))),
        "loss": op_error(lambda x: softmax_ce_loss_node(x, labels), rng.normal(size=(1, 3, 8, 8))),
    }

    net = build_net("wads", "db2", seed=SEED, widths=(2, 4))
    images = rng.normal(size=(2, 1, 8, 8))
    net_labels = rng.integers(0, 3, size=(2, 8, 8))
    _, grads, _ = net.loss_and_grads(images, net_labels)
    names = sorted(net.params)
    analytic, numeric = [], []
    for _ in range(10):
        name = names[int(rng.integers(len(names)))]
        index = int(rng.integers(net.params[name].size))
        original = net.params[name]

        def f(v, name=name):
            net.params[name] = v
            return net.loss(images, net_labels)

        numeric.append(numerical_gradient(f, original, indices=[index])[0])
        net.params[name] = original
        analytic.append(grads[name].reshape(-1)[index])
    net_error = relative_error(analytic, numeric)

    print("  relative errors " + ", ".join(f"{k} {v:.2e}" for k, v in errors.items())
          + f", network {net_error:.2e}")
    checks = {f"{k}_gradient": v <= 1e-5 for k, v in errors.items()}
    checks["network_gradient"] = net_error <= 1e-4
    return checks


def check_boundary():
    from waveseg.transform import boundary_summary

    start = time.time()
    rows = [boundary_summary(f"db{n}", "zero", 64, SEED) for n in range(2, 7)]
    widths = [r["affected_band_width"] for r in rows]
    haar = boundary_summary("haar", "symmetric", 64, SEED)
    print(f"  db2..db6 widths {widths}; haar symmetric width {haar['affected_band_width']}")
    return {
        "strictly_increasing": all(a < b for a, b in zip(widths, widths[1:])),
        "interior_exact": max(r["max_interior_err"] for r in rows) <= 1e-10,
        "haar_symmetric_exact": haar["affected_band_width"] == 0,
        "under_10s": time.time() - start < 10,
    }


def check_training():
    from waveseg import config
    from waveseg.dataset import gen_dataset
    from waveseg.wadsnet import build_net, train

    dataset = gen_dataset(config.NUM_SAMPLES, config.IMAGE_SIZE, config.IMAGE_SIZE, SEED)
    start = time.time()
    log = train(build_net("wads", seed=SEED), dataset, epochs=config.EPOCHS)
    elapsed = time.time() - start
    first, last = log[0], log[-1]
    print(f"  {len(log)} epochs in {elapsed:.0f}s: loss {first['loss']:.4f} -> {last['loss']:.4f}, "
          f"pixel acc {last['pixel_acc']:.4f}")
    return {
        "pixel_acc_0.90": last["pixel_acc"] >= 0.90,
        "loss_reduced_10x": last["loss"] <= first["loss"] / 10,
    }


def check_metrics():
    from waveseg.metrics import ConfusionMatrix, accumulate, global_accuracy, miou

    cm = ConfusionMatrix(2, [[2, 1], [1, 2]])
    rng = np.random.default_rng(SEED)
    truth = rng.integers(0, 3, size=(6, 16, 16))
    pred = rng.integers(0, 3, size=(6, 16, 16))
    split = ConfusionMatrix(3)
    for t, p in zip(truth, pred):
        split = accumulate(split, t, p)
    return {
        "miou_fraction": abs(miou(cm)[0] - 0.5) <= 1e-12,
        "accuracy_fraction": abs(global_accuracy(cm) - 4 / 6) <= 1e-12,
        "batch_split_invariance": split == ConfusionMatrix(3).update(truth, pred),
    }


def check_determinism():
    import tempfile

    from app.main import main
    from waveseg.dataset import gen_dataset
    from waveseg.tensor import Tensor, load, save
    from waveseg.wadsnet import build_net, log_frame, train

    rng = np.random.default_rng(SEED)
    t = Tensor(rng.normal(size=(3, 5, 7)))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.wlt")
        save(t, path)
        roundtrip = load(path).equals(t)
        exit_codes = (main(["filters", "--wavelet", "nope"]), main(["psnr", path, path]), main(["filters", "--list"]))

    data = gen_dataset(8, 16, 16, SEED)
    logs = [log_frame(train(build_net("wads", seed=SEED), data, epochs=3, batch_size=4)) for _ in range(2)]
    return {
        "bit_exact_roundtrip": roundtrip,
        "identical_logs": logs[0].equals(logs[1]),
        "exit_codes": exit_codes == (2, 1, 0),
    }


def report_comparison():
    from waveseg import config
    from waveseg.wadsnet import compare_duals
    from waveseg.workflow import format_trace_table

    report = compare_duals([0, 1, 2], kinds=("wads", "puds"), epochs=config.EPOCHS)
    print(report.summary.to_string(index=False))
    print(report.overview.to_string(index=False))
    print(format_trace_table(report.trace))
    thin = report.summary[report.summary["class"] == "thin-line"].set_index("kind")["median_IoU"]
    direction = thin.get("wads", float("nan")) >= thin.get("puds", float("nan"))
    print(f"  expected direction (WADS >= PUDS on thin lines): {'observed' if direction else 'not observed'}")
    return {"rows_complete": len(report.rows) == 2 * 3 * 3}


CHECKS = {
    1: check_reconstruction,
    2: check_haar,
    3: check_energy,
    4: check_adjoints,
    5: check_gradients,
    6: check_boundary,
    7: check_training,
    8: check_metrics,
    9: check_determinism,
    10: report_comparison,
}


# ---------- Runner ----------

def run_evaluation():
    sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

    results = []

    for case in ACCEPTANCE_CASES:
        print(f"\n{'='*70}")
        print(f"Case {case['id']}: {case['type'].upper()}")
        print(f"Check: {case['name']}")
        print(f"{'='*70}")

        try:
            start = time.time()
            checks = CHECKS[case["id"]]()
            passed = all(checks.values())

            print("\nObjective Checks:")
            for k, v in checks.items():
                print(f"  - {k}: {'PASS' if v else 'FAIL'}")
            print(f"Overall: {'PASS' if passed else 'FAIL'} ({time.time() - start:.1f}s)")

            results.append({"case_id": case["id"], "type": case["type"], "passed": passed, "checks": checks})

        except Exception as e:
            print(f"ERROR: {str(e)}")
            results.append({"case_id": case["id"], "type": case["type"], "passed": False, "error": str(e)})

    print("\n" + "="*70)
    print("EVALUATION SUMMARY")
    print("="*70)

    total = len(results)
    passed = sum(1 for r in results if r.get("passed"))
    errors = sum(1 for r in results if "error" in r)

    print(f"Total cases: {total}")
    print(f"Passed: {passed}/{total}")
    print(f"Errors: {errors}/{total}")

    return results


if __name__ == "__main__":
    run_evaluation()
