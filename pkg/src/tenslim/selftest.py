"""Quick built-in checks: generate-then-recover and gradient oracles."""

from __future__ import annotations

import numpy as np

from .decompose import cp_als, tt_svd, ttm_decompose, tucker_hosvd
from .formats import CPFactors, TTCores, TTMCores, TuckerFactors, reconstruct
from .grads import factor_grads, trainable_arrays
from .tensor import frobenius_norm


def _relerr(a, f):
    return frobenius_norm(a - reconstruct(f).reshape(a.shape)) \
        / frobenius_norm(a)


def _recover_checks(rng) -> list:
    checks = []
    a_cp = reconstruct(CPFactors(tuple(
        rng.standard_normal((s, 3)) for s in (4, 5, 6))))
    got, _ = cp_als(a_cp, 3, max_iters=200, tol=1e-12, seed=0)
    checks.append(("cp generate-then-recover", _relerr(a_cp, got) <= 1e-8))

    core = rng.standard_normal((2, 2, 2))
    facs = tuple(rng.standard_normal((s, 2)) for s in (4, 5, 6))
    a_tk = reconstruct(TuckerFactors(core, facs))
    checks.append(("tucker generate-then-recover",
                   _relerr(a_tk, tucker_hosvd(a_tk, (2, 2, 2))) <= 1e-8))

    cores = (rng.standard_normal((1, 4, 2)), rng.standard_normal((2, 5, 2)),
             rng.standard_normal((2, 6, 1)))
    a_tt = reconstruct(TTCores(cores))
    checks.append(("tt generate-then-recover",
                   _relerr(a_tt, tt_svd(a_tt, (1, 2, 2, 1))) <= 1e-8))

    tcores = (rng.standard_normal((1, 2, 3, 2)),
              rng.standard_normal((2, 3, 2, 1)))
    w = reconstruct(TTMCores(tcores)).reshape(6, 6)
    got = ttm_decompose(w, (2, 3), (3, 2), (1, 2, 1))
    checks.append(("ttm generate-then-recover",
                   frobenius_norm(w - reconstruct(got).reshape(6, 6))
                   / frobenius_norm(w) <= 1e-8))
    return checks


def _grad_checks(rng) -> list:
    checks = []
    factorized = {
        "cp": CPFactors(tuple(rng.standard_normal((s, 2))
                              for s in (3, 4, 2))),
        "tucker": TuckerFactors(rng.standard_normal((2, 2, 2)), tuple(
            rng.standard_normal((s, 2)) for s in (3, 4, 2))),
        "tt": TTCores((rng.standard_normal((1, 3, 2)),
                       rng.standard_normal((2, 4, 2)),
                       rng.standard_normal((2, 2, 1)))),
        "ttm": TTMCores((rng.standard_normal((1, 2, 3, 2)),
                         rng.standard_normal((2, 2, 2, 1)))),
    }
    for name, f in factorized.items():
        g = rng.standard_normal(f.shape)
        analytic = factor_grads(f, g)
        ok = True
        h = 1e-6
        for arr, grad in zip(trainable_arrays(f), analytic):
            flat = arr.ravel()
            for i in range(0, flat.size, max(1, flat.size // 5)):
                old = flat[i]
                flat[i] = old + h
                up = float((reconstruct(f) * g).sum())
                flat[i] = old - h
                down = float((reconstruct(f) * g).sum())
                flat[i] = old
                fd = (up - down) / (2 * h)
                if abs(fd - grad.ravel()[i]) > 1e-4 * max(1.0, abs(fd)):
                    ok = False
        checks.append((f"{name} factor gradients vs finite differences", ok))
    return checks


def run_selftest(verbose: bool = False) -> bool:
    rng = np.random.default_rng(1234)
    checks = _recover_checks(rng) + _grad_checks(rng)
    all_ok = True
    for name, ok in checks:
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return bool(all_ok)
