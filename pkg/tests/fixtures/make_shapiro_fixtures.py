"""Regenerate shapiro_fixtures.json from scipy.stats.shapiro (the reference oracle).

Run once; the JSON is committed and the tests never call this script.
"""

import json
from pathlib import Path

import numpy as np
from scipy import stats


def datasets():
    rng = np.random.default_rng(20241122)
    yield "normal_n10", rng.normal(0, 1, 10)
    yield "normal_n20", rng.normal(5, 2, 20)
    yield "uniform_n15", rng.uniform(0, 1, 15)
    yield "exponential_n20", rng.exponential(1.0, 20)
    yield "lognormal_n25", np.exp(rng.normal(0, 1, 25))
    yield "t3_n30", rng.standard_t(3, 30)
    yield "bimodal_n32", np.concatenate([rng.normal(-2, 0.5, 16), rng.normal(2, 0.5, 16)])
    yield "normal_n40", rng.normal(0, 10, 40)
    yield "chisq2_n45", rng.chisquare(2, 45)
    yield "normal_n50", rng.normal(100, 15, 50)
    yield "qwa_like_n12", np.round(rng.beta(8, 2, 12), 4)
    yield "integers_n11", np.array([3, 4, 4, 5, 5, 5, 6, 6, 7, 9, 12], dtype=float)
    yield "linear_n10", np.arange(1, 11, dtype=float)
    yield "skewed_n18", np.exp(rng.normal(0, 1.5, 18))


def main():
    out = []
    for name, x in datasets():
        x = [float(v) for v in x]
        res = stats.shapiro(x)
        out.append({"name": name, "x": x, "W": float(res.statistic), "p": float(res.pvalue)})
    path = Path(__file__).with_name("shapiro_fixtures.json")
    path.write_text(json.dumps(out, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
