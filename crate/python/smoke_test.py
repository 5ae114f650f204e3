"""Quick end-to-end check of the Python extension.

Build and install first:  pip install maturin && maturin develop -m crates/python/Cargo.toml
"""

import math

import cpm


def main():
    print("cpm", cpm.version())

    points, labels = cpm.generate_ball_shell(4, 80, 80, seed=1)
    assert len(points) == 160 and len(points[0]) == 4
    assert sorted(set(labels)) == [1, 2]

    curve = cpm.dimension_curve(points)
    assert len(curve) == len(curve.radii) == len(curve.n)
    assert curve.c > 0
    assert curve.n_at(curve.radii[3]) == curve.n[3]
    print(curve)

    dist = cpm.distance_matrix(points)
    assert dist[0][0] == 0.0 and math.isclose(dist[1][2], dist[2][1])

    config = cpm.RunConfig(seed=1, max_iters=200, target_dim=2)
    assert cpm.RunConfig.from_json(config.to_json()).to_json() == config.to_json()
    out = cpm.embed(points, config)
    emb = out["embedding"]
    history = out["kl_history"]
    assert len(emb) == 160 and len(emb[0]) == 2
    assert all(b <= a for a, b in zip(history, history[1:]))
    assert out["dimension_curve"].n0 > 0
    again = cpm.embed(points, config)
    assert again["embedding"] == emb
    assert len(cpm.embed(points, config, dim=3)["embedding"][0]) == 3

    mds = cpm.embed(points, method="mds")
    assert mds["dimension_curve"] is None

    score = cpm.crowding_score(emb, labels)
    rho = cpm.spearman(points, emb)
    assert 0.0 <= score <= 1.0 and -1.0 <= rho <= 1.0
    print(f"crowding={score:.3f} spearman={rho:.3f} kl={history[-1]:.4f}")

    for bad in (
        lambda: cpm.embed([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
        lambda: cpm.RunConfig(perplexity=30),
        lambda: cpm.embed(points, dim=4),
    ):
        try:
            bad()
        except ValueError as e:
            print("rejected:", e)
        else:
            raise AssertionError("invalid input was accepted")

    print("ok")


if __name__ == "__main__":
    main()
